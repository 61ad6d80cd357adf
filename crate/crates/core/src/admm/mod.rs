//! The ADMM outer loop: Z-step, U-step, dual update.

mod condition;

pub use condition::{
    coupling_gradient, coupling_hessian, lipschitz_constant, suggest_h, validate_parameters,
    AgentCheck, ValidationReport,
};

use serde::Serialize;

use crate::cost::{augmented_lagrangian, cost_j};
use crate::dynamics::{rollout, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{laplacian_apply, laplacian_form, primal_residual};
use crate::linalg::{diff_norm, is_symmetric, min_eigenvalue, quad_form, sum_sq, Matrix, Vector};
use crate::oracle::OracleSolution;
use crate::scenario::Scenario;
use crate::ustep::{ustep, AgentUpdate};
use crate::zstep::{zstep_direct, zstep_flow, ZStepConfig, ZStepData, ZStepMode};

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmParams {
    pub rho: f64,
    /// Proximal weights of the Z-step, one `n×n` block per agent.
    pub g: Vec<Matrix>,
    /// Proximal weights of the U-step, one `m_i×m_i` block per agent.
    pub h: Vec<Matrix>,
    pub horizon: usize,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub step_tol: f64,
    pub allow_condition_override: bool,
}

impl AlgorithmParams {
    /// Defaults with empty proximal weights; callers fill `g` and `h`.
    pub fn new(horizon: usize, max_iters: usize) -> Self {
        AlgorithmParams {
            rho: 1.0,
            g: Vec::new(),
            h: Vec::new(),
            horizon,
            max_iters,
            primal_tol: 1e-6,
            step_tol: 1e-8,
            allow_condition_override: false,
        }
    }

    pub fn validate(&self, agents: usize, n: usize, input_dims: &[usize]) -> Result<()> {
        let bad = |field: &str, reason: String| Error::InvalidParameter {
            field: field.to_string(),
            reason,
        };
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(bad(
                "rho",
                format!("must be positive and finite, got {}", self.rho),
            ));
        }
        if self.horizon == 0 {
            return Err(bad("N", "horizon must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(bad("Nq", "iteration cap must be at least 1".into()));
        }
        for (name, v) in [("primal_tol", self.primal_tol), ("step_tol", self.step_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.g.len() != agents || self.h.len() != agents {
            return Err(bad(
                "G/H",
                format!(
                    "expected {agents} blocks, got {} G and {} H",
                    self.g.len(),
                    self.h.len()
                ),
            ));
        }
        for i in 0..agents {
            let checks = [("G", &self.g[i], n), ("H", &self.h[i], input_dims[i])];
            for (name, m, dim) in checks {
                let field = format!("{name}[{}]", i + 1);
                if m.shape() != (dim, dim) {
                    return Err(bad(
                        &field,
                        format!("expected {dim}x{dim}, got {}x{}", m.nrows(), m.ncols()),
                    ));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(bad(&field, "contains non-finite entries".into()));
                }
                if !is_symmetric(m, crate::cost::SYMMETRY_TOL) {
                    return Err(bad(&field, "not symmetric".into()));
                }
                let lo = min_eigenvalue(m);
                if lo <= 0.0 {
                    return Err(bad(
                        &field,
                        format!("not positive definite (min eigenvalue {lo:e})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub inputs: Vec<Vec<Vector>>,
    pub z: Vec<Vector>,
    pub lambda: Vec<Vector>,
    pub trajectories: Vec<Trajectory>,
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub q: usize,
    pub cost_j: f64,
    pub augmented_lagrangian: f64,
    pub primal_residual: f64,
    pub delta_u: f64,
    pub delta_z: f64,
    /// `‖(L⊗I)(Λ^q − Λ^{q−1})‖`; the component of `ΔΛ` along consensus
    /// directions never influences the iteration.
    pub delta_lambda: f64,
    pub m1_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: AdmmState,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub status: RunStatus,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for per-agent U-steps; 1 runs inline.
    pub threads: usize,
    /// Subtract the agent mean from `Λ` after every dual update. The shift
    /// lies in the nullspace of `L⊗I`, so no iterate changes, but it keeps
    /// the multipliers small: otherwise a large first `Z` (unstable plants)
    /// leaves a consensus component so big that later increments `ρ z_i`
    /// fall below its rounding unit and progress stalls.
    pub recenter_multipliers: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            recenter_multipliers: true,
        }
    }
}

/// `λ_i ← λ_i + ρ z_i`.
pub fn dual_update(lambda: &[Vector], z_next: &[Vector], rho: f64) -> Result<Vec<Vector>> {
    if lambda.len() != z_next.len() || lambda.iter().zip(z_next).any(|(l, z)| l.len() != z.len()) {
        return Err(Error::Dimension(
            "multipliers and Z disagree in shape".into(),
        ));
    }
    Ok(lambda
        .iter()
        .zip(z_next)
        .map(|(l, z)| l + z * rho)
        .collect())
}

/// Lipschitz constant and condition report for a scenario.
pub fn validate_scenario(scenario: &Scenario) -> ValidationReport {
    let l = lipschitz_constant(&scenario.agents, &scenario.weights, scenario.params.horizon);
    validate_parameters(&scenario.params, &scenario.weights, l)
}

/// `(Θ*−Θ)ᵀ M₁ (Θ*−Θ)` with `M₁ = blockdiag(2H, G, (1/ρ) L⊗I)`.
///
/// The U-step penalises `(u − u_prev)ᵀ H (u − u_prev)`, so its proximal
/// Hessian, and hence the U block of the metric, is `2H`.
pub fn m1_distance(scenario: &Scenario, state: &AdmmState, oracle: &OracleSolution) -> f64 {
    let p = &scenario.params;
    let mut total = 0.0;
    for (i, (u, u_star)) in state.inputs.iter().zip(&oracle.inputs).enumerate() {
        for (uk, sk) in u.iter().zip(u_star) {
            total += 2.0 * quad_form(&p.h[i], &(sk - uk));
        }
    }
    for (i, (z, z_star)) in state.z.iter().zip(&oracle.z).enumerate() {
        total += quad_form(&p.g[i], &(z_star - z));
    }
    let dl: Vec<Vector> = oracle
        .lambda
        .iter()
        .zip(&state.lambda)
        .map(|(s, l)| s - l)
        .collect();
    total + laplacian_form(&scenario.laplacian(), &dl, &dl) / p.rho
}

/// Initial iterate: scenario overrides, else `u⁰ ≡ 0`, `Z⁰ = x0`, `Λ⁰ = 0`.
pub fn initial_state(scenario: &Scenario) -> Result<AdmmState> {
    let horizon = scenario.params.horizon;
    let inputs = match &scenario.initial.inputs {
        Some(u) => u.clone(),
        None => scenario
            .agents
            .iter()
            .map(|a| crate::dynamics::zero_inputs(a, horizon))
            .collect(),
    };
    let z = match &scenario.initial.z {
        Some(z) => z.clone(),
        None => scenario.agents.iter().map(|a| a.x0.clone()).collect(),
    };
    let lambda = match &scenario.initial.lambda {
        Some(l) => l.clone(),
        None => scenario
            .agents
            .iter()
            .map(|a| Vector::zeros(a.state_dim()))
            .collect(),
    };
    let trajectories = scenario
        .agents
        .iter()
        .zip(&inputs)
        .map(|(a, u)| rollout(a, u, horizon))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdmmState {
        inputs,
        z,
        lambda,
        trajectories,
        q: 0,
    })
}

enum Executor {
    Inline,
    #[cfg(feature = "parallel")]
    Pool(rayon::ThreadPool),
}

impl Executor {
    fn new(threads: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
            return Ok(Executor::Pool(pool));
        }
        let _ = threads;
        Ok(Executor::Inline)
    }

    fn ustep(
        &self,
        scenario: &Scenario,
        z: &[Vector],
        u_prev: &[Vec<Vector>],
    ) -> Result<Vec<AgentUpdate>> {
        let (m, w, h) = (&scenario.agents, &scenario.weights, &scenario.params.h);
        match self {
            Executor::Inline => ustep(m, w, h, z, u_prev),
            #[cfg(feature = "parallel")]
            Executor::Pool(pool) => crate::ustep::ustep_parallel(pool, m, w, h, z, u_prev),
        }
    }
}

fn zstep(scenario: &Scenario, zcfg: &ZStepConfig, state: &AdmmState) -> Result<Vec<Vector>> {
    let data = ZStepData {
        graph: &scenario.graph,
        weights: &scenario.weights,
        proximal: &scenario.params.g,
        rho: scenario.params.rho,
        trajectories: &state.trajectories,
        z_prev: &state.z,
        lambda: &state.lambda,
    };
    match zcfg.mode {
        ZStepMode::DistributedFlow => Ok(zstep_flow(&data, zcfg)?.z),
        ZStepMode::DirectKkt => zstep_direct(&data),
    }
}

/// Removes the agent mean of `Λ`, a consensus shift invisible to `L⊗I`.
pub fn recenter(lambda: &mut [Vector]) {
    let Some(first) = lambda.first() else { return };
    let mean = lambda
        .iter()
        .fold(Vector::zeros(first.len()), |acc, l| acc + l)
        / lambda.len() as f64;
    for l in lambda.iter_mut() {
        *l -= &mean;
    }
}

fn iterate_with(
    scenario: &Scenario,
    zcfg: &ZStepConfig,
    state: &AdmmState,
    exec: &Executor,
    recenter_multipliers: bool,
) -> Result<AdmmState> {
    let z = zstep(scenario, zcfg, state)?;
    let updates = exec.ustep(scenario, &z, &state.inputs)?;
    let mut lambda = dual_update(&state.lambda, &z, scenario.params.rho)?;
    if recenter_multipliers {
        recenter(&mut lambda);
    }
    let (inputs, trajectories) = updates
        .into_iter()
        .map(|u| (u.inputs, u.trajectory))
        .unzip();
    Ok(AdmmState {
        inputs,
        z,
        lambda,
        trajectories,
        q: state.q + 1,
    })
}

/// One full iteration: Z-step, U-step with rollout, dual update.
pub fn iterate(scenario: &Scenario, zcfg: &ZStepConfig, state: &AdmmState) -> Result<AdmmState> {
    iterate_with(scenario, zcfg, state, &Executor::Inline, true)
}

fn input_diff(a: &[Vec<Vector>], b: &[Vec<Vector>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(u, v)| (u - v).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn run(
    scenario: &Scenario,
    zcfg: &ZStepConfig,
    oracle: Option<&OracleSolution>,
) -> Result<RunOutcome> {
    run_with(scenario, zcfg, oracle, &RunOptions::default())
}

pub fn run_with(
    scenario: &Scenario,
    zcfg: &ZStepConfig,
    oracle: Option<&OracleSolution>,
    options: &RunOptions,
) -> Result<RunOutcome> {
    scenario.validate()?;
    zcfg.validate()?;
    let validation = validate_scenario(scenario);
    if !validation.permits_run() {
        return Err(Error::ConditionViolated(Box::new(validation)));
    }
    let exec = Executor::new(options.threads)?;
    let params = &scenario.params;
    let laplacian = scenario.laplacian();

    let mut state = initial_state(scenario)?;
    let mut diagnostics = Vec::new();
    let mut status = RunStatus::MaxIterations;
    while state.q < params.max_iters {
        let next = iterate_with(scenario, zcfg, &state, &exec, options.recenter_multipliers)?;
        let dl: Vec<Vector> = next
            .lambda
            .iter()
            .zip(&state.lambda)
            .map(|(a, b)| a - b)
            .collect();
        let record = DiagnosticsRecord {
            q: next.q,
            cost_j: cost_j(&next.trajectories, &next.z, &scenario.weights)?,
            augmented_lagrangian: augmented_lagrangian(
                &next.trajectories,
                &next.z,
                &next.lambda,
                &scenario.weights,
                params.rho,
                &laplacian,
            )?,
            primal_residual: primal_residual(&laplacian, &next.z),
            delta_u: input_diff(&next.inputs, &state.inputs),
            delta_z: diff_norm(&next.z, &state.z),
            delta_lambda: sum_sq(&laplacian_apply(&laplacian, &dl)).sqrt(),
            m1_distance: oracle.map(|o| m1_distance(scenario, &next, o)),
        };
        diagnostics.push(record);
        state = next;
        if record.primal_residual <= params.primal_tol
            && record.delta_u <= params.step_tol
            && record.delta_z <= params.step_tol
        {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(RunOutcome {
        state,
        diagnostics,
        status,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_update_literal() {
        let l = vec![Vector::from_vec(vec![1., 2.])];
        let z = vec![Vector::from_vec(vec![3., -1.])];
        assert_eq!(
            dual_update(&l, &z, 1.0).unwrap()[0],
            Vector::from_vec(vec![4., 1.])
        );
        let zero = vec![Vector::zeros(2)];
        assert_eq!(dual_update(&l, &zero, 5.0).unwrap(), l);
        assert!(dual_update(&l, &[Vector::zeros(3)], 1.0).is_err());
    }

    #[test]
    fn params_reject_bad_values() {
        let mut p = AlgorithmParams::new(3, 10);
        p.g = vec![Matrix::identity(2, 2)];
        p.h = vec![Matrix::identity(1, 1)];
        assert!(p.validate(1, 2, &[1]).is_ok());
        p.rho = 0.0;
        assert!(p.validate(1, 2, &[1]).is_err());
        p.rho = 1.0;
        p.h[0] = Matrix::from_element(1, 1, -1.0);
        let err = p.validate(1, 2, &[1]).unwrap_err().to_string();
        assert!(err.contains("H[1]"), "{err}");
    }
}
