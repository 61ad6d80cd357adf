//! Synchronization-state (Z) minimization step.
//!
//! The step minimizes the augmented Lagrangian in `Z` plus the proximal term
//! `½(Z − Zᵠ)ᵀG(Z − Zᵠ)`. Its optimality condition is the linear system
//!
//! `[2N·Q + 2Q_N + G + ρ(L⊗I)] Z = −(L⊗I)Λᵠ + 2Σ_k Q Xᵠ(k) + 2Q_N Xᵠ(N) + G Zᵠ`
//!
//! which is solved either by integrating the gradient flow agent-by-agent
//! (each agent only reads its neighbors) or by a direct Cholesky solve.

use serde::{Deserialize, Serialize};

use crate::cost::AgentWeights;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{laplacian_form, WeightedGraph};
use crate::linalg::{kron_identity, quad_form, split, stack, sym_norm, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZStepMode {
    #[serde(rename = "flow")]
    DistributedFlow,
    #[serde(rename = "direct")]
    DirectKkt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZStepConfig {
    pub mode: ZStepMode,
    pub step_size: StepSize,
    pub residual_tol: f64,
    pub max_flow_iters: usize,
}

impl Default for ZStepConfig {
    fn default() -> Self {
        Self {
            mode: ZStepMode::DistributedFlow,
            step_size: StepSize::Auto,
            residual_tol: 1e-10,
            max_flow_iters: 1_000_000,
        }
    }
}

impl ZStepConfig {
    pub fn direct() -> Self {
        Self {
            mode: ZStepMode::DirectKkt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(h) = self.step_size {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter {
                    field: "zstep.step_size".into(),
                    reason: format!("must be positive, got {h}"),
                });
            }
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidParameter {
                field: "zstep.residual_tol".into(),
                reason: format!("must be positive, got {}", self.residual_tol),
            });
        }
        if self.max_flow_iters == 0 {
            return Err(Error::InvalidParameter {
                field: "zstep.max_flow_iters".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Everything the Z-step reads at iterate `q`.
#[derive(Debug, Clone, Copy)]
pub struct ZStepData<'a> {
    pub graph: &'a WeightedGraph,
    pub weights: &'a [AgentWeights],
    /// Proximal weights `G_i`.
    pub proximal: &'a [Matrix],
    pub rho: f64,
    /// `x_i^q(0..=N)` for every agent.
    pub trajectories: &'a [Trajectory],
    pub z_prev: &'a [Vector],
    pub lambda: &'a [Vector],
}

impl ZStepData<'_> {
    fn agents(&self) -> usize {
        self.graph.node_count()
    }

    fn horizon(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::horizon)
    }

    fn check(&self) -> Result<()> {
        let count = self.agents();
        let lens = [
            self.weights.len(),
            self.proximal.len(),
            self.trajectories.len(),
            self.z_prev.len(),
            self.lambda.len(),
        ];
        if lens.iter().any(|&l| l != count) {
            return Err(Error::Dimension(format!(
                "Z-step expects {count} agents everywhere, got weights/G/trajectories/z/λ = {lens:?}"
            )));
        }
        let n = self.z_prev[0].len();
        for i in 0..count {
            if self.z_prev[i].len() != n
                || self.lambda[i].len() != n
                || self.proximal[i].shape() != (n, n)
                || self.weights[i].q.shape() != (n, n)
                || self.trajectories[i].states[0].len() != n
            {
                return Err(Error::Dimension(format!(
                    "agent {i}: Z-step data not {n}-dimensional"
                )));
            }
        }
        Ok(())
    }

    /// `2N·Q_i + 2Q_iN + G_i`.
    fn diagonal_block(&self, i: usize) -> Matrix {
        let w = &self.weights[i];
        &w.q * (2.0 * self.horizon() as f64) + &w.q_terminal * 2.0 + &self.proximal[i]
    }

    /// `2Q_iN x_i(N) + 2Σ_k Q_i x_i(k) + G_i z_i^q`.
    fn anchor(&self, i: usize) -> Vector {
        let w = &self.weights[i];
        let t = &self.trajectories[i];
        let n = self.horizon();
        let stage_sum = t.states[..n]
            .iter()
            .fold(Vector::zeros(t.states[0].len()), |acc, x| acc + x);
        (&w.q_terminal * &t.states[n]) * 2.0
            + (&w.q * stage_sum) * 2.0
            + &self.proximal[i] * &self.z_prev[i]
    }
}

/// `tol`, raised to the rounding floor of a right-hand side whose terms are
/// of size `magnitude`. With terms near `1e12` (an unstable plant under zero
/// input) an absolute `1e−10` is below one ulp and cannot be reached.
fn attainable_tol(tol: f64, magnitude: f64) -> f64 {
    tol.max(16.0 * f64::EPSILON * magnitude)
}

/// Precomputed per-agent pieces of the flow right-hand side.
struct LocalTerms {
    diagonal: Vec<Matrix>,
    anchor: Vec<Vector>,
}

impl LocalTerms {
    fn new(data: &ZStepData<'_>) -> Self {
        let count = data.agents();
        Self {
            diagonal: (0..count).map(|i| data.diagonal_block(i)).collect(),
            anchor: (0..count).map(|i| data.anchor(i)).collect(),
        }
    }

    /// Largest constant term of any agent's right-hand side.
    fn scale(&self, data: &ZStepData<'_>) -> f64 {
        (0..self.anchor.len())
            .map(|i| {
                let coupling: f64 = (0..self.anchor.len())
                    .map(|j| data.graph.weight(i, j) * (&data.lambda[i] - &data.lambda[j]).amax())
                    .sum();
                self.anchor[i].amax() + coupling
            })
            .fold(0.0, f64::max)
    }

    fn rhs(&self, data: &ZStepData<'_>, i: usize, z: &[Vector]) -> Vector {
        let mut out = &self.anchor[i] - &self.diagonal[i] * &z[i];
        for j in 0..z.len() {
            let a = data.graph.weight(i, j);
            if a > 0.0 {
                let coupling = (&z[i] - &z[j]) * data.rho + (&data.lambda[i] - &data.lambda[j]);
                out.axpy(-a, &coupling, 1.0);
            }
        }
        out
    }
}

/// Right-hand side of agent `i`'s gradient flow evaluated at `z`. Only
/// agent `i`'s own data and its neighbors' `z_j`, `λ_j` enter.
pub fn zstep_rhs(data: &ZStepData<'_>, i: usize, z: &[Vector]) -> Result<Vector> {
    data.check()?;
    if i >= data.agents() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: data.agents(),
        });
    }
    if z.len() != data.agents() || z.iter().any(|v| v.len() != data.z_prev[0].len()) {
        return Err(Error::Dimension("evaluation point has wrong shape".into()));
    }
    Ok(LocalTerms::new(data).rhs(data, i, z))
}

/// Gershgorin step `1/Λ̄`, `Λ̄ = max_i (2N‖Q_i‖ + 2‖Q_iN‖ + ‖G_i‖ + 2ρ l_ii)`.
pub fn auto_step_size(data: &ZStepData<'_>) -> f64 {
    let n = data.horizon() as f64;
    let bound = (0..data.agents())
        .map(|i| {
            let w = &data.weights[i];
            2.0 * n * sym_norm(&w.q)
                + 2.0 * sym_norm(&w.q_terminal)
                + sym_norm(&data.proximal[i])
                + 2.0 * data.rho * data.graph.degree(i)
        })
        .fold(0.0_f64, f64::max);
    1.0 / bound
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub z: Vec<Vector>,
    pub iterations: usize,
    pub residual: f64,
}

/// Explicit-Euler integration of the Z-step gradient flow from `Zᵠ` in
/// synchronous rounds until `‖rhs‖∞ ≤ residual_tol` (or the rounding floor
/// of the data, whichever is larger).
pub fn zstep_flow(data: &ZStepData<'_>, cfg: &ZStepConfig) -> Result<FlowOutcome> {
    data.check()?;
    cfg.validate()?;
    let h = match cfg.step_size {
        StepSize::Auto => auto_step_size(data),
        StepSize::Fixed(h) => h,
    };
    let terms = LocalTerms::new(data);
    let count = data.agents();
    let scale = terms.scale(data);
    let mut z = data.z_prev.to_vec();
    let mut iterations = 0;
    loop {
        // every agent reads the round-start snapshot
        let rhs: Vec<Vector> = (0..count).map(|i| terms.rhs(data, i, &z)).collect();
        let residual = rhs.iter().map(|r| r.amax()).fold(0.0_f64, f64::max);
        let z_max = z.iter().map(|v| v.amax()).fold(0.0_f64, f64::max);
        if residual <= attainable_tol(cfg.residual_tol, scale + z_max / h) {
            return Ok(FlowOutcome {
                z,
                iterations,
                residual,
            });
        }
        if iterations >= cfg.max_flow_iters || !residual.is_finite() {
            return Err(Error::FlowNotConverged {
                iterations,
                residual,
                tol: cfg.residual_tol,
            });
        }
        for (zi, ri) in z.iter_mut().zip(&rhs) {
            zi.axpy(h, ri, 1.0);
        }
        iterations += 1;
    }
}

/// Coefficient matrix and right-hand side of the Z-step optimality system.
pub fn kkt_system(data: &ZStepData<'_>) -> Result<(Matrix, Vector)> {
    data.check()?;
    let count = data.agents();
    let n = data.z_prev[0].len();
    let mut m = kron_identity(&data.graph.laplacian(), n) * data.rho;
    for i in 0..count {
        let mut block = m.view_mut((i * n, i * n), (n, n));
        block += data.diagonal_block(i);
    }
    let l_lambda = kron_identity(&data.graph.laplacian(), n) * stack(data.lambda);
    let anchors: Vec<Vector> = (0..count).map(|i| data.anchor(i)).collect();
    Ok((m, stack(&anchors) - l_lambda))
}

/// `‖M Z − b‖∞` of the optimality system.
pub fn kkt_residual(data: &ZStepData<'_>, z: &[Vector]) -> Result<f64> {
    let (m, b) = kkt_system(data)?;
    Ok((m * stack(z) - b).amax())
}

/// Direct solve of the Z-step optimality system.
pub fn zstep_direct(data: &ZStepData<'_>) -> Result<Vec<Vector>> {
    let (m, b) = kkt_system(data)?;
    let n = data.z_prev[0].len();
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Solver("Z-step matrix is not positive definite (check G_i ≻ 0)".into())
    })?;
    let mut sol = chol.solve(&b);
    let tol = 1e-9 * (1.0 + b.norm());
    let mut res = &m * &sol - &b;
    if res.norm() > tol {
        sol -= chol.solve(&res);
        res = &m * &sol - &b;
    }
    if res.norm() > tol {
        return Err(Error::Solver(format!(
            "Z-step residual {:e} exceeds {tol:e}",
            res.norm()
        )));
    }
    Ok(split(&sol, std::iter::repeat_n(n, data.agents())))
}

/// The Z-step objective up to a constant:
/// `J₁(Uᵠ, Z) + Λᵠᵀ(L⊗I)Z + (ρ/2)Zᵀ(L⊗I)Z + ½(Z − Zᵠ)ᵀG(Z − Zᵠ)`.
pub fn zstep_objective(data: &ZStepData<'_>, z: &[Vector]) -> Result<f64> {
    let coupling = crate::cost::coupling_cost(data.trajectories, z, data.weights)?;
    let l = data.graph.laplacian();
    let prox: f64 = (0..data.agents())
        .map(|i| 0.5 * quad_form(&data.proximal[i], &(&z[i] - &data.z_prev[i])))
        .sum();
    Ok(coupling
        + laplacian_form(&l, data.lambda, z)
        + 0.5 * data.rho * laplacian_form(&l, z, z)
        + prox)
}
