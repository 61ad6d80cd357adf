//! Gradient and Lipschitz machinery of the error-energy part `J₁(U, Z)` of
//! the cost, and the parameter condition that certifies convergence.

use std::fmt;

use serde::Serialize;

use super::AlgorithmParams;
use crate::cost::AgentWeights;
use crate::dynamics::{rollout, AgentModel};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, Matrix, Vector};

/// Exact Hessian of one agent's `J₁` with respect to `(u(0), …, u(N−1), z)`.
///
/// `e(k) = Φ_k θ + A^k x0`, where the input blocks of `Φ_k` are
/// `A^{k−1−j}B` for `j < k` and the `z` block is `−I`. The Hessian is
/// `2 Σ_{k=0}^{N} Φ_kᵀ Q̃_k Φ_k`.
pub fn coupling_hessian(model: &AgentModel, weights: &AgentWeights, horizon: usize) -> Matrix {
    let n = model.state_dim();
    let m = model.input_dim();
    let dim = horizon * m + n;
    let mut phi = Matrix::zeros(n, dim);
    phi.view_mut((0, horizon * m), (n, n)).fill_with_identity();
    phi.view_mut((0, horizon * m), (n, n)).neg_mut();
    let mut hess = Matrix::zeros(dim, dim);
    for k in 0..=horizon {
        if k > 0 {
            // Φ_k = A·Φ_{k−1} on the input blocks, plus B in block k−1
            let inputs = &model.a * phi.columns(0, horizon * m);
            phi.columns_mut(0, horizon * m).copy_from(&inputs);
            phi.view_mut((0, (k - 1) * m), (n, m)).copy_from(&model.b);
        }
        let w = weights.state_weight(k, horizon);
        hess += phi.transpose() * w * &phi * 2.0;
    }
    hess
}

/// `L_δ = max_i ‖Hess_i J₁‖₂`; `J₁` is block-diagonal across agents.
pub fn lipschitz_constant(models: &[AgentModel], weights: &[AgentWeights], horizon: usize) -> f64 {
    models
        .iter()
        .zip(weights)
        .map(|(m, w)| max_eigenvalue(&coupling_hessian(m, w, horizon)).max(0.0))
        .fold(0.0, f64::max)
}

/// Gradient of `J₁` with respect to every input and every `z_i`.
///
/// Input blocks follow
/// `∇_{u(j)} = 2[(A^{N−1−j}B)ᵀQ_N e(N) + Σ_{k=j+1}^{N−1} (A^{k−1−j}B)ᵀQ e(k)]`,
/// accumulated backwards; the `z` block is `−2Q_N e(N) − 2Σ_{k=0}^{N−1} Q e(k)`
/// (the `k = 0` term carries the same factor 2 as the others).
pub fn coupling_gradient(
    models: &[AgentModel],
    weights: &[AgentWeights],
    inputs: &[Vec<Vector>],
    z: &[Vector],
) -> Result<(Vec<Vec<Vector>>, Vec<Vector>)> {
    if models.len() != weights.len() || models.len() != inputs.len() || models.len() != z.len() {
        return Err(Error::Dimension(
            "gradient inputs disagree on the number of agents".into(),
        ));
    }
    let mut grad_u = Vec::with_capacity(models.len());
    let mut grad_z = Vec::with_capacity(models.len());
    for ((model, w), (u, zi)) in models.iter().zip(weights).zip(inputs.iter().zip(z)) {
        let horizon = u.len();
        let traj = rollout(model, u, horizon)?;
        let errors: Vec<Vector> = traj.states.iter().map(|x| x - zi).collect();

        let mut gz = -(&w.q_terminal * &errors[horizon]) * 2.0;
        for e in &errors[..horizon] {
            gz -= (&w.q * e) * 2.0;
        }

        let mut gu = vec![Vector::zeros(model.input_dim()); horizon];
        let mut costate = (&w.q_terminal * &errors[horizon]) * 2.0;
        for j in (0..horizon).rev() {
            gu[j] = model.b.transpose() * &costate;
            if j > 0 {
                costate = model.a.transpose() * costate + (&w.q * &errors[j]) * 2.0;
            }
        }
        grad_u.push(gu);
        grad_z.push(gz);
    }
    Ok((grad_u, grad_z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentCheck {
    /// One-based agent number.
    pub agent: usize,
    pub g_min_eigenvalue: f64,
    pub g_positive_definite: bool,
    pub h_min_eigenvalue: f64,
    pub r_min_eigenvalue: f64,
    /// `L_δ + L_δ² / (2 σ_min(R_i))`.
    pub threshold: f64,
    /// `λ_min(H_i) − threshold`.
    pub margin: f64,
    pub h_passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lipschitz: f64,
    pub agents: Vec<AgentCheck>,
    pub passed: bool,
    pub override_allowed: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// The run may proceed: the condition holds or the override is set.
    pub fn permits_run(&self) -> bool {
        self.passed || self.override_allowed
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Lipschitz constant L_delta = {:.6e}", self.lipschitz)?;
        writeln!(
            f,
            "{:>5}  {:>12}  {:>12}  {:>12}  {:>13}  {}",
            "agent", "min eig G", "min eig H", "threshold", "margin", "status"
        )?;
        for a in &self.agents {
            let status = match (a.g_positive_definite, a.h_passes) {
                (true, true) => "pass",
                (false, _) => "FAIL (G not PD)",
                (true, false) => "FAIL (H below threshold)",
            };
            writeln!(
                f,
                "{:>5}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>13.6e}  {status}",
                a.agent, a.g_min_eigenvalue, a.h_min_eigenvalue, a.threshold, a.margin
            )?;
        }
        writeln!(f, "overall: {}", if self.passed { "PASS" } else { "FAIL" })?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn threshold(l_delta: f64, r: &Matrix) -> (f64, f64) {
    let r_min = min_eigenvalue(r);
    (l_delta + l_delta * l_delta / (2.0 * r_min), r_min)
}

/// Checks `G_i ≻ 0` and `λ_min(H_i) > L_δ + L_δ²/(2σ_min(R_i))` per agent.
pub fn validate_parameters(
    params: &AlgorithmParams,
    weights: &[AgentWeights],
    l_delta: f64,
) -> ValidationReport {
    let agents: Vec<AgentCheck> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (tau, r_min) = threshold(l_delta, &w.r);
            let g_min = params.g.get(i).map_or(f64::NAN, min_eigenvalue);
            let h_min = params.h.get(i).map_or(f64::NAN, min_eigenvalue);
            AgentCheck {
                agent: i + 1,
                g_min_eigenvalue: g_min,
                g_positive_definite: g_min > 0.0,
                h_min_eigenvalue: h_min,
                r_min_eigenvalue: r_min,
                threshold: tau,
                margin: h_min - tau,
                h_passes: h_min > tau,
            }
        })
        .collect();
    let passed = agents.iter().all(|a| a.g_positive_definite && a.h_passes);
    let mut warnings = Vec::new();
    if !passed {
        warnings.push(format!(
            "sufficient convergence condition G_i > 0, H_i > (L_delta + L_delta^2/(2 sigma_min(R_i))) I \
             is violated (L_delta = {l_delta:.6e}); convergence is not guaranteed by the theory, \
             although the iteration may still converge in practice"
        ));
    }
    ValidationReport {
        lipschitz: l_delta,
        agents,
        passed,
        override_allowed: params.allow_condition_override,
        warnings,
    }
}

/// Smallest proximal input weights `(1 + margin)·τ_i·I` satisfying the
/// condition, floored at `1e−9·I`.
pub fn suggest_h(l_delta: f64, weights: &[AgentWeights], margin: f64) -> Vec<Matrix> {
    weights
        .iter()
        .map(|w| {
            let m = w.r.nrows();
            let (tau, _) = threshold(l_delta, &w.r);
            Matrix::identity(m, m) * ((1.0 + margin) * tau).max(1e-9)
        })
        .collect()
}
