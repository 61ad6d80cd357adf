//! Quadratic synchronization cost, augmented Lagrangian and the
//! Laplacian-based relative cost used to compare controllers.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{laplacian_apply, laplacian_form};
use crate::linalg::{is_symmetric, min_eigenvalue, quad_form, Matrix, Vector};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const PD_TOL: f64 = 1e-10;

/// Stage, terminal and input weights of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentWeights {
    pub q: Matrix,
    pub q_terminal: Matrix,
    pub r: Matrix,
}

impl AgentWeights {
    /// Checks shapes against `(n, m)`, symmetry, `Q, Q_N ⪰ 0` and `R ≻ 0`.
    pub fn validate(&self, agent: usize, n: usize, m: usize) -> Result<()> {
        let checks: [(&'static str, &Matrix, usize, bool); 3] = [
            ("Q", &self.q, n, false),
            ("QN", &self.q_terminal, n, false),
            ("R", &self.r, m, true),
        ];
        for (field, mat, dim, definite) in checks {
            if mat.shape() != (dim, dim) {
                return Err(Error::InvalidWeights {
                    agent,
                    field,
                    reason: format!("expected {dim}x{dim}, got {}x{}", mat.nrows(), mat.ncols()),
                });
            }
            if !is_symmetric(mat, SYMMETRY_TOL) {
                return Err(Error::InvalidWeights {
                    agent,
                    field,
                    reason: "not symmetric".into(),
                });
            }
            let lo = min_eigenvalue(mat);
            if definite && lo < PD_TOL {
                return Err(Error::InvalidWeights {
                    agent,
                    field,
                    reason: format!("not positive definite (smallest eigenvalue {lo:e})"),
                });
            }
            if !definite && lo < -PSD_TOL {
                return Err(Error::InvalidWeights {
                    agent,
                    field,
                    reason: format!("not positive semidefinite (smallest eigenvalue {lo:e})"),
                });
            }
        }
        Ok(())
    }

    pub fn state_weight(&self, k: usize, horizon: usize) -> &Matrix {
        if k < horizon {
            &self.q
        } else {
            &self.q_terminal
        }
    }
}

fn check_shapes(
    trajectories: &[Trajectory],
    z: &[Vector],
    weights: &[AgentWeights],
) -> Result<usize> {
    if trajectories.len() != z.len() || trajectories.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} trajectories, {} synchronization states, {} weight sets",
            trajectories.len(),
            z.len(),
            weights.len()
        )));
    }
    let horizon = trajectories.first().map_or(0, Trajectory::horizon);
    for (i, (t, zi)) in trajectories.iter().zip(z).enumerate() {
        if t.horizon() != horizon || t.states.len() != horizon + 1 {
            return Err(Error::Dimension(format!(
                "agent {i} trajectory has horizon {}, expected {horizon}",
                t.horizon()
            )));
        }
        if t.states[0].len() != zi.len() {
            return Err(Error::Dimension(format!(
                "agent {i}: state length {} but z length {}",
                t.states[0].len(),
                zi.len()
            )));
        }
    }
    Ok(horizon)
}

/// Error-energy part of the cost (everything except the input penalty).
pub fn coupling_cost(
    trajectories: &[Trajectory],
    z: &[Vector],
    weights: &[AgentWeights],
) -> Result<f64> {
    let horizon = check_shapes(trajectories, z, weights)?;
    Ok(trajectories
        .iter()
        .zip(z)
        .zip(weights)
        .map(|((t, zi), w)| {
            t.states
                .iter()
                .enumerate()
                .map(|(k, x)| quad_form(w.state_weight(k, horizon), &(x - zi)))
                .sum::<f64>()
        })
        .sum())
}

/// Input-energy part of the cost.
pub fn input_cost(trajectories: &[Trajectory], weights: &[AgentWeights]) -> f64 {
    trajectories
        .iter()
        .zip(weights)
        .map(|(t, w)| t.inputs.iter().map(|u| quad_form(&w.r, u)).sum::<f64>())
        .sum()
}

/// Finite-horizon synchronization cost `J(U, Z)`.
pub fn cost_j(trajectories: &[Trajectory], z: &[Vector], weights: &[AgentWeights]) -> Result<f64> {
    Ok(coupling_cost(trajectories, z, weights)? + input_cost(trajectories, weights))
}

/// `J + Λᵀ(L⊗I)Z + (ρ/2) Zᵀ(L⊗I)Z`.
pub fn augmented_lagrangian(
    trajectories: &[Trajectory],
    z: &[Vector],
    lambda: &[Vector],
    weights: &[AgentWeights],
    rho: f64,
    laplacian: &Matrix,
) -> Result<f64> {
    let j = cost_j(trajectories, z, weights)?;
    if lambda.len() != z.len() || laplacian.shape() != (z.len(), z.len()) {
        return Err(Error::Dimension(format!(
            "{} multipliers and a {}x{} Laplacian for {} agents",
            lambda.len(),
            laplacian.nrows(),
            laplacian.ncols(),
            z.len()
        )));
    }
    if lambda.iter().zip(z).any(|(l, zi)| l.len() != zi.len()) {
        return Err(Error::Dimension(
            "multiplier length differs from state length".into(),
        ));
    }
    Ok(j + laplacian_form(laplacian, lambda, z) + 0.5 * rho * laplacian_form(laplacian, z, z))
}

/// Cost of the network disagreement `e(k) = (L⊗I) X(k)` plus input energy,
/// with block-diagonal stacks of the per-agent weights.
pub fn relative_cost(
    trajectories: &[Trajectory],
    weights: &[AgentWeights],
    laplacian: &Matrix,
) -> Result<f64> {
    if trajectories.len() != weights.len() || laplacian.shape() != (weights.len(), weights.len()) {
        return Err(Error::Dimension(format!(
            "{} trajectories, {} weight sets, {}x{} Laplacian",
            trajectories.len(),
            weights.len(),
            laplacian.nrows(),
            laplacian.ncols()
        )));
    }
    let horizon = trajectories.first().map_or(0, Trajectory::horizon);
    if trajectories.iter().any(|t| t.horizon() != horizon) {
        return Err(Error::Dimension(
            "trajectories have different horizons".into(),
        ));
    }
    let mut total = input_cost(trajectories, weights);
    for k in 0..=horizon {
        let joint: Vec<Vector> = trajectories.iter().map(|t| t.states[k].clone()).collect();
        let e = laplacian_apply(laplacian, &joint);
        total += e
            .iter()
            .zip(weights)
            .map(|(ei, w)| quad_form(w.state_weight(k, horizon), ei))
            .sum::<f64>();
    }
    Ok(total)
}

/// Per-step `‖(L⊗I) X(k)‖`, `k = 0..=N`.
pub fn disagreement_norms(trajectories: &[Trajectory], laplacian: &Matrix) -> Vec<f64> {
    let horizon = trajectories.first().map_or(0, Trajectory::horizon);
    (0..=horizon)
        .map(|k| {
            let joint: Vec<Vector> = trajectories.iter().map(|t| t.states[k].clone()).collect();
            crate::graph::primal_residual(laplacian, &joint)
        })
        .collect()
}

/// Per-step `‖col{u_1(k), …, u_N(k)}‖`, `k = 0..N`.
pub fn input_norms(trajectories: &[Trajectory]) -> Vec<f64> {
    let horizon = trajectories.first().map_or(0, Trajectory::horizon);
    (0..horizon)
        .map(|k| {
            trajectories
                .iter()
                .map(|t| t.inputs[k].norm_squared())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
