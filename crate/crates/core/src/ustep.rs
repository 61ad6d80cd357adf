//! Per-agent input (U) minimization step solved by backward dynamic
//! programming.
//!
//! For fixed `z = z_i^{q+1}` and previous inputs `u^q`, each agent minimizes
//!
//! `Σ_k [(x(k)−z)ᵀQ(x(k)−z) + u(k)ᵀRu(k) + (u(k)−u^q(k))ᵀH(u(k)−u^q(k))] + (x(N)−z)ᵀQ_N(x(N)−z)`
//!
//! whose cost-to-go is `xᵀS₁(k)x + S₂(k)x + S₃(k)`.

use crate::cost::AgentWeights;
use crate::dynamics::{AgentModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{quad_form, symmetrize, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    /// `U(k) = (R + H + BᵀS₁(k+1)B)⁻¹`, `k = 0..N`.
    pub gain_inv: Vec<Matrix>,
    /// `V(k) = BᵀS₁(k+1)A`.
    pub feedback: Vec<Matrix>,
    /// `W(k) = −½BᵀS₂(k+1)ᵀ + H u^q(k)`.
    pub feedforward: Vec<Vector>,
    /// `S₁(k)`, `k = 0..=N`.
    pub s1: Vec<Matrix>,
    /// `S₂(k)` stored as a column (the row vector transposed).
    pub s2: Vec<Vector>,
    pub s3: Vec<f64>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.gain_inv.len()
    }

    /// `u*(k) = −U(k)[V(k)x − W(k)]`.
    pub fn control_input(&self, k: usize, x: &Vector) -> Result<Vector> {
        if k >= self.horizon() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.horizon(),
            });
        }
        if x.len() != self.feedback[k].ncols() {
            return Err(Error::Dimension(format!(
                "state has length {}, schedule expects {}",
                x.len(),
                self.feedback[k].ncols()
            )));
        }
        Ok(-(&self.gain_inv[k] * (&self.feedback[k] * x - &self.feedforward[k])))
    }

    /// Optimal value of the subproblem from `x0`:
    /// `x0ᵀS₁(0)x0 + S₂(0)x0 + S₃(0)`.
    pub fn optimal_value(&self, x0: &Vector) -> f64 {
        quad_form(&self.s1[0], x0) + self.s2[0].dot(x0) + self.s3[0]
    }
}

fn spd_inverse(m: Matrix) -> Result<Matrix> {
    let m = symmetrize(&m);
    m.cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::Solver("R + H + BᵀS₁B is not positive definite (corrupted weights?)".into())
    })
}

/// Backward recursion for the gains and the value-function coefficients.
pub fn backward_pass(
    model: &AgentModel,
    weights: &AgentWeights,
    h: &Matrix,
    z: &Vector,
    u_prev: &[Vector],
    horizon: usize,
) -> Result<GainSchedule> {
    let n = model.state_dim();
    let m = model.input_dim();
    if u_prev.len() != horizon || u_prev.iter().any(|u| u.len() != m) {
        return Err(Error::Dimension(format!(
            "previous inputs must be {horizon} vectors of width {m}"
        )));
    }
    if z.len() != n
        || h.shape() != (m, m)
        || weights.q.shape() != (n, n)
        || weights.r.shape() != (m, m)
    {
        return Err(Error::Dimension(
            "U-step data does not match the agent model".into(),
        ));
    }

    let a = &model.a;
    let b = &model.b;
    let q = &weights.q;
    let qn = &weights.q_terminal;
    let r_plus_h = &weights.r + h;

    let mut gain_inv = vec![Matrix::zeros(m, m); horizon];
    let mut feedback = vec![Matrix::zeros(m, n); horizon];
    let mut feedforward = vec![Vector::zeros(m); horizon];
    let mut s1 = vec![Matrix::zeros(n, n); horizon + 1];
    let mut s2 = vec![Vector::zeros(n); horizon + 1];
    let mut s3 = vec![0.0; horizon + 1];

    s1[horizon] = qn.clone();
    s2[horizon] = -(qn * z) * 2.0;
    s3[horizon] = quad_form(qn, z);

    for k in (0..horizon).rev() {
        let s1_next = &s1[k + 1];
        let s2_next = &s2[k + 1];
        let bt_s1 = b.transpose() * s1_next;
        let bt_s1_b = &bt_s1 * b;

        let u_k = spd_inverse(&r_plus_h + &bt_s1_b)?;
        let v_k = &bt_s1 * a;
        let w_k = -(b.transpose() * s2_next) * 0.5 + h * &u_prev[k];

        let uv = &u_k * &v_k;
        let closed_loop = a - b * &uv;
        let uw = &u_k * &w_k;

        let s1_k =
            q + uv.transpose() * &r_plus_h * &uv + closed_loop.transpose() * s1_next * &closed_loop;

        // the bracket is algebraically zero (U(k)(R+H+BᵀS₁B) = I); kept verbatim
        let bracket = &v_k - &r_plus_h * &uv - &bt_s1_b * &uv;
        let s2_k = (bracket.transpose() * &uw) * 2.0 + closed_loop.transpose() * s2_next
            - (q * z) * 2.0
            + (uv.transpose() * h * &u_prev[k]) * 2.0;

        let s3_k = quad_form(q, z)
            + quad_form(&(&r_plus_h + &bt_s1_b), &uw)
            + s2_next.dot(&(b * &uw))
            + s3[k + 1]
            + u_prev[k].dot(&(h * (&u_prev[k] - &uw * 2.0)));

        s1[k] = symmetrize(&s1_k);
        s2[k] = s2_k;
        s3[k] = s3_k;
        gain_inv[k] = u_k;
        feedback[k] = v_k;
        feedforward[k] = w_k;
    }

    Ok(GainSchedule {
        gain_inv,
        feedback,
        feedforward,
        s1,
        s2,
        s3,
    })
}

/// Result of one agent's U-step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentUpdate {
    pub inputs: Vec<Vector>,
    pub trajectory: Trajectory,
    pub value: f64,
}

/// Backward pass followed by the closed-loop forward rollout.
pub fn solve_agent(
    model: &AgentModel,
    weights: &AgentWeights,
    h: &Matrix,
    z: &Vector,
    u_prev: &[Vector],
) -> Result<AgentUpdate> {
    let horizon = u_prev.len();
    let sched = backward_pass(model, weights, h, z, u_prev, horizon)?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(model.x0.clone());
    for k in 0..horizon {
        let x = states.last().unwrap();
        let u = sched.control_input(k, x)?;
        states.push(model.step(x, &u));
        inputs.push(u);
    }
    Ok(AgentUpdate {
        value: sched.optimal_value(&model.x0),
        trajectory: Trajectory {
            states,
            inputs: inputs.clone(),
        },
        inputs,
    })
}

/// Runs every agent's U-step. Agents are independent.
pub fn ustep(
    models: &[AgentModel],
    weights: &[AgentWeights],
    h: &[Matrix],
    z_next: &[Vector],
    u_prev: &[Vec<Vector>],
) -> Result<Vec<AgentUpdate>> {
    let count = models.len();
    if [weights.len(), h.len(), z_next.len(), u_prev.len()]
        .iter()
        .any(|&l| l != count)
    {
        return Err(Error::Dimension(
            "U-step inputs disagree on the number of agents".into(),
        ));
    }
    (0..count)
        .map(|i| solve_agent(&models[i], &weights[i], &h[i], &z_next[i], &u_prev[i]))
        .collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn ustep_parallel(
    pool: &rayon::ThreadPool,
    models: &[AgentModel],
    weights: &[AgentWeights],
    h: &[Matrix],
    z_next: &[Vector],
    u_prev: &[Vec<Vector>],
) -> Result<Vec<AgentUpdate>> {
    use rayon::prelude::*;
    pool.install(|| {
        (0..models.len())
            .into_par_iter()
            .map(|i| solve_agent(&models[i], &weights[i], &h[i], &z_next[i], &u_prev[i]))
            .collect()
    })
}

/// Per-agent U-step objective evaluated on a trajectory.
pub fn ustep_objective(
    weights: &AgentWeights,
    h: &Matrix,
    z: &Vector,
    u_prev: &[Vector],
    trajectory: &Trajectory,
) -> f64 {
    let horizon = trajectory.horizon();
    let errors: f64 = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| quad_form(weights.state_weight(k, horizon), &(x - z)))
        .sum();
    let inputs: f64 = trajectory
        .inputs
        .iter()
        .zip(u_prev)
        .map(|(u, up)| quad_form(&weights.r, u) + quad_form(h, &(u - up)))
        .sum();
    errors + inputs
}
