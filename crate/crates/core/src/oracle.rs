//! Centralised dense solvers used as ground truth.

use crate::cost::{cost_j, AgentWeights};
use crate::dynamics::{AgentModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scenario::Scenario;

/// Largest stacked `(U, z̄)` dimension the global oracle accepts.
pub const DIM_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub inputs: Vec<Vec<Vector>>,
    pub z_bar: Vector,
    /// `1_N ⊗ z̄`.
    pub z: Vec<Vector>,
    /// Least-norm multiplier with `(L⊗I)Λ = −∇_Z J` at the optimum.
    pub lambda: Vec<Vector>,
    pub cost: f64,
    pub trajectories: Vec<Trajectory>,
    /// `‖Kv − b‖ / (1 + ‖b‖)` of the solved optimality system.
    pub stationarity_residual: f64,
}

struct Layout {
    /// Offset of agent i's inputs, then its states `x(1..N)`.
    agent_offsets: Vec<(usize, usize)>,
    z_offset: usize,
    primal_dim: usize,
}

impl Layout {
    fn new(agents: &[AgentModel], horizon: usize) -> Self {
        let n = agents[0].state_dim();
        let mut offset = 0;
        let agent_offsets = agents
            .iter()
            .map(|a| {
                let u = offset;
                let x = u + horizon * a.input_dim();
                offset = x + horizon * n;
                (u, x)
            })
            .collect();
        Layout {
            agent_offsets,
            z_offset: offset,
            primal_dim: offset + n,
        }
    }
}

fn add_block(m: &mut Matrix, r: usize, c: usize, block: &Matrix) {
    let mut view = m.view_mut((r, c), block.shape());
    view += block;
}

/// Global optimum over `(U, z̄)` with `Z = 1⊗z̄`.
///
/// Solved in state-space form: states `x_i(1..N)` are kept as variables and
/// tied to the inputs by the dynamics as equality constraints, which keeps
/// the system well conditioned for unstable `A`. A singular system
/// (semidefinite `Q`) falls back to the least-norm solution.
pub fn solve_global(scenario: &Scenario) -> Result<OracleSolution> {
    scenario.validate()?;
    let agents = &scenario.agents;
    let weights = &scenario.weights;
    let horizon = scenario.params.horizon;
    let n = agents[0].state_dim();
    let reduced: usize = agents
        .iter()
        .map(|a| horizon * a.input_dim())
        .sum::<usize>()
        + n;
    if reduced > DIM_LIMIT {
        return Err(Error::TooLarge {
            dim: reduced,
            limit: DIM_LIMIT,
        });
    }

    let layout = Layout::new(agents, horizon);
    let constraints = agents.len() * horizon * n;
    let dim = layout.primal_dim + constraints;
    let mut kkt = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    let zo = layout.z_offset;

    let mut row = layout.primal_dim;
    for (i, (model, w)) in agents.iter().zip(weights).enumerate() {
        let (uo, xo) = layout.agent_offsets[i];
        let m = model.input_dim();
        // k = 0: fixed state x0, contributes to the z̄ block only
        add_block(&mut kkt, zo, zo, &(&w.q * 2.0));
        let g0 = -(&w.q * &model.x0) * 2.0;
        let mut seg = rhs.rows_mut(zo, n);
        seg -= &g0;
        for k in 1..=horizon {
            let qk = w.state_weight(k, horizon) * 2.0;
            let xk = xo + (k - 1) * n;
            add_block(&mut kkt, xk, xk, &qk);
            add_block(&mut kkt, zo, zo, &qk);
            add_block(&mut kkt, xk, zo, &(-&qk));
            add_block(&mut kkt, zo, xk, &(-&qk));
        }
        for k in 0..horizon {
            let uk = uo + k * m;
            add_block(&mut kkt, uk, uk, &(&w.r * 2.0));
            // x(k+1) − A x(k) − B u(k) = 0
            let xk1 = xo + k * n;
            let ident = Matrix::identity(n, n);
            add_block(&mut kkt, row, xk1, &ident);
            add_block(&mut kkt, xk1, row, &ident);
            add_block(&mut kkt, row, uk, &(-&model.b));
            add_block(&mut kkt, uk, row, &(-model.b.transpose()));
            if k == 0 {
                rhs.rows_mut(row, n).copy_from(&(&model.a * &model.x0));
            } else {
                let xk = xo + (k - 1) * n;
                add_block(&mut kkt, row, xk, &(-&model.a));
                add_block(&mut kkt, xk, row, &(-model.a.transpose()));
            }
            row += n;
        }
    }

    let sol = solve_symmetric_system(&kkt, &rhs)?;
    let residual = (&kkt * &sol - &rhs).norm() / (1.0 + rhs.norm());

    let z_bar = sol.rows(zo, n).into_owned();
    let mut inputs = Vec::with_capacity(agents.len());
    let mut trajectories = Vec::with_capacity(agents.len());
    for (i, model) in agents.iter().enumerate() {
        let (uo, xo) = layout.agent_offsets[i];
        let m = model.input_dim();
        let u: Vec<Vector> = (0..horizon)
            .map(|k| sol.rows(uo + k * m, m).into_owned())
            .collect();
        let mut states = vec![model.x0.clone()];
        states.extend((0..horizon).map(|k| sol.rows(xo + k * n, n).into_owned()));
        trajectories.push(Trajectory {
            states,
            inputs: u.clone(),
        });
        inputs.push(u);
    }
    let z = vec![z_bar.clone(); agents.len()];
    let cost = cost_j(&trajectories, &z, weights)?;
    let lambda = consensus_multiplier(scenario, &trajectories, &z)?;
    Ok(OracleSolution {
        inputs,
        z_bar,
        z,
        lambda,
        cost,
        trajectories,
        stationarity_residual: residual,
    })
}

/// Least-norm `Λ` with `(L⊗I)Λ = −∇_Z J`.
fn consensus_multiplier(
    scenario: &Scenario,
    trajectories: &[Trajectory],
    z: &[Vector],
) -> Result<Vec<Vector>> {
    // from the solved states: re-rolling the inputs out would amplify
    // rounding by ‖A‖^N for unstable plants
    let horizon = scenario.params.horizon;
    let grad_z: Vec<Vector> = trajectories
        .iter()
        .zip(&scenario.weights)
        .zip(z)
        .map(|((t, w), zi)| {
            t.states
                .iter()
                .enumerate()
                .fold(Vector::zeros(zi.len()), |acc, (k, x)| {
                    acc - (w.state_weight(k, horizon) * (x - zi)) * 2.0
                })
        })
        .collect();
    // L + 11ᵀ/N is PD on a connected graph and maps 1 to 1, so for a right
    // side orthogonal to 1 its solution is the least-norm solution of LΛ = b
    let count = grad_z.len();
    let l = scenario.laplacian() + Matrix::from_element(count, count, 1.0 / count as f64);
    let chol = l
        .cholesky()
        .ok_or_else(|| Error::Solver("shifted Laplacian is not positive definite".into()))?;
    let n = grad_z[0].len();
    let mut lambda = vec![Vector::zeros(n); count];
    for c in 0..n {
        let rhs = Vector::from_fn(count, |i, _| -grad_z[i][c]);
        let sol = chol.solve(&rhs);
        for i in 0..count {
            lambda[i][c] = sol[i];
        }
    }
    Ok(lambda)
}

fn solve_symmetric_system(k: &Matrix, b: &Vector) -> Result<Vector> {
    let tol = 1e-10 * (1.0 + b.norm());
    if let Some(x) = k.clone().lu().solve(b) {
        if x.iter().all(|v| v.is_finite()) && (k * &x - b).norm() <= tol {
            return Ok(x);
        }
    }
    let svd = k.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    svd.solve(b, cutoff)
        .map_err(|e| Error::Solver(format!("least-norm solve failed: {e}")))
}

/// Dense solve of one agent's U-step objective
/// `Σ_k (x(k)−z)ᵀQ̃_k(x(k)−z) + Σ_k u(k)ᵀR u(k) + (u(k)−u_prev(k))ᵀH(u(k)−u_prev(k))`,
/// expanding every `x(k)` in the stacked inputs.
pub fn solve_ustep_direct(
    model: &AgentModel,
    weights: &AgentWeights,
    h: &Matrix,
    z: &Vector,
    u_prev: &[Vector],
    horizon: usize,
) -> Result<Vec<Vector>> {
    model.check()?;
    let n = model.state_dim();
    let m = model.input_dim();
    if u_prev.len() != horizon || u_prev.iter().any(|u| u.len() != m) || z.len() != n {
        return Err(Error::Dimension(
            "U-step oracle inputs have inconsistent shapes".into(),
        ));
    }
    let dim = horizon * m;
    if dim > DIM_LIMIT {
        return Err(Error::TooLarge {
            dim,
            limit: DIM_LIMIT,
        });
    }
    let mut hess = Matrix::zeros(dim, dim);
    let mut grad = Vector::zeros(dim);
    let mut phi = Matrix::zeros(n, dim);
    let mut free = model.x0.clone();
    for k in 0..=horizon {
        if k > 0 {
            phi = &model.a * phi;
            phi.view_mut((0, (k - 1) * m), (n, m)).copy_from(&model.b);
            free = &model.a * free;
        }
        let qk = weights.state_weight(k, horizon);
        hess += phi.transpose() * qk * &phi * 2.0;
        grad += phi.transpose() * (qk * (&free - z)) * 2.0;
    }
    for k in 0..horizon {
        let blk = (&weights.r + h) * 2.0;
        add_block(&mut hess, k * m, k * m, &blk);
        let mut seg = grad.rows_mut(k * m, m);
        seg -= (h * &u_prev[k]) * 2.0;
    }
    let rhs = -grad;
    let chol = hess
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("U-step quadratic is not positive definite".into()))?;
    let mut x = chol.solve(&rhs);
    let r = &rhs - &hess * &x;
    x += chol.solve(&r);
    let residual = (&hess * &x - &rhs).norm();
    if residual > 1e-10 * (1.0 + rhs.norm()) {
        return Err(Error::Solver(format!(
            "U-step oracle residual {residual:e} exceeds tolerance"
        )));
    }
    Ok((0..horizon)
        .map(|k| x.rows(k * m, m).into_owned())
        .collect())
}
