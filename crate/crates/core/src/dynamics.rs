//! Discrete-time LTI agents and their state trajectories.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// `x(k+1) = A x(k) + B u(k)` with initial state `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: Matrix,
    pub b: Matrix,
    pub x0: Vector,
}

impl AgentModel {
    pub fn new(a: Matrix, b: Matrix, x0: Vector) -> Result<Self> {
        let model = Self { a, b, x0 };
        model.check()?;
        Ok(model)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        if !self.a.is_square() || n == 0 {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must have {n} rows and at least one column, got {}x{}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if self.x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 has length {}, expected {n}",
                self.x0.len()
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x(0..=N)`
    pub states: Vec<Vector>,
    /// `u(0..N)`
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn state(&self, k: usize) -> Result<&Vector> {
        self.states.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.states.len(),
        })
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has at least x(0)")
    }
}

/// Propagates the model over `horizon` steps driven by `inputs`.
pub fn rollout(model: &AgentModel, inputs: &[Vector], horizon: usize) -> Result<Trajectory> {
    if inputs.len() != horizon {
        return Err(Error::Dimension(format!(
            "expected {horizon} inputs, got {}",
            inputs.len()
        )));
    }
    let m = model.input_dim();
    if let Some((k, u)) = inputs.iter().enumerate().find(|(_, u)| u.len() != m) {
        return Err(Error::Dimension(format!(
            "input u({k}) has width {}, model expects {m}",
            u.len()
        )));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(model.x0.clone());
    for u in inputs {
        let next = model.step(states.last().unwrap(), u);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
    })
}

/// `e(k) = x(k) - z`.
pub fn sync_error(trajectory: &Trajectory, z: &Vector, k: usize) -> Result<Vector> {
    let x = trajectory.state(k)?;
    if x.len() != z.len() {
        return Err(Error::Dimension(format!(
            "state has length {}, z has length {}",
            x.len(),
            z.len()
        )));
    }
    Ok(x - z)
}

pub fn zero_inputs(model: &AgentModel, horizon: usize) -> Vec<Vector> {
    vec![Vector::zeros(model.input_dim()); horizon]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator(x0: [f64; 2]) -> AgentModel {
        AgentModel::new(
            Matrix::from_row_slice(2, 2, &[1., 1., 0., 1.]),
            Matrix::from_row_slice(2, 1, &[0., 1.]),
            Vector::from_row_slice(&x0),
        )
        .unwrap()
    }

    #[test]
    fn identity_dynamics_hold_state() {
        let model = AgentModel::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 1, &[0., 1.]),
            Vector::from_row_slice(&[10., -4.]),
        )
        .unwrap();
        let traj = rollout(&model, &zero_inputs(&model, 5), 5).unwrap();
        assert_eq!(traj.states.len(), 6);
        assert!(traj.states.iter().all(|x| x == &model.x0));
    }

    #[test]
    fn double_integrator_steps() {
        let traj = rollout(&double_integrator([10., -4.]), &[Vector::zeros(1)], 1).unwrap();
        assert_eq!(traj.states[1], Vector::from_row_slice(&[6., -4.]));

        let traj = rollout(
            &double_integrator([0., 0.]),
            &[Vector::from_element(1, 2.0)],
            1,
        )
        .unwrap();
        assert_eq!(traj.states[1], Vector::from_row_slice(&[0., 2.]));
    }

    #[test]
    fn rollout_rejects_bad_inputs() {
        let model = double_integrator([0., 0.]);
        assert!(rollout(&model, &[Vector::zeros(2)], 1).is_err());
        assert!(rollout(&model, &[Vector::zeros(1)], 2).is_err());
    }

    #[test]
    fn sync_error_cases() {
        let traj = rollout(&double_integrator([10., -4.]), &[Vector::zeros(1)], 1).unwrap();
        let z = Vector::from_row_slice(&[1., 1.]);
        assert_eq!(
            sync_error(&traj, &z, 1).unwrap(),
            Vector::from_row_slice(&[5., -5.])
        );
        assert_eq!(
            sync_error(&traj, &traj.states[1], 1).unwrap(),
            Vector::zeros(2)
        );
        assert_eq!(
            sync_error(&traj, &Vector::zeros(2), 0).unwrap(),
            traj.states[0]
        );
        assert!(sync_error(&traj, &z, 2).is_err());
    }

    #[test]
    fn bad_model_dimensions() {
        assert!(AgentModel::new(
            Matrix::identity(2, 2),
            Matrix::zeros(3, 1),
            Vector::zeros(2)
        )
        .is_err());
        assert!(AgentModel::new(
            Matrix::identity(2, 2),
            Matrix::zeros(2, 1),
            Vector::zeros(3)
        )
        .is_err());
    }
}
