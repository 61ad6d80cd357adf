#![allow(dead_code)]

use lqsync::admm::AlgorithmParams;
use lqsync::cost::AgentWeights;
use lqsync::dynamics::AgentModel;
use lqsync::graph::WeightedGraph;
use lqsync::linalg::{Matrix, Vector};
use lqsync::scenario::{InitialGuess, Scenario};
use lqsync::zstep::ZStepConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_agents: usize,
    pub max_n: usize,
    pub max_m: usize,
    pub max_horizon: usize,
    /// Upper bound on ‖A‖₂.
    pub max_gain: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_agents: 4,
            max_n: 3,
            max_m: 2,
            max_horizon: 8,
            max_gain: 1.2,
        }
    }
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(lo..hi))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// `MMᵀ/n + shift·I`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let m = uniform_matrix(rng, n, n, -1.0, 1.0);
    let mut p = &m * m.transpose() / n as f64 + Matrix::identity(n, n) * shift;
    p = (&p + p.transpose()) * 0.5;
    p
}

pub fn random_connected_graph(rng: &mut ChaCha8Rng, count: usize) -> WeightedGraph {
    let mut edges = Vec::new();
    for i in 1..count {
        let j = rng.gen_range(0..i);
        edges.push((j, i, rng.gen_range(0.5..2.0)));
    }
    for i in 0..count {
        for j in i + 1..count {
            if !edges.iter().any(|&(a, b, _)| (a, b) == (i, j)) && rng.gen_bool(0.3) {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    WeightedGraph::from_edges(count, &edges).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, max_gain: f64) -> AgentModel {
    let mut a = uniform_matrix(rng, n, n, -1.0, 1.0);
    let norm = a.clone().svd(false, false).singular_values.max();
    if norm > 0.0 {
        a *= rng.gen_range(0.3..max_gain) / norm;
    }
    let b = uniform_matrix(rng, n, m, -1.0, 1.0);
    let x0 = uniform_vector(rng, n, -3.0, 3.0);
    AgentModel::new(a, b, x0).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AgentWeights {
    AgentWeights {
        q: random_psd(rng, n, 0.1),
        q_terminal: random_psd(rng, n, 0.1),
        r: random_psd(rng, m, 0.5),
    }
}

/// A random connected instance with `G = I`, `H = I` and `Z⁰ = x0`; `H`
/// usually misses the sufficient condition, so the override is on.
pub fn random_scenario(rng: &mut ChaCha8Rng, shape: Shape) -> Scenario {
    let count = rng.gen_range(2..=shape.max_agents);
    let n = rng.gen_range(1..=shape.max_n);
    let horizon = rng.gen_range(1..=shape.max_horizon);
    let mut agents = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..count {
        let m = rng.gen_range(1..=shape.max_m);
        agents.push(random_model(rng, n, m, shape.max_gain));
        weights.push(random_weights(rng, n, m));
    }
    let params = AlgorithmParams {
        rho: rng.gen_range(0.5..2.0),
        allow_condition_override: true,
        g: vec![Matrix::identity(n, n); count],
        h: agents
            .iter()
            .map(|a| Matrix::identity(a.input_dim(), a.input_dim()))
            .collect(),
        ..AlgorithmParams::new(horizon, 200_000)
    };
    Scenario {
        label: "random".into(),
        graph: random_connected_graph(rng, count),
        agents,
        weights,
        params,
        zstep: ZStepConfig::default(),
        initial: InitialGuess::default(),
        notes: Vec::new(),
    }
}

pub fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

pub fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

/// Two scalar agents `x⁺ = x + u`, one unit edge, `Q = 0`, `Q_N = 1`,
/// `R = 1`, horizon 1, `x0 = (0, 2)`.
pub fn two_scalar_agents() -> Scenario {
    let agents = [0.0, 2.0]
        .iter()
        .map(|&x| AgentModel::new(scalar(1.), scalar(1.), v1(x)).unwrap())
        .collect();
    let w = AgentWeights {
        q: scalar(0.),
        q_terminal: scalar(1.),
        r: scalar(1.),
    };
    Scenario {
        label: "two-scalar".into(),
        graph: WeightedGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap(),
        agents,
        weights: vec![w.clone(), w],
        params: AlgorithmParams {
            g: vec![scalar(1.); 2],
            h: vec![scalar(1.); 2],
            allow_condition_override: true,
            ..AlgorithmParams::new(1, 100_000)
        },
        zstep: ZStepConfig::default(),
        initial: InitialGuess::default(),
        notes: Vec::new(),
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_abs_diff(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// Relabels agents so that new agent `k` is old agent `perm[k]`.
pub fn permute_scenario(s: &Scenario, perm: &[usize]) -> Scenario {
    let pick = |v: &[Matrix]| perm.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let mut p = s.clone();
    p.graph = s.graph.permuted(perm).unwrap();
    p.agents = perm.iter().map(|&i| s.agents[i].clone()).collect();
    p.weights = perm.iter().map(|&i| s.weights[i].clone()).collect();
    p.params.g = pick(&s.params.g);
    p.params.h = pick(&s.params.h);
    p
}

/// A small random instance whose `H` satisfies the convergence condition.
pub fn certified_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let shape = Shape {
        max_agents: 3,
        max_n: 2,
        max_m: 2,
        max_horizon: 4,
        max_gain: 1.0,
    };
    let mut s = random_scenario(rng, shape);
    let l = lqsync::admm::lipschitz_constant(&s.agents, &s.weights, s.params.horizon);
    s.params.h = lqsync::admm::suggest_h(l, &s.weights, 0.01);
    s
}

/// Trajectories, previous `Z` and multipliers feeding one Z-step.
pub struct ZInputs {
    pub trajectories: Vec<lqsync::dynamics::Trajectory>,
    pub z_prev: Vec<Vector>,
    pub lambda: Vec<Vector>,
}

pub fn random_z_inputs(r: &mut ChaCha8Rng, s: &Scenario) -> ZInputs {
    let n = s.state_dim();
    let horizon = s.params.horizon;
    let trajectories = s
        .agents
        .iter()
        .map(|a| {
            let u: Vec<Vector> = (0..horizon)
                .map(|_| uniform_vector(r, a.input_dim(), -1.0, 1.0))
                .collect();
            lqsync::dynamics::rollout(a, &u, horizon).unwrap()
        })
        .collect();
    ZInputs {
        trajectories,
        z_prev: (0..s.agent_count())
            .map(|_| uniform_vector(r, n, -2.0, 2.0))
            .collect(),
        lambda: (0..s.agent_count())
            .map(|_| uniform_vector(r, n, -2.0, 2.0))
            .collect(),
    }
}

pub fn zdata<'a>(s: &'a Scenario, z: &'a ZInputs) -> lqsync::zstep::ZStepData<'a> {
    lqsync::zstep::ZStepData {
        graph: &s.graph,
        weights: &s.weights,
        proximal: &s.params.g,
        rho: s.params.rho,
        trajectories: &z.trajectories,
        z_prev: &z.z_prev,
        lambda: &z.lambda,
    }
}

/// Replaces `G = I` by random positive definite proximal weights.
pub fn random_g(r: &mut ChaCha8Rng, s: &mut Scenario) {
    let n = s.state_dim();
    for g in &mut s.params.g {
        *g = random_psd(r, n, 0.2);
    }
}

/// A point `(U, Z)` of the coupling cost.
pub struct Point {
    pub inputs: Vec<Vec<Vector>>,
    pub z: Vec<Vector>,
}

impl Point {
    pub fn random(r: &mut ChaCha8Rng, models: &[AgentModel], horizon: usize) -> Self {
        Point {
            inputs: models
                .iter()
                .map(|m| {
                    (0..horizon)
                        .map(|_| uniform_vector(r, m.input_dim(), -1.0, 1.0))
                        .collect()
                })
                .collect(),
            z: models
                .iter()
                .map(|m| uniform_vector(r, m.state_dim(), -2.0, 2.0))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .inputs
            .iter()
            .flatten()
            .flat_map(|u| u.iter().copied())
            .collect();
        out.extend(self.z.iter().flat_map(|z| z.iter().copied()));
        out
    }

    /// Reads `v` back into the shape of `self`.
    pub fn reshape(&self, v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let mut take = |len: usize| Vector::from_fn(len, |_, _| it.next().unwrap());
        let inputs = self
            .inputs
            .iter()
            .map(|seq| seq.iter().map(|u| take(u.len())).collect())
            .collect();
        let z = self.z.iter().map(|z| take(z.len())).collect();
        Point { inputs, z }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn j1(s: &Scenario, p: &Point) -> f64 {
    let horizon = s.params.horizon;
    let trajs: Vec<_> = s
        .agents
        .iter()
        .zip(&p.inputs)
        .map(|(m, u)| lqsync::dynamics::rollout(m, u, horizon).unwrap())
        .collect();
    lqsync::cost::coupling_cost(&trajs, &p.z, &s.weights).unwrap()
}

pub fn analytic_gradient(s: &Scenario, p: &Point) -> Vec<f64> {
    let (gu, gz) = lqsync::admm::coupling_gradient(&s.agents, &s.weights, &p.inputs, &p.z).unwrap();
    Point { inputs: gu, z: gz }.flatten()
}

/// `‖∇J₁ − ∇_fd J₁‖ / ‖∇J₁‖` with central differences of step `1e−5`.
pub fn gradient_error(s: &Scenario, p: &Point) -> f64 {
    let analytic = analytic_gradient(s, p);
    let base = p.flatten();
    let step = 1e-5;
    let fd: Vec<f64> = (0..base.len())
        .map(|c| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[c] += step;
            minus[c] -= step;
            (j1(s, &p.reshape(&plus)) - j1(s, &p.reshape(&minus))) / (2.0 * step)
        })
        .collect();
    let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(1e-12)
}
