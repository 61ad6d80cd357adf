//! Problem instances: built-in experiments, JSON configuration files and
//! result files.
//!
//! Configuration schema (agents and edges are 1-based; matrices are
//! row-major nested arrays):
//!
//! ```json
//! {
//!   "label": "example",
//!   "graph": { "edges": [[1, 2, 1.0], [1, 3, 1.0]] },
//!   "agents": [ { "A": [[1, 1], [0, 1]], "B": [[0], [1]], "x0": [0, 0] } ],
//!   "weights": [ { "Q": [[1, 0], [0, 1]], "QN": [[1, 0], [0, 1]], "R": [[1]] } ],
//!   "params": { "rho": 1.0, "N": 40, "Nq": 50000, "G": [...], "H": [...],
//!               "primal_tol": 1e-6, "step_tol": 1e-8, "allow_condition_override": false },
//!   "zstep": { "mode": "flow", "step_size": "auto", "residual_tol": 1e-10, "max_flow_iters": 1000000 },
//!   "initial": { "U0": [...], "Z0": [...], "Lambda0": [...] },
//!   "notes": []
//! }
//! ```
//!
//! `G` defaults to identity blocks. A missing `H` is filled with the
//! smallest weights that satisfy the convergence condition, and a note says
//! so. `zstep`, `initial` and `notes` are optional.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::admm::{
    lipschitz_constant, suggest_h, AdmmState, AlgorithmParams, DiagnosticsRecord, RunStatus,
    ValidationReport,
};
use crate::cost::{relative_cost, AgentWeights};
use crate::dynamics::{AgentModel, Trajectory};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{from_rows, to_rows, Matrix, Vector};
use crate::zstep::{StepSize, ZStepConfig, ZStepMode};

pub const BUILTIN_NAMES: [&str; 6] = [
    "table1-stable",
    "table1-neutrally-stable",
    "table1-neutrally-unstable",
    "table1-unstable1",
    "table1-unstable2",
    "hetero",
];

/// The five homogeneous rows, in table order.
pub const TABLE1_NAMES: [&str; 5] = [
    "table1-stable",
    "table1-neutrally-stable",
    "table1-neutrally-unstable",
    "table1-unstable1",
    "table1-unstable2",
];

/// Optional initial iterate; missing parts use the run defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialGuess {
    pub inputs: Option<Vec<Vec<Vector>>>,
    pub z: Option<Vec<Vector>>,
    pub lambda: Option<Vec<Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub graph: WeightedGraph,
    pub agents: Vec<AgentModel>,
    pub weights: Vec<AgentWeights>,
    pub params: AlgorithmParams,
    pub zstep: ZStepConfig,
    pub initial: InitialGuess,
    pub notes: Vec<String>,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dim(&self) -> usize {
        self.agents.first().map_or(0, AgentModel::state_dim)
    }

    pub fn laplacian(&self) -> Matrix {
        self.graph.laplacian()
    }

    /// Checks every structural invariant of the instance.
    pub fn validate(&self) -> Result<()> {
        let count = self.agents.len();
        if count == 0 {
            return Err(Error::config("agents", "at least one agent is required"));
        }
        if self.graph.node_count() != count {
            return Err(Error::config(
                "graph",
                format!("{} nodes for {count} agents", self.graph.node_count()),
            ));
        }
        if !self.graph.is_connected() {
            return Err(Error::Disconnected);
        }
        if self.weights.len() != count {
            return Err(Error::config(
                "weights",
                format!("{} entries for {count} agents", self.weights.len()),
            ));
        }
        let n = self.state_dim();
        for (i, (a, w)) in self.agents.iter().zip(&self.weights).enumerate() {
            a.check()
                .map_err(|e| Error::config(format!("agents[{}]", i + 1), e.to_string()))?;
            if a.state_dim() != n {
                return Err(Error::config(
                    format!("agents[{}].A", i + 1),
                    format!("state dimension {} differs from {n}", a.state_dim()),
                ));
            }
            w.validate(i + 1, n, a.input_dim())?;
        }
        let dims: Vec<usize> = self.agents.iter().map(AgentModel::input_dim).collect();
        self.params.validate(count, n, &dims)?;
        self.zstep.validate()?;
        self.check_initial(n, &dims)
    }

    fn check_initial(&self, n: usize, dims: &[usize]) -> Result<()> {
        let count = self.agents.len();
        let horizon = self.params.horizon;
        if let Some(u) = &self.initial.inputs {
            let ok = u.len() == count
                && u.iter()
                    .zip(dims)
                    .all(|(seq, &m)| seq.len() == horizon && seq.iter().all(|v| v.len() == m));
            if !ok {
                return Err(Error::config(
                    "initial.U0",
                    format!("expected {count} sequences of {horizon} inputs"),
                ));
            }
        }
        for (field, v) in [
            ("initial.Z0", &self.initial.z),
            ("initial.Lambda0", &self.initial.lambda),
        ] {
            if let Some(v) = v {
                if v.len() != count || v.iter().any(|x| x.len() != n) {
                    return Err(Error::config(
                        field,
                        format!("expected {count} vectors of length {n}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Relative cost of a set of trajectories under this scenario's weights.
    pub fn relative_cost(&self, trajectories: &[Trajectory]) -> Result<f64> {
        relative_cost(trajectories, &self.weights, &self.laplacian())
    }
}

fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

fn v(data: &[f64]) -> Vector {
    Vector::from_column_slice(data)
}

fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&v(d))
}

fn star_graph() -> WeightedGraph {
    WeightedGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0)]).expect("built-in graph is valid")
}

fn table1(name: &str, a: [f64; 4]) -> Scenario {
    let horizon = 40;
    let b = m(2, 1, &[0., 1.]);
    let a = m(2, 2, &a);
    let x0 = [v(&[0., 0.]), v(&[10., -4.]), v(&[-20., 10.])];
    let agents = x0
        .into_iter()
        .map(|x| AgentModel::new(a.clone(), b.clone(), x).expect("built-in model is valid"))
        .collect();
    let weights = vec![
        AgentWeights {
            q: Matrix::identity(2, 2),
            q_terminal: Matrix::identity(2, 2),
            r: Matrix::identity(1, 1),
        };
        3
    ];
    let params = AlgorithmParams {
        g: vec![Matrix::identity(2, 2); 3],
        h: vec![m(1, 1, &[100.]); 3],
        allow_condition_override: true,
        ..AlgorithmParams::new(horizon, 50_000)
    };
    Scenario {
        label: name.to_string(),
        graph: star_graph(),
        agents,
        weights,
        params,
        zstep: ZStepConfig::default(),
        initial: InitialGuess {
            inputs: None,
            z: Some(vec![Vector::zeros(2); 3]),
            lambda: None,
        },
        notes: vec![
            "H = 100 violates the sufficient convergence condition; runs under override".into(),
        ],
    }
}

fn hetero() -> Scenario {
    let horizon = 50;
    let a = [
        m(3, 3, &[1.2, 1., 2., 0., 2.4, 2., 2., 0., 1.5]),
        m(3, 3, &[0., 1.3, -0.7, 0.5, 0.85, 0.85, 0.5, -0.65, 1.35]),
        m(3, 3, &[0.3, 1., 0., 0., 1.2, 1., 0., 0., 0.4]),
    ];
    // stored as the transposes of 2×3 matrices
    let b = [
        m(2, 3, &[0., 1., 1., 2., 0., -1.]).transpose(),
        m(2, 3, &[0., 0., 1., 0., 2., 0.]).transpose(),
        m(2, 3, &[0., 1., 0., -1., 0., -2.]).transpose(),
    ];
    let x0 = [v(&[-5., 20., 0.]), v(&[1., -4., 20.]), v(&[-2., -20., 3.])];
    let q = [
        diag(&[0., 8., 13.]),
        diag(&[0., 3., 5.]),
        diag(&[0., 4., 15.]),
    ];
    let qn = [
        diag(&[0., 8., 1.]),
        diag(&[0., 5., 1.]),
        diag(&[0., 12., 5.]),
    ];
    let mut agents = Vec::new();
    let mut weights = Vec::new();
    for i in 0..3 {
        agents.push(
            AgentModel::new(a[i].clone(), b[i].clone(), x0[i].clone())
                .expect("built-in model is valid"),
        );
        weights.push(AgentWeights {
            q: q[i].clone(),
            q_terminal: qn[i].clone(),
            r: Matrix::identity(2, 2),
        });
    }
    let params = AlgorithmParams {
        g: vec![Matrix::identity(3, 3); 3],
        h: vec![Matrix::identity(2, 2) * 1000.0; 3],
        allow_condition_override: true,
        ..AlgorithmParams::new(horizon, 200_000)
    };
    Scenario {
        label: "hetero".into(),
        graph: star_graph(),
        agents,
        weights,
        params,
        zstep: ZStepConfig::default(),
        initial: InitialGuess {
            inputs: None,
            z: Some(vec![Vector::zeros(3); 3]),
            lambda: None,
        },
        notes: vec![
            "terminal weight of agent 2 assumed to be diag{0,5,1}".into(),
            "H = 1000 I violates the sufficient convergence condition; runs under override".into(),
        ],
    }
}

/// Built-in experiment by name (see [`BUILTIN_NAMES`]).
pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "table1-stable" => Ok(table1(name, [0.2, 1., 0., 0.2])),
        "table1-neutrally-stable" => Ok(table1(name, [0.2, 1., 0., 1.])),
        "table1-neutrally-unstable" => Ok(table1(name, [1., 1., 0., 1.])),
        "table1-unstable1" => Ok(table1(name, [1.2, 1., 0., 1.])),
        "table1-unstable2" => Ok(table1(name, [2., 1., 0., 1.])),
        "hetero" => Ok(hetero()),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub label: Option<String>,
    pub graph: GraphFile,
    pub agents: Vec<AgentFile>,
    pub weights: Vec<WeightsFile>,
    pub params: ParamsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zstep: Option<ZStepFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "QN")]
    pub qn: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub rho: f64,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "Nq")]
    pub max_iters: usize,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Rows>>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
    #[serde(default)]
    pub allow_condition_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizeFile {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZStepFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ZStepMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<StepSizeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_flow_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    #[serde(rename = "U0", default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<Rows>>,
    #[serde(rename = "Z0", default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Rows>,
    #[serde(rename = "Lambda0", default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Rows>,
}

fn matrix(field: String, rows: &Rows) -> Result<Matrix> {
    from_rows(rows)
        .ok_or_else(|| Error::config(field, "rows must be non-empty and of equal length"))
}

fn vectors(rows: &Rows) -> Vec<Vector> {
    rows.iter().map(|r| v(r)).collect()
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let count = self.agents.len();
        if count == 0 {
            return Err(Error::config("agents", "at least one agent is required"));
        }
        let mut edges = Vec::with_capacity(self.graph.edges.len());
        for (k, &(i, j, w)) in self.graph.edges.iter().enumerate() {
            if i == 0 || j == 0 || i > count || j > count {
                return Err(Error::config(
                    format!("graph.edges[{}]", k + 1),
                    format!("agent numbers must lie in 1..={count}, got ({i}, {j})"),
                ));
            }
            edges.push((i - 1, j - 1, w));
        }
        let graph = WeightedGraph::from_edges(count, &edges)?;

        let mut agents = Vec::with_capacity(count);
        for (i, a) in self.agents.iter().enumerate() {
            let am = matrix(format!("agents[{}].A", i + 1), &a.a)?;
            let bm = matrix(format!("agents[{}].B", i + 1), &a.b)?;
            let model = AgentModel::new(am, bm, v(&a.x0))
                .map_err(|e| Error::config(format!("agents[{}]", i + 1), e.to_string()))?;
            agents.push(model);
        }
        if self.weights.len() != count {
            return Err(Error::config(
                "weights",
                format!("{} entries for {count} agents", self.weights.len()),
            ));
        }
        let mut weights = Vec::with_capacity(count);
        for (i, w) in self.weights.iter().enumerate() {
            weights.push(AgentWeights {
                q: matrix(format!("weights[{}].Q", i + 1), &w.q)?,
                q_terminal: matrix(format!("weights[{}].QN", i + 1), &w.qn)?,
                r: matrix(format!("weights[{}].R", i + 1), &w.r)?,
            });
        }
        let n = agents[0].state_dim();
        for (i, (a, w)) in agents.iter().zip(&weights).enumerate() {
            if a.state_dim() != n {
                return Err(Error::config(
                    format!("agents[{}].A", i + 1),
                    format!("state dimension {} differs from {n}", a.state_dim()),
                ));
            }
            w.validate(i + 1, n, a.input_dim())?;
        }

        let p = &self.params;
        let mut notes = self.notes.clone();
        let g = match &p.g {
            Some(blocks) => blocks
                .iter()
                .enumerate()
                .map(|(i, r)| matrix(format!("params.G[{}]", i + 1), r))
                .collect::<Result<Vec<_>>>()?,
            None => vec![Matrix::identity(n, n); count],
        };
        let h = match &p.h {
            Some(blocks) => blocks
                .iter()
                .enumerate()
                .map(|(i, r)| matrix(format!("params.H[{}]", i + 1), r))
                .collect::<Result<Vec<_>>>()?,
            None => {
                let l = lipschitz_constant(&agents, &weights, p.horizon);
                notes.push(format!(
                    "H not given; set to the suggested weights for L_delta = {l:.6e} (margin 1e-3)"
                ));
                suggest_h(l, &weights, 1e-3)
            }
        };
        let defaults = AlgorithmParams::new(p.horizon, p.max_iters);
        let params = AlgorithmParams {
            rho: p.rho,
            g,
            h,
            horizon: p.horizon,
            max_iters: p.max_iters,
            primal_tol: p.primal_tol.unwrap_or(defaults.primal_tol),
            step_tol: p.step_tol.unwrap_or(defaults.step_tol),
            allow_condition_override: p.allow_condition_override,
        };

        let mut zstep = ZStepConfig::default();
        if let Some(z) = &self.zstep {
            if let Some(mode) = z.mode {
                zstep.mode = mode;
            }
            match &z.step_size {
                None => {}
                Some(StepSizeFile::Fixed(h)) => zstep.step_size = StepSize::Fixed(*h),
                Some(StepSizeFile::Named(s)) if s == "auto" => zstep.step_size = StepSize::Auto,
                Some(StepSizeFile::Named(s)) => {
                    return Err(Error::config(
                        "zstep.step_size",
                        format!("expected a number or \"auto\", got \"{s}\""),
                    ))
                }
            }
            if let Some(t) = z.residual_tol {
                zstep.residual_tol = t;
            }
            if let Some(k) = z.max_flow_iters {
                zstep.max_flow_iters = k;
            }
        }

        let initial = match &self.initial {
            None => InitialGuess::default(),
            Some(init) => InitialGuess {
                inputs: init
                    .u0
                    .as_ref()
                    .map(|seqs| seqs.iter().map(vectors).collect()),
                z: init.z0.as_ref().map(vectors),
                lambda: init.lambda0.as_ref().map(vectors),
            },
        };

        let scenario = Scenario {
            label: self.label.clone().unwrap_or_else(|| "scenario".into()),
            graph,
            agents,
            weights,
            params,
            zstep,
            initial,
            notes,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let vec_rows =
            |vs: &[Vector]| -> Rows { vs.iter().map(|x| x.iter().copied().collect()).collect() };
        ScenarioFile {
            label: Some(s.label.clone()),
            graph: GraphFile {
                edges: s
                    .graph
                    .edges()
                    .into_iter()
                    .map(|(i, j, w)| (i + 1, j + 1, w))
                    .collect(),
            },
            agents: s
                .agents
                .iter()
                .map(|a| AgentFile {
                    a: to_rows(&a.a),
                    b: to_rows(&a.b),
                    x0: a.x0.iter().copied().collect(),
                })
                .collect(),
            weights: s
                .weights
                .iter()
                .map(|w| WeightsFile {
                    q: to_rows(&w.q),
                    qn: to_rows(&w.q_terminal),
                    r: to_rows(&w.r),
                })
                .collect(),
            params: ParamsFile {
                rho: s.params.rho,
                horizon: s.params.horizon,
                max_iters: s.params.max_iters,
                g: Some(s.params.g.iter().map(to_rows).collect()),
                h: Some(s.params.h.iter().map(to_rows).collect()),
                primal_tol: Some(s.params.primal_tol),
                step_tol: Some(s.params.step_tol),
                allow_condition_override: s.params.allow_condition_override,
            },
            zstep: Some(ZStepFile {
                mode: Some(s.zstep.mode),
                step_size: Some(match s.zstep.step_size {
                    StepSize::Auto => StepSizeFile::Named("auto".into()),
                    StepSize::Fixed(h) => StepSizeFile::Fixed(h),
                }),
                residual_tol: Some(s.zstep.residual_tol),
                max_flow_iters: Some(s.zstep.max_flow_iters),
            }),
            initial: {
                let i = &s.initial;
                if i.inputs.is_none() && i.z.is_none() && i.lambda.is_none() {
                    None
                } else {
                    Some(InitialFile {
                        u0: i
                            .inputs
                            .as_ref()
                            .map(|u| u.iter().map(|seq| vec_rows(seq)).collect()),
                        z0: i.z.as_ref().map(|z| vec_rows(z)),
                        lambda0: i.lambda.as_ref().map(|l| vec_rows(l)),
                    })
                }
            },
            notes: s.notes.clone(),
        }
    }
}

fn parse_error(path: &Path, e: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a scenario from JSON text; `origin` only labels error messages.
pub fn from_json_str(text: &str, origin: &Path) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| parse_error(origin, &e))?;
    file.into_scenario()
}

pub fn to_json_string(scenario: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioFile::from_scenario(
        scenario,
    ))?)
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text, path)
}

pub fn save(scenario: &Scenario, path: &Path) -> Result<()> {
    let mut text = to_json_string(scenario)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Built-in name, or else a path to a JSON file.
pub fn resolve(name_or_path: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        load(path)
    } else {
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub label: &'a str,
    pub status: RunStatus,
    pub iterations: usize,
    pub relative_cost: f64,
    pub cost_j: f64,
    pub primal_residual: f64,
    pub final_z: Vec<Vec<f64>>,
    pub validation: &'a ValidationReport,
    pub notes: &'a [String],
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt_f64(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x:?}")
}

pub fn write_diagnostics(path: &Path, diagnostics: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "q",
        "cost_J",
        "aug_lagrangian",
        "primal_residual",
        "dU",
        "dZ",
        "dLambda",
        "m1_distance",
    ])?;
    for d in diagnostics {
        w.write_record([
            d.q.to_string(),
            fmt_f64(d.cost_j),
            fmt_f64(d.augmented_lagrangian),
            fmt_f64(d.primal_residual),
            fmt_f64(d.delta_u),
            fmt_f64(d.delta_z),
            fmt_f64(d.delta_lambda),
            d.m1_distance.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let n = trajectory.states[0].len();
    let m = trajectory.inputs.first().map_or(0, |u| u.len());
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|j| format!("x_{j}")));
    header.extend((1..=m).map(|j| format!("u_{j}")));
    w.write_record(&header)?;
    for (k, x) in trajectory.states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        match trajectory.inputs.get(k) {
            Some(u) => row.extend(u.iter().map(|&v| fmt_f64(v))),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `diagnostics.csv`, `trajectory_agent<i>.csv` and `summary.json`
/// into `dir`, returning the paths written.
pub fn save_results(
    scenario: &Scenario,
    state: &AdmmState,
    diagnostics: &[DiagnosticsRecord],
    status: RunStatus,
    validation: &ValidationReport,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let diag_path = dir.join("diagnostics.csv");
    write_diagnostics(&diag_path, diagnostics)?;
    written.push(diag_path);
    for (i, t) in state.trajectories.iter().enumerate() {
        let p = dir.join(format!("trajectory_agent{}.csv", i + 1));
        write_trajectory(&p, t)?;
        written.push(p);
    }
    let last = diagnostics.last();
    let summary = RunSummary {
        label: &scenario.label,
        status,
        iterations: state.q,
        relative_cost: scenario.relative_cost(&state.trajectories)?,
        cost_j: last.map_or(f64::NAN, |d| d.cost_j),
        primal_residual: last.map_or(f64::NAN, |d| d.primal_residual),
        final_z: state
            .z
            .iter()
            .map(|z| z.iter().copied().collect())
            .collect(),
        validation,
        notes: &scenario.notes,
    };
    let p = dir.join("summary.json");
    let mut f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}
