//! Browser bindings for the `lqsync` demo page.
//!
//! Every exported function takes plain numbers and strings and returns a
//! JSON document; the page in `www/` plots it.

use lqsync::admm::{run, suggest_h, validate_scenario, RunStatus};
use lqsync::graph;
use lqsync::linalg::Matrix;
use lqsync::oracle::solve_global;
use lqsync::scenario::{builtin, Scenario, BUILTIN_NAMES};
use lqsync::zstep::ZStepMode;
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Most points kept per convergence curve.
const CURVE_POINTS: usize = 400;

/// Overrides applied on top of a built-in scenario. `rho` and `h` are used
/// when positive, `horizon` and `max_iters` when non-zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub rho: f64,
    pub h: f64,
    pub horizon: usize,
    pub max_iters: usize,
    pub direct: bool,
}

pub fn prepare(name: &str, o: Overrides) -> Result<Scenario, String> {
    let mut s = builtin(name).map_err(|e| e.to_string())?;
    if o.rho > 0.0 {
        s.params.rho = o.rho;
    }
    if o.h > 0.0 {
        s.params.h = s
            .agents
            .iter()
            .map(|a| Matrix::identity(a.input_dim(), a.input_dim()) * o.h)
            .collect();
    }
    if o.horizon > 0 {
        s.params.horizon = o.horizon;
    }
    if o.max_iters > 0 {
        s.params.max_iters = o.max_iters;
    }
    if o.direct {
        s.zstep.mode = ZStepMode::DirectKkt;
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

/// Every `stride`-th value plus the last one.
fn decimate(values: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let stride = values.len().div_ceil(CURVE_POINTS).max(1);
    let mut idx: Vec<usize> = (0..values.len()).step_by(stride).collect();
    if let Some(&last) = idx.last() {
        if last + 1 != values.len() {
            idx.push(values.len() - 1);
        }
    }
    let picked = idx.iter().map(|&i| values[i]).collect();
    (idx.into_iter().map(|i| i + 1).collect(), picked)
}

#[derive(Serialize)]
struct Curves {
    q: Vec<usize>,
    cost: Vec<f64>,
    primal_residual: Vec<f64>,
}

pub fn simulate_json(name: &str, o: Overrides) -> Result<Value, String> {
    let s = prepare(name, o)?;
    let out = run(&s, &s.zstep, None).map_err(|e| e.to_string())?;
    let cost: Vec<f64> = out.diagnostics.iter().map(|d| d.cost_j).collect();
    let residual: Vec<f64> = out.diagnostics.iter().map(|d| d.primal_residual).collect();
    let (q, cost) = decimate(&cost);
    let (_, primal_residual) = decimate(&residual);
    // states per agent as [component][k]
    let states: Vec<Vec<Vec<f64>>> = out
        .state
        .trajectories
        .iter()
        .map(|t| {
            (0..s.state_dim())
                .map(|c| t.states.iter().map(|x| x[c]).collect())
                .collect()
        })
        .collect();
    let z_bar: Vec<f64> = {
        let count = out.state.z.len() as f64;
        let sum = out
            .state
            .z
            .iter()
            .skip(1)
            .fold(out.state.z[0].clone(), |acc, z| acc + z);
        (sum / count).iter().copied().collect()
    };
    Ok(json!({
        "scenario": s.label,
        "status": out.status.as_str(),
        "converged": out.status == RunStatus::Converged,
        "iterations": out.state.q,
        "relative_cost": s.relative_cost(&out.state.trajectories).map_err(|e| e.to_string())?,
        "cost_j": out.diagnostics.last().map(|d| d.cost_j),
        "final_primal_residual": graph::primal_residual(&s.laplacian(), &out.state.z),
        "condition_passed": out.validation.passed,
        "curves": Curves { q, cost, primal_residual },
        "states": states,
        "z_bar": z_bar,
        "notes": s.notes,
    }))
}

pub fn validate_json(name: &str, o: Overrides) -> Result<Value, String> {
    let s = prepare(name, o)?;
    let report = validate_scenario(&s);
    let suggested: Vec<f64> = suggest_h(report.lipschitz, &s.weights, 0.01)
        .iter()
        .map(|h| h[(0, 0)])
        .collect();
    Ok(json!({
        "scenario": s.label,
        "report": report,
        "text": report.to_string(),
        "suggested_h": suggested,
    }))
}

pub fn oracle_json(name: &str, o: Overrides) -> Result<Value, String> {
    let s = prepare(name, o)?;
    let oracle = solve_global(&s).map_err(|e| e.to_string())?;
    let out = run(&s, &s.zstep, None).map_err(|e| e.to_string())?;
    let j = out.diagnostics.last().map_or(f64::NAN, |d| d.cost_j);
    Ok(json!({
        "scenario": s.label,
        "status": out.status.as_str(),
        "iterations": out.state.q,
        "admm_cost": j,
        "optimal_cost": oracle.cost,
        "gap": (j - oracle.cost).abs() / (1.0 + oracle.cost),
        "admm_z": out.state.z.iter().map(|z| z.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "optimal_z": oracle.z_bar.iter().copied().collect::<Vec<_>>(),
    }))
}

fn finish(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

fn overrides(rho: f64, h: f64, horizon: u32, max_iters: u32, direct: bool) -> Overrides {
    Overrides {
        rho,
        h,
        horizon: horizon as usize,
        max_iters: max_iters as usize,
        direct,
    }
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    serde_json::to_string(&BUILTIN_NAMES).unwrap_or_default()
}

/// Runs ADMM and returns convergence curves and state trajectories.
#[wasm_bindgen]
pub fn simulate(
    name: &str,
    rho: f64,
    h: f64,
    horizon: u32,
    max_iters: u32,
    direct: bool,
) -> Result<String, JsError> {
    finish(simulate_json(
        name,
        overrides(rho, h, horizon, max_iters, direct),
    ))
}

/// Convergence-condition report with the smallest admissible `H`.
#[wasm_bindgen]
pub fn validate(name: &str, rho: f64, h: f64, horizon: u32) -> Result<String, JsError> {
    finish(validate_json(name, overrides(rho, h, horizon, 0, false)))
}

/// ADMM result next to the centralised optimum.
#[wasm_bindgen]
pub fn compare_oracle(
    name: &str,
    rho: f64,
    h: f64,
    horizon: u32,
    max_iters: u32,
    direct: bool,
) -> Result<String, JsError> {
    finish(oracle_json(
        name,
        overrides(rho, h, horizon, max_iters, direct),
    ))
}
