mod common;

use common::*;
use lqsync::admm::{iterate, run, run_with, RunOptions, RunStatus};
use lqsync::cost::cost_j;
use lqsync::dynamics::AgentModel;
use lqsync::linalg::Matrix;
use lqsync::oracle::solve_global;
use lqsync::scenario::builtin;
use lqsync::zstep::ZStepConfig;
use rand::Rng;

#[test]
fn agents_already_in_sync_stop_after_one_iteration() {
    let mut s = two_scalar_agents();
    for a in &mut s.agents {
        *a = AgentModel::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 1, &[0.3, 1.0]),
            vv(&[1.0, -2.0]),
        )
        .unwrap();
    }
    s.weights = vec![
        lqsync::cost::AgentWeights {
            q: Matrix::identity(2, 2),
            q_terminal: Matrix::identity(2, 2) * 3.0,
            r: scalar(1.0),
        };
        2
    ];
    s.params.g = vec![Matrix::identity(2, 2); 2];
    s.params.horizon = 5;
    let out = run(&s, &ZStepConfig::default(), None).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    assert_eq!(out.state.q, 1);
    assert!(out.state.inputs.iter().flatten().all(|u| u.amax() < 1e-14));
    assert!(out.diagnostics[0].cost_j < 1e-24);
}

fn vv(x: &[f64]) -> lqsync::linalg::Vector {
    lqsync::linalg::Vector::from_row_slice(x)
}

#[test]
fn two_scalar_agents_reach_the_optimum() {
    let s = two_scalar_agents();
    let out = run(&s, &ZStepConfig::default(), None).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    for z in &out.state.z {
        assert!((z[0] - 1.0).abs() < 1e-6, "{z}");
    }
    assert!((out.state.inputs[0][0][0] - 0.5).abs() < 1e-6);
    assert!((out.state.inputs[1][0][0] + 0.5).abs() < 1e-6);
}

#[test]
fn certified_runs_contract_towards_the_optimum() {
    let mut r = rng(41);
    for _ in 0..10 {
        let s = certified_scenario(&mut r);
        let o = solve_global(&s).unwrap();
        let out = run(&s, &ZStepConfig::default(), Some(&o)).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(out.validation.passed);
        let m: Vec<f64> = out
            .diagnostics
            .iter()
            .map(|d| d.m1_distance.unwrap())
            .collect();
        for (q, w) in m.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-9,
                "iteration {}: {} > {}",
                q + 2,
                w[1],
                w[0]
            );
        }
        let last = out.diagnostics.last().unwrap();
        assert!(last.delta_u < 1e-6 && last.delta_z < 1e-6 && last.delta_lambda < 1e-6);
        let j = cost_j(&out.state.trajectories, &out.state.z, &s.weights).unwrap();
        assert!((j - o.cost).abs() / (1.0 + o.cost) <= 1e-4);
    }
}

#[test]
fn converged_state_is_a_fixed_point() {
    let mut r = rng(42);
    for _ in 0..5 {
        let s = random_scenario(&mut r, Shape::default());
        let zcfg = ZStepConfig::default();
        let out = run(&s, &zcfg, None).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        let next = iterate(&s, &zcfg, &out.state).unwrap();
        let tol = 10.0 * s.params.step_tol;
        for (a, b) in next.inputs.iter().zip(&out.state.inputs) {
            assert!(max_abs_diff(a, b) < tol);
        }
        assert!(max_abs_diff(&next.z, &out.state.z) < tol);
    }
}

#[test]
fn relabeling_agents_permutes_the_run() {
    let mut r = rng(43);
    for _ in 0..5 {
        let s = random_scenario(&mut r, Shape::default());
        let count = s.agent_count();
        let mut perm: Vec<usize> = (0..count).collect();
        perm.rotate_left(r.gen_range(1..count));
        let p = permute_scenario(&s, &perm);
        let zcfg = ZStepConfig::default();
        let a = run(&s, &zcfg, None).unwrap();
        let b = run(&p, &zcfg, None).unwrap();
        assert_eq!(b.status, RunStatus::Converged);
        let ja = a.diagnostics.last().unwrap().cost_j;
        let jb = b.diagnostics.last().unwrap().cost_j;
        assert!(rel_diff(ja, jb) < 1e-7, "{ja} vs {jb}");
        for (k, &i) in perm.iter().enumerate() {
            assert!((&a.state.z[i] - &b.state.z[k]).amax() < 1e-6);
            assert!(max_abs_diff(&a.state.inputs[i], &b.state.inputs[k]) < 1e-6);
        }
    }
}

#[test]
fn recentering_multipliers_leaves_the_answer_unchanged() {
    let mut r = rng(44);
    for _ in 0..5 {
        let s = random_scenario(&mut r, Shape::default());
        let zcfg = ZStepConfig::direct();
        let plain = RunOptions {
            recenter_multipliers: false,
            ..RunOptions::default()
        };
        let a = run_with(&s, &zcfg, None, &RunOptions::default()).unwrap();
        let b = run_with(&s, &zcfg, None, &plain).unwrap();
        assert!(max_abs_diff(&a.state.z, &b.state.z) < 1e-7);
        assert!(
            (a.state.q as i64 - b.state.q as i64).abs() <= 2,
            "{} vs {}",
            a.state.q,
            b.state.q
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = builtin("table1-unstable1").unwrap();
    let zcfg = ZStepConfig::default();
    let one = run_with(&s, &zcfg, None, &RunOptions::default()).unwrap();
    let many = run_with(
        &s,
        &zcfg,
        None,
        &RunOptions {
            threads: 3,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(one.state, many.state);
    assert_eq!(one.diagnostics, many.diagnostics);
}

#[test]
fn neutrally_unstable_row() {
    let s = builtin("table1-neutrally-unstable").unwrap();
    let out = run(&s, &ZStepConfig::default(), None).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    let rel = s.relative_cost(&out.state.trajectories).unwrap();
    assert!((rel - 1039.36).abs() / 1039.36 < 0.1, "{rel}");
}

#[test]
fn validation_failure_blocks_the_run() {
    let mut s = builtin("table1-unstable2").unwrap();
    s.params.allow_condition_override = false;
    let err = run(&s, &ZStepConfig::default(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn iteration_cap_reports_max_iterations() {
    let mut s = builtin("table1-stable").unwrap();
    s.params.max_iters = 3;
    let out = run(&s, &ZStepConfig::default(), None).unwrap();
    assert_eq!(out.status, RunStatus::MaxIterations);
    assert_eq!(out.diagnostics.len(), 3);
    assert_eq!(
        out.diagnostics.iter().map(|d| d.q).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}
