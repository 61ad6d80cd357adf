mod common;

use common::*;
use lqsync::dynamics::rollout;
use lqsync::linalg::{Matrix, Vector};
use lqsync::oracle::solve_ustep_direct;
use lqsync::scenario::builtin;
use lqsync::ustep::{solve_agent, ustep_objective};
use lqsync::zstep::{
    kkt_residual, kkt_system, zstep_direct, zstep_flow, zstep_objective, ZStepConfig,
};
use rand::Rng;

#[test]
fn dp_matches_dense_solve() {
    let mut r = rng(21);
    for _ in 0..100 {
        let n = r.gen_range(1..=3);
        let m = r.gen_range(1..=2);
        let horizon = r.gen_range(1..=8);
        let model = random_model(&mut r, n, m, 1.2);
        let w = random_weights(&mut r, n, m);
        let h = random_psd(&mut r, m, 0.1) * r.gen_range(0.1..100.0);
        let z = uniform_vector(&mut r, n, -3.0, 3.0);
        let prev: Vec<Vector> = (0..horizon)
            .map(|_| uniform_vector(&mut r, m, -1.0, 1.0))
            .collect();
        let dp = solve_agent(&model, &w, &h, &z, &prev).unwrap();
        let dense = solve_ustep_direct(&model, &w, &h, &z, &prev, horizon).unwrap();
        let scale = dense.iter().map(|u| u.amax()).fold(1e-12, f64::max);
        let err = max_abs_diff(&dp.inputs, &dense);
        assert!(err <= 1e-8 * scale, "{err:e} vs scale {scale:e}");
        // the DP value is the achieved objective
        let achieved = ustep_objective(&w, &h, &z, &prev, &dp.trajectory);
        assert!(
            rel_diff(dp.value, achieved) < 1e-9,
            "{} vs {achieved}",
            dp.value
        );
    }
}

#[test]
fn flow_matches_direct() {
    let mut r = rng(22);
    let cfg = ZStepConfig::default();
    for _ in 0..100 {
        let mut s = random_scenario(&mut r, Shape::default());
        random_g(&mut r, &mut s);
        let zi = random_z_inputs(&mut r, &s);
        let d = zdata(&s, &zi);
        let flow = zstep_flow(&d, &cfg).unwrap();
        let direct = zstep_direct(&d).unwrap();
        let err = max_abs_diff(&flow.z, &direct);
        assert!(err <= 10.0 * cfg.residual_tol, "{err:e}");
    }
}

#[test]
fn direct_kkt_residual() {
    let mut r = rng(23);
    for _ in 0..100 {
        let mut s = random_scenario(&mut r, Shape::default());
        random_g(&mut r, &mut s);
        let zi = random_z_inputs(&mut r, &s);
        let d = zdata(&s, &zi);
        let z = zstep_direct(&d).unwrap();
        assert!(kkt_residual(&d, &z).unwrap() <= 1e-9);
    }
}

#[test]
fn flow_distance_to_solution_never_grows() {
    let mut r = rng(24);
    for _ in 0..20 {
        let mut s = random_scenario(&mut r, Shape::default());
        random_g(&mut r, &mut s);
        let zi = random_z_inputs(&mut r, &s);
        let d = zdata(&s, &zi);
        let target = zstep_direct(&d).unwrap();
        let h = lqsync::zstep::auto_step_size(&d);
        let mut z = d.z_prev.to_vec();
        let mut prev = f64::INFINITY;
        for step in 0..300 {
            let dist = z
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            assert!(
                dist <= prev * (1.0 + 1e-12) + 1e-14,
                "step {step}: {dist} > {prev}"
            );
            prev = dist;
            // one synchronous Euler round through the public right-hand side
            let rhs: Vec<Vector> = (0..z.len())
                .map(|i| lqsync::zstep::zstep_rhs(&d, i, &z).unwrap())
                .collect();
            for (zi, ri) in z.iter_mut().zip(&rhs) {
                *zi += ri * h;
            }
        }
    }
}

#[test]
fn direct_is_unique_minimizer() {
    let mut r = rng(25);
    for _ in 0..100 {
        let mut s = random_scenario(&mut r, Shape::default());
        random_g(&mut r, &mut s);
        let zi = random_z_inputs(&mut r, &s);
        let d = zdata(&s, &zi);
        let z = zstep_direct(&d).unwrap();
        let base = zstep_objective(&d, &z).unwrap();
        let n = s.state_dim();
        let mut delta: Vec<Vector> = (0..s.agent_count())
            .map(|_| uniform_vector(&mut r, n, -1.0, 1.0))
            .collect();
        let norm = delta.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        for v in &mut delta {
            *v *= 1e-3 / norm;
        }
        let moved: Vec<Vector> = z.iter().zip(&delta).map(|(a, b)| a + b).collect();
        assert!(zstep_objective(&d, &moved).unwrap() > base);
    }
}

#[test]
fn consensus_shift_of_multipliers_is_invisible() {
    let mut r = rng(26);
    for _ in 0..50 {
        let s = random_scenario(&mut r, Shape::default());
        let mut zi = random_z_inputs(&mut r, &s);
        let before = zstep_direct(&zdata(&s, &zi)).unwrap();
        let (_, b_before) = kkt_system(&zdata(&s, &zi)).unwrap();
        let c = uniform_vector(&mut r, s.state_dim(), -5.0, 5.0);
        for l in &mut zi.lambda {
            *l += &c;
        }
        let after = zstep_direct(&zdata(&s, &zi)).unwrap();
        let (_, b_after) = kkt_system(&zdata(&s, &zi)).unwrap();
        assert!((&b_before - &b_after).amax() <= 1e-12 * (1.0 + b_before.amax()));
        assert!(
            max_abs_diff(&before, &after)
                <= 1e-12 * (1.0 + before.iter().map(|v| v.amax()).fold(0.0, f64::max))
        );
    }
}

#[test]
fn flow_matches_direct_on_first_homogeneous_iterate() {
    let s = builtin("table1-neutrally-unstable").unwrap();
    let horizon = s.params.horizon;
    let zi = ZInputs {
        trajectories: s
            .agents
            .iter()
            .map(|a| rollout(a, &vec![Vector::zeros(1); horizon], horizon).unwrap())
            .collect(),
        z_prev: vec![Vector::zeros(2); 3],
        lambda: vec![Vector::zeros(2); 3],
    };
    let d = zdata(&s, &zi);
    let cfg = ZStepConfig::default();
    let flow = zstep_flow(&d, &cfg).unwrap();
    let direct = zstep_direct(&d).unwrap();
    assert!(max_abs_diff(&flow.z, &direct) <= 10.0 * cfg.residual_tol);
}

#[test]
fn proximal_dominance_freezes_inputs() {
    let mut r = rng(27);
    let model = random_model(&mut r, 2, 2, 1.0);
    let w = random_weights(&mut r, 2, 2);
    let prev: Vec<Vector> = (0..6)
        .map(|_| uniform_vector(&mut r, 2, -1.0, 1.0))
        .collect();
    let out = solve_agent(
        &model,
        &w,
        &(Matrix::identity(2, 2) * 1e12),
        &Vector::zeros(2),
        &prev,
    )
    .unwrap();
    assert!(max_abs_diff(&out.inputs, &prev) < 1e-6);
}
