use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use slowdrift::horseshoe::{
    affine_horseshoe, circle_generators, invariant_surfaces, mollify, AffineHorseshoeParams, Code, CrossFormSystem,
    FnCrossForm, SurfaceConfig, SurfaceFamily, Symbol,
};
use slowdrift::model::{Domain, SlowField};
use slowdrift::orbit::{find_periodic_orbit, OrbitConfig, OrbitGuess};
use slowdrift::shadow::{
    block_compare, drift_run, homogeneous_run, lemma_stab, plan_code, synthetic_scenario, verify_theorem1,
    Continuation, StabConfig, SyntheticScenario, Theorem1Config, Theorem1Report,
};
use slowdrift::slowdrive::{path_validate, AccessiblePath, AnalyticGenerator, SlowGeneratorSet};
use slowdrift::{Error, FastPoint, SlowPoint};

mod common;

use Symbol::{A, B};

fn scenario_box() -> Domain {
    Domain::new_box(vec![-1.5, -2.0], vec![2.5, 2.0]).unwrap()
}

fn mollified() -> CrossFormSystem {
    let d = scenario_box();
    let sys = affine_horseshoe(AffineHorseshoeParams::default(), circle_generators(&d).unwrap(), d).unwrap();
    mollify(&sys, 0.2).unwrap()
}

fn coarse() -> SurfaceConfig {
    SurfaceConfig { resolution: 17, ..Default::default() }
}

/// Contracting maps with the constant slow increment `φ = (0.1, 0)`.
fn constant_drift_system() -> CrossFormSystem {
    let maps = FnCrossForm::new(
        "constant",
        1,
        1,
        |_p, x, yb, _z, _e| vec![0.5 * x[0] + 0.1 * yb[0] + 0.2],
        |_p, x, yb, _z, _e| vec![0.1 * x[0] + 0.5 * yb[0]],
        |_p, _x, _y, _z, _e| SlowPoint::planar(0.1, 0.0),
    );
    let sys = CrossFormSystem::new(Arc::new(maps), 0.6, 1.0, common::unit_box()).unwrap();
    mollify(&sys, 0.2).unwrap()
}

fn scenario() -> &'static SyntheticScenario {
    static S: OnceLock<SyntheticScenario> = OnceLock::new();
    S.get_or_init(|| synthetic_scenario().unwrap())
}

fn scenario_report() -> &'static Theorem1Report {
    static R: OnceLock<Theorem1Report> = OnceLock::new();
    R.get_or_init(|| {
        let s = scenario();
        verify_theorem1(&s.sys, &s.gens, &s.path, &[1e-2, 5e-3], &s.config).unwrap()
    })
}

fn pure_surfaces(c: Symbol, eps: f64) -> SurfaceFamily {
    invariant_surfaces(&mollified(), &Code::pure(c), eps, None, &coarse()).unwrap()
}

#[test]
fn constant_increment_drifts_linearly() {
    let sys = constant_drift_system();
    let eps = 0.01;
    let fam = invariant_surfaces(&sys, &Code::pure(A), eps, None, &coarse()).unwrap();
    let z0 = SlowPoint::planar(-0.25, 0.0);
    let traj = drift_run(&sys, &fam, &z0, eps, 50).unwrap();
    assert_eq!(traj.steps(), 50);
    assert!(traj.exit.is_none());
    for (n, z) in traj.z.iter().enumerate() {
        assert!((z.v[0] - (-0.25 + 0.001 * n as f64)).abs() < 1e-14, "step {n}");
        assert_eq!(z.u[0], 0.0);
    }
}

#[test]
fn zero_eps_drift_stands_still() {
    let sys = mollified();
    let fam = invariant_surfaces(&sys, &"a|abab|b".parse::<Code>().unwrap(), 0.0, None, &coarse()).unwrap();
    let z0 = SlowPoint::planar(0.5, 0.3);
    let traj = drift_run(&sys, &fam, &z0, 0.0, 8).unwrap();
    assert!(traj.z.iter().all(|z| *z == z0));
}

#[test]
fn pure_drift_returns_after_one_revolution() {
    // J_a = u² + v² turns the slow plane at angular speed 2
    let sys = mollified();
    let z0 = SlowPoint::planar(0.5, 0.0);
    let mut misses = Vec::new();
    for eps in [1e-2, 5e-3] {
        let fam = pure_surfaces(A, eps);
        let n = (PI / eps).round() as usize;
        let traj = drift_run(&sys, &fam, &z0, eps, n).unwrap();
        let radius = traj.z.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(radius < 0.5 + 5.0 * eps, "eps {eps}: radius {radius}");
        misses.push(traj.last().distance(&z0) / eps);
    }
    assert!(misses.iter().all(|&m| m < 5.0), "{misses:?}");
}

#[test]
fn homogeneous_run_matches_drift_on_pure_surfaces() {
    let sys = mollified();
    let eps = 1e-2;
    let z0 = SlowPoint::planar(0.4, -0.2);
    let a = homogeneous_run(&sys, B, &z0, eps, 40, &coarse()).unwrap();
    let b = drift_run(&sys, &pure_surfaces(B, eps), &z0, eps, 40).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.replay_defect(&sys).unwrap(), 0.0);
}

#[test]
fn drift_rejects_mismatched_inputs() {
    let sys = mollified();
    let fam = pure_surfaces(A, 1e-2);
    let z0 = SlowPoint::planar(0.5, 0.0);
    assert!(matches!(drift_run(&sys, &fam, &z0, 2e-2, 3), Err(Error::Parameter(_))));
    assert!(matches!(drift_run(&sys, &fam, &SlowPoint::planar(3.0, 0.0), 1e-2, 3), Err(Error::Domain(_))));
    let other = mollify(&sys, 0.3).unwrap();
    assert!(matches!(drift_run(&other, &fam, &z0, 1e-2, 3), Err(Error::Parameter(_))));
}

#[test]
fn block_comparison_of_identical_runs_is_zero() {
    let sys = mollified();
    let eps = 1e-2;
    let traj = homogeneous_run(&sys, A, &SlowPoint::planar(0.5, 0.0), eps, 60, &coarse()).unwrap();
    let cmp = block_compare(&traj, &traj, 0, 0.5).unwrap();
    assert_eq!(cmp.block_len, 50);
    assert_eq!(cmp.profile.len(), 51);
    assert_eq!(cmp.k0, 0.0);
    assert_eq!(cmp.k1, 0.0);
    assert!(matches!(block_compare(&traj, &traj, 20, 0.5), Err(Error::OutOfRange(_))));
}

#[test]
fn block_comparison_detects_code_mismatch() {
    let sys = mollified();
    let eps = 1e-2;
    let z0 = SlowPoint::planar(0.5, 0.0);
    let a = homogeneous_run(&sys, A, &z0, eps, 10, &coarse()).unwrap();
    let b = homogeneous_run(&sys, B, &z0, eps, 10, &coarse()).unwrap();
    assert!(matches!(block_compare(&a, &b, 0, 0.05), Err(Error::BlockMismatch { index: 0 })));
}

#[test]
fn codes_sharing_a_block_drift_together() {
    // a code that switches to b after a long a-block, against a^∞ from a
    // start point O(eps) away
    let sys = mollified();
    let mut k1 = Vec::new();
    for eps in [1e-2f64, 5e-3] {
        let n = (0.5 / eps).round() as usize;
        let core: Vec<Symbol> = std::iter::repeat(A).take(n + 1).chain([B; 4]).collect();
        let code = Code::new(vec![A], core, vec![B], 0).unwrap();
        let fam = invariant_surfaces(&sys, &code, eps, None, &coarse()).unwrap();
        let z0 = SlowPoint::planar(0.5, 0.0);
        let mixed = drift_run(&sys, &fam, &z0, eps, n + 2).unwrap();
        let shifted = SlowPoint::planar(0.5 + eps, 0.0);
        let pure = homogeneous_run(&sys, A, &shifted, eps, n + 2, &coarse()).unwrap();
        let cmp = block_compare(&mixed, &pure, 0, 0.5).unwrap();
        assert!((cmp.k0 - 1.0).abs() < 1e-9);
        assert!(cmp.k1 >= cmp.k0);
        k1.push(cmp.k1);
    }
    let ratio = k1[0] / k1[1];
    assert!((0.5..=2.0).contains(&ratio), "{k1:?}");
}

fn circle_set() -> SlowGeneratorSet {
    SlowGeneratorSet::new(circle_generators(&scenario_box()).unwrap().to_vec()).unwrap()
}

fn validated(segments: &[(usize, f64)]) -> AccessiblePath {
    path_validate(&AccessiblePath::from_durations(SlowPoint::planar(0.5, 0.0), segments), &circle_set()).unwrap()
}

#[test]
fn plan_counts_copies_per_segment() {
    let codes = vec![vec![A], vec![B]];
    let plan = plan_code(&validated(&[(0, 0.5)]), &codes, 0.01, &Continuation::RepeatLast).unwrap();
    assert_eq!(plan.blocks.len(), 1);
    assert_eq!(plan.blocks[0].copies, 50);
    assert_eq!(plan.total_len, 50);

    let plan = plan_code(&validated(&[(0, 1.0), (1, 1.0)]), &codes, 0.01, &Continuation::RepeatLast).unwrap();
    assert_eq!(plan.offsets(), vec![100, 200]);
    assert_eq!(plan.code.symbol(99), A);
    assert_eq!(plan.code.symbol(100), B);
    assert_eq!(plan.code.symbol(-5), A);
    assert_eq!(plan.code.symbol(500), B);

    let plan = plan_code(&validated(&[(0, 1.0)]), &codes, 0.01, &Continuation::Word(vec![B])).unwrap();
    assert_eq!(plan.code.symbol(100), B);
}

#[test]
fn plan_pads_shorter_codes() {
    let codes = vec![vec![A, B], vec![B]];
    let plan = plan_code(&validated(&[(0, 0.5), (1, 0.5)]), &codes, 0.01, &Continuation::RepeatLast).unwrap();
    assert_eq!(plan.ell0, 2);
    assert_eq!(plan.blocks[0].copies, 25);
    assert_eq!(plan.blocks[1].word, vec![B, B]);
    assert_eq!(plan.blocks[1].code_len, 1);
    assert_eq!(plan.total_len, 100);
}

#[test]
fn plan_rejects_bad_inputs() {
    let codes = vec![vec![A], vec![B]];
    let short = validated(&[(0, 0.5), (1, 0.005)]);
    assert!(matches!(
        plan_code(&short, &codes, 0.01, &Continuation::RepeatLast),
        Err(Error::EmptyBlock { segment: 1 })
    ));
    let uneven = vec![vec![A, B], vec![B, B, A]];
    assert!(matches!(
        plan_code(&validated(&[(0, 0.5), (1, 0.5)]), &uneven, 0.01, &Continuation::RepeatLast),
        Err(Error::Parameter(_))
    ));
    let raw = AccessiblePath::from_durations(SlowPoint::planar(0.5, 0.0), &[(0, 0.5)]);
    assert!(matches!(plan_code(&raw, &codes, 0.01, &Continuation::RepeatLast), Err(Error::Precondition(_))));
    assert!(matches!(
        plan_code(&validated(&[(0, 0.5)]), &codes, 0.01, &Continuation::Word(vec![])),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn plan_csv_lists_blocks() {
    let plan =
        plan_code(&validated(&[(0, 0.3), (1, 0.2)]), &[vec![A], vec![B]], 0.1, &Continuation::RepeatLast).unwrap();
    let mut buf = Vec::new();
    plan.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# slowdrift-plan v1");
    assert_eq!(lines[4], "block,segment,k,word,copies,start,end");
    assert_eq!(lines[5], "0,0,0,a,3,0,3");
    assert_eq!(lines[6], "1,1,1,b,2,3,5");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_blocks_tile_the_prefix(
        durations in prop::collection::vec(0.05f64..0.6, 1..5),
        eps in 0.002f64..0.02,
        long_a in any::<bool>(),
    ) {
        let segments: Vec<(usize, f64)> = durations.iter().enumerate().map(|(i, &d)| (i % 2, d)).collect();
        let path = validated(&segments);
        let codes = if long_a { vec![vec![A, B], vec![B]] } else { vec![vec![A], vec![B]] };
        let ell0 = if long_a { 2 } else { 1 };
        let plan = plan_code(&path, &codes, eps, &Continuation::RepeatLast).unwrap();
        prop_assert_eq!(plan.blocks.len(), segments.len());
        let mut pos = 0;
        for (b, &(k, d)) in plan.blocks.iter().zip(&segments) {
            prop_assert_eq!(b.start, pos);
            prop_assert_eq!(b.copies, (d / (eps * ell0 as f64)).floor() as usize);
            prop_assert_eq!(b.end - b.start, b.copies * ell0);
            for i in b.start..b.end {
                prop_assert_eq!(plan.code.symbol(i as i64), codes[k][(i - b.start) % codes[k].len()]);
            }
            pos = b.end;
        }
        prop_assert_eq!(plan.total_len, pos);
    }
}

#[test]
fn synthetic_path_is_shadowed_at_order_eps() {
    let r = scenario_report();
    assert_eq!(r.reports.len(), 2);
    assert!(!r.scaling_violation, "{:?}", r.scaling);
    let ratio = r.scaling[0].ratio.unwrap();
    assert!((1.5..=3.0).contains(&ratio), "{ratio}");
    for rep in &r.reports {
        assert_eq!(rep.segment_errors.len(), 3);
        assert!(rep.c0 < 5.0, "c0 {}", rep.c0);
        assert!(rep.endpoint_error <= rep.max_error);
        assert!(rep.surface_residual <= 1e-8);
        let k1 = rep.k1.unwrap();
        assert!(k1.is_finite() && k1 < 5.0, "k1 {k1}");
    }
    assert_eq!(r.c0, r.reports.iter().map(|x| x.c0).fold(0.0, f64::max));
}

#[test]
fn shadow_run_is_consistent_with_its_plan() {
    let sys = mollify(&scenario().sys, 0.2).unwrap();
    for rep in &scenario_report().reports {
        let plan = &rep.plan;
        let blocks: usize = plan.blocks.iter().map(|b| b.copies * plan.ell0).sum();
        assert_eq!(plan.total_len, blocks);
        assert_eq!(rep.trajectory.steps(), plan.total_len);
        assert_eq!(rep.samples.len(), plan.total_len + 1);
        assert_eq!(rep.trajectory.replay_defect(&sys).unwrap(), 0.0);
        for b in &plan.blocks {
            let s = &rep.samples[b.start];
            assert_eq!(s.slow_time, scenario().path.breakpoints[b.segment]);
        }
        assert_eq!(rep.samples[0].error, 0.0);
    }
}

#[test]
fn shadow_csv_has_one_row_per_step() {
    let r = scenario_report();
    let rep = &r.reports[0];
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# slowdrift-shadow v1\n"));
    assert!(text.contains("step,segment,slow_time,v,u,gamma_v,gamma_u,error\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), rep.samples.len() + 1);

    let mut buf = Vec::new();
    r.write_summary_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn empty_path_is_shadowed_exactly() {
    let s = scenario();
    let path = path_validate(&AccessiblePath::empty(SlowPoint::planar(0.5, 0.0)), &s.gens).unwrap();
    let cfg = Theorem1Config { surface: coarse(), ..s.config.clone() };
    let r = verify_theorem1(&s.sys, &s.gens, &path, &[1e-2, 5e-3], &cfg).unwrap();
    for rep in &r.reports {
        assert_eq!(rep.max_error, 0.0);
        assert_eq!(rep.plan.total_len, 0);
        assert!(rep.k1.is_none());
    }
    assert_eq!(r.scaling[0].ratio, None);
    assert!(!r.scaling_violation);
}

#[test]
fn theorem1_checks_its_preconditions() {
    let s = scenario();
    let cfg = &s.config;
    let raw = AccessiblePath::from_durations(SlowPoint::planar(0.5, 0.0), &[(0, 0.5)]);
    assert!(matches!(verify_theorem1(&s.sys, &s.gens, &raw, &[1e-2], cfg), Err(Error::Precondition(_))));
    // the circle of radius 1.4 about the origin comes within 0.1 of v = -1.5
    let near =
        path_validate(&AccessiblePath::from_durations(SlowPoint::planar(0.0, 1.4), &[(0, 2.5)]), &s.gens).unwrap();
    let r = verify_theorem1(&s.sys, &s.gens, &near, &[1e-2], cfg).map(|_| ());
    assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
    let one_code = Theorem1Config { codes: vec![vec![A]], ..cfg.clone() };
    assert!(matches!(verify_theorem1(&s.sys, &s.gens, &s.path, &[1e-2], &one_code), Err(Error::Parameter(_))));
    assert!(matches!(verify_theorem1(&s.sys, &s.gens, &s.path, &[], cfg), Err(Error::Parameter(_))));
}

/// The closed-form action `2π E / ω` and period `2π / ω` of the tilted
/// oscillator `ω = 1 + a u + b v`, `E = 1 + (u² + v²)/2`.
fn tilted_generator(a: f64, b: f64) -> AnalyticGenerator {
    let e = |z: &SlowPoint| 1.0 + 0.5 * (z.u[0] * z.u[0] + z.v[0] * z.v[0]);
    let w = move |z: &SlowPoint| 1.0 + a * z.u[0] + b * z.v[0];
    let action = SlowField::from_fns(
        1,
        "2 pi E / omega",
        move |z: &SlowPoint| 2.0 * PI * e(z) / w(z),
        move |z: &SlowPoint| {
            let (ee, ww) = (e(z), w(z));
            let dv = 2.0 * PI * (z.v[0] * ww - ee * b) / (ww * ww);
            let du = 2.0 * PI * (z.u[0] * ww - ee * a) / (ww * ww);
            SlowPoint::planar(dv, du)
        },
    );
    let period = SlowField::from_fns(
        1,
        "2 pi / omega",
        move |z: &SlowPoint| 2.0 * PI / w(z),
        move |z: &SlowPoint| {
            let ww = w(z);
            SlowPoint::planar(-2.0 * PI * b / (ww * ww), -2.0 * PI * a / (ww * ww))
        },
    );
    AnalyticGenerator::new("tilted", action, period, common::unit_box()).unwrap()
}

#[test]
fn full_system_tracks_the_slow_flow() {
    let model = common::tilted_oscillator(0.2, 0.1);
    let gen = tilted_generator(0.2, 0.1);
    let z0 = SlowPoint::planar(0.2, 0.1);
    let omega = 1.0 + 0.2 * 0.1 + 0.1 * 0.2;
    let guess = OrbitGuess::new(FastPoint::new(vec![1.5], vec![0.0]), 2.0 * PI / omega);
    let orbit = find_periodic_orbit(&model, &z0, &guess, &OrbitConfig::default()).unwrap();
    let cfg = StabConfig { samples: 400, ..Default::default() };
    let r1 = lemma_stab(&model, &gen, &orbit, 1e-2, &cfg).unwrap();
    let r2 = lemma_stab(&model, &gen, &orbit, 5e-3, &cfg).unwrap();
    assert_eq!(r1.samples.len(), 401);
    assert_eq!(r1.samples[0].error, 0.0);
    let ratio = r1.max_error / r2.max_error;
    assert!((1.5..=3.0).contains(&ratio), "errors {} and {}", r1.max_error, r2.max_error);
    assert!(r1.c2 < 10.0, "{}", r1.c2);
    // the full energy is conserved, so the trajectory stays on the zero level
    // that the frozen orbits fill; only integration error remains
    for r in [&r1, &r2] {
        assert!(r.c1 < 1e-2, "eps {}: c1 {}", r.eps, r.c1);
        assert!(r.energy_drift < 1e-6);
    }
    assert!(matches!(lemma_stab(&model, &gen, &orbit, 0.0, &cfg), Err(Error::Parameter(_))));
}
