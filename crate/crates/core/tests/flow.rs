mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slowdrift::flow::ode::{self, IntegratorConfig};
use slowdrift::flow::{
    detect_crossings, integrate_frozen, integrate_frozen_symplectic, integrate_full, Orientation, Section,
};
use slowdrift::model::builtin_saddle_oscillator;
use slowdrift::{FastPoint, FullState, SlowPoint};

use common::oscillator;

fn sqrt2() -> f64 {
    2f64.sqrt()
}

#[test]
fn full_run_closes_after_one_period() {
    let model = oscillator();
    let s0 = FullState::new(FastPoint::new(vec![sqrt2()], vec![0.0]), SlowPoint::planar(0.0, 0.0));
    let tr = integrate_full(&model, &s0, 0.0, [0.0, 2.0 * PI], &IntegratorConfig::with_tol(1e-10)).unwrap();
    let end = tr.final_state();
    assert!((end.w.p[0] - sqrt2()).abs() < 1e-8 && end.w.q[0].abs() < 1e-8, "{end:?}");
}

#[test]
fn zero_length_span_keeps_initial_state() {
    let model = oscillator();
    let s0 = FullState::new(FastPoint::new(vec![0.3], vec![0.1]), SlowPoint::planar(0.2, -0.1));
    let tr = integrate_full(&model, &s0, 0.01, [1.0, 1.0], &IntegratorConfig::default()).unwrap();
    assert_eq!(tr.len(), 1);
    assert_eq!(tr.state(0), s0);
    assert_eq!(tr.energy_drift, 0.0);
}

#[test]
fn energy_drift_over_long_span_is_small() {
    let model = oscillator();
    let s0 = FullState::new(FastPoint::new(vec![sqrt2()], vec![0.0]), SlowPoint::planar(0.0, 0.0));
    let tr = integrate_full(&model, &s0, 0.0, [0.0, 100.0], &IntegratorConfig::with_tol(1e-10)).unwrap();
    assert!(tr.energy_drift <= 1e-8, "drift {}", tr.energy_drift);
}

#[test]
fn energy_drift_bound_on_slow_fast_runs() {
    let model = oscillator();
    for (eps, span) in [(0.01, 50.0), (0.1, 20.0)] {
        let tol = 1e-9;
        let s0 = FullState::new(FastPoint::new(vec![1.0], vec![0.5]), SlowPoint::planar(0.3, -0.2));
        let tr = integrate_full(&model, &s0, eps, [0.0, span], &IntegratorConfig::with_tol(tol)).unwrap();
        assert!(tr.energy_drift <= 100.0 * tol * (1.0 + span), "eps {eps}: drift {}", tr.energy_drift);
    }
}

#[test]
fn frozen_run_matches_closed_form_and_keeps_z() {
    let model = oscillator();
    let z = SlowPoint::planar(0.0, 0.0);
    let tr = integrate_frozen(
        &model,
        &FastPoint::new(vec![sqrt2()], vec![0.0]),
        &z,
        [0.0, 10.0],
        &IntegratorConfig::with_tol(1e-11),
    )
    .unwrap();
    for k in 0..=100 {
        let t = 0.1 * k as f64;
        let s = tr.state_at(t);
        assert_abs_diff_eq!(s.w.q[0], sqrt2() * t.sin(), epsilon = 1e-8);
        assert_abs_diff_eq!(s.w.p[0], sqrt2() * t.cos(), epsilon = 1e-8);
    }
    for i in 0..tr.len() {
        assert_eq!(tr.state(i).z, z);
    }
}

#[test]
fn saddle_oscillator_stays_on_its_circle() {
    let model = builtin_saddle_oscillator(0.5, 1.0, 1.0).unwrap();
    let z = SlowPoint::planar(0.0, 0.0);
    let w0 = FastPoint::new(vec![0.0, sqrt2()], vec![0.0, 0.0]);
    let tr = integrate_frozen(&model, &w0, &z, [0.0, 4.0 * PI], &IntegratorConfig::with_tol(1e-10)).unwrap();
    for s in tr.states() {
        assert_eq!(s.w.p[0], 0.0);
        assert_eq!(s.w.q[0], 0.0);
        assert_abs_diff_eq!(s.w.p[1].hypot(s.w.q[1]), sqrt2(), epsilon = 1e-8);
    }
}

#[test]
fn crossings_of_rising_q_section() {
    let model = oscillator();
    let z = SlowPoint::planar(0.0, 0.0);
    let tr = integrate_frozen(
        &model,
        &FastPoint::new(vec![sqrt2()], vec![0.0]),
        &z,
        [0.0, 4.0 * PI + 0.5],
        &IntegratorConfig::with_tol(1e-11),
    )
    .unwrap();
    let sec = Section::coordinate("q=0", Orientation::Rising, 4, 1, 0.0);
    let ev = detect_crossings(&tr, &sec).unwrap();
    let times: Vec<f64> = ev.iter().map(|e| e.t).collect();
    assert_eq!(times.len(), 3, "{times:?}");
    for (t, expect) in times.iter().zip([0.0, 2.0 * PI, 4.0 * PI]) {
        assert_abs_diff_eq!(*t, expect, epsilon = 1e-9);
    }
    for e in &ev {
        assert!(e.residual.abs() <= 1e-10);
        assert!(e.tangency.is_none());
        assert!(e.state.w.p[0] > 0.0);
    }
}

#[test]
fn constant_sign_section_has_no_crossings() {
    let model = oscillator();
    let tr = integrate_frozen(
        &model,
        &FastPoint::new(vec![sqrt2()], vec![0.0]),
        &SlowPoint::planar(0.0, 0.0),
        [0.0, 10.0],
        &IntegratorConfig::default(),
    )
    .unwrap();
    let sec = Section::coordinate("q=5", Orientation::Any, 4, 1, 5.0);
    assert!(detect_crossings(&tr, &sec).unwrap().is_empty());
}

#[test]
fn orientations_partition_all_crossings() {
    let model = oscillator();
    let tr = integrate_frozen(
        &model,
        &FastPoint::new(vec![1.0], vec![0.3]),
        &SlowPoint::planar(0.2, 0.1),
        [0.0, 30.0],
        &IntegratorConfig::with_tol(1e-11),
    )
    .unwrap();
    let sec = Section::hyperplane("diag", Orientation::Rising, vec![1.0, 1.0, 0.0, 0.0], vec![0.2, 0.0, 0.0, 0.0]);
    let rising = detect_crossings(&tr, &sec).unwrap();
    let falling = detect_crossings(&tr, &sec.clone().with_orientation(Orientation::Falling)).unwrap();
    let any = detect_crossings(&tr, &sec.with_orientation(Orientation::Any)).unwrap();
    assert!(!rising.is_empty() && !falling.is_empty());
    let mut union: Vec<f64> = rising.iter().chain(&falling).map(|e| e.t).collect();
    union.sort_by(f64::total_cmp);
    let all: Vec<f64> = any.iter().map(|e| e.t).collect();
    assert_eq!(union, all);
    for e in &any {
        assert!(e.residual.abs() <= 1e-10);
    }
}

#[test]
fn tangential_crossing_carries_warning() {
    let model = oscillator();
    // q peaks at sqrt(2) when t = pi/2, so q = sqrt(2) - 1e-4 is crossed twice at speed about 0.017
    let tr = integrate_frozen(
        &model,
        &FastPoint::new(vec![sqrt2()], vec![0.0]),
        &SlowPoint::planar(0.0, 0.0),
        [0.0, 3.0],
        &IntegratorConfig::with_tol(1e-12),
    )
    .unwrap();
    let mut sec = Section::coordinate("near-top", Orientation::Any, 4, 1, sqrt2() - 1e-4);
    sec.tangency_threshold = 0.05;
    let ev = detect_crossings(&tr, &sec).unwrap();
    assert_eq!(ev.len(), 2);
    assert!(ev.iter().all(|e| e.tangency.is_some_and(|w| w.rate < 0.02)));
}

#[test]
fn fixed_step_order_is_five() {
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| -> slowdrift::Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    };
    let err = |n: usize| {
        let y = ode::solve_fixed(f, 0.0, &[0.0, 1.0], 5.0, n).unwrap();
        (y[0] - 5f64.sin()).hypot(y[1] - 5f64.cos())
    };
    let slope = (err(20) / err(40)).log2();
    assert!((slope - 5.0).abs() <= 0.5, "slope {slope}");
}

#[test]
fn adaptive_error_tracks_tolerance() {
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| -> slowdrift::Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    };
    let err = |tol: f64| {
        let sol = ode::solve(f, 0.0, &[0.0, 1.0], 10.0, &IntegratorConfig::with_tol(tol)).unwrap();
        let y = sol.final_state();
        ((y[0] - 10f64.sin()).hypot(y[1] - 10f64.cos()), sol.segments.len())
    };
    // halving the step should shrink the error by 2^5; halving happens when
    // the tolerance drops by 2^5
    let (e1, n1) = err(1e-7);
    let (e2, n2) = err(1e-7 / 32.0);
    let slope = (e1 / e2).log2() / (n2 as f64 / n1 as f64).log2();
    assert!((slope - 5.0).abs() <= 1.0, "effective order {slope}");
}

#[test]
fn symplectic_energy_stays_bounded() {
    let model = oscillator();
    let run = integrate_frozen_symplectic(
        &model,
        &FastPoint::new(vec![sqrt2()], vec![0.0]),
        &SlowPoint::planar(0.0, 0.0),
        0.05,
        20_000,
        100,
    )
    .unwrap();
    assert!(run.energy_drift < 1e-5, "{}", run.energy_drift);
    assert_eq!(*run.times.last().unwrap(), 1000.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frozen_field_matches_full_field_at_zero_eps(p in -2.0..2.0f64, q in -2.0..2.0f64, v in -1.0..1.0f64, u in -1.0..1.0f64) {
        let model = oscillator();
        let w = FastPoint::new(vec![p], vec![q]);
        let z = SlowPoint::planar(v, u);
        let full = model.full_vector_field(&FullState::new(w.clone(), z.clone()), 0.0).unwrap();
        let frozen = model.frozen_vector_field(&w, &z).unwrap();
        prop_assert_eq!(full.w, frozen);
        prop_assert!(full.z.v.iter().chain(&full.z.u).all(|x| *x == 0.0));
    }

    #[test]
    fn crossing_residuals_are_tiny(p in 0.5..1.5f64, q in -0.5..0.5f64, level in -0.4..0.4f64) {
        let model = oscillator();
        let tr = integrate_frozen(&model, &FastPoint::new(vec![p], vec![q]), &SlowPoint::planar(0.1, -0.2), [0.0, 15.0], &IntegratorConfig::with_tol(1e-10)).unwrap();
        let sec = Section::coordinate("q", Orientation::Any, 4, 1, level);
        let ev = detect_crossings(&tr, &sec).unwrap();
        prop_assert!(ev.len() >= 4);
        prop_assert!(ev.windows(2).all(|w| w[0].t < w[1].t));
        for e in ev {
            prop_assert!(e.residual.abs() <= 1e-10);
        }
    }
}
