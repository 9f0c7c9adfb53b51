mod common;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowdrift::model::{
    builtin_oscillator, builtin_saddle_oscillator, make_perturbative, ClosureHamiltonian, Dims, Domain, Evaluation,
    SlowField,
};
use slowdrift::orbit::{
    action, action_gradient, build_action_field, find_periodic_orbit, floquet, perturbative_action, ActionField,
    ContinuationConfig, OrbitConfig, OrbitGuess, PeriodicOrbit,
};
use slowdrift::{Error, FastPoint, HamiltonianModel, SlowPoint};

use common::{oscillator, rel_err, tilted_oscillator, unit_box};

fn cfg() -> OrbitConfig {
    OrbitConfig::default()
}

fn orbit_at(model: &HamiltonianModel, z: SlowPoint) -> PeriodicOrbit {
    find_periodic_orbit(model, &z, &OrbitGuess::new(FastPoint::new(vec![1.5], vec![0.0]), 6.0), &cfg()).unwrap()
}

fn saddle_orbit(lambda: f64) -> (HamiltonianModel, PeriodicOrbit) {
    let model = builtin_saddle_oscillator(lambda, 1.0, 1.0).unwrap();
    let guess = OrbitGuess::new(FastPoint::new(vec![0.0, 1.5], vec![0.0, 0.0]), 6.0);
    let orbit = find_periodic_orbit(&model, &SlowPoint::planar(0.0, 0.0), &guess, &cfg()).unwrap();
    (model, orbit)
}

#[test]
fn oscillator_orbit_from_rough_guess() {
    let model = oscillator();
    let orbit = orbit_at(&model, SlowPoint::planar(0.0, 0.0));
    assert!((orbit.period - 2.0 * PI).abs() < 1e-10);
    assert!(orbit.closure_residual <= 1e-10);
    assert!(orbit.energy_residual <= 1e-9);
    for w in &orbit.samples {
        assert!((w.p[0] * w.p[0] + w.q[0] * w.q[0] - 2.0).abs() < 1e-9);
    }
}

#[test]
fn saddle_orbit_sits_in_the_oscillating_plane() {
    let (_, orbit) = saddle_orbit(0.5);
    assert!((orbit.period - 2.0 * PI).abs() < 1e-10);
    for w in &orbit.samples {
        assert!(w.p[0].abs() < 1e-10 && w.q[0].abs() < 1e-10);
    }
    assert!(orbit.energy_residual <= 1e-9);
}

#[test]
fn far_guess_does_not_converge() {
    let model = oscillator();
    let r = find_periodic_orbit(
        &model,
        &SlowPoint::planar(0.0, 0.0),
        &OrbitGuess::new(FastPoint::new(vec![100.0], vec![0.0]), 6.0),
        &cfg(),
    );
    assert!(matches!(r, Err(Error::NoConvergence { .. })), "{r:?}");
}

#[test]
fn negative_energy_level_has_no_orbit() {
    let model = builtin_oscillator(SlowField::constant(1, 1.0), SlowField::constant(1, -0.5), &unit_box()).unwrap();
    let mut c = cfg();
    c.max_correction = 10.0;
    let r = find_periodic_orbit(
        &model,
        &SlowPoint::planar(0.0, 0.0),
        &OrbitGuess::new(FastPoint::new(vec![0.5], vec![0.0]), 6.0),
        &c,
    );
    assert!(matches!(r, Err(Error::EnergyMismatch { .. })), "{r:?}");
}

#[test]
fn floquet_of_oscillator_is_trivial() {
    let model = oscillator();
    let orbit = orbit_at(&model, SlowPoint::planar(0.3, 0.1));
    let f = floquet(&model, &orbit, &cfg()).unwrap();
    assert_eq!(f.multipliers.len(), 2);
    assert!(f.trivial_defect() < 1e-6);
    assert!(!f.hyperbolic);
    assert!((f.product() - 1.0).norm() < 1e-6);
}

#[test]
fn floquet_of_saddle_matches_exponentials() {
    for lambda in [0.25, 0.5, 1.0] {
        let (model, orbit) = saddle_orbit(lambda);
        let f = floquet(&model, &orbit, &cfg()).unwrap();
        assert!(f.hyperbolic);
        assert!(f.trivial_defect() < 1e-6, "lambda {lambda}: {:?}", f.multipliers);
        assert!((f.product() - 1.0).norm() < 1e-6);
        let mut nt: Vec<f64> = f.nontrivial().iter().map(|m| m.re).collect();
        nt.sort_by(f64::total_cmp);
        let t = orbit.period;
        assert!(rel_err(nt[1], (lambda * t).exp()) < 1e-6, "{nt:?}");
        assert!(rel_err(nt[0], (-lambda * t).exp()) < 1e-6, "{nt:?}");
    }
}

#[test]
fn floquet_example_values() {
    let (model, orbit) = saddle_orbit(0.5);
    let f = floquet(&model, &orbit, &cfg()).unwrap();
    let mut re: Vec<f64> = f.multipliers.iter().map(|m| m.re).collect();
    re.sort_by(f64::total_cmp);
    assert!((re[0] - 0.043214).abs() < 1e-6);
    assert!((re[3] - 23.1407).abs() < 1e-4);
}

#[test]
fn weak_saddle_tends_to_trivial_multipliers() {
    let (model, orbit) = saddle_orbit(1e-5);
    let f = floquet(&model, &orbit, &cfg()).unwrap();
    for m in &f.multipliers {
        assert!((m - 1.0).norm() < 1e-3);
    }
    assert!(!f.hyperbolic);
}

#[test]
fn action_closed_forms() {
    let model = oscillator();
    assert!((action(&orbit_at(&model, SlowPoint::planar(0.0, 0.0))).unwrap() - 2.0 * PI).abs() < 1e-8);
    assert!((action(&orbit_at(&model, SlowPoint::planar(1.0, 0.0))).unwrap() - 3.0 * PI).abs() < 1e-8);
}

#[test]
fn zero_energy_orbit_has_zero_action() {
    let model = builtin_oscillator(SlowField::constant(1, 1.0), SlowField::constant(1, 0.0), &unit_box()).unwrap();
    let orbit = find_periodic_orbit(
        &model,
        &SlowPoint::planar(0.0, 0.0),
        &OrbitGuess::new(FastPoint::new(vec![0.0], vec![0.0]), 2.0 * PI),
        &cfg(),
    )
    .unwrap();
    assert_eq!(action(&orbit).unwrap(), 0.0);
}

#[test]
fn action_needs_enough_samples() {
    let model = oscillator();
    let mut c = cfg();
    c.samples = 100;
    let orbit = find_periodic_orbit(
        &model,
        &SlowPoint::planar(0.0, 0.0),
        &OrbitGuess::new(FastPoint::new(vec![1.5], vec![0.0]), 6.0),
        &c,
    )
    .unwrap();
    assert!(matches!(action(&orbit), Err(Error::Accuracy(_))));
    assert!(matches!(action_gradient(&model, &orbit), Err(Error::Accuracy(_))));
}

#[test]
fn action_gradient_closed_forms() {
    let model = oscillator();
    let g = action_gradient(&model, &orbit_at(&model, SlowPoint::planar(0.0, 0.5))).unwrap();
    assert!((g.u[0] - PI).abs() < 1e-8 && g.v[0].abs() < 1e-10);
    let g = action_gradient(&model, &orbit_at(&model, SlowPoint::planar(0.0, 0.0))).unwrap();
    assert!(g.norm() < 1e-10);
}

fn fd_gradient(model: &HamiltonianModel, z: &SlowPoint, guess: &OrbitGuess) -> [f64; 2] {
    let h = 1e-4;
    let at = |dv: f64, du: f64| {
        let zz = SlowPoint::planar(z.v[0] + dv, z.u[0] + du);
        action(&find_periodic_orbit(model, &zz, guess, &cfg()).unwrap()).unwrap()
    };
    [(at(h, 0.0) - at(-h, 0.0)) / (2.0 * h), (at(0.0, h) - at(0.0, -h)) / (2.0 * h)]
}

#[test]
fn gradient_identity_against_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in [oscillator(), tilted_oscillator(0.2, 0.1)] {
        for _ in 0..10 {
            let z = SlowPoint::planar(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
            let orbit = orbit_at(&model, z.clone());
            let g = action_gradient(&model, &orbit).unwrap();
            let fd = fd_gradient(&model, &z, &orbit.guess());
            let scale = g.norm().max(1e-3);
            assert!((g.v[0] - fd[0]).abs() / scale <= 1e-6, "{z}: {g:?} vs {fd:?}");
            assert!((g.u[0] - fd[1]).abs() / scale <= 1e-6, "{z}: {g:?} vs {fd:?}");
        }
    }
}

#[test]
fn saddle_action_identity() {
    let model = builtin_saddle_oscillator(0.5, 1.0, 1.0).unwrap();
    let guess = OrbitGuess::new(FastPoint::new(vec![0.0, 1.5], vec![0.0, 0.0]), 6.0);
    let z = SlowPoint::planar(0.3, -0.4);
    let orbit = find_periodic_orbit(&model, &z, &guess, &cfg()).unwrap();
    let j = action(&orbit).unwrap();
    assert!(rel_err(j, 2.0 * PI * (1.0 + 0.125)) < 1e-8);
    let g = action_gradient(&model, &orbit).unwrap();
    let h = 1e-4;
    let at = |zz: SlowPoint| action(&find_periodic_orbit(&model, &zz, &orbit.guess(), &cfg()).unwrap()).unwrap();
    let fdu = (at(SlowPoint::planar(0.3, -0.4 + h)) - at(SlowPoint::planar(0.3, -0.4 - h))) / (2.0 * h);
    assert!(rel_err(g.u[0], fdu) < 1e-6);
}

#[test]
fn perturbative_action_examples() {
    let dims = Dims::new(1, 1).unwrap();
    let h0 = HamiltonianModel::new(
        ClosureHamiltonian::new("h0", dims, |w: &FastPoint, _z: &SlowPoint, _e| {
            0.5 * (w.p[0] * w.p[0] + w.q[0] * w.q[0]) - 1.0
        })
        .with_gradient(|w: &FastPoint, _z: &SlowPoint, _e| Evaluation {
            h: 0.5 * (w.p[0] * w.p[0] + w.q[0] * w.q[0]) - 1.0,
            dhdp: vec![w.p[0]],
            dhdq: vec![w.q[0]],
            dhdv: vec![0.0],
            dhdu: vec![0.0],
        }),
    );
    let guess = OrbitGuess::new(FastPoint::new(vec![1.5], vec![0.0]), 6.0);
    let zero = HamiltonianModel::new(ClosureHamiltonian::new("zero", dims, |_w: &FastPoint, _z: &SlowPoint, _e| 0.0));
    let m0 = make_perturbative(h0.clone(), zero).unwrap();
    let orbit = find_periodic_orbit(&m0, &SlowPoint::planar(0.0, 0.0), &guess, &cfg()).unwrap();
    assert_eq!(perturbative_action(&m0, &orbit, &SlowPoint::planar(0.2, 0.3)).unwrap(), 0.0);

    let slow_only =
        HamiltonianModel::new(ClosureHamiltonian::new("slow", dims, |_w: &FastPoint, z: &SlowPoint, _e| {
            z.v[0] + 2.0 * z.u[0]
        }));
    let m1 = make_perturbative(h0.clone(), slow_only).unwrap();
    let jt = perturbative_action(&m1, &orbit, &SlowPoint::planar(0.5, 0.25)).unwrap();
    assert!((jt - orbit.period * 1.0).abs() < 1e-10);

    let uq2 = HamiltonianModel::new(ClosureHamiltonian::new("uq2", dims, |w: &FastPoint, z: &SlowPoint, _e| {
        z.u[0] * w.q[0] * w.q[0]
    }));
    let m2 = make_perturbative(h0, uq2).unwrap();
    let jt = perturbative_action(&m2, &orbit, &SlowPoint::planar(0.0, 1.0)).unwrap();
    assert!((jt - 2.0 * PI).abs() < 1e-8, "{jt}");

    assert!(matches!(
        perturbative_action(&oscillator(), &orbit, &SlowPoint::planar(0.0, 0.0)),
        Err(Error::Precondition(_))
    ));
}

fn oscillator_field(resolution: usize) -> ActionField {
    let model = oscillator();
    let seed = orbit_at(&model, SlowPoint::planar(0.0, 0.0));
    build_action_field(&model, "osc", &seed, &unit_box(), &ContinuationConfig { resolution, ..Default::default() })
        .unwrap()
}

fn closed_form(z: &SlowPoint) -> f64 {
    2.0 * PI + PI * (z.u[0] * z.u[0] + z.v[0] * z.v[0])
}

#[test]
fn action_field_matches_closed_form() {
    let field = oscillator_field(21);
    for k in 0..field.grid.len() {
        let z = SlowPoint::from_flat(&field.grid.node(k));
        assert!((field.action[k] - closed_form(&z)).abs() < 1e-8);
        assert!(field.period[k] > 0.0);
    }
    let z = SlowPoint::planar(0.3, 0.4);
    assert!((field.value(&z) - 7.068583470577035).abs() < 1e-6);
    assert!((field.period_at(&z) - 2.0 * PI).abs() < 1e-8);
}

#[test]
fn action_field_round_trips_through_csv() {
    let field = oscillator_field(7);
    let mut buf = Vec::new();
    field.write_csv(&mut buf).unwrap();
    let back = ActionField::read_csv(std::io::Cursor::new(buf.clone())).unwrap();
    assert_eq!(back.action, field.action);
    assert_eq!(back.period, field.period);
    assert_eq!(back.gradient, field.gradient);
    assert_eq!(back.label, "osc");
    let mut buf2 = Vec::new();
    back.write_csv(&mut buf2).unwrap();
    assert_eq!(buf, buf2);
    assert!(matches!(ActionField::read_csv(std::io::Cursor::new(b"garbage\n".to_vec())), Err(Error::Parse(_))));
}

#[test]
fn interpolation_converges_at_fourth_order() {
    // the tilted model has a non-polynomial action 2 pi E / omega
    let model = tilted_oscillator(0.3, 0.2);
    let dom = Domain::new_box(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let seed = orbit_at(&model, SlowPoint::planar(0.0, 0.0));
    let exact = |z: &SlowPoint| {
        2.0 * PI * (1.0 + 0.5 * (z.u[0] * z.u[0] + z.v[0] * z.v[0])) / (1.0 + 0.3 * z.u[0] + 0.2 * z.v[0])
    };
    let err = |n: usize| {
        let f =
            build_action_field(&model, "t", &seed, &dom, &ContinuationConfig { resolution: n, ..Default::default() })
                .unwrap();
        let mut e = 0.0f64;
        for i in 0..13 {
            for j in 0..13 {
                let z =
                    SlowPoint::planar(-0.45 + 0.9 * i as f64 / 12.0 + 0.0123, -0.45 + 0.9 * j as f64 / 12.0 + 0.0071);
                e = e.max((f.value(&z) - exact(&z)).abs());
            }
        }
        e
    };
    let (e1, e2) = (err(5), err(9));
    let slope = (e1 / e2).log2();
    assert!(slope >= 3.5, "errors {e1:e} {e2:e}, slope {slope}");
}

#[test]
fn continuation_is_consistent_with_fresh_solves() {
    let model = tilted_oscillator(0.2, 0.1);
    let seed = orbit_at(&model, SlowPoint::planar(0.0, 0.0));
    let field = build_action_field(
        &model,
        "t",
        &seed,
        &unit_box(),
        &ContinuationConfig { resolution: 9, ..Default::default() },
    )
    .unwrap();
    for k in [0, 17, 40, 80] {
        let z = SlowPoint::from_flat(&field.grid.node(k));
        let omega = 1.0 + 0.2 * z.u[0] + 0.1 * z.v[0];
        let fresh = OrbitGuess::new(FastPoint::new(vec![1.5], vec![0.0]), 2.0 * PI / omega);
        let j = action(&find_periodic_orbit(&model, &z, &fresh, &cfg()).unwrap()).unwrap();
        assert!((j - field.action[k]).abs() <= 1e-9, "node {k}");
    }
}

#[test]
fn continuation_reports_breakdown() {
    // omega vanishes at u = 0.5: orbits blow up there
    let omega = SlowField::from_fns(
        1,
        "1 - 2u",
        |z: &SlowPoint| 1.0 - 2.0 * z.u[0],
        |_z: &SlowPoint| SlowPoint::planar(0.0, -2.0),
    );
    let dom = Domain::new_box(vec![-1.0, -0.4], vec![1.0, 0.45]).unwrap();
    let model = builtin_oscillator(omega, SlowField::constant(1, 1.0), &dom).unwrap();
    let seed = orbit_at(&model, SlowPoint::planar(0.0, 0.0));
    let wide = Domain::new_box(vec![-1.0, -0.4], vec![1.0, 0.8]).unwrap();
    let r =
        build_action_field(&model, "bad", &seed, &wide, &ContinuationConfig { resolution: 9, ..Default::default() });
    match r {
        Err(Error::ContinuationBreakdown { solved, failed, frontier, .. }) => {
            assert!(solved > 0 && failed > 0);
            assert_eq!(frontier.len(), solved);
        }
        other => panic!("expected breakdown, got {other:?}"),
    }
}
