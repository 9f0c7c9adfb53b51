#![allow(dead_code)]

use slowdrift::model::{builtin_oscillator, Domain, HamiltonianModel, SlowField};
use slowdrift::SlowPoint;

pub fn unit_box() -> Domain {
    Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
}

/// `E(z) = 1 + (u^2 + v^2)/2`.
pub fn bowl_energy() -> SlowField {
    SlowField::quadratic(1.0, vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

/// `omega = 1`, `E = 1 + (u^2 + v^2)/2` on the unit box.
pub fn oscillator() -> HamiltonianModel {
    builtin_oscillator(SlowField::constant(1, 1.0), bowl_energy(), &unit_box()).unwrap()
}

/// `omega = 1 + a u + b v`, `E = 1 + (u^2 + v^2)/2`.
pub fn tilted_oscillator(a: f64, b: f64) -> HamiltonianModel {
    let omega = SlowField::from_fns(
        1,
        format!("1 + {a} u + {b} v"),
        move |z: &SlowPoint| 1.0 + a * z.u[0] + b * z.v[0],
        move |_z: &SlowPoint| SlowPoint::planar(b, a),
    );
    builtin_oscillator(omega, bowl_energy(), &unit_box()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
