use std::sync::Arc;

use nalgebra::DMatrix;

use super::{CrossFormMaps, CrossFormSystem, Pair, Symbol};
use crate::error::{Error, Result};
use crate::model::{Domain, SlowField, SlowPoint};
use crate::slowdrive::{AnalyticGenerator, SlowGenerator};

/// Coefficients of the affine test horseshoe with `k = d = 1`.
///
/// Per-pair arrays are indexed `aa, ab, ba, bb`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineHorseshoeParams {
    pub fx: f64,
    pub fy: f64,
    pub gx: f64,
    pub gy: f64,
    pub f0: [f64; 4],
    pub g0: [f64; 4],
    /// Coefficients of `(v, u)` in `f`.
    pub fz: [f64; 2],
    /// Coefficients of `(v, u)` in `g`.
    pub gz: [f64; 2],
    pub feps: f64,
    pub geps: f64,
    /// Coupling of `φ` to the offset from the frozen pure-code orbit.
    pub kappa: f64,
    pub lambda: f64,
    pub radius: f64,
}

impl Default for AffineHorseshoeParams {
    fn default() -> Self {
        AffineHorseshoeParams {
            fx: 0.3,
            fy: 0.2,
            gx: 0.2,
            gy: 0.3,
            f0: [0.2, -0.1, 0.15, -0.25],
            g0: [-0.1, 0.2, -0.2, 0.1],
            fz: [0.05, 0.03],
            gz: [-0.04, 0.02],
            feps: 0.5,
            geps: -0.3,
            kappa: 0.1,
            lambda: 0.5,
            radius: 1.0,
        }
    }
}

fn pair_index(p: Pair) -> usize {
    2 * p.0.index() + p.1.index()
}

/// Affine cross-form maps whose slow increment follows the Hamiltonian field
/// of the generator of the target symbol:
///
/// ```text
/// φ_cc'(x, y, z) = (∂J_c'/∂u, -∂J_c'/∂v) + κ ((x - x*_c(z)) + (y - y*_c(z))) (1, 1)
/// ```
///
/// where `(x*_c, y*_c)` is the frozen orbit of `c^∞`. On pure-code surfaces
/// the second term is `O(eps)`.
#[derive(Clone)]
pub struct AffineHorseshoe {
    pub params: AffineHorseshoeParams,
    pub generators: [Arc<dyn SlowGenerator>; 2],
}

impl AffineHorseshoe {
    fn lin_z(c: [f64; 2], z: &SlowPoint) -> f64 {
        c[0] * z.v[0] + c[1] * z.u[0]
    }

    /// Frozen orbit of `c^∞` at `z`, in closed form.
    pub fn pure_fixed_point(&self, c: Symbol, z: &SlowPoint) -> (f64, f64) {
        let p = &self.params;
        let idx = pair_index((c, c));
        let b1 = p.f0[idx] + Self::lin_z(p.fz, z);
        let b2 = p.g0[idx] + Self::lin_z(p.gz, z);
        let (a11, a12, a21, a22) = (1.0 - p.fx, -p.fy, -p.gx, 1.0 - p.gy);
        let det = a11 * a22 - a12 * a21;
        ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det)
    }
}

impl CrossFormMaps for AffineHorseshoe {
    fn name(&self) -> &str {
        "affine_horseshoe"
    }

    fn fast_dim(&self) -> usize {
        1
    }

    fn slow_dof(&self) -> usize {
        1
    }

    fn f(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64> {
        let p = &self.params;
        vec![p.fx * x[0] + p.fy * ybar[0] + p.f0[pair_index(pair)] + Self::lin_z(p.fz, z) + p.feps * eps]
    }

    fn g(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64> {
        let p = &self.params;
        vec![p.gx * x[0] + p.gy * ybar[0] + p.g0[pair_index(pair)] + Self::lin_z(p.gz, z) + p.geps * eps]
    }

    fn phi(&self, pair: Pair, x: &[f64], y: &[f64], z: &SlowPoint, _eps: f64) -> SlowPoint {
        let grad = self.generators[pair.1.index()].gradient(z);
        let (xs, ys) = self.pure_fixed_point(pair.0, z);
        let shift = self.params.kappa * ((x[0] - xs) + (y[0] - ys));
        SlowPoint::planar(grad.u[0] + shift, -grad.v[0] + shift)
    }

    fn jacobian(&self, _pair: Pair, _x: &[f64], _ybar: &[f64], _z: &SlowPoint, _eps: f64) -> DMatrix<f64> {
        let p = &self.params;
        DMatrix::from_row_slice(2, 2, &[p.fx, p.fy, p.gx, p.gy])
    }
}

/// The affine test horseshoe over `domain` with generators `[J_a, J_b]`.
pub fn affine_horseshoe(
    params: AffineHorseshoeParams,
    generators: [Arc<dyn SlowGenerator>; 2],
    domain: Domain,
) -> Result<CrossFormSystem> {
    if domain.slow_dof() != 1 {
        return Err(Error::Dimension("the affine horseshoe has one slow degree of freedom".into()));
    }
    if generators.iter().any(|g| g.domain().slow_dof() != 1) {
        return Err(Error::Dimension("generators must have one slow degree of freedom".into()));
    }
    let (lambda, radius) = (params.lambda, params.radius);
    CrossFormSystem::new(Arc::new(AffineHorseshoe { params, generators }), lambda, radius, domain)
}

/// `J_a = u² + v²` and `J_b = (v - 1)² + u²`, both with unit period.
pub fn circle_generators(domain: &Domain) -> Result<[Arc<dyn SlowGenerator>; 2]> {
    let a = SlowField::quadratic(0.0, vec![0.0, 0.0], vec![vec![2.0, 0.0], vec![0.0, 2.0]])?;
    let b = SlowField::quadratic(1.0, vec![-2.0, 0.0], vec![vec![2.0, 0.0], vec![0.0, 2.0]])?;
    Ok([
        Arc::new(AnalyticGenerator::unit_period("J_a = u^2 + v^2", a, domain.clone())?),
        Arc::new(AnalyticGenerator::unit_period("J_b = (v - 1)^2 + u^2", b, domain.clone())?),
    ])
}
