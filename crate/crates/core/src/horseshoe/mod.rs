//! Symbolic dynamics near a heteroclinic cycle between two saddle orbits.
//!
//! Poincaré maps between the sections `Σ_a` and `Σ_b` are given in cross form:
//! a point `(x, y, z)` of `Σ_c` goes to `(x̄, ȳ, z̄)` of `Σ_c'` iff
//!
//! ```text
//! x̄ = f_cc'(x, ȳ, z, eps),   y = g_cc'(x, ȳ, z, eps),   z̄ = z + eps φ_cc'(x, y, z, eps)
//! ```
//!
//! With `∂(f, g)/∂(x, ȳ)` bounded by `λ < 1` in the max norm, every bi-infinite
//! code over `{a, b}` has exactly one orbit, found as the fixed point of a
//! contraction on sequences.

mod affine;
mod code;
mod orbit;
mod surface;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Domain, SlowPoint};

pub use affine::{affine_horseshoe, circle_generators, AffineHorseshoe, AffineHorseshoeParams};
pub use code::{parse_word, Code, Symbol};
pub use orbit::{mix_check, orbit_for_code, MixEntry, MixReport, OrbitSolverConfig, SymbolicOrbit};
pub use surface::{invariant_surfaces, SurfaceConfig, SurfaceFamily};

/// An ordered pair of symbols `(c, c')` labelling the map `Σ_c -> Σ_c'`.
pub type Pair = (Symbol, Symbol);

/// The cross-form functions of a family of Poincaré maps.
///
/// `x` and `y` live in `R^k` with `k = m - 1`; `z` is a slow point.
pub trait CrossFormMaps: Send + Sync {
    fn name(&self) -> &str;
    /// `k`, the dimension of each of `x` and `y`.
    fn fast_dim(&self) -> usize;
    fn slow_dof(&self) -> usize;
    fn f(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64>;
    fn g(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64>;
    /// Slow increment per return, evaluated on the section point `(x, y, z)`.
    fn phi(&self, pair: Pair, x: &[f64], y: &[f64], z: &SlowPoint, eps: f64) -> SlowPoint;

    /// `∂(f, g)/∂(x, ȳ)` as a `2k × 2k` matrix; central differences by default.
    fn jacobian(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> DMatrix<f64> {
        let k = self.fast_dim();
        let mut jac = DMatrix::zeros(2 * k, 2 * k);
        let mut args: Vec<f64> = x.iter().chain(ybar).copied().collect();
        for j in 0..2 * k {
            let h = 1e-6 * (1.0 + args[j].abs());
            let orig = args[j];
            args[j] = orig + h;
            let plus =
                [self.f(pair, &args[..k], &args[k..], z, eps), self.g(pair, &args[..k], &args[k..], z, eps)].concat();
            args[j] = orig - h;
            let minus =
                [self.f(pair, &args[..k], &args[k..], z, eps), self.g(pair, &args[..k], &args[k..], z, eps)].concat();
            args[j] = orig;
            for i in 0..2 * k {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac
    }
}

type VecFn = dyn Fn(Pair, &[f64], &[f64], &SlowPoint, f64) -> Vec<f64> + Send + Sync;
type PhiFn = dyn Fn(Pair, &[f64], &[f64], &SlowPoint, f64) -> SlowPoint + Send + Sync;

/// Cross-form maps from closures.
#[derive(Clone)]
pub struct FnCrossForm {
    name: String,
    k: usize,
    d: usize,
    f: Arc<VecFn>,
    g: Arc<VecFn>,
    phi: Arc<PhiFn>,
}

impl FnCrossForm {
    pub fn new(
        name: impl Into<String>,
        k: usize,
        d: usize,
        f: impl Fn(Pair, &[f64], &[f64], &SlowPoint, f64) -> Vec<f64> + Send + Sync + 'static,
        g: impl Fn(Pair, &[f64], &[f64], &SlowPoint, f64) -> Vec<f64> + Send + Sync + 'static,
        phi: impl Fn(Pair, &[f64], &[f64], &SlowPoint, f64) -> SlowPoint + Send + Sync + 'static,
    ) -> Self {
        FnCrossForm { name: name.into(), k, d, f: Arc::new(f), g: Arc::new(g), phi: Arc::new(phi) }
    }
}

impl CrossFormMaps for FnCrossForm {
    fn name(&self) -> &str {
        &self.name
    }

    fn fast_dim(&self) -> usize {
        self.k
    }

    fn slow_dof(&self) -> usize {
        self.d
    }

    fn f(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64> {
        (self.f)(pair, x, ybar, z, eps)
    }

    fn g(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Vec<f64> {
        (self.g)(pair, x, ybar, z, eps)
    }

    fn phi(&self, pair: Pair, x: &[f64], y: &[f64], z: &SlowPoint, eps: f64) -> SlowPoint {
        (self.phi)(pair, x, y, z, eps)
    }
}

/// C¹ cutoff in the distance to the boundary: `0` up to `delta/2`, `1` from
/// `delta` on, a smoothstep in between.
pub fn cutoff(delta: f64, dist: f64) -> f64 {
    let s = ((dist - 0.5 * delta) / (0.5 * delta)).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Cross-form maps with their declared constants and slow domain.
#[derive(Clone)]
pub struct CrossFormSystem {
    pub maps: Arc<dyn CrossFormMaps>,
    /// Declared contraction constant `λ`.
    pub lambda: f64,
    /// Radius `R` of the balls `X_c`, `Y_c` (max norm).
    pub radius: f64,
    pub domain: Domain,
    /// Width of the boundary layer where `φ` is cut off, once mollified.
    pub mollifier: Option<f64>,
}

impl fmt::Debug for CrossFormSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CrossFormSystem")
            .field("maps", &self.maps.name())
            .field("lambda", &self.lambda)
            .field("radius", &self.radius)
            .field("domain", &self.domain)
            .field("mollifier", &self.mollifier)
            .finish()
    }
}

impl CrossFormSystem {
    pub fn new(maps: Arc<dyn CrossFormMaps>, lambda: f64, radius: f64, domain: Domain) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Parameter(format!("contraction constant must lie in (0, 1), got {lambda}")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Parameter(format!("ball radius must be positive, got {radius}")));
        }
        if maps.slow_dof() != domain.slow_dof() {
            return Err(Error::Dimension("maps and domain disagree on d".into()));
        }
        if maps.fast_dim() == 0 {
            return Err(Error::Dimension("cross-form maps need k >= 1".into()));
        }
        Ok(CrossFormSystem { maps, lambda, radius, domain, mollifier: None })
    }

    pub fn fast_dim(&self) -> usize {
        self.maps.fast_dim()
    }

    pub fn slow_dof(&self) -> usize {
        self.maps.slow_dof()
    }

    fn finite(v: &[f64], what: &str, pair: Pair) -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Evaluation(format!("{what} for pair {}{} is not finite", pair.0, pair.1)))
        }
    }

    pub fn f(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Result<Vec<f64>> {
        let v = self.maps.f(pair, x, ybar, z, eps);
        Self::finite(&v, "f", pair)?;
        Ok(v)
    }

    pub fn g(&self, pair: Pair, x: &[f64], ybar: &[f64], z: &SlowPoint, eps: f64) -> Result<Vec<f64>> {
        let v = self.maps.g(pair, x, ybar, z, eps);
        Self::finite(&v, "g", pair)?;
        Ok(v)
    }

    /// `φ`, multiplied by the boundary cutoff when mollified.
    pub fn phi(&self, pair: Pair, x: &[f64], y: &[f64], z: &SlowPoint, eps: f64) -> Result<SlowPoint> {
        let raw = self.maps.phi(pair, x, y, z, eps);
        Self::finite(&raw.to_flat(), "phi", pair)?;
        Ok(match self.mollifier {
            None => raw,
            Some(delta) => {
                let chi = cutoff(delta, self.domain.boundary_distance(z));
                if chi == 1.0 {
                    raw
                } else {
                    SlowPoint::from_flat(&raw.to_flat().iter().map(|p| chi * p).collect::<Vec<_>>())
                }
            }
        })
    }

    /// Sample points of `X_c × Y_c'` on an `n`-point grid per coordinate.
    fn ball_samples(&self, n: usize) -> Vec<Vec<f64>> {
        let k2 = 2 * self.fast_dim();
        let axis: Vec<f64> = if n <= 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| -self.radius + 2.0 * self.radius * i as f64 / (n - 1) as f64).collect()
        };
        let mut out = vec![vec![]];
        for _ in 0..k2 {
            out = out.iter().flat_map(|p| axis.iter().map(move |&a| [p.as_slice(), &[a]].concat())).collect();
        }
        out
    }
}

/// Every ordered pair of symbols.
pub const PAIRS: [Pair; 4] =
    [(Symbol::A, Symbol::A), (Symbol::A, Symbol::B), (Symbol::B, Symbol::A), (Symbol::B, Symbol::B)];

/// Outcome of [`check_contraction`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCheck {
    /// Largest sampled max-norm of `∂(f, g)/∂(x, ȳ)`.
    pub estimate: f64,
    pub declared: f64,
    pub pass: bool,
    /// Largest sampled `max(|f|, |g|)`; at most `R` when the balls map into themselves.
    pub image_radius: f64,
}

/// Relative slack allowed on the declared `λ` when judging sampled norms.
pub const CONTRACTION_SLACK: f64 = 1e-8;

/// Max-norm (largest absolute row sum) of a matrix.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Samples `∂(f, g)/∂(x, ȳ)` on an `n`-point grid per ball coordinate and on
/// domain points, at `eps`.
pub fn check_contraction(sys: &CrossFormSystem, samples: usize, eps: f64) -> Result<ContractionCheck> {
    let k = sys.fast_dim();
    let balls = sys.ball_samples(samples.max(1));
    let zs = sys.domain.sample_points(samples.max(2));
    let mut estimate: f64 = 0.0;
    let mut image: f64 = 0.0;
    for pair in PAIRS {
        for z in &zs {
            for p in &balls {
                let jac = sys.maps.jacobian(pair, &p[..k], &p[k..], z, eps);
                if jac.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Evaluation(format!("Jacobian for pair {}{} is not finite", pair.0, pair.1)));
                }
                estimate = estimate.max(max_norm(&jac));
                let fx = sys.f(pair, &p[..k], &p[k..], z, eps)?;
                let gy = sys.g(pair, &p[..k], &p[k..], z, eps)?;
                image = fx.iter().chain(&gy).fold(image, |m, v| m.max(v.abs()));
            }
        }
    }
    // finite-difference Jacobians carry relative noise near 1e-10
    let pass = estimate <= sys.lambda * (1.0 + CONTRACTION_SLACK);
    Ok(ContractionCheck { estimate, declared: sys.lambda, pass, image_radius: image })
}

/// Cuts `φ` off near the boundary of the domain: unchanged where the
/// boundary distance is at least `delta`, zero within `delta/2`.
pub fn mollify(sys: &CrossFormSystem, delta: f64) -> Result<CrossFormSystem> {
    let inradius = sys.domain.inradius();
    if !(delta > 0.0 && delta < inradius) {
        return Err(Error::Parameter(format!("mollifier width must lie in (0, {inradius}), got {delta}")));
    }
    Ok(CrossFormSystem { mollifier: Some(delta), ..sys.clone() })
}

/// `ε · max ‖∂φ/∂z‖` over sampled section points; the slow map
/// `z -> z + εφ` is treated as invertible when this is at most `1/2`.
pub fn slow_map_rate(sys: &CrossFormSystem, eps: f64, samples: usize) -> Result<f64> {
    let k = sys.fast_dim();
    let d2 = 2 * sys.slow_dof();
    let mut worst: f64 = 0.0;
    let zs = sys.domain.sample_points(samples.max(2));
    let balls = sys.ball_samples(3);
    for pair in PAIRS {
        for z in &zs {
            for p in &balls {
                let mut flat = z.to_flat();
                let mut jac = DMatrix::zeros(d2, d2);
                for j in 0..d2 {
                    let h = 1e-6 * (1.0 + flat[j].abs());
                    let orig = flat[j];
                    flat[j] = orig + h;
                    let plus = sys.phi(pair, &p[..k], &p[k..], &SlowPoint::from_flat(&flat), eps)?.to_flat();
                    flat[j] = orig - h;
                    let minus = sys.phi(pair, &p[..k], &p[k..], &SlowPoint::from_flat(&flat), eps)?.to_flat();
                    flat[j] = orig;
                    for i in 0..d2 {
                        jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
                    }
                }
                worst = worst.max(max_norm(&jac));
            }
        }
    }
    Ok(eps.abs() * worst)
}
