//! Slow-fast Hamiltonian systems.
//!
//! A model is a smooth function `H(p, q, v, u; eps)` of `m` fast and `d` slow
//! degrees of freedom. With the slow-fast symplectic form
//! `dp^dq + (1/eps) dv^du` the equations of motion are
//!
//! ```text
//! q' = dH/dp,   p' = -dH/dq,   u' = eps dH/dv,   v' = -eps dH/du
//! ```
//!
//! and at `eps = 0` the slow variables are frozen. Perturbative models
//! `H0(p, q) + eps H1(p, q, v, u)` use the standard symplectic form instead;
//! see [`SlowScaling`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub fast_dof: usize,
    pub slow_dof: usize,
}

impl Dims {
    pub fn new(fast_dof: usize, slow_dof: usize) -> Result<Self> {
        if fast_dof == 0 || slow_dof == 0 {
            return Err(Error::Dimension(format!(
                "need at least one fast and one slow degree of freedom, got m={fast_dof}, d={slow_dof}"
            )));
        }
        Ok(Dims { fast_dof, slow_dof })
    }

    /// Length of a flattened full state `[p, q, v, u]`.
    pub fn state_len(&self) -> usize {
        2 * (self.fast_dof + self.slow_dof)
    }
}

/// Fast momenta and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FastPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl FastPoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have equal length");
        FastPoint { p, q }
    }

    pub fn zeros(m: usize) -> Self {
        FastPoint { p: vec![0.0; m], q: vec![0.0; m] }
    }

    pub fn dof(&self) -> usize {
        self.p.len()
    }

    /// Reads `[p.., q..]`.
    pub fn from_flat(x: &[f64]) -> Self {
        let m = x.len() / 2;
        FastPoint { p: x[..m].to_vec(), q: x[m..2 * m].to_vec() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dof());
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.q);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }
}

/// Slow momenta `v` and coordinates `u`. Flattened as `[v.., u..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowPoint {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl SlowPoint {
    pub fn new(v: Vec<f64>, u: Vec<f64>) -> Self {
        assert_eq!(v.len(), u.len(), "v and u must have equal length");
        SlowPoint { v, u }
    }

    /// Shorthand for one slow degree of freedom.
    pub fn planar(v: f64, u: f64) -> Self {
        SlowPoint { v: vec![v], u: vec![u] }
    }

    pub fn zeros(d: usize) -> Self {
        SlowPoint { v: vec![0.0; d], u: vec![0.0; d] }
    }

    pub fn dof(&self) -> usize {
        self.v.len()
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let d = x.len() / 2;
        SlowPoint { v: x[..d].to_vec(), u: x[d..2 * d].to_vec() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dof());
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.u);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.u).all(|x| x.is_finite())
    }

    /// Euclidean distance in `R^{2d}`.
    pub fn distance(&self, other: &SlowPoint) -> f64 {
        self.v.iter().zip(&other.v).chain(self.u.iter().zip(&other.u)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.v.iter().chain(&self.u).map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl fmt::Display for SlowPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(v={:?}, u={:?})", self.v, self.u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub w: FastPoint,
    pub z: SlowPoint,
}

impl FullState {
    pub fn new(w: FastPoint, z: SlowPoint) -> Self {
        FullState { w, z }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w.dof(), self.z.dof())
    }

    pub fn from_flat(x: &[f64], dims: Dims) -> Self {
        let m2 = 2 * dims.fast_dof;
        FullState { w: FastPoint::from_flat(&x[..m2]), z: SlowPoint::from_flat(&x[m2..]) }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.w.to_flat();
        out.extend(self.z.to_flat());
        out
    }
}

/// `H` and its four partial derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub h: f64,
    pub dhdp: Vec<f64>,
    pub dhdq: Vec<f64>,
    pub dhdv: Vec<f64>,
    pub dhdu: Vec<f64>,
}

impl Evaluation {
    fn is_finite(&self) -> bool {
        self.h.is_finite()
            && self.dhdp.iter().chain(&self.dhdq).chain(&self.dhdv).chain(&self.dhdu).all(|x| x.is_finite())
    }
}

/// Which symplectic form turns gradients into slow velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowScaling {
    /// `dp^dq + (1/eps) dv^du`: slow velocities are `eps` times the gradient.
    SlowFast,
    /// `dp^dq + dv^du`: slow velocities are the gradient itself. Used by
    /// perturbative models whose slow dependence already carries `eps`.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSource {
    Analytic,
    FiniteDifference,
}

impl fmt::Display for GradientSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientSource::Analytic => f.write_str("analytic"),
            GradientSource::FiniteDifference => f.write_str("finite_difference"),
        }
    }
}

/// A smooth Hamiltonian of fast and slow variables.
///
/// Implementations must be deterministic. `gradient` should be analytic;
/// [`finite_difference_gradient`] is available for models that cannot
/// provide one.
pub trait Hamiltonian: Send + Sync {
    fn dims(&self) -> Dims;
    fn name(&self) -> &str;
    fn value(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> f64;
    fn gradient(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Evaluation;

    fn slow_scaling(&self) -> SlowScaling {
        SlowScaling::SlowFast
    }

    fn gradient_source(&self) -> GradientSource {
        GradientSource::Analytic
    }

    /// Hessian of `H(., z; 0)` with respect to the fast point, ordered
    /// `[p.., q..]`. `None` falls back to differencing the gradient.
    fn fast_hessian(&self, _w: &FastPoint, _z: &SlowPoint) -> Option<DMatrix<f64>> {
        None
    }

    /// The `H1` term of a perturbative model, if this is one.
    fn perturbation(&self, _w: &FastPoint, _z: &SlowPoint) -> Option<f64> {
        None
    }
}

/// Central differences with step `1e-6 (1 + |x|)`.
pub fn finite_difference_gradient(
    h: &dyn Fn(&FastPoint, &SlowPoint) -> f64,
    w: &FastPoint,
    z: &SlowPoint,
) -> Evaluation {
    let mut flat = w.to_flat();
    flat.extend(z.to_flat());
    let m = w.dof();
    let d = z.dof();
    let eval = |x: &[f64]| {
        let w = FastPoint::from_flat(&x[..2 * m]);
        let z = SlowPoint::from_flat(&x[2 * m..]);
        h(&w, &z)
    };
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let step = 1e-6 * (1.0 + flat[i].abs());
        let x0 = flat[i];
        flat[i] = x0 + step;
        let fp = eval(&flat);
        flat[i] = x0 - step;
        let fm = eval(&flat);
        flat[i] = x0;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    Evaluation {
        h: h(w, z),
        dhdp: grad[..m].to_vec(),
        dhdq: grad[m..2 * m].to_vec(),
        dhdv: grad[2 * m..2 * m + d].to_vec(),
        dhdu: grad[2 * m + d..].to_vec(),
    }
}

/// Immutable handle on a Hamiltonian; cheap to clone and share across threads.
#[derive(Clone)]
pub struct HamiltonianModel {
    inner: Arc<dyn Hamiltonian>,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name())
            .field("dims", &self.dims())
            .field("gradients", &self.gradient_source())
            .finish()
    }
}

impl HamiltonianModel {
    pub fn new(h: impl Hamiltonian + 'static) -> Self {
        HamiltonianModel { inner: Arc::new(h) }
    }

    pub fn dims(&self) -> Dims {
        self.inner.dims()
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn slow_scaling(&self) -> SlowScaling {
        self.inner.slow_scaling()
    }

    pub fn gradient_source(&self) -> GradientSource {
        self.inner.gradient_source()
    }

    pub fn inner(&self) -> &dyn Hamiltonian {
        self.inner.as_ref()
    }

    fn check_dims(&self, w: &FastPoint, z: &SlowPoint) -> Result<()> {
        let dims = self.dims();
        if w.p.len() != dims.fast_dof
            || w.q.len() != dims.fast_dof
            || z.v.len() != dims.slow_dof
            || z.u.len() != dims.slow_dof
        {
            return Err(Error::Dimension(format!(
                "model {} expects m={}, d={}; got m={}, d={}",
                self.name(),
                dims.fast_dof,
                dims.slow_dof,
                w.dof(),
                z.dof()
            )));
        }
        Ok(())
    }

    pub fn value(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Result<f64> {
        self.check_dims(w, z)?;
        let h = self.inner.value(w, z, eps);
        if !h.is_finite() {
            return Err(Error::Evaluation(format!("H = {h} in model {}", self.name())));
        }
        Ok(h)
    }

    /// `H` and all four partials at `(w, z; eps)`.
    pub fn evaluate(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Result<Evaluation> {
        self.check_dims(w, z)?;
        let e = self.inner.gradient(w, z, eps);
        if !e.is_finite() {
            return Err(Error::Evaluation(format!("gradient of model {} at w={w:?}, z={z}", self.name())));
        }
        Ok(e)
    }

    /// Time derivative of the full state.
    pub fn full_vector_field(&self, state: &FullState, eps: f64) -> Result<FullState> {
        let e = self.evaluate(&state.w, &state.z, eps)?;
        let scale = match self.slow_scaling() {
            SlowScaling::SlowFast => eps,
            SlowScaling::Standard => 1.0,
        };
        Ok(FullState {
            w: FastPoint { p: e.dhdq.iter().map(|x| -x).collect(), q: e.dhdp },
            z: SlowPoint {
                v: e.dhdu.iter().map(|x| -scale * x).collect(),
                u: e.dhdv.iter().map(|x| scale * x).collect(),
            },
        })
    }

    /// Fast part of the vector field at `eps = 0`; `z` is a parameter.
    pub fn frozen_vector_field(&self, w: &FastPoint, z: &SlowPoint) -> Result<FastPoint> {
        let e = self.evaluate(w, z, 0.0)?;
        Ok(FastPoint { p: e.dhdq.iter().map(|x| -x).collect(), q: e.dhdp })
    }

    /// Hessian of the frozen Hamiltonian in `[p.., q..]` ordering.
    pub fn fast_hessian(&self, w: &FastPoint, z: &SlowPoint) -> Result<DMatrix<f64>> {
        self.check_dims(w, z)?;
        if let Some(h) = self.inner.fast_hessian(w, z) {
            return Ok(h);
        }
        let m = w.dof();
        let mut x = w.to_flat();
        let mut hess = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..2 * m {
            let x0 = x[j];
            let step = 1e-5 * (1.0 + x0.abs());
            x[j] = x0 + step;
            let gp = self.evaluate(&FastPoint::from_flat(&x), z, 0.0)?;
            x[j] = x0 - step;
            let gm = self.evaluate(&FastPoint::from_flat(&x), z, 0.0)?;
            x[j] = x0;
            for i in 0..m {
                hess[(i, j)] = (gp.dhdp[i] - gm.dhdp[i]) / (2.0 * step);
                hess[(m + i, j)] = (gp.dhdq[i] - gm.dhdq[i]) / (2.0 * step);
            }
        }
        Ok(hess)
    }

    /// Jacobian of the frozen vector field `(p', q') = (-H_q, H_p)`.
    pub fn frozen_jacobian(&self, w: &FastPoint, z: &SlowPoint) -> Result<DMatrix<f64>> {
        let hess = self.fast_hessian(w, z)?;
        let m = w.dof();
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..2 * m {
            for i in 0..m {
                jac[(i, j)] = -hess[(m + i, j)];
                jac[(m + i, j)] = hess[(i, j)];
            }
        }
        Ok(jac)
    }

    pub fn perturbation(&self, w: &FastPoint, z: &SlowPoint) -> Option<f64> {
        self.inner.perturbation(w, z)
    }
}

/// A scalar function of the slow variables with its gradient.
#[derive(Clone)]
pub struct SlowField {
    slow_dof: usize,
    value: Arc<dyn Fn(&SlowPoint) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&SlowPoint) -> SlowPoint + Send + Sync>,
    description: String,
}

impl fmt::Debug for SlowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SlowField({})", self.description)
    }
}

impl SlowField {
    pub fn from_fns(
        slow_dof: usize,
        description: impl Into<String>,
        value: impl Fn(&SlowPoint) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&SlowPoint) -> SlowPoint + Send + Sync + 'static,
    ) -> Self {
        SlowField { slow_dof, value: Arc::new(value), gradient: Arc::new(gradient), description: description.into() }
    }

    pub fn constant(slow_dof: usize, c: f64) -> Self {
        Self::from_fns(slow_dof, format!("{c}"), move |_| c, move |_| SlowPoint::zeros(slow_dof))
    }

    /// `c + b.z + z.A.z / 2` over flattened coordinates `z = [v.., u..]`.
    /// `hessian` is symmetrized.
    pub fn quadratic(constant: f64, linear: Vec<f64>, hessian: Vec<Vec<f64>>) -> Result<Self> {
        let n = linear.len();
        if n == 0 || n % 2 != 0 || hessian.len() != n || hessian.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!(
                "quadratic field needs an even-length linear part and a matching square hessian (got {n})"
            )));
        }
        let mut a = hessian;
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (a[i][j] + a[j][i]);
                a[i][j] = s;
                a[j][i] = s;
            }
        }
        let a = Arc::new(a);
        let b = Arc::new(linear);
        let (a2, b2) = (a.clone(), b.clone());
        let description = format!("{constant} + {b:?}.z + z.{a:?}.z/2");
        Ok(Self::from_fns(
            n / 2,
            description,
            move |z| {
                let x = z.to_flat();
                let mut s = constant;
                for i in 0..x.len() {
                    s += b[i] * x[i];
                    for j in 0..x.len() {
                        s += 0.5 * a[i][j] * x[i] * x[j];
                    }
                }
                s
            },
            move |z| {
                let x = z.to_flat();
                let g: Vec<f64> =
                    (0..x.len()).map(|i| b2[i] + (0..x.len()).map(|j| a2[i][j] * x[j]).sum::<f64>()).collect();
                SlowPoint::from_flat(&g)
            },
        ))
    }

    pub fn slow_dof(&self) -> usize {
        self.slow_dof
    }

    pub fn value(&self, z: &SlowPoint) -> f64 {
        (self.value)(z)
    }

    pub fn gradient(&self, z: &SlowPoint) -> SlowPoint {
        (self.gradient)(z)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Bounded open region of the slow space, in flattened coordinates `[v.., u..]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() % 2 != 0 {
            return Err(Error::Dimension("box corners must have equal even length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Parameter(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(Domain::Box { lo, hi })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.len() % 2 != 0 {
            return Err(Error::Dimension("ball center must have even length".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Parameter(format!("ball radius {radius}")));
        }
        Ok(Domain::Ball { center, radius })
    }

    /// Dimension of the slow space, `2d`.
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn slow_dof(&self) -> usize {
        self.dim() / 2
    }

    /// Positive inside, zero on the boundary, negative outside.
    pub fn signed_distance_flat(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).map(|(xi, (a, b))| (xi - a).min(b - xi)).fold(f64::INFINITY, f64::min)
            }
            Domain::Ball { center, radius } => {
                radius - x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn signed_distance(&self, z: &SlowPoint) -> f64 {
        self.signed_distance_flat(&z.to_flat())
    }

    /// Distance to the boundary for interior points, 0 otherwise.
    pub fn boundary_distance(&self, z: &SlowPoint) -> f64 {
        self.signed_distance(z).max(0.0)
    }

    pub fn contains(&self, z: &SlowPoint) -> bool {
        self.signed_distance(z) > 0.0
    }

    pub fn contains_flat(&self, x: &[f64]) -> bool {
        self.signed_distance_flat(x) > 0.0
    }

    pub fn inradius(&self) -> f64 {
        match self {
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }

    /// Tensor grid of `n` points per axis over the bounding box, kept if inside.
    pub fn sample_points(&self, n: usize) -> Vec<SlowPoint> {
        let (lo, hi) = self.bounding_box();
        let dim = lo.len();
        let total = n.pow(dim as u32);
        let mut out = Vec::new();
        for flat in 0..total {
            let mut k = flat;
            let mut x = vec![0.0; dim];
            for a in 0..dim {
                let i = k % n;
                k /= n;
                // interior offsets keep box samples off the boundary
                let t = (i as f64 + 0.5) / n as f64;
                x[a] = lo[a] + t * (hi[a] - lo[a]);
            }
            if self.contains_flat(&x) {
                out.push(SlowPoint::from_flat(&x));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Generic closure-backed model

type ValueFn = dyn Fn(&FastPoint, &SlowPoint, f64) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&FastPoint, &SlowPoint, f64) -> Evaluation + Send + Sync;

/// A model assembled from closures. Without an analytic gradient the
/// finite-difference fallback is used and reported by
/// [`HamiltonianModel::gradient_source`].
pub struct ClosureHamiltonian {
    name: String,
    dims: Dims,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
    scaling: SlowScaling,
}

impl ClosureHamiltonian {
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        value: impl Fn(&FastPoint, &SlowPoint, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ClosureHamiltonian {
            name: name.into(),
            dims,
            value: Arc::new(value),
            gradient: None,
            scaling: SlowScaling::SlowFast,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&FastPoint, &SlowPoint, f64) -> Evaluation + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_scaling(mut self, scaling: SlowScaling) -> Self {
        self.scaling = scaling;
        self
    }
}

impl Hamiltonian for ClosureHamiltonian {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> f64 {
        (self.value)(w, z, eps)
    }

    fn gradient(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Evaluation {
        match &self.gradient {
            Some(g) => g(w, z, eps),
            None => finite_difference_gradient(&|w, z| (self.value)(w, z, eps), w, z),
        }
    }

    fn slow_scaling(&self) -> SlowScaling {
        self.scaling
    }

    fn gradient_source(&self) -> GradientSource {
        if self.gradient.is_some() {
            GradientSource::Analytic
        } else {
            GradientSource::FiniteDifference
        }
    }
}

// ---------------------------------------------------------------------------
// Builtin models

/// `H = (p^2 + omega(z)^2 q^2)/2 - E(z)`, one fast degree of freedom.
///
/// The frozen orbit on the zero level is the ellipse `p^2 + omega^2 q^2 = 2E`
/// with period `2 pi/omega` and action `2 pi E/omega`.
pub struct Oscillator {
    omega: SlowField,
    energy: SlowField,
    dims: Dims,
}

impl Oscillator {
    pub fn closed_form_action(&self, z: &SlowPoint) -> f64 {
        2.0 * PI * self.energy.value(z) / self.omega.value(z)
    }

    pub fn closed_form_period(&self, z: &SlowPoint) -> f64 {
        2.0 * PI / self.omega.value(z)
    }

    pub fn omega(&self) -> &SlowField {
        &self.omega
    }

    pub fn energy(&self) -> &SlowField {
        &self.energy
    }
}

impl Hamiltonian for Oscillator {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn name(&self) -> &str {
        "oscillator"
    }

    fn value(&self, w: &FastPoint, z: &SlowPoint, _eps: f64) -> f64 {
        let om = self.omega.value(z);
        0.5 * (w.p[0] * w.p[0] + om * om * w.q[0] * w.q[0]) - self.energy.value(z)
    }

    fn gradient(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Evaluation {
        let om = self.omega.value(z);
        let dom = self.omega.gradient(z);
        let de = self.energy.gradient(z);
        let q2 = w.q[0] * w.q[0];
        Evaluation {
            h: self.value(w, z, eps),
            dhdp: vec![w.p[0]],
            dhdq: vec![om * om * w.q[0]],
            dhdv: dom.v.iter().zip(&de.v).map(|(a, e)| om * a * q2 - e).collect(),
            dhdu: dom.u.iter().zip(&de.u).map(|(a, e)| om * a * q2 - e).collect(),
        }
    }

    fn fast_hessian(&self, _w: &FastPoint, z: &SlowPoint) -> Option<DMatrix<f64>> {
        let om = self.omega.value(z);
        Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, om * om]))
    }
}

/// Builds the harmonic oscillator model. `omega` must be positive on `domain`
/// (checked on a sample grid).
pub fn builtin_oscillator(omega: SlowField, energy: SlowField, domain: &Domain) -> Result<HamiltonianModel> {
    let d = omega.slow_dof();
    if energy.slow_dof() != d || domain.slow_dof() != d {
        return Err(Error::Dimension("omega, energy and domain disagree on d".into()));
    }
    for z in domain.sample_points(9).iter() {
        let om = omega.value(z);
        if !(om > 0.0) {
            return Err(Error::Model(format!("omega = {om} is not positive at {z}")));
        }
    }
    Ok(HamiltonianModel::new(Oscillator { omega, energy, dims: Dims::new(1, d)? }))
}

/// `H = lambda p1 q1 + omega (p2^2 + q2^2)/2 - E(z)` with
/// `E(z) = energy (1 + (u^2 + v^2)/2)`; one slow degree of freedom.
///
/// The zero-level periodic orbit sits at `p1 = q1 = 0` with period
/// `2 pi/omega`; its saddle-plane Floquet multipliers are `exp(+-lambda T)`.
pub struct SaddleOscillator {
    pub lambda: f64,
    pub omega: f64,
    pub energy: f64,
}

impl SaddleOscillator {
    fn e(&self, z: &SlowPoint) -> f64 {
        self.energy * (1.0 + 0.5 * (z.u[0] * z.u[0] + z.v[0] * z.v[0]))
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn closed_form_action(&self, z: &SlowPoint) -> f64 {
        2.0 * PI * self.e(z) / self.omega
    }
}

impl Hamiltonian for SaddleOscillator {
    fn dims(&self) -> Dims {
        Dims { fast_dof: 2, slow_dof: 1 }
    }

    fn name(&self) -> &str {
        "saddle_oscillator"
    }

    fn value(&self, w: &FastPoint, z: &SlowPoint, _eps: f64) -> f64 {
        self.lambda * w.p[0] * w.q[0] + 0.5 * self.omega * (w.p[1] * w.p[1] + w.q[1] * w.q[1]) - self.e(z)
    }

    fn gradient(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Evaluation {
        Evaluation {
            h: self.value(w, z, eps),
            dhdp: vec![self.lambda * w.q[0], self.omega * w.p[1]],
            dhdq: vec![self.lambda * w.p[0], self.omega * w.q[1]],
            dhdv: vec![-self.energy * z.v[0]],
            dhdu: vec![-self.energy * z.u[0]],
        }
    }

    fn fast_hessian(&self, _w: &FastPoint, _z: &SlowPoint) -> Option<DMatrix<f64>> {
        // ordering [p1, p2, q1, q2]
        let (l, o) = (self.lambda, self.omega);
        Some(DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, l, 0.0, //
                0.0, o, 0.0, 0.0, //
                l, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, o,
            ],
        ))
    }
}

pub fn builtin_saddle_oscillator(lambda: f64, omega: f64, energy: f64) -> Result<HamiltonianModel> {
    if !(lambda > 0.0 && omega > 0.0 && energy > 0.0) {
        return Err(Error::Model(format!(
            "saddle oscillator needs positive parameters, got lambda={lambda}, omega={omega}, energy={energy}"
        )));
    }
    Ok(HamiltonianModel::new(SaddleOscillator { lambda, omega, energy }))
}

/// `H0(p, q) + eps H1(p, q, v, u)` with the standard symplectic form.
pub struct Perturbative {
    h0: HamiltonianModel,
    h1: HamiltonianModel,
    name: String,
}

impl Hamiltonian for Perturbative {
    fn dims(&self) -> Dims {
        self.h1.dims()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> f64 {
        self.h0.inner().value(w, z, 0.0) + eps * self.h1.inner().value(w, z, 0.0)
    }

    fn gradient(&self, w: &FastPoint, z: &SlowPoint, eps: f64) -> Evaluation {
        let g0 = self.h0.inner().gradient(w, z, 0.0);
        let g1 = self.h1.inner().gradient(w, z, 0.0);
        let comb = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + eps * y).collect();
        Evaluation {
            h: g0.h + eps * g1.h,
            dhdp: comb(&g0.dhdp, &g1.dhdp),
            dhdq: comb(&g0.dhdq, &g1.dhdq),
            dhdv: g1.dhdv.iter().map(|x| eps * x).collect(),
            dhdu: g1.dhdu.iter().map(|x| eps * x).collect(),
        }
    }

    fn slow_scaling(&self) -> SlowScaling {
        SlowScaling::Standard
    }

    fn gradient_source(&self) -> GradientSource {
        match (self.h0.gradient_source(), self.h1.gradient_source()) {
            (GradientSource::Analytic, GradientSource::Analytic) => GradientSource::Analytic,
            _ => GradientSource::FiniteDifference,
        }
    }

    fn fast_hessian(&self, w: &FastPoint, z: &SlowPoint) -> Option<DMatrix<f64>> {
        self.h0.inner().fast_hessian(w, z)
    }

    fn perturbation(&self, w: &FastPoint, z: &SlowPoint) -> Option<f64> {
        Some(self.h1.inner().value(w, z, 0.0))
    }
}

/// Combines a fast-only `h0` and a full `h1` into `h0 + eps h1`.
///
/// Both must share dimensions; `h0` is probed at a few slow points and
/// rejected if its slow partials do not vanish.
pub fn make_perturbative(h0: HamiltonianModel, h1: HamiltonianModel) -> Result<HamiltonianModel> {
    let (d0, d1) = (h0.dims(), h1.dims());
    if d0 != d1 {
        return Err(Error::Dimension(format!("h0 has {d0:?} but h1 has {d1:?}")));
    }
    let w = FastPoint::new(vec![0.3; d0.fast_dof], vec![-0.7; d0.fast_dof]);
    for s in [0.0, 0.5, -1.3] {
        let z = SlowPoint::new(vec![s; d0.slow_dof], vec![0.5 * s + 0.1; d0.slow_dof]);
        let g = h0.evaluate(&w, &z, 0.0)?;
        if g.dhdv.iter().chain(&g.dhdu).any(|x| x.abs() > 1e-12) {
            return Err(Error::Model("h0 must depend on the fast variables only".into()));
        }
    }
    let name = format!("perturbative({} + eps {})", h0.name(), h1.name());
    Ok(HamiltonianModel::new(Perturbative { h0, h1, name }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_oscillator() -> HamiltonianModel {
        let energy = SlowField::quadratic(1.0, vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let domain = Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        builtin_oscillator(SlowField::constant(1, 1.0), energy, &domain).unwrap()
    }

    fn w(p: f64, q: f64) -> FastPoint {
        FastPoint::new(vec![p], vec![q])
    }

    #[test]
    fn oscillator_evaluation_by_substitution() {
        let m = unit_oscillator();
        let e = m.evaluate(&w(1.0, 1.0), &SlowPoint::planar(0.0, 0.0), 0.0).unwrap();
        assert_eq!(e.h, 0.0);
        assert_eq!((e.dhdp[0], e.dhdq[0], e.dhdv[0], e.dhdu[0]), (1.0, 1.0, 0.0, 0.0));
        let e = m.evaluate(&w(0.0, 0.0), &SlowPoint::planar(0.0, 0.0), 0.0).unwrap();
        assert_eq!(e.h, -1.0);
        let e = m.evaluate(&w(1.0, 1.0), &SlowPoint::planar(0.0, 1.0), 0.0).unwrap();
        assert_eq!(e.dhdu[0], -1.0);
    }

    #[test]
    fn full_field_signs() {
        let m = unit_oscillator();
        let s = FullState::new(w(1.0, 1.0), SlowPoint::planar(0.0, 0.0));
        for eps in [0.0, 0.1, 3.0] {
            let f = m.full_vector_field(&s, eps).unwrap();
            assert_eq!((f.w.q[0], f.w.p[0], f.z.u[0], f.z.v[0]), (1.0, -1.0, 0.0, 0.0));
        }
        let s = FullState::new(w(1.0, 1.0), SlowPoint::planar(0.0, 1.0));
        let f = m.full_vector_field(&s, 0.1).unwrap();
        assert_eq!(f.z.u[0], 0.0);
        assert!((f.z.v[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn frozen_field_on_circle() {
        let m = unit_oscillator();
        let f = m.frozen_vector_field(&w(0.0, 1.0), &SlowPoint::planar(0.0, 0.0)).unwrap();
        assert_eq!((f.q[0], f.p[0]), (0.0, -1.0));
    }

    #[test]
    fn non_finite_output_is_an_evaluation_error() {
        let bad = ClosureHamiltonian::new("bad", Dims::new(1, 1).unwrap(), |w, _, _| 1.0 / w.q[0] - f64::INFINITY);
        let m = HamiltonianModel::new(bad);
        let r = m.evaluate(&w(0.0, 1.0), &SlowPoint::planar(0.0, 0.0), 0.0);
        assert!(matches!(r, Err(Error::Evaluation(_))));
        assert_eq!(m.gradient_source(), GradientSource::FiniteDifference);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = unit_oscillator();
        let r = m.evaluate(&FastPoint::zeros(2), &SlowPoint::planar(0.0, 0.0), 0.0);
        assert!(matches!(r, Err(Error::Dimension(_))));
        assert!(Dims::new(0, 1).is_err());
    }

    #[test]
    fn nonpositive_omega_rejected() {
        let domain = Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = builtin_oscillator(SlowField::constant(1, 0.0), SlowField::constant(1, 1.0), &domain);
        assert!(matches!(r, Err(Error::Model(_))));
        // omega = 0.5 + u is negative near u = -1
        let omega = SlowField::quadratic(0.5, vec![0.0, 1.0], vec![vec![0.0; 2]; 2]).unwrap();
        assert!(builtin_oscillator(omega, SlowField::constant(1, 1.0), &domain).is_err());
    }

    #[test]
    fn saddle_parameters_validated() {
        assert!(builtin_saddle_oscillator(0.0, 1.0, 1.0).is_err());
        assert!(builtin_saddle_oscillator(0.5, -1.0, 1.0).is_err());
        assert!(builtin_saddle_oscillator(0.5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn perturbative_slow_force() {
        let dims = Dims::new(1, 1).unwrap();
        let h0 = ClosureHamiltonian::new("h0", dims, |w, _, _| 0.5 * (w.p[0].powi(2) + w.q[0].powi(2)) - 1.0)
            .with_gradient(|w, _, _| Evaluation {
                h: 0.5 * (w.p[0].powi(2) + w.q[0].powi(2)) - 1.0,
                dhdp: vec![w.p[0]],
                dhdq: vec![w.q[0]],
                dhdv: vec![0.0],
                dhdu: vec![0.0],
            });
        let h1 = ClosureHamiltonian::new("h1", dims, |w, z, _| z.u[0] * w.q[0].powi(2)).with_gradient(|w, z, _| {
            Evaluation {
                h: z.u[0] * w.q[0].powi(2),
                dhdp: vec![0.0],
                dhdq: vec![2.0 * z.u[0] * w.q[0]],
                dhdv: vec![0.0],
                dhdu: vec![w.q[0].powi(2)],
            }
        });
        let m = make_perturbative(HamiltonianModel::new(h0), HamiltonianModel::new(h1)).unwrap();
        let s = FullState::new(w(0.4, 1.5), SlowPoint::planar(0.2, 0.7));
        let f = m.full_vector_field(&s, 0.01).unwrap();
        assert!((f.z.v[0] + 0.01 * 2.25).abs() < 1e-15);
        let f0 = m.frozen_vector_field(&s.w, &s.z).unwrap();
        assert_eq!((f0.q[0], f0.p[0]), (0.4, -1.5));
    }

    #[test]
    fn perturbative_rejects_slow_dependent_h0() {
        let dims = Dims::new(1, 1).unwrap();
        let h0 = HamiltonianModel::new(ClosureHamiltonian::new("h0", dims, |w, z, _| w.p[0] * z.u[0]));
        let h1 = HamiltonianModel::new(ClosureHamiltonian::new("h1", dims, |_, _, _| 0.0));
        assert!(matches!(make_perturbative(h0, h1), Err(Error::Model(_))));
    }

    #[test]
    fn domain_queries() {
        let b = Domain::new_box(vec![-1.0, -2.0], vec![1.0, 2.0]).unwrap();
        assert!(b.contains(&SlowPoint::planar(0.0, 0.0)));
        assert!(!b.contains(&SlowPoint::planar(1.0, 0.0)));
        assert_eq!(b.boundary_distance(&SlowPoint::planar(0.5, 0.0)), 0.5);
        assert_eq!(b.boundary_distance(&SlowPoint::planar(3.0, 0.0)), 0.0);
        assert_eq!(b.inradius(), 1.0);
        let c = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!((c.boundary_distance(&SlowPoint::planar(0.6, 0.0)) - 0.4).abs() < 1e-15);
        assert!(!c.contains(&SlowPoint::planar(0.0, 1.0)));
        assert!(Domain::new_box(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
    }
}
