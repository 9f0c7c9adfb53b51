//! Frozen periodic orbits, Floquet multipliers and actions.
//!
//! Orbits are found by Gauss-Newton shooting on the unknowns `(w0, T)` with
//! the residual `[phi_T(w0) - w0, H(w0), phase(w0)]`. The zero-energy
//! constraint is part of the Newton system rather than a projection, so every
//! accepted orbit lies on `H = 0` to solver tolerance.

mod field;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::frozen_rhs;
use crate::flow::ode::{self, IntegratorConfig};
use crate::model::{FastPoint, FullState, HamiltonianModel, SlowPoint};

pub use field::{build_action_field, ActionField, ContinuationConfig};

/// How the time-shift freedom of the orbit is removed.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseCondition {
    /// The anchor lies on the hyperplane through the guess orthogonal to the
    /// frozen vector field there.
    FlowNormal,
    /// Fast coordinate `index` of `[p.., q..]` keeps its guessed value.
    Coordinate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitConfig {
    pub integrator: IntegratorConfig,
    pub max_iterations: usize,
    /// Converged when the residual norm drops below this.
    pub tolerance: f64,
    /// Newton corrections longer than this mean the guess is outside the
    /// basin and the solve is abandoned.
    pub max_correction: f64,
    /// Uniform samples stored along the orbit.
    pub samples: usize,
    pub phase: PhaseCondition,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            integrator: IntegratorConfig::with_tol(1e-13),
            max_iterations: 30,
            tolerance: 1e-10,
            max_correction: 1.0,
            samples: 512,
            phase: PhaseCondition::FlowNormal,
        }
    }
}

/// Initial data for the shooting solver.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitGuess {
    pub w: FastPoint,
    pub period: f64,
}

impl OrbitGuess {
    pub fn new(w: FastPoint, period: f64) -> Self {
        OrbitGuess { w, period }
    }
}

/// A periodic orbit of the frozen system on the zero energy level.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub z: SlowPoint,
    pub period: f64,
    /// Starting point of the samples.
    pub anchor: FastPoint,
    /// `w(k T / n)` for `k = 0..n`.
    pub samples: Vec<FastPoint>,
    /// Frozen vector field at the samples.
    pub velocities: Vec<FastPoint>,
    /// `|w(T) - w(0)|`.
    pub closure_residual: f64,
    /// `max |H|` over the samples.
    pub energy_residual: f64,
    pub iterations: usize,
}

impl PeriodicOrbit {
    pub fn guess(&self) -> OrbitGuess {
        OrbitGuess::new(self.anchor.clone(), self.period)
    }

    /// Builds an orbit record from externally computed samples.
    pub fn from_samples(model: &HamiltonianModel, z: SlowPoint, period: f64, samples: Vec<FastPoint>) -> Result<Self> {
        if samples.is_empty() || !(period > 0.0) {
            return Err(Error::Parameter("orbit needs samples and a positive period".into()));
        }
        let velocities = samples.iter().map(|w| model.frozen_vector_field(w, &z)).collect::<Result<Vec<_>>>()?;
        let energy_residual = samples
            .iter()
            .map(|w| model.value(w, &z, 0.0).map(f64::abs))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(PeriodicOrbit {
            anchor: samples[0].clone(),
            z,
            period,
            samples,
            velocities,
            closure_residual: 0.0,
            energy_residual,
            iterations: 0,
        })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Flow map and its Jacobian: returns `(phi_T(w0), monodromy)`.
pub fn flow_with_variations(
    model: &HamiltonianModel,
    w0: &FastPoint,
    z: &SlowPoint,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<(FastPoint, DMatrix<f64>)> {
    let n = 2 * w0.dof();
    let mut y0 = w0.to_flat();
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    y0.extend(eye);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let w = FastPoint::from_flat(&y[..n]);
        let f = model.frozen_vector_field(&w, z)?;
        dy[..n].copy_from_slice(&f.to_flat());
        let a = model.frozen_jacobian(&w, z)?;
        // Phi stored row-major after the state
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[(i, k)] * y[n + k * n + j];
                }
                dy[n + i * n + j] = s;
            }
        }
        Ok(())
    };
    let sol = ode::solve(rhs, 0.0, &y0, period, cfg)?;
    let y = sol.final_state();
    let m = DMatrix::from_row_slice(n, n, &y[n..]);
    Ok((FastPoint::from_flat(&y[..n]), m))
}

fn sample_orbit(
    model: &HamiltonianModel,
    w0: &FastPoint,
    z: &SlowPoint,
    period: f64,
    cfg: &OrbitConfig,
) -> Result<(Vec<FastPoint>, f64)> {
    let y0 = FullState::new(w0.clone(), z.clone()).to_flat();
    let sol = ode::solve(frozen_rhs(model), 0.0, &y0, period, &cfg.integrator)?;
    let n2 = 2 * w0.dof();
    let samples = (0..cfg.samples)
        .map(|k| {
            let t = period * k as f64 / cfg.samples as f64;
            FastPoint::from_flat(&sol.eval(t)[..n2])
        })
        .collect();
    let end = &sol.final_state()[..n2];
    let closure = norm(&end.iter().zip(w0.to_flat()).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok((samples, closure))
}

/// Finds the frozen periodic orbit through the energy level `H = 0` near the
/// guess.
pub fn find_periodic_orbit(
    model: &HamiltonianModel,
    z: &SlowPoint,
    guess: &OrbitGuess,
    cfg: &OrbitConfig,
) -> Result<PeriodicOrbit> {
    let dims = model.dims();
    if guess.w.dof() != dims.fast_dof || z.dof() != dims.slow_dof {
        return Err(Error::Dimension("guess or slow point does not match the model".into()));
    }
    if !(guess.period > 0.0) {
        return Err(Error::Parameter(format!("period guess must be positive, got {}", guess.period)));
    }
    if cfg.samples < 2 {
        return Err(Error::Parameter("need at least two orbit samples".into()));
    }
    let n = 2 * dims.fast_dof;
    let w_guess = guess.w.to_flat();
    let normal = match &cfg.phase {
        PhaseCondition::FlowNormal => model.frozen_vector_field(&guess.w, z)?.to_flat(),
        PhaseCondition::Coordinate(i) => {
            if *i >= n {
                return Err(Error::Parameter(format!("phase coordinate {i} out of range")));
            }
            let mut e = vec![0.0; n];
            e[*i] = 1.0;
            e
        }
    };
    let mut w = w_guess.clone();
    let mut period = guess.period;
    let mut energies: Vec<f64> = Vec::new();
    for iter in 0..=cfg.max_iterations {
        let wp = FastPoint::from_flat(&w);
        let (end, mono) = flow_with_variations(model, &wp, z, period, &cfg.integrator)?;
        let e = model.evaluate(&wp, z, 0.0)?;
        let end_flat = end.to_flat();
        let mut res = DVector::zeros(n + 2);
        for i in 0..n {
            res[i] = end_flat[i] - w[i];
        }
        res[n] = e.h;
        res[n + 1] = normal.iter().zip(w.iter().zip(&w_guess)).map(|(a, (x, g))| a * (x - g)).sum();
        energies.push(e.h.abs());
        if res.norm() <= cfg.tolerance {
            let (samples, closure) = sample_orbit(model, &wp, z, period, cfg)?;
            let mut orbit = PeriodicOrbit::from_samples(model, z.clone(), period, samples)?;
            orbit.closure_residual = closure;
            orbit.iterations = iter;
            return Ok(orbit);
        }
        if iter == cfg.max_iterations {
            break;
        }
        let field_end = model.frozen_vector_field(&end, z)?.to_flat();
        let mut jac = DMatrix::zeros(n + 2, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = mono[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
            jac[(i, n)] = field_end[i];
        }
        for j in 0..dims.fast_dof {
            jac[(n, j)] = e.dhdp[j];
            jac[(n, dims.fast_dof + j)] = e.dhdq[j];
        }
        for j in 0..n {
            jac[(n + 1, j)] = normal[j];
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-13 * smax.max(1.0)) {
            return Err(Error::SingularJacobian(format!(
                "shooting Jacobian at z = {z} has singular values in [{smin:e}, {smax:e}]"
            )));
        }
        let step = svd.solve(&(-res), 0.0).map_err(|e| Error::SingularJacobian(e.to_string()))?;
        let step_norm = step.norm();
        if !(step_norm <= cfg.max_correction) {
            return Err(stalled_energy(&energies, cfg).unwrap_or_else(|| Error::NoConvergence {
                iterations: iter,
                reason: format!("Newton correction {step_norm:e} exceeds the trust radius {}", cfg.max_correction),
            }));
        }
        for i in 0..n {
            w[i] += step[i];
        }
        period += step[n];
        if !(period > 0.0) {
            return Err(Error::NoConvergence { iterations: iter, reason: "period became nonpositive".into() });
        }
    }
    Err(stalled_energy(&energies, cfg).unwrap_or_else(|| Error::NoConvergence {
        iterations: cfg.max_iterations,
        reason: "residual did not reach tolerance".into(),
    }))
}

/// After a failed solve: if the energy residual has settled at a clearly
/// nonzero value, there is no zero-energy orbit for Newton to reach.
fn stalled_energy(energies: &[f64], cfg: &OrbitConfig) -> Option<Error> {
    let [.., prev, last] = energies else {
        return None;
    };
    let settled = (last - prev).abs() <= 0.1 * last;
    (energies.len() >= 3 && settled && *last > cfg.tolerance.sqrt())
        .then_some(Error::EnergyMismatch { residual: *last })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetData {
    pub multipliers: Vec<Complex<f64>>,
    pub hyperbolic: bool,
    /// Margin used for `||mu| - 1|` in the hyperbolicity test.
    pub tolerance: f64,
    /// Indices of the two multipliers taken as the trivial pair.
    pub trivial: [usize; 2],
    pub monodromy: DMatrix<f64>,
}

impl FloquetData {
    pub fn product(&self) -> Complex<f64> {
        self.multipliers.iter().fold(Complex::new(1.0, 0.0), |a, b| a * b)
    }

    pub fn nontrivial(&self) -> Vec<Complex<f64>> {
        self.multipliers.iter().enumerate().filter(|(i, _)| !self.trivial.contains(i)).map(|(_, m)| *m).collect()
    }

    /// Largest distance of a trivial multiplier from 1.
    pub fn trivial_defect(&self) -> f64 {
        self.trivial.iter().map(|&i| (self.multipliers[i] - 1.0).norm()).fold(0.0, f64::max)
    }
}

/// Floquet multipliers with the default hyperbolicity margin `1e-3`.
pub fn floquet(model: &HamiltonianModel, orbit: &PeriodicOrbit, cfg: &OrbitConfig) -> Result<FloquetData> {
    floquet_with_margin(model, orbit, cfg, 1e-3)
}

/// Monodromy over one period and its eigenvalues. The two multipliers closest
/// to 1 are the trivial pair; the orbit is hyperbolic when every other
/// multiplier satisfies `||mu| - 1| > margin`.
pub fn floquet_with_margin(
    model: &HamiltonianModel,
    orbit: &PeriodicOrbit,
    cfg: &OrbitConfig,
    margin: f64,
) -> Result<FloquetData> {
    let (_, mono) = flow_with_variations(model, &orbit.anchor, &orbit.z, orbit.period, &cfg.integrator)?;
    if mono.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence { t: orbit.period });
    }
    let mut multipliers: Vec<Complex<f64>> = mono.complex_eigenvalues().iter().copied().collect();
    multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
    let mut order: Vec<usize> = (0..multipliers.len()).collect();
    order.sort_by(|&i, &j| (multipliers[i] - 1.0).norm().total_cmp(&(multipliers[j] - 1.0).norm()));
    let trivial = [order[0], order[1]];
    let nontrivial: Vec<&Complex<f64>> =
        multipliers.iter().enumerate().filter(|(i, _)| !trivial.contains(i)).map(|(_, m)| m).collect();
    let hyperbolic = !nontrivial.is_empty() && nontrivial.iter().all(|m| (m.norm() - 1.0).abs() > margin);
    Ok(FloquetData { multipliers, hyperbolic, tolerance: margin, trivial, monodromy: mono })
}

fn require_samples(orbit: &PeriodicOrbit) -> Result<()> {
    if orbit.samples.len() < 256 {
        return Err(Error::Accuracy(format!(
            "quadrature needs at least 256 uniform samples, orbit has {}",
            orbit.samples.len()
        )));
    }
    Ok(())
}

/// `J = int_0^T p . q' dt` by the periodic trapezoidal rule.
pub fn action(orbit: &PeriodicOrbit) -> Result<f64> {
    require_samples(orbit)?;
    let s: f64 = orbit
        .samples
        .iter()
        .zip(&orbit.velocities)
        .map(|(w, dw)| w.p.iter().zip(&dw.q).map(|(p, qd)| p * qd).sum::<f64>())
        .sum();
    Ok(s * orbit.period / orbit.samples.len() as f64)
}

/// `(dJ/dv, dJ/du) = (-int dH/dv dt, -int dH/du dt)` along the orbit at `eps = 0`.
pub fn action_gradient(model: &HamiltonianModel, orbit: &PeriodicOrbit) -> Result<SlowPoint> {
    require_samples(orbit)?;
    let d = orbit.z.dof();
    let mut gv = vec![0.0; d];
    let mut gu = vec![0.0; d];
    for w in &orbit.samples {
        let e = model.evaluate(w, &orbit.z, 0.0)?;
        for i in 0..d {
            gv[i] -= e.dhdv[i];
            gu[i] -= e.dhdu[i];
        }
    }
    let h = orbit.period / orbit.samples.len() as f64;
    Ok(SlowPoint::new(gv.iter().map(|x| x * h).collect(), gu.iter().map(|x| x * h).collect()))
}

/// Averaged perturbation `int_0^T H1(p_c, q_c, v, u) dt` along an orbit of `H0`.
pub fn perturbative_action(model: &HamiltonianModel, orbit: &PeriodicOrbit, z: &SlowPoint) -> Result<f64> {
    require_samples(orbit)?;
    if z.dof() != model.dims().slow_dof {
        return Err(Error::Dimension("slow point does not match the model".into()));
    }
    let mut s = 0.0;
    for w in &orbit.samples {
        s += model
            .perturbation(w, z)
            .ok_or_else(|| Error::Precondition(format!("model {} is not perturbative", model.name())))?;
    }
    Ok(s * orbit.period / orbit.samples.len() as f64)
}
