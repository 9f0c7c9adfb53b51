use std::io::Write;

use super::{fmt_f64, slow_columns};
use crate::error::{Error, Result};
use crate::flow::{integrate_full, IntegratorConfig};
use crate::model::{FullState, HamiltonianModel, SlowPoint};
use crate::orbit::PeriodicOrbit;
use crate::slowdrive::{integrate_slow, slow_integrator, SlowGenerator};

#[derive(Debug, Clone)]
pub struct StabConfig {
    pub integrator: IntegratorConfig,
    /// Slow-time horizon; the full system runs for `horizon / eps`.
    pub horizon: f64,
    /// Uniform comparison times in `[0, horizon / eps]`, endpoints included.
    pub samples: usize,
}

impl Default for StabConfig {
    fn default() -> Self {
        StabConfig { integrator: IntegratorConfig::with_tol(1e-10), horizon: 1.0, samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabSample {
    pub t: f64,
    pub z: SlowPoint,
    /// `Φ^{eps t}(z0)`.
    pub flow: SlowPoint,
    pub error: f64,
    /// First-order distance `|H(w, z)| / |∂H/∂w|` to the frozen orbit family.
    pub cylinder: f64,
}

/// Tracking of the slow component of a full trajectory started on a frozen
/// periodic orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct StabReport {
    pub eps: f64,
    pub z0: SlowPoint,
    pub samples: Vec<StabSample>,
    /// `max_t |z(t) - Φ^{eps t}(z0)|`.
    pub max_error: f64,
    /// `max_error / eps`.
    pub c2: f64,
    pub max_cylinder_distance: f64,
    /// `max_cylinder_distance / eps`.
    pub c1: f64,
    pub energy_drift: f64,
}

impl StabReport {
    /// Rows `t, v.., u.., flow_v.., flow_u.., error, cylinder`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.z0.dof();
        writeln!(out, "# slowdrift-stab v1")?;
        writeln!(out, "# eps: {}", fmt_f64(self.eps))?;
        let mut header = vec!["t".to_string()];
        header.extend(slow_columns("", d));
        header.extend(slow_columns("flow_", d));
        header.extend(["error".to_string(), "cylinder".to_string()]);
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.z.to_flat().into_iter().chain(s.flow.to_flat()).map(fmt_f64));
            row.push(fmt_f64(s.error));
            row.push(fmt_f64(s.cylinder));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs the full system at `eps` from the first sample of `orbit` for fast
/// time `horizon / eps` and compares its slow component with the slow flow
/// of `gen` (the action of the orbit family through `orbit`).
pub fn lemma_stab(
    model: &HamiltonianModel,
    gen: &dyn SlowGenerator,
    orbit: &PeriodicOrbit,
    eps: f64,
    cfg: &StabConfig,
) -> Result<StabReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if !(cfg.horizon > 0.0) || cfg.samples == 0 {
        return Err(Error::Parameter("horizon and sample count must be positive".into()));
    }
    let z0 = orbit.z.clone();
    let w0 = orbit.samples.first().ok_or_else(|| Error::Parameter("orbit has no samples".into()))?.clone();
    let t_end = cfg.horizon / eps;
    let traj = integrate_full(model, &FullState::new(w0, z0.clone()), eps, [0.0, t_end], &cfg.integrator)?;
    let slow = integrate_slow(gen, &z0, cfg.horizon, &slow_integrator())?;
    if let Some(tau_exit) = slow.exit {
        return Err(Error::DomainExit { tau_exit });
    }
    let mut samples = Vec::with_capacity(cfg.samples + 1);
    for i in 0..=cfg.samples {
        let t = t_end * i as f64 / cfg.samples as f64;
        let s = traj.state_at(t);
        let flow = SlowPoint::from_flat(&slow.solution.eval((eps * t).min(slow.solution.t_end())));
        let e = model.evaluate(&s.w, &s.z, 0.0)?;
        let grad = e.dhdp.iter().chain(&e.dhdq).map(|g| g * g).sum::<f64>().sqrt();
        let cylinder = if grad > 0.0 { e.h.abs() / grad } else { f64::INFINITY };
        samples.push(StabSample { t, error: s.z.distance(&flow), z: s.z, flow, cylinder });
    }
    let max_error = samples.iter().map(|s| s.error).fold(0.0, f64::max);
    let max_cyl = samples.iter().map(|s| s.cylinder).fold(0.0, f64::max);
    Ok(StabReport {
        eps,
        z0,
        samples,
        max_error,
        c2: max_error / eps,
        max_cylinder_distance: max_cyl,
        c1: max_cyl / eps,
        energy_drift: traj.energy_drift,
    })
}
