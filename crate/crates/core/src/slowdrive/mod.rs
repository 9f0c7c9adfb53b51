//! Slow Hamiltonian flows generated by actions.
//!
//! A generator is a pair `(J, T)` on a domain `D`. Its slow flow is
//!
//! ```text
//! v' = (1/T) dJ/du,   u' = -(1/T) dJ/dv
//! ```
//!
//! which is the continuous limit of the per-return displacement
//! `v -> v + eps dJ/du`, `u -> u - eps dJ/dv` accumulated over `T` time units.

mod path;
mod planner;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::ode::{self, DenseSegment, IntegratorConfig, OdeSolution};
use crate::flow::section::refine_root;
use crate::model::{Domain, SlowField, SlowPoint};
use crate::orbit::ActionField;

pub use path::{path_eval, path_validate, AccessiblePath, DensePath};
pub use planner::{plan_level_lines, PlannerConfig};

/// A slow Hamiltonian `J` with its period weight `T` on a domain.
pub trait SlowGenerator: Send + Sync {
    fn label(&self) -> &str;
    fn domain(&self) -> &Domain;
    fn value(&self, z: &SlowPoint) -> f64;
    fn gradient(&self, z: &SlowPoint) -> SlowPoint;
    fn period(&self, z: &SlowPoint) -> f64;
}

impl SlowGenerator for ActionField {
    fn label(&self) -> &str {
        &self.label
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, z: &SlowPoint) -> f64 {
        ActionField::value(self, z)
    }

    fn gradient(&self, z: &SlowPoint) -> SlowPoint {
        ActionField::gradient(self, z)
    }

    fn period(&self, z: &SlowPoint) -> f64 {
        self.period_at(z)
    }
}

/// A generator given by closed-form fields.
#[derive(Clone)]
pub struct AnalyticGenerator {
    pub label: String,
    pub action: SlowField,
    pub period: SlowField,
    pub domain: Domain,
}

impl fmt::Debug for AnalyticGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticGenerator")
            .field("label", &self.label)
            .field("action", &self.action)
            .field("domain", &self.domain)
            .finish()
    }
}

impl AnalyticGenerator {
    pub fn new(label: impl Into<String>, action: SlowField, period: SlowField, domain: Domain) -> Result<Self> {
        if action.slow_dof() != domain.slow_dof() || period.slow_dof() != domain.slow_dof() {
            return Err(Error::Dimension("generator fields and domain disagree on d".into()));
        }
        Ok(AnalyticGenerator { label: label.into(), action, period, domain })
    }

    /// `J` with unit period weight.
    pub fn unit_period(label: impl Into<String>, action: SlowField, domain: Domain) -> Result<Self> {
        let d = action.slow_dof();
        Self::new(label, action, SlowField::constant(d, 1.0), domain)
    }
}

impl SlowGenerator for AnalyticGenerator {
    fn label(&self) -> &str {
        &self.label
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, z: &SlowPoint) -> f64 {
        self.action.value(z)
    }

    fn gradient(&self, z: &SlowPoint) -> SlowPoint {
        self.action.gradient(z)
    }

    fn period(&self, z: &SlowPoint) -> f64 {
        self.period.value(z)
    }
}

/// An ordered family of generators sharing one domain.
#[derive(Clone)]
pub struct SlowGeneratorSet {
    generators: Vec<Arc<dyn SlowGenerator>>,
}

impl fmt::Debug for SlowGeneratorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.generators.iter().map(|g| g.label().to_string())).finish()
    }
}

impl SlowGeneratorSet {
    /// Checks the shared domain and that every period is positive on a
    /// sample grid.
    pub fn new(generators: Vec<Arc<dyn SlowGenerator>>) -> Result<Self> {
        let first = generators.first().ok_or_else(|| Error::Parameter("empty generator set".into()))?;
        let domain = first.domain().clone();
        for g in &generators {
            if g.domain() != &domain {
                return Err(Error::Parameter(format!("generator {} has a different domain", g.label())));
            }
            for z in domain.sample_points(9) {
                let t = g.period(&z);
                if !(t > 0.0) {
                    return Err(Error::Parameter(format!("generator {} has period {t} at {z}", g.label())));
                }
            }
        }
        Ok(SlowGeneratorSet { generators })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn get(&self, k: usize) -> Result<&Arc<dyn SlowGenerator>> {
        self.generators
            .get(k)
            .ok_or_else(|| Error::OutOfRange(format!("generator index {k} with {} generators", self.len())))
    }

    pub fn domain(&self) -> &Domain {
        self.generators[0].domain()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn SlowGenerator>> {
        self.generators.iter()
    }
}

pub(crate) fn field_at(gen: &dyn SlowGenerator, z: &SlowPoint) -> SlowPoint {
    let g = gen.gradient(z);
    let t = gen.period(z);
    SlowPoint::new(g.u.iter().map(|x| x / t).collect(), g.v.iter().map(|x| -x / t).collect())
}

/// `(v', u') = ((1/T) dJ/du, -(1/T) dJ/dv)`.
pub fn slow_vector_field(gen: &dyn SlowGenerator, z: &SlowPoint) -> Result<SlowPoint> {
    if z.dof() != gen.domain().slow_dof() {
        return Err(Error::Dimension("slow point does not match the generator".into()));
    }
    if !gen.domain().contains(z) {
        return Err(Error::Domain(format!("{z} is outside the domain of {}", gen.label())));
    }
    Ok(field_at(gen, z))
}

fn rhs(gen: &dyn SlowGenerator) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    move |_t, y, dy| {
        let f = field_at(gen, &SlowPoint::from_flat(y)).to_flat();
        dy.copy_from_slice(&f);
        Ok(())
    }
}

/// Default tolerances for slow flows.
pub fn slow_integrator() -> IntegratorConfig {
    IntegratorConfig::with_tol(1e-12)
}

/// Outcome of integrating a slow flow with boundary monitoring.
#[derive(Debug, Clone)]
pub struct SlowRun {
    pub solution: OdeSolution,
    /// First time the trajectory reaches the boundary, if before the horizon.
    pub exit: Option<f64>,
}

/// Integrates the slow flow of `gen` from `z0` for `tau >= 0`, stopping at the
/// first boundary crossing of the domain.
pub fn integrate_slow(gen: &dyn SlowGenerator, z0: &SlowPoint, tau: f64, cfg: &IntegratorConfig) -> Result<SlowRun> {
    integrate_slow_until(gen, z0, tau, cfg, |_| Ok(false))
}

/// [`integrate_slow`] with an extra stop callback, consulted after each
/// accepted step that stays inside the domain.
pub(crate) fn integrate_slow_until<S>(
    gen: &dyn SlowGenerator,
    z0: &SlowPoint,
    tau: f64,
    cfg: &IntegratorConfig,
    mut extra: S,
) -> Result<SlowRun>
where
    S: FnMut(&DenseSegment) -> Result<bool>,
{
    let domain = gen.domain();
    if z0.dof() != domain.slow_dof() {
        return Err(Error::Dimension("slow point does not match the generator".into()));
    }
    if !domain.contains(z0) {
        return Err(Error::Domain(format!("{z0} is outside the domain of {}", gen.label())));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!("slow time must be finite and nonnegative, got {tau}")));
    }
    let mut exit = None;
    let sol = ode::solve_until(rhs(gen), 0.0, &z0.to_flat(), tau, cfg, |seg| {
        const SUB: usize = 4;
        let mut ta = seg.t0;
        let mut sa = domain.signed_distance_flat(seg.start());
        for k in 1..=SUB {
            let tb = if k == SUB { seg.t1() } else { seg.t0 + seg.h * k as f64 / SUB as f64 };
            let sb = domain.signed_distance_flat(&seg.eval(tb));
            if sb <= 0.0 {
                let g = |t: f64| domain.signed_distance_flat(&seg.eval(t));
                exit = Some(refine_root(g, ta, sa, tb, sb));
                return Ok(true);
            }
            ta = tb;
            sa = sb;
        }
        extra(seg)
    })?;
    Ok(SlowRun { solution: sol, exit })
}

/// `Phi^tau(z0)` for the slow flow of `gen`.
pub fn slow_flow(gen: &dyn SlowGenerator, z0: &SlowPoint, tau: f64, cfg: &IntegratorConfig) -> Result<SlowPoint> {
    let run = integrate_slow(gen, z0, tau, cfg)?;
    if let Some(tau_exit) = run.exit {
        return Err(Error::DomainExit { tau_exit });
    }
    Ok(SlowPoint::from_flat(run.solution.final_state()))
}

/// Time for the slow flow to leave the domain; `infinite` when it stays
/// inside up to the cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitTime {
    pub value: f64,
    pub infinite: bool,
}

impl ExitTime {
    /// `value` with the cap replaced by infinity.
    pub fn as_f64(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            self.value
        }
    }
}

/// Default cap for exit times.
pub const DEFAULT_TAU_MAX: f64 = 1e3;

pub fn exit_time(gen: &dyn SlowGenerator, z: &SlowPoint, tau_max: f64) -> Result<ExitTime> {
    let run = integrate_slow(gen, z, tau_max, &slow_integrator())?;
    Ok(match run.exit {
        Some(t) => ExitTime { value: t, infinite: false },
        None => ExitTime { value: tau_max, infinite: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_rejects_mixed_domains() {
        let d1 = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let d2 = Domain::new_ball(vec![0.0, 0.0], 2.0).unwrap();
        let f = SlowField::constant(1, 0.0);
        let a: Arc<dyn SlowGenerator> = Arc::new(AnalyticGenerator::unit_period("a", f.clone(), d1).unwrap());
        let b: Arc<dyn SlowGenerator> = Arc::new(AnalyticGenerator::unit_period("b", f, d2).unwrap());
        assert!(SlowGeneratorSet::new(vec![a, b]).is_err());
        assert!(SlowGeneratorSet::new(vec![]).is_err());
    }

    #[test]
    fn set_rejects_nonpositive_period() {
        let d = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = AnalyticGenerator::new("a", SlowField::constant(1, 0.0), SlowField::constant(1, -1.0), d).unwrap();
        assert!(SlowGeneratorSet::new(vec![Arc::new(g)]).is_err());
    }
}
