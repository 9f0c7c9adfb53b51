//! Time integration of full and frozen systems.
//!
//! States are stored flat as `[p.., q.., v.., u..]`. Frozen runs use the same
//! layout with a zero slow derivative, so `z` is carried through unchanged.

pub mod ode;
pub mod section;
pub mod symplectic;

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Dims, FastPoint, FullState, HamiltonianModel, SlowPoint, SlowScaling};

pub use ode::{DenseSegment, IntegratorConfig, OdeSolution};
pub use section::{detect_crossings, CrossingEvent, Orientation, Section, TangencyWarning};
pub use symplectic::integrate_frozen_symplectic;

/// A run of the full or frozen system with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dims: Dims,
    /// `eps` of the run; `0` for frozen runs.
    pub eps: f64,
    pub frozen: bool,
    pub solution: OdeSolution,
    /// Values of `H(w, z; eps)` at every stored time.
    pub energies: Vec<f64>,
    /// `max |H(t) - H(0)|` over the stored times.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.solution.times
    }

    pub fn len(&self) -> usize {
        self.solution.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution.times.is_empty()
    }

    pub fn state(&self, i: usize) -> FullState {
        FullState::from_flat(&self.solution.states[i], self.dims)
    }

    pub fn states(&self) -> Vec<FullState> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    pub fn final_state(&self) -> FullState {
        self.state(self.len() - 1)
    }

    /// Dense-output state at time `t` inside the run.
    pub fn state_at(&self, t: f64) -> FullState {
        FullState::from_flat(&self.solution.eval(t), self.dims)
    }

    /// Slow projection of the state at time `t`.
    pub fn slow_at(&self, t: f64) -> SlowPoint {
        self.state_at(t).z
    }

    /// Writes columns `t, p.., q.., v.., u.., H` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let Dims { fast_dof: m, slow_dof: d } = self.dims;
        let mut header = vec!["t".to_string()];
        for (name, n) in [("p", m), ("q", m), ("v", d), ("u", d)] {
            header.extend((0..n).map(|i| if n == 1 { name.to_string() } else { format!("{name}{}", i + 1) }));
        }
        header.push("H".into());
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.solution.times.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(self.solution.states[i].iter().map(|x| format!("{x:.16e}")));
            row.push(format!("{:.16e}", self.energies[i]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_span(t_span: [f64; 2]) -> Result<()> {
    if !(t_span[0].is_finite() && t_span[1].is_finite()) || t_span[1] < t_span[0] {
        return Err(Error::Parameter(format!("time span must satisfy t0 <= t1, got {t_span:?}")));
    }
    Ok(())
}

fn check_state(model: &HamiltonianModel, w: &FastPoint, z: &SlowPoint) -> Result<()> {
    let dims = model.dims();
    if w.dof() != dims.fast_dof || z.dof() != dims.slow_dof {
        return Err(Error::Dimension(format!(
            "state has (m, d) = ({}, {}), model {} expects ({}, {})",
            w.dof(),
            z.dof(),
            model.name(),
            dims.fast_dof,
            dims.slow_dof
        )));
    }
    if !(w.is_finite() && z.is_finite()) {
        return Err(Error::Precondition("initial state must be finite".into()));
    }
    Ok(())
}

/// Flat right-hand side of the full equations of motion.
pub fn full_rhs(model: &HamiltonianModel, eps: f64) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let dims = model.dims();
    let (m, d) = (dims.fast_dof, dims.slow_dof);
    let scale = match model.slow_scaling() {
        SlowScaling::SlowFast => eps,
        SlowScaling::Standard => 1.0,
    };
    move |_t, y, dy| {
        let s = FullState::from_flat(y, dims);
        let e = model.evaluate(&s.w, &s.z, eps)?;
        for i in 0..m {
            dy[i] = -e.dhdq[i];
            dy[m + i] = e.dhdp[i];
        }
        for i in 0..d {
            dy[2 * m + i] = -scale * e.dhdu[i];
            dy[2 * m + d + i] = scale * e.dhdv[i];
        }
        Ok(())
    }
}

/// Flat right-hand side of the frozen system on the full layout.
pub fn frozen_rhs(model: &HamiltonianModel) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let dims = model.dims();
    let m = dims.fast_dof;
    move |_t, y, dy| {
        let s = FullState::from_flat(y, dims);
        let e = model.evaluate(&s.w, &s.z, 0.0)?;
        for i in 0..m {
            dy[i] = -e.dhdq[i];
            dy[m + i] = e.dhdp[i];
        }
        for x in dy[2 * m..].iter_mut() {
            *x = 0.0;
        }
        Ok(())
    }
}

fn finish(model: &HamiltonianModel, solution: OdeSolution, eps: f64, frozen: bool) -> Result<Trajectory> {
    let dims = model.dims();
    let energies = solution
        .states
        .iter()
        .map(|y| {
            let s = FullState::from_flat(y, dims);
            model.value(&s.w, &s.z, eps)
        })
        .collect::<Result<Vec<f64>>>()?;
    let energy_drift = energies.iter().map(|h| (h - energies[0]).abs()).fold(0.0, f64::max);
    Ok(Trajectory { dims, eps, frozen, solution, energies, energy_drift })
}

/// Integrates the full slow-fast system.
pub fn integrate_full(
    model: &HamiltonianModel,
    state0: &FullState,
    eps: f64,
    t_span: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_full_until(model, state0, eps, t_span, cfg, |_| Ok(false))
}

/// [`integrate_full`] with a callback after each accepted step; returning
/// `true` stops the run at the end of that step.
pub fn integrate_full_until<S>(
    model: &HamiltonianModel,
    state0: &FullState,
    eps: f64,
    t_span: [f64; 2],
    cfg: &IntegratorConfig,
    stop: S,
) -> Result<Trajectory>
where
    S: FnMut(&DenseSegment) -> Result<bool>,
{
    check_span(t_span)?;
    check_state(model, &state0.w, &state0.z)?;
    if !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be finite, got {eps}")));
    }
    let sol = ode::solve_until(full_rhs(model, eps), t_span[0], &state0.to_flat(), t_span[1], cfg, stop)?;
    finish(model, sol, eps, false)
}

/// Integrates the frozen system at fixed slow point `z`.
pub fn integrate_frozen(
    model: &HamiltonianModel,
    w0: &FastPoint,
    z: &SlowPoint,
    t_span: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_span(t_span)?;
    check_state(model, w0, z)?;
    let y0 = FullState::new(w0.clone(), z.clone()).to_flat();
    let sol = ode::solve(frozen_rhs(model), t_span[0], &y0, t_span[1], cfg)?;
    finish(model, sol, 0.0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_oscillator, Domain, SlowField};
    use std::f64::consts::PI;

    fn oscillator() -> HamiltonianModel {
        let d = Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let e = SlowField::quadratic(1.0, vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        builtin_oscillator(SlowField::constant(1, 1.0), e, &d).unwrap()
    }

    #[test]
    fn csv_has_header_and_rows() {
        let model = oscillator();
        let w0 = FastPoint::new(vec![2f64.sqrt()], vec![0.0]);
        let tr = integrate_frozen(&model, &w0, &SlowPoint::planar(0.0, 0.0), [0.0, PI], &IntegratorConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,p,q,v,u,H");
        assert_eq!(lines.count(), tr.len());
    }

    #[test]
    fn rejects_reversed_span_and_wrong_dims() {
        let model = oscillator();
        let w0 = FastPoint::new(vec![1.0], vec![0.0]);
        let z = SlowPoint::planar(0.0, 0.0);
        assert!(integrate_frozen(&model, &w0, &z, [1.0, 0.0], &IntegratorConfig::default()).is_err());
        let bad = FastPoint::new(vec![1.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            integrate_frozen(&model, &bad, &z, [0.0, 1.0], &IntegratorConfig::default()),
            Err(Error::Dimension(_))
        ));
    }
}
