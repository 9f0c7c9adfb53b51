use std::io::{BufRead, Write};

use super::{integrate_slow, slow_integrator, SlowGeneratorSet};
use crate::error::{Error, Result};
use crate::flow::ode::OdeSolution;
use crate::model::SlowPoint;

/// A concatenation of slow flows: on `[tau_i, tau_{i+1}]` the curve follows
/// generator `generators[i]` from `states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessiblePath {
    pub z0: SlowPoint,
    /// `0 = tau_0 < tau_1 < ... < tau_N`.
    pub breakpoints: Vec<f64>,
    /// One generator index per segment.
    pub generators: Vec<usize>,
    /// Breakpoint states `z_i`; empty until validated.
    pub states: Vec<SlowPoint>,
}

impl AccessiblePath {
    pub fn new(z0: SlowPoint, breakpoints: Vec<f64>, generators: Vec<usize>) -> Self {
        AccessiblePath { z0, breakpoints, generators, states: Vec::new() }
    }

    /// The path of zero length at `z0`.
    pub fn empty(z0: SlowPoint) -> Self {
        AccessiblePath { states: vec![z0.clone()], z0, breakpoints: vec![0.0], generators: Vec::new() }
    }

    /// Builds a path from segment durations.
    pub fn from_durations(z0: SlowPoint, segments: &[(usize, f64)]) -> Self {
        let mut bp = vec![0.0];
        for &(_, dt) in segments {
            bp.push(bp.last().unwrap() + dt);
        }
        Self::new(z0, bp, segments.iter().map(|s| s.0).collect())
    }

    pub fn segments(&self) -> usize {
        self.generators.len()
    }

    /// Total slow time `T`.
    pub fn duration(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    pub fn is_validated(&self) -> bool {
        self.states.len() == self.breakpoints.len()
    }

    pub fn end(&self) -> &SlowPoint {
        self.states.last().unwrap_or(&self.z0)
    }

    /// Segment containing `tau` (the earlier one at interior breakpoints).
    pub fn segment_at(&self, tau: f64) -> Result<usize> {
        let total = self.duration();
        if !(tau >= 0.0 && tau <= total) {
            return Err(Error::OutOfRange(format!("tau = {tau} outside [0, {total}]")));
        }
        let i = self.breakpoints.partition_point(|&b| b < tau);
        Ok(i.saturating_sub(1).min(self.segments().saturating_sub(1)))
    }

    /// Rows `segment, k, tau, v.., u..`; the final row carries `k = -1`.
    /// Requires a validated path.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if !self.is_validated() {
            return Err(Error::Precondition("only validated paths can be written".into()));
        }
        let d = self.z0.dof();
        let name = |s: &str, i: usize| if d == 1 { s.to_string() } else { format!("{s}{}", i + 1) };
        let mut header = vec!["segment".to_string(), "k".into(), "tau".into()];
        header.extend((0..d).map(|i| name("v", i)));
        header.extend((0..d).map(|i| name("u", i)));
        writeln!(out, "# slowdrift-path v1")?;
        writeln!(out, "{}", header.join(","))?;
        for (i, tau) in self.breakpoints.iter().enumerate() {
            let z = &self.states[i];
            let k = self.generators.get(i).map(|&k| k as i64).unwrap_or(-1);
            let mut row = vec![i.to_string(), k.to_string(), format!("{tau:.16e}")];
            row.extend(z.to_flat().iter().map(|x| format!("{x:.16e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads what [`write_csv`](Self::write_csv) produced. The stored states
    /// are kept as the cache; run [`path_validate`] to recompute them.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut generators = Vec::new();
        let mut states = Vec::new();
        let mut width = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("segment") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::Parse(format!("path line {}: {what}", lineno + 1));
            if cols.len() < 5 || (cols.len() - 3) % 2 != 0 {
                return Err(bad("wrong column count"));
            }
            if *width.get_or_insert(cols.len()) != cols.len() {
                return Err(bad("inconsistent column count"));
            }
            let k: i64 = cols[1].parse().map_err(|_| bad("bad generator index"))?;
            let tau: f64 = cols[2].parse().map_err(|_| bad("bad tau"))?;
            let z = cols[3..].iter().map(|c| c.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
            let z = z.map_err(|_| bad("bad coordinate"))?;
            breakpoints.push(tau);
            if k >= 0 {
                generators.push(k as usize);
            }
            states.push(SlowPoint::from_flat(&z));
        }
        if states.is_empty() || generators.len() + 1 != states.len() {
            return Err(Error::Parse("path needs one generator per segment and a final row".into()));
        }
        Ok(AccessiblePath { z0: states[0].clone(), breakpoints, generators, states })
    }
}

/// A validated path with the dense output of every segment, for repeated
/// evaluation.
#[derive(Debug, Clone)]
pub struct DensePath {
    pub path: AccessiblePath,
    solutions: Vec<OdeSolution>,
}

impl DensePath {
    pub fn eval(&self, tau: f64) -> Result<SlowPoint> {
        if self.path.segments() == 0 {
            return if tau == 0.0 {
                Ok(self.path.z0.clone())
            } else {
                Err(Error::OutOfRange(format!("tau = {tau} on an empty path")))
            };
        }
        let i = self.path.segment_at(tau)?;
        let local = (tau - self.path.breakpoints[i]).clamp(0.0, self.solutions[i].t_end());
        Ok(SlowPoint::from_flat(&self.solutions[i].eval(local)))
    }

    pub fn generator_at(&self, tau: f64) -> Result<usize> {
        Ok(self.path.generators[self.path.segment_at(tau)?])
    }
}

const BOUNDARY_TOL: f64 = 1e-10;

fn check_shape(path: &AccessiblePath, gens: &SlowGeneratorSet) -> Result<()> {
    if path.breakpoints.len() != path.generators.len() + 1 {
        return Err(Error::Parameter("a path needs one more breakpoint than segments".into()));
    }
    if path.breakpoints[0] != 0.0 {
        return Err(Error::NonIncreasingBreakpoints);
    }
    if path.breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::NonIncreasingBreakpoints);
    }
    if let Some(&k) = path.generators.iter().find(|&&k| k >= gens.len()) {
        return Err(Error::OutOfRange(format!("generator index {k} with {} generators", gens.len())));
    }
    if path.z0.dof() != gens.domain().slow_dof() {
        return Err(Error::Dimension("path start does not match the generators".into()));
    }
    Ok(())
}

fn flow_segments(path: &AccessiblePath, gens: &SlowGeneratorSet) -> Result<(Vec<SlowPoint>, Vec<OdeSolution>)> {
    check_shape(path, gens)?;
    if !gens.domain().contains(&path.z0) {
        return Err(Error::Domain(format!("path start {} is outside the domain", path.z0)));
    }
    let cfg = slow_integrator();
    let mut states = vec![path.z0.clone()];
    let mut sols = Vec::with_capacity(path.segments());
    for (i, &k) in path.generators.iter().enumerate() {
        let dt = path.breakpoints[i + 1] - path.breakpoints[i];
        let start = states.last().unwrap();
        // a segment must end strictly before the flow leaves the domain
        let run = integrate_slow(gens.get(k)?.as_ref(), start, dt, &cfg).map_err(|e| match e {
            Error::Domain(_) => Error::SegmentExit { segment: i },
            other => other,
        })?;
        if run.exit.is_some() {
            return Err(Error::SegmentExit { segment: i });
        }
        let end = SlowPoint::from_flat(run.solution.final_state());
        // endpoints within the exit-time resolution of the boundary count as exits
        if gens.domain().signed_distance(&end) <= BOUNDARY_TOL {
            return Err(Error::SegmentExit { segment: i });
        }
        states.push(end);
        sols.push(run.solution);
    }
    Ok((states, sols))
}

/// Recomputes every breakpoint state by flowing its segment and checks that
/// each duration is below the segment's exit time.
pub fn path_validate(path: &AccessiblePath, gens: &SlowGeneratorSet) -> Result<AccessiblePath> {
    let (states, _) = flow_segments(path, gens)?;
    Ok(AccessiblePath { states, ..path.clone() })
}

impl DensePath {
    pub fn new(path: &AccessiblePath, gens: &SlowGeneratorSet) -> Result<Self> {
        let (states, solutions) = flow_segments(path, gens)?;
        Ok(DensePath { path: AccessiblePath { states, ..path.clone() }, solutions })
    }
}

/// `Gamma(tau)`, flowing from the breakpoint of the segment containing `tau`.
pub fn path_eval(path: &AccessiblePath, gens: &SlowGeneratorSet, tau: f64) -> Result<SlowPoint> {
    if !path.is_validated() {
        return Err(Error::Precondition("path must be validated before evaluation".into()));
    }
    if path.segments() == 0 {
        return DensePath { path: path.clone(), solutions: Vec::new() }.eval(tau);
    }
    let i = path.segment_at(tau)?;
    let local = tau - path.breakpoints[i];
    if local == 0.0 {
        return Ok(path.states[i].clone());
    }
    let gen = gens.get(path.generators[i])?;
    let run = integrate_slow(gen.as_ref(), &path.states[i], local, &slow_integrator())?;
    if let Some(tau_exit) = run.exit {
        return Err(Error::DomainExit { tau_exit: path.breakpoints[i] + tau_exit });
    }
    Ok(SlowPoint::from_flat(run.solution.final_state()))
}
