//! Slow drift along symbol codes and the shadowing of accessible paths.
//!
//! On the invariant surfaces of a code `ξ` the slow variables obey
//!
//! ```text
//! z_{i+1} = z_i + eps φ_{ξ_i ξ_{i+1}}(x_i(z_i), y_i(z_i), z_i, eps)
//! ```
//!
//! For a pure code `c^∞` the surfaces do not depend on `i` and the map is
//! homogeneous. Codes that share a long block drift together
//! ([`block_compare`]), and a code built from the blocks of an accessible
//! path makes the drift follow that path ([`verify_theorem1`]).

mod plan;
mod stab;
mod theorem;

use std::io::Write;

use crate::error::{Error, Result};
use crate::horseshoe::{invariant_surfaces, Code, CrossFormSystem, SurfaceConfig, SurfaceFamily, Symbol};
use crate::model::SlowPoint;

pub use plan::{plan_code, CodeBlock, CodePlan, Continuation};
pub use stab::{lemma_stab, StabConfig, StabReport, StabSample};
pub use theorem::{
    synthetic_scenario, verify_theorem1, ScalingCheck, ShadowReport, ShadowSample, SyntheticScenario, Theorem1Config,
    Theorem1Report,
};

/// Column names `v.., u..` (numbered when `d > 1`) with an optional prefix.
pub(crate) fn slow_columns(prefix: &str, d: usize) -> Vec<String> {
    let name = |s: &str, i: usize| if d == 1 { format!("{prefix}{s}") } else { format!("{prefix}{s}{}", i + 1) };
    (0..d).map(|i| name("v", i)).chain((0..d).map(|i| name("u", i))).collect()
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Iterates of the slow drift along one code.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrajectory {
    pub code: Code,
    pub eps: f64,
    pub mollifier: Option<f64>,
    /// `z_0, z_1, ...`; one more entry than `x` and `y`.
    pub z: Vec<SlowPoint>,
    /// Surface values `x_i(z_i)` used for step `i`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Index of the first iterate outside the domain; the run stops there.
    pub exit: Option<usize>,
}

impl DriftTrajectory {
    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.x.len()
    }

    pub fn last(&self) -> &SlowPoint {
        self.z.last().expect("a trajectory holds its start")
    }

    /// Largest `|z_{i+1} - z_i - eps φ(x_i, y_i, z_i)|` when every step is
    /// recomputed from the stored arguments; zero for an untouched run.
    pub fn replay_defect(&self, sys: &CrossFormSystem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.steps() {
            let phi = sys.phi(self.code.pair(i as i64), &self.x[i], &self.y[i], &self.z[i], self.eps)?;
            let next = step(&self.z[i], &phi, self.eps);
            worst = worst.max(next.distance(&self.z[i + 1]));
        }
        Ok(worst)
    }

    /// Rows `i, v.., u.., x.., y..`; the last row has no surface values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.z[0].dof();
        let k = self.x.first().map_or(0, |x| x.len());
        let fast = |s: &str| -> Vec<String> {
            (0..k).map(|i| if k == 1 { s.to_string() } else { format!("{s}{}", i + 1) }).collect()
        };
        writeln!(out, "# slowdrift-drift v1")?;
        writeln!(out, "# code: {}", self.code)?;
        writeln!(out, "# eps: {}", fmt_f64(self.eps))?;
        match self.mollifier {
            Some(delta) => writeln!(out, "# mollifier: {}", fmt_f64(delta))?,
            None => writeln!(out, "# mollifier: none")?,
        }
        if let Some(i) = self.exit {
            writeln!(out, "# exit: {i}")?;
        }
        let mut header = vec!["i".to_string()];
        header.extend(slow_columns("", d));
        header.extend(fast("x"));
        header.extend(fast("y"));
        writeln!(out, "{}", header.join(","))?;
        for (i, z) in self.z.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(z.to_flat().into_iter().map(fmt_f64));
            match (self.x.get(i), self.y.get(i)) {
                (Some(x), Some(y)) => row.extend(x.iter().chain(y).copied().map(fmt_f64)),
                _ => row.extend(std::iter::repeat(String::new()).take(2 * k)),
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn step(z: &SlowPoint, phi: &SlowPoint, eps: f64) -> SlowPoint {
    let flat: Vec<f64> = z.to_flat().iter().zip(phi.to_flat()).map(|(a, p)| a + eps * p).collect();
    SlowPoint::from_flat(&flat)
}

/// Iterates the slow drift on the surfaces of `surfaces.code` for `steps`
/// steps, stopping early (with [`DriftTrajectory::exit`] set) when an iterate
/// leaves the domain.
pub fn drift_run(
    sys: &CrossFormSystem,
    surfaces: &SurfaceFamily,
    z0: &SlowPoint,
    eps: f64,
    steps: usize,
) -> Result<DriftTrajectory> {
    if eps.to_bits() != surfaces.eps.to_bits() {
        return Err(Error::Parameter(format!("surfaces were computed for eps = {}, not {eps}", surfaces.eps)));
    }
    if sys.mollifier != surfaces.mollifier {
        return Err(Error::Parameter("surfaces were computed for a different mollifier".into()));
    }
    if z0.dof() != sys.slow_dof() {
        return Err(Error::Dimension("start point does not match the system".into()));
    }
    if !sys.domain.contains(z0) {
        return Err(Error::Domain(format!("drift start {z0} is outside the domain")));
    }
    let code = &surfaces.code;
    let mut traj = DriftTrajectory {
        code: code.clone(),
        eps,
        mollifier: surfaces.mollifier,
        z: vec![z0.clone()],
        x: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        exit: None,
    };
    for i in 0..steps {
        let z = traj.last();
        let (x, y) = surfaces.point(i as i64, z)?;
        let phi = sys.phi(code.pair(i as i64), &x, &y, z, eps)?;
        let next = step(z, &phi, eps);
        let outside = !sys.domain.contains(&next);
        traj.x.push(x);
        traj.y.push(y);
        traj.z.push(next);
        if outside {
            traj.exit = Some(i + 1);
            break;
        }
    }
    Ok(traj)
}

/// The homogeneous drift of `c^∞`, on its index-independent surfaces.
pub fn homogeneous_run(
    sys: &CrossFormSystem,
    c: Symbol,
    z0: &SlowPoint,
    eps: f64,
    steps: usize,
    cfg: &SurfaceConfig,
) -> Result<DriftTrajectory> {
    let surfaces = invariant_surfaces(sys, &Code::pure(c), eps, None, cfg)?;
    drift_run(sys, &surfaces, z0, eps, steps)
}

/// Distances between two drifts over a common block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparison {
    /// Shift `j` of the block in the first trajectory.
    pub offset: usize,
    /// `⌊t0/eps⌋`.
    pub block_len: usize,
    /// `|z¹_{j+N} - z²_N|` for `N = 0..=block_len`.
    pub profile: Vec<f64>,
    /// Start distance over `eps`.
    pub k0: f64,
    /// `max_N |z¹_{j+N} - z²_N| / eps`.
    pub k1: f64,
}

/// `⌊t/eps⌋`, robust to `t/eps` landing a rounding error below an integer.
pub(crate) fn floor_ratio(t: f64, eps: f64) -> usize {
    let r = t / eps;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.floor() as usize
    }
}

/// Compares `traj1` from index `j` with `traj2` from index 0 over
/// `⌊t0/eps⌋` steps. The codes must agree on the block.
pub fn block_compare(traj1: &DriftTrajectory, traj2: &DriftTrajectory, j: usize, t0: f64) -> Result<BlockComparison> {
    let eps = traj1.eps;
    if eps.to_bits() != traj2.eps.to_bits() || !(eps > 0.0) {
        return Err(Error::Parameter("block comparison needs both runs at the same positive eps".into()));
    }
    if !(t0 >= 0.0) || !t0.is_finite() {
        return Err(Error::Parameter(format!("block time must be nonnegative, got {t0}")));
    }
    let n0 = floor_ratio(t0, eps);
    for i in 0..=n0 {
        let (a, b) = (j + i, i);
        if traj1.code.symbol(a as i64) != traj2.code.symbol(b as i64) {
            return Err(Error::BlockMismatch { index: a as i64 });
        }
    }
    if traj1.z.len() <= j + n0 || traj2.z.len() <= n0 {
        return Err(Error::OutOfRange(format!(
            "block of {n0} steps from {j} needs longer runs (have {} and {} iterates)",
            traj1.z.len(),
            traj2.z.len()
        )));
    }
    let profile: Vec<f64> = (0..=n0).map(|n| traj1.z[j + n].distance(&traj2.z[n])).collect();
    let k1 = profile.iter().fold(0.0f64, |m, &d| m.max(d)) / eps;
    Ok(BlockComparison { offset: j, block_len: n0, k0: profile[0] / eps, profile, k1 })
}
