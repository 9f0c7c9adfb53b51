use std::io::Write;

use rayon::prelude::*;

use super::{block_compare, drift_run, fmt_f64, plan_code, slow_columns, CodePlan, Continuation, DriftTrajectory};
use crate::error::{Error, Result};
use crate::horseshoe::{
    affine_horseshoe, circle_generators, invariant_surfaces, mollify, AffineHorseshoeParams, Code, CrossFormSystem,
    SurfaceConfig, SurfaceFamily, Symbol,
};
use crate::model::{Domain, SlowPoint};
use crate::slowdrive::{path_validate, AccessiblePath, DensePath, SlowGeneratorSet};

#[derive(Debug, Clone)]
pub struct Theorem1Config {
    /// `codes[k]`: periodic code of the orbit family behind generator `k`.
    pub codes: Vec<Vec<Symbol>>,
    /// Width `δ` of the boundary layer where the slow increment is cut off.
    pub mollifier: f64,
    pub surface: SurfaceConfig,
    pub continuation: Continuation,
    /// Under `eps -> eps / f` the error ratio must lie in
    /// `[scaling_band.0 f, scaling_band.1 f]`.
    pub scaling_band: (f64, f64),
    /// Also compare every block with the homogeneous drift of its code.
    pub measure_k1: bool,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            codes: vec![vec![Symbol::A], vec![Symbol::B]],
            mollifier: 0.2,
            surface: SurfaceConfig::default(),
            continuation: Continuation::RepeatLast,
            scaling_band: (0.75, 1.5),
            measure_k1: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowSample {
    pub step: usize,
    /// Path segment whose block contains the step.
    pub segment: usize,
    /// Slow time matched to the step.
    pub slow_time: f64,
    pub z: SlowPoint,
    /// `Γ(slow_time)`.
    pub gamma: SlowPoint,
    pub error: f64,
}

/// Shadowing of one accessible path at one `eps`.
#[derive(Debug, Clone)]
pub struct ShadowReport {
    pub eps: f64,
    pub plan: CodePlan,
    pub trajectory: DriftTrajectory,
    pub samples: Vec<ShadowSample>,
    /// Largest sampled `|z_i - Γ(s_i)|`.
    pub max_error: f64,
    /// `max_error / eps`.
    pub c0: f64,
    /// Largest error per path segment.
    pub segment_errors: Vec<f64>,
    /// `|z_final - Γ(T)|`.
    pub endpoint_error: f64,
    /// Largest block distance to the homogeneous drift, over `eps`.
    pub k1: Option<f64>,
    pub surface_residual: f64,
}

impl ShadowReport {
    /// Rows `step, segment, slow_time, v.., u.., gamma_v.., gamma_u.., error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.trajectory.z[0].dof();
        writeln!(out, "# slowdrift-shadow v1")?;
        writeln!(out, "# eps: {}", fmt_f64(self.eps))?;
        writeln!(out, "# code: {}", self.plan.code)?;
        match self.trajectory.mollifier {
            Some(delta) => writeln!(out, "# mollifier: {}", fmt_f64(delta))?,
            None => writeln!(out, "# mollifier: none")?,
        }
        let mut header = vec!["step".to_string(), "segment".into(), "slow_time".into()];
        header.extend(slow_columns("", d));
        header.extend(slow_columns("gamma_", d));
        header.push("error".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![s.step.to_string(), s.segment.to_string(), fmt_f64(s.slow_time)];
            row.extend(s.z.to_flat().into_iter().chain(s.gamma.to_flat()).map(fmt_f64));
            row.push(fmt_f64(s.error));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Error ratio between two consecutive `eps` of the list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCheck {
    pub eps_from: f64,
    pub eps_to: f64,
    /// `eps_from / eps_to`.
    pub factor: f64,
    /// `max_error(eps_from) / max_error(eps_to)`; `None` when both vanish.
    pub ratio: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub reports: Vec<ShadowReport>,
    pub scaling: Vec<ScalingCheck>,
    /// Set when some error ratio leaves its band.
    pub scaling_violation: bool,
    /// Largest `c0` over the `eps` list.
    pub c0: f64,
}

impl Theorem1Report {
    /// Rows `eps, max_error, c0, endpoint_error, k1, ratio, pass`; the ratio
    /// columns compare each row with the next.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# slowdrift-theorem1 v1")?;
        writeln!(out, "eps,max_error,c0,endpoint_error,k1,surface_residual,ratio,pass")?;
        for (i, r) in self.reports.iter().enumerate() {
            let (ratio, pass) = match self.scaling.get(i) {
                Some(s) => (s.ratio.map_or("none".to_string(), fmt_f64), s.pass.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{ratio},{pass}",
                fmt_f64(r.eps),
                fmt_f64(r.max_error),
                fmt_f64(r.c0),
                fmt_f64(r.endpoint_error),
                r.k1.map_or(String::new(), fmt_f64),
                fmt_f64(r.surface_residual),
            )?;
        }
        Ok(())
    }
}

/// Checks that the path keeps `delta` away from the boundary, so the cut-off
/// slow increment agrees with the original one along it.
fn check_clearance(dense: &DensePath, domain: &Domain, delta: f64) -> Result<()> {
    let path = &dense.path;
    const PER_SEGMENT: usize = 64;
    for i in 0..path.segments() {
        let (a, b) = (path.breakpoints[i], path.breakpoints[i + 1]);
        for j in 0..=PER_SEGMENT {
            let tau = a + (b - a) * j as f64 / PER_SEGMENT as f64;
            let z = dense.eval(tau)?;
            if domain.signed_distance(&z) < delta {
                return Err(Error::Precondition(format!(
                    "path passes within the mollifier width {delta} of the boundary at tau = {tau}"
                )));
            }
        }
    }
    if domain.signed_distance(&path.z0) < delta {
        return Err(Error::Precondition("path starts inside the mollifier layer".into()));
    }
    Ok(())
}

fn shadow_one(
    sys: &CrossFormSystem,
    gens: &SlowGeneratorSet,
    dense: &DensePath,
    eps: f64,
    cfg: &Theorem1Config,
) -> Result<ShadowReport> {
    let path = &dense.path;
    let plan = plan_code(path, &cfg.codes, eps, &cfg.continuation)?;
    let surfaces = invariant_surfaces(sys, &plan.code, eps, None, &cfg.surface)?;
    let traj = drift_run(sys, &surfaces, &path.z0, eps, plan.total_len)?;

    let mut samples = Vec::with_capacity(traj.z.len());
    let mut s = 0.0;
    for (n, z) in traj.z.iter().enumerate() {
        let block = plan.block_at(n).or(plan.blocks.last());
        let segment = block.map_or(0, |b| b.segment);
        if let Some(b) = block.filter(|b| b.start == n) {
            s = path.breakpoints[b.segment];
        }
        let gamma = dense.eval(s.clamp(0.0, path.duration()))?;
        samples.push(ShadowSample { step: n, segment, slow_time: s, error: z.distance(&gamma), z: z.clone(), gamma });
        if let Some(b) = block {
            let period = gens.get(b.generator)?.period(z);
            s += eps * period / b.code_len as f64;
        }
    }
    if let Some(i) = traj.exit {
        return Err(Error::DomainExit { tau_exit: samples[i].slow_time });
    }

    let mut segment_errors = vec![0.0f64; path.segments()];
    for smp in &samples {
        if let Some(e) = segment_errors.get_mut(smp.segment) {
            *e = e.max(smp.error);
        }
    }
    let max_error = samples.iter().map(|s| s.error).fold(0.0, f64::max);
    let endpoint_error = traj.last().distance(path.end());

    let k1 = if cfg.measure_k1 && !plan.blocks.is_empty() {
        let mut cache: Vec<(Vec<Symbol>, SurfaceFamily)> = Vec::new();
        let mut worst: f64 = 0.0;
        for b in &plan.blocks {
            if !cache.iter().any(|(w, _)| *w == b.word) {
                let fam = invariant_surfaces(sys, &Code::periodic(&b.word)?, eps, None, &cfg.surface)?;
                cache.push((b.word.clone(), fam));
            }
            let fam = &cache.iter().find(|(w, _)| *w == b.word).expect("cached above").1;
            let len = b.end - b.start;
            let hom = drift_run(sys, fam, &traj.z[b.start], eps, len)?;
            // the block holds `len` equal symbols, so `len - 1` steps stay inside it
            let cmp = block_compare(&traj, &hom, b.start, (len - 1) as f64 * eps)?;
            worst = worst.max(cmp.k1);
        }
        Some(worst)
    } else {
        None
    };

    Ok(ShadowReport {
        eps,
        c0: max_error / eps,
        surface_residual: surfaces.residual,
        plan,
        trajectory: traj,
        samples,
        max_error,
        segment_errors,
        endpoint_error,
        k1,
    })
}

/// Runs the shadowing pipeline (mollify, plan the code, solve its invariant
/// surfaces, drift along them, compare with the path at matched slow times)
/// for every `eps` of the list and checks the `O(eps)` scaling between
/// consecutive entries.
///
/// Within the block of generator `k` one symbol step advances slow time by
/// `eps T_k(z) / ℓ_k`; each block starts at its segment's breakpoint.
pub fn verify_theorem1(
    sys: &CrossFormSystem,
    gens: &SlowGeneratorSet,
    path: &AccessiblePath,
    eps_list: &[f64],
    cfg: &Theorem1Config,
) -> Result<Theorem1Report> {
    if !path.is_validated() {
        return Err(Error::Precondition("path must be validated".into()));
    }
    if cfg.codes.len() != gens.len() {
        return Err(Error::Parameter(format!("{} orbit codes for {} generators", cfg.codes.len(), gens.len())));
    }
    if gens.domain().slow_dof() != sys.slow_dof() {
        return Err(Error::Dimension("generators and maps disagree on d".into()));
    }
    if eps_list.is_empty() {
        return Err(Error::Parameter("the eps list is empty".into()));
    }
    let (lo, hi) = cfg.scaling_band;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Parameter(format!("bad scaling band ({lo}, {hi})")));
    }
    let dense = DensePath::new(path, gens)?;
    let sys = mollify(sys, cfg.mollifier)?;
    check_clearance(&dense, &sys.domain, cfg.mollifier)?;

    let reports: Vec<ShadowReport> =
        eps_list.par_iter().map(|&eps| shadow_one(&sys, gens, &dense, eps, cfg)).collect::<Result<_>>()?;

    let scaling: Vec<ScalingCheck> = reports
        .windows(2)
        .map(|w| {
            let factor = w[0].eps / w[1].eps;
            let (a, b) = (w[0].max_error, w[1].max_error);
            let ratio = if a == 0.0 && b == 0.0 { None } else { Some(a / b) };
            let pass = ratio.is_none_or(|r| r >= lo * factor && r <= hi * factor);
            ScalingCheck { eps_from: w[0].eps, eps_to: w[1].eps, factor, ratio, pass }
        })
        .collect();
    let scaling_violation = scaling.iter().any(|s| !s.pass);
    let c0 = reports.iter().map(|r| r.c0).fold(0.0, f64::max);
    Ok(Theorem1Report { reports, scaling, scaling_violation, c0 })
}

/// The shipped test case: the affine horseshoe on `[-1.5, 2.5] × [-2, 2]`
/// with `J_a = u² + v²` and `J_b = (v - 1)² + u²` (unit periods, codes `a`
/// and `b`), and the three-segment path from `(0.5, 0)` following
/// `J_a, J_b, J_a` for `0.6, 0.8, 0.5`.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    /// The maps before mollification.
    pub sys: CrossFormSystem,
    pub gens: SlowGeneratorSet,
    /// Validated.
    pub path: AccessiblePath,
    pub config: Theorem1Config,
}

pub fn synthetic_scenario() -> Result<SyntheticScenario> {
    let domain = Domain::new_box(vec![-1.5, -2.0], vec![2.5, 2.0])?;
    let generators = circle_generators(&domain)?;
    let gens = SlowGeneratorSet::new(generators.to_vec())?;
    let sys = affine_horseshoe(AffineHorseshoeParams::default(), generators, domain)?;
    let path = AccessiblePath::from_durations(SlowPoint::planar(0.5, 0.0), &[(0, 0.6), (1, 0.8), (0, 0.5)]);
    let path = path_validate(&path, &gens)?;
    Ok(SyntheticScenario { sys, gens, path, config: Theorem1Config::default() })
}
