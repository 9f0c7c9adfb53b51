//! The verification pipelines and the single-purpose tasks behind the
//! subcommands. Each returns the files it produced and its checks; nothing
//! here touches the file system.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowdrift::flow::IntegratorConfig;
use slowdrift::horseshoe::{
    check_contraction, invariant_surfaces, mix_check, mollify, orbit_for_code, Code, CrossFormSystem,
    OrbitSolverConfig, SurfaceConfig, Symbol,
};
use slowdrift::model::builtin_saddle_oscillator;
use slowdrift::orbit::{
    action, action_gradient, build_action_field, find_periodic_orbit, floquet, ContinuationConfig, OrbitConfig,
    PeriodicOrbit,
};
use slowdrift::shadow::{
    block_compare, drift_run, homogeneous_run, lemma_stab, verify_theorem1, StabConfig, Theorem1Config,
};
use slowdrift::slowdrive::{path_eval, path_validate, plan_level_lines, PlannerConfig};
use slowdrift::{Error, HamiltonianModel, SlowPoint};

use crate::artifacts::{fmt_f64, Check, PipelineOutput};
use crate::config::{parse_code, ExperimentConfig, PipelineKind};
use crate::error::{CliError, Result};
use crate::scenario;

/// What a run does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Pipeline(PipelineKind),
    /// Level-line path between two points.
    PathPlan,
    /// Slow drift along one code.
    DriftRun,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pipeline(p) => p.name(),
            Task::PathPlan => "path_plan",
            Task::DriftRun => "drift_run",
        }
    }
}

pub fn run_task(task: Task, cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    match task {
        Task::Pipeline(PipelineKind::LemmaStab) => lemma_stab_pipeline(cfg),
        Task::Pipeline(PipelineKind::ActionIdentity) => action_identity(cfg),
        Task::Pipeline(PipelineKind::Floquet) => floquet_pipeline(cfg),
        Task::Pipeline(PipelineKind::HorseshoeLemmas) => horseshoe_lemmas(cfg),
        Task::Pipeline(PipelineKind::Theorem1) => theorem1(cfg),
        Task::PathPlan => path_plan(cfg),
        Task::DriftRun => drift(cfg),
    }
}

fn need_eps(cfg: &ExperimentConfig) -> Result<&[f64]> {
    if cfg.eps.is_empty() {
        Err(CliError::Config("this pipeline needs a nonempty eps list".into()))
    } else {
        Ok(&cfg.eps)
    }
}

fn eps_tag(eps: f64) -> String {
    format!("{eps:e}")
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> slowdrift::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Consecutive ratios `m_i / m_{i+1}` judged against `band` scaled by
/// `(eps_i / eps_{i+1}) / 2`, so that the band is the halving band.
fn scaling_ratios(eps: &[f64], measured: &[f64], band: (f64, f64)) -> Vec<(Option<f64>, bool)> {
    let mut out = vec![(None, true)];
    for i in 1..measured.len() {
        let f = eps[i - 1] / eps[i] / 2.0;
        let (a, b) = (measured[i - 1], measured[i]);
        if a == 0.0 && b == 0.0 {
            out.push((None, true));
        } else {
            let r = a / b;
            out.push((Some(r), r >= band.0 * f && r <= band.1 * f));
        }
    }
    out
}

fn lemma_stab_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let eps_list = need_eps(cfg)?;
    let (model, guess) = scenario::model(cfg)?;
    let dom = scenario::domain(&cfg.domain)?;
    let spec = &cfg.stab;
    let z0 = scenario::slow_point(&spec.z0);
    let orbit = find_periodic_orbit(&model, &z0, &guess, &OrbitConfig::default())?;
    let cont = ContinuationConfig { resolution: spec.resolution, ..Default::default() };
    let field = build_action_field(&model, "J", &orbit, &dom, &cont)?;
    let stab_cfg = StabConfig {
        integrator: IntegratorConfig::with_tol(spec.integrator_tol),
        horizon: spec.horizon,
        samples: spec.samples,
    };

    let mut out = PipelineOutput::default();
    let mut errors = Vec::new();
    let mut cylinders = Vec::new();
    for &eps in eps_list {
        let r = lemma_stab(&model, &field, &orbit, eps, &stab_cfg)?;
        out.file(format!("stab_{}.csv", eps_tag(eps)), "stab", to_bytes(|b| r.write_csv(b))?);
        errors.push((eps, r.max_error, r.c2));
        cylinders.push((eps, r.max_cylinder_distance, r.c1));
    }
    let measured: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let band = cfg.tolerances.halving_ratio;
    for ((eps, err, c2), (ratio, pass)) in errors.into_iter().zip(scaling_ratios(eps_list, &measured, band)) {
        let bound = format!("ratio in [{}; {}] under halving", band.0, band.1);
        out.checks.push(
            Check::new("lemma_stab tracking error", err, bound, pass && err.is_finite())
                .at_eps(eps)
                .with_constant(c2)
                .with_ratio(ratio),
        );
    }
    for (eps, d, c1) in cylinders {
        // the distance vanishes up to integration error, so only its size is judged
        out.checks.push(
            Check::new("lemma_stab cylinder distance", d, "measured/eps <= 1", c1 <= 1.0).at_eps(eps).with_constant(c1),
        );
    }
    Ok(out)
}

/// Follows the orbit at `from` along the straight segment to `to`, warm
/// starting each solve from the previous orbit.
fn continue_orbit(
    model: &HamiltonianModel,
    start: &PeriodicOrbit,
    from: &[f64],
    to: &[f64],
    cfg: &OrbitConfig,
) -> Result<PeriodicOrbit> {
    const STEPS: usize = 8;
    let mut orbit = start.clone();
    for k in 1..=STEPS {
        let s = k as f64 / STEPS as f64;
        let z: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect();
        orbit = find_periodic_orbit(model, &SlowPoint::from_flat(&z), &orbit.guess(), cfg)?;
    }
    Ok(orbit)
}

fn action_identity(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::default();
    identity_stage(cfg, &mut out)?;
    action_field_stage(cfg, &mut out)?;
    Ok(out)
}

/// The gradient identity at random points, without the action field map.
pub fn identity_stage(cfg: &ExperimentConfig, out: &mut PipelineOutput) -> Result<()> {
    let (model, guess) = scenario::model(cfg)?;
    let dom = scenario::domain(&cfg.domain)?;
    let spec = &cfg.identity;
    let (lo, hi) = dom.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let orbit_cfg = OrbitConfig::default();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let seed_orbit = find_periodic_orbit(&model, &SlowPoint::from_flat(&center), &guess, &orbit_cfg)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut drawn = 0;
    while rows.len() < spec.points {
        drawn += 1;
        if drawn > 1000 * spec.points.max(1) {
            return Err(CliError::Config("no sample points found inside the inset domain".into()));
        }
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(a + spec.inset..b - spec.inset)).collect();
        let z = SlowPoint::from_flat(&x);
        if dom.boundary_distance(&z) < spec.inset {
            continue;
        }
        let orbit = continue_orbit(&model, &seed_orbit, &center, &x, &orbit_cfg)?;
        let j = action(&orbit)?;
        let g = action_gradient(&model, &orbit)?.to_flat();
        let h = spec.step;
        let mut fd = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let at = |s: f64| -> Result<f64> {
                let mut y = x.clone();
                y[k] += s * h;
                Ok(action(&find_periodic_orbit(&model, &SlowPoint::from_flat(&y), &orbit.guess(), &orbit_cfg)?)?)
            };
            fd.push((at(1.0)? - at(-1.0)?) / (2.0 * h));
        }
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let rel = diff / norm.max(1e-3);
        worst = worst.max(rel);
        let mut row: Vec<String> = x.iter().copied().map(fmt_f64).collect();
        row.push(fmt_f64(j));
        row.push(fmt_f64(orbit.period));
        row.extend(g.iter().chain(&fd).copied().map(fmt_f64));
        row.push(fmt_f64(rel));
        rows.push(row);
    }
    let d = dom.slow_dof();
    let names = |p: &str| -> Vec<String> {
        let n = |s: &str, i: usize| if d == 1 { format!("{p}{s}") } else { format!("{p}{s}{}", i + 1) };
        (0..d).map(|i| n("v", i)).chain((0..d).map(|i| n("u", i))).collect()
    };
    let header =
        [names(""), vec!["action".into(), "period".into()], names("grad_"), names("fd_"), vec!["rel_error".into()]]
            .concat()
            .join(",");
    out.file("identity.csv", "action_identity", csv(&header, rows));
    let tol = cfg.tolerances.identity;
    out.checks.push(Check::new("action gradient identity", worst, format!("relative error <= {tol:e}"), worst <= tol));
    Ok(())
}

fn action_field_stage(cfg: &ExperimentConfig, out: &mut PipelineOutput) -> Result<()> {
    let (model, guess) = scenario::model(cfg)?;
    let dom = scenario::domain(&cfg.domain)?;
    let (lo, hi) = dom.bounding_box();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let seed_orbit = find_periodic_orbit(&model, &SlowPoint::from_flat(&center), &guess, &OrbitConfig::default())?;
    let cont = ContinuationConfig { resolution: cfg.stab.resolution, ..Default::default() };
    let field = build_action_field(&model, "J", &seed_orbit, &dom, &cont)?;
    out.file("action_field.csv", "action_field", to_bytes(|b| field.write_csv(b))?);
    Ok(())
}

fn floquet_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let spec = &cfg.floquet;
    let z = scenario::slow_point(&spec.z);
    let guess = scenario::guess(&spec.guess);
    let orbit_cfg = OrbitConfig::default();
    let tol = cfg.tolerances.floquet;
    let mut out = PipelineOutput::default();
    let mut rows = Vec::new();
    for &lambda in &spec.lambdas {
        let model = builtin_saddle_oscillator(lambda, spec.omega, spec.energy)?;
        let orbit = find_periodic_orbit(&model, &z, &guess, &orbit_cfg)?;
        let f = floquet(&model, &orbit, &orbit_cfg)?;
        let mut nt: Vec<f64> = f.nontrivial().iter().map(|m| m.re).collect();
        nt.sort_by(f64::total_cmp);
        let t = orbit.period;
        let expected = [(-lambda * t).exp(), (lambda * t).exp()];
        let rel = nt.iter().zip(expected).map(|(m, e)| ((m - e) / e).abs()).fold(0.0, f64::max);
        let mut row = vec![fmt_f64(lambda), fmt_f64(t)];
        for m in &f.multipliers {
            row.push(fmt_f64(m.re));
            row.push(fmt_f64(m.im));
        }
        row.extend([fmt_f64(expected[0]), fmt_f64(expected[1]), fmt_f64(rel), f.hyperbolic.to_string()]);
        rows.push(row);
        let samples = orbit.samples.iter().enumerate().map(|(k, w)| {
            let mut r = vec![k.to_string()];
            r.extend(w.to_flat().into_iter().map(fmt_f64));
            r
        });
        out.file(format!("orbit_lambda_{}.csv", eps_tag(lambda)), "orbit", csv("k,p1,p2,q1,q2", samples));
        out.checks.push(Check::new(
            format!("floquet multipliers lambda={lambda}"),
            rel,
            format!("relative error <= {tol:e}"),
            rel <= tol && f.hyperbolic,
        ));
    }
    let header = "lambda,period,mu1_re,mu1_im,mu2_re,mu2_im,mu3_re,mu3_im,mu4_re,mu4_im,expected_lo,expected_hi,rel_error,hyperbolic";
    out.files.insert(
        0,
        crate::artifacts::OutputFile { name: "floquet.csv".into(), role: "floquet".into(), bytes: csv(header, rows) },
    );
    Ok(out)
}

/// Two codes sharing the block `|i| <= n`, free around it.
fn random_code_pair(rng: &mut ChaCha8Rng, max_block: usize) -> Result<(Code, Code, i64)> {
    let n = rng.gen_range(1..=max_block) as i64;
    let mut word = |lo: usize, hi: usize| -> Vec<Symbol> {
        let len = rng.gen_range(lo..=hi);
        (0..len).map(|_| if rng.gen_bool(0.5) { Symbol::A } else { Symbol::B }).collect()
    };
    let block = word(2 * n as usize + 1, 2 * n as usize + 1);
    let make = |word: &mut dyn FnMut(usize, usize) -> Vec<Symbol>| -> Result<Code> {
        let pre = word(0, 4);
        let post = word(0, 4);
        let (l, r) = (word(1, 3), word(1, 3));
        let start = -n - pre.len() as i64;
        Ok(Code::new(l, [pre, block.clone(), post].concat(), r, start)?)
    };
    let c1 = make(&mut word)?;
    let c2 = make(&mut word)?;
    Ok((c1, c2, n))
}

fn surface_config(cfg: &ExperimentConfig) -> SurfaceConfig {
    SurfaceConfig { resolution: cfg.horseshoe.resolution, ..Default::default() }
}

fn shifted(z: &SlowPoint, by: f64) -> SlowPoint {
    let mut flat = z.to_flat();
    flat[0] += by;
    SlowPoint::from_flat(&flat)
}

/// The parts of the horseshoe pipeline, in the order it runs them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorseshoeStage {
    /// Contraction constant and orbits for the configured codes.
    Contraction,
    /// Random code pairs against the mixing bound.
    Mix,
    /// Invariant surfaces and their distance to the frozen ones.
    Surfaces,
    /// Block closeness constant of a long homogeneous block.
    Blocks,
}

impl HorseshoeStage {
    pub const ALL: [HorseshoeStage; 4] =
        [HorseshoeStage::Contraction, HorseshoeStage::Mix, HorseshoeStage::Surfaces, HorseshoeStage::Blocks];
}

fn horseshoe_lemmas(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::default();
    for stage in HorseshoeStage::ALL {
        horseshoe_stage(cfg, stage, &mut out)?;
    }
    Ok(out)
}

/// Runs one stage of the horseshoe pipeline, appending its files and checks.
pub fn horseshoe_stage(cfg: &ExperimentConfig, stage: HorseshoeStage, out: &mut PipelineOutput) -> Result<()> {
    let sys = scenario::horseshoe(cfg)?;
    match stage {
        HorseshoeStage::Contraction => contraction_stage(cfg, &sys, out),
        HorseshoeStage::Mix => mix_stage(cfg, &sys, out),
        HorseshoeStage::Surfaces => surface_stage(cfg, &mollify(&sys, cfg.horseshoe.mollifier)?, out),
        HorseshoeStage::Blocks => block_stage(cfg, &mollify(&sys, cfg.horseshoe.mollifier)?, out),
    }
}

fn contraction_stage(cfg: &ExperimentConfig, sys: &CrossFormSystem, out: &mut PipelineOutput) -> Result<()> {
    let spec = &cfg.horseshoe;
    let tol = &cfg.tolerances;
    let c = check_contraction(sys, spec.contraction_samples, 0.0)?;
    out.checks.push(Check::new("contraction constant", c.estimate, format!("<= lambda = {}", c.declared), c.pass));

    let orbit_cfg = OrbitSolverConfig::default();
    let z = scenario::slow_point(&spec.orbit_z);
    let mut rows = Vec::new();
    for s in &spec.orbit_codes {
        let o = orbit_for_code(sys, &parse_code(s)?, &z, None, &orbit_cfg)?;
        rows.push(vec![
            s.clone(),
            fmt_f64(o.residual),
            o.iterations.to_string(),
            fmt_f64(o.convergence_factor),
            fmt_f64(o.sup_norm()),
        ]);
        out.checks.push(Check::new(
            format!("orbit residual {s}"),
            o.residual,
            format!("<= {:e}", tol.orbit_residual),
            o.residual <= tol.orbit_residual,
        ));
        let limit = spec.lambda + tol.convergence_slack;
        out.checks.push(Check::new(
            format!("convergence factor {s}"),
            o.convergence_factor,
            format!("<= lambda + {:e}", tol.convergence_slack),
            o.convergence_factor <= limit,
        ));
    }
    out.file("orbits.csv", "orbits", csv("code,residual,iterations,convergence_factor,sup_norm", rows));
    Ok(())
}

fn mix_stage(cfg: &ExperimentConfig, sys: &CrossFormSystem, out: &mut PipelineOutput) -> Result<()> {
    let spec = &cfg.horseshoe;
    let orbit_cfg = OrbitSolverConfig::default();
    let z = scenario::slow_point(&spec.orbit_z);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let (mut violations, mut worst) = (0usize, 0.0f64);
    for i in 0..spec.mix_pairs {
        let (c1, c2, n) = random_code_pair(&mut rng, spec.mix_max_block)?;
        let r = mix_check(sys, &c1, &c2, n, &z, None, &orbit_cfg)?;
        violations += r.violations;
        worst = worst.max(r.max_ratio);
        rows.push(vec![
            i.to_string(),
            c1.to_string(),
            c2.to_string(),
            n.to_string(),
            r.violations.to_string(),
            fmt_f64(r.max_ratio),
        ]);
    }
    out.file("mix.csv", "mix", csv("pair,code1,code2,n,violations,max_ratio", rows));
    out.checks.push(Check::new("mix bound violations", violations as f64, "= 0", violations == 0));
    out.checks.push(Check::new("mix largest ratio to bound", worst, "<= 1", worst <= 1.0));
    Ok(())
}

fn surface_stage(cfg: &ExperimentConfig, msys: &CrossFormSystem, out: &mut PipelineOutput) -> Result<()> {
    let eps_list = need_eps(cfg)?;
    let spec = &cfg.horseshoe;
    let tol = &cfg.tolerances;
    let scfg = surface_config(cfg);
    let code = parse_code(&spec.surface_code)?;
    let frozen = invariant_surfaces(msys, &code, 0.0, None, &scfg)?;
    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for &eps in eps_list {
        let fam = invariant_surfaces(msys, &code, eps, None, &scfg)?;
        let dist = fam.sup_distance(&frozen)?;
        rows.push(vec![
            fmt_f64(eps),
            fmt_f64(fam.residual),
            fam.sweeps.to_string(),
            fmt_f64(fam.slow_map_rate),
            fmt_f64(dist),
            fmt_f64(dist / eps),
        ]);
        out.checks.push(
            Check::new(
                "surface invariance residual",
                fam.residual,
                format!("<= {:e}", tol.surface_residual),
                fam.residual <= tol.surface_residual,
            )
            .at_eps(eps),
        );
        constants.push((eps, dist));
    }
    out.file("surfaces.csv", "surfaces", csv("eps,residual,sweeps,slow_map_rate,sup_distance,constant", rows));
    let band = tol.constant_ratio;
    let cs: Vec<f64> = constants.iter().map(|(e, d)| d / e).collect();
    for (i, &(eps, dist)) in constants.iter().enumerate() {
        let (ratio, pass) = if i == 0 {
            (None, true)
        } else {
            (Some(cs[i - 1] / cs[i]), (band.0..=band.1).contains(&(cs[i - 1] / cs[i])))
        };
        out.checks.push(
            Check::new("surface distance to eps=0", dist, format!("constant ratio in [{}; {}]", band.0, band.1), pass)
                .at_eps(eps)
                .with_constant(cs[i])
                .with_ratio(ratio),
        );
    }
    Ok(())
}

fn block_stage(cfg: &ExperimentConfig, msys: &CrossFormSystem, out: &mut PipelineOutput) -> Result<()> {
    let eps_list = need_eps(cfg)?;
    let spec = &cfg.horseshoe;
    let tol = &cfg.tolerances;
    let scfg = surface_config(cfg);
    let z0 = scenario::slow_point(&spec.block_z);
    let mut rows = Vec::new();
    let mut k1s = Vec::new();
    for &eps in eps_list {
        let n = (spec.block_time / eps).round() as usize;
        let core: Vec<Symbol> = std::iter::repeat(Symbol::A).take(n + 1).chain([Symbol::B; 4]).collect();
        let mixed_code = Code::new(vec![Symbol::A], core, vec![Symbol::B], 0)?;
        let fam = invariant_surfaces(msys, &mixed_code, eps, None, &scfg)?;
        let mixed = drift_run(msys, &fam, &z0, eps, n + 2)?;
        let pure = homogeneous_run(msys, Symbol::A, &shifted(&z0, eps), eps, n + 2, &scfg)?;
        let cmp = block_compare(&mixed, &pure, 0, n as f64 * eps)?;
        rows.push(vec![fmt_f64(eps), cmp.block_len.to_string(), fmt_f64(cmp.k0), fmt_f64(cmp.k1)]);
        k1s.push((eps, cmp.k1));
    }
    out.file("blocks.csv", "blocks", csv("eps,block_len,k0,k1", rows));
    let max = k1s.iter().map(|k| k.1).fold(0.0, f64::max);
    let min = k1s.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
    for &(eps, k1) in &k1s {
        out.checks.push(Check::new("block closeness K1", k1, "finite", k1.is_finite()).at_eps(eps));
    }
    let spread = max / min;
    out.checks.push(Check::new(
        "block closeness K1 spread",
        spread,
        format!("max/min <= {}", tol.k1_spread),
        spread <= tol.k1_spread,
    ));
    Ok(())
}

fn theorem1(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let eps_list = need_eps(cfg)?;
    let sys = scenario::horseshoe(cfg)?;
    let gens = scenario::generator_set(cfg)?;
    let (path, codes, continuation) = scenario::path(cfg, &gens)?;
    let (lo, hi) = cfg.tolerances.halving_ratio;
    let t1 = Theorem1Config {
        codes,
        mollifier: cfg.horseshoe.mollifier,
        surface: surface_config(cfg),
        continuation,
        scaling_band: (lo / 2.0, hi / 2.0),
        measure_k1: true,
    };
    let report = verify_theorem1(&sys, &gens, &path, eps_list, &t1)?;

    let mut out = PipelineOutput::default();
    out.file("path.csv", "path", to_bytes(|b| path.write_csv(b))?);
    for r in &report.reports {
        let tag = eps_tag(r.eps);
        out.file(format!("plan_{tag}.csv"), "plan", to_bytes(|b| r.plan.write_csv(b))?);
        out.file(format!("shadow_{tag}.csv"), "shadow", to_bytes(|b| r.write_csv(b))?);
    }
    out.file("theorem1_summary.csv", "summary", to_bytes(|b| report.write_summary_csv(b))?);

    for (i, r) in report.reports.iter().enumerate() {
        let (ratio, pass) = match i.checked_sub(1).map(|j| &report.scaling[j]) {
            Some(s) => (s.ratio, s.pass),
            None => (None, true),
        };
        out.checks.push(
            Check::new("theorem1 max error", r.max_error, format!("ratio in [{lo}; {hi}] under halving"), pass)
                .at_eps(r.eps)
                .with_constant(r.c0)
                .with_ratio(ratio),
        );
        let bound = report.c0 * r.eps;
        out.checks.push(
            Check::new("theorem1 endpoint error", r.endpoint_error, "<= C0 eps", r.endpoint_error <= bound)
                .at_eps(r.eps)
                .with_constant(r.endpoint_error / r.eps),
        );
        if let Some(k1) = r.k1 {
            out.checks.push(Check::new("theorem1 block K1", k1, "finite", k1.is_finite()).at_eps(r.eps));
        }
    }
    Ok(out)
}

fn path_plan(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let spec =
        cfg.planner.as_ref().ok_or_else(|| CliError::Config("path planning needs a [planner] section".into()))?;
    let gens = scenario::generator_set(cfg)?;
    let defaults = PlannerConfig::default();
    let pcfg = PlannerConfig {
        levels: spec.levels.unwrap_or(defaults.levels),
        tau_max: spec.tau_max.unwrap_or(defaults.tau_max),
        refine_tolerance: cfg.tolerances.planner,
        ..defaults
    };
    let (z0, z1) = (scenario::slow_point(&spec.z0), scenario::slow_point(&spec.z1));
    let mut out = PipelineOutput::default();
    match plan_level_lines(&gens, spec.pair, &z0, &z1, &pcfg) {
        Ok(path) => {
            let valid = path_validate(&path, &gens).is_ok();
            out.checks.push(Check::new("planned path validates", f64::from(u8::from(valid)), "= 1", valid));
            let end = path_eval(&path, &gens, path.duration())?;
            let miss = end.distance(&z1);
            out.file("path.csv", "path", to_bytes(|b| path.write_csv(b))?);
            let tol = cfg.tolerances.planner;
            out.checks.push(Check::new("planned path reaches target", miss, format!("<= {tol:e}"), miss <= tol));
        }
        Err(Error::NotAccessible(msg)) => {
            out.file("not_accessible.txt", "diagnostic", format!("{msg}\n").into_bytes());
            out.checks.push(Check::new("planned path reaches target", f64::INFINITY, "reachable", false));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

fn drift(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let eps_list = need_eps(cfg)?;
    let spec = cfg.drift.as_ref().ok_or_else(|| CliError::Config("drift runs need a [drift] section".into()))?;
    let sys: CrossFormSystem = mollify(&scenario::horseshoe(cfg)?, cfg.horseshoe.mollifier)?;
    let code = parse_code(&spec.code)?;
    let z0 = scenario::slow_point(&spec.z0);
    let tol = cfg.tolerances.surface_residual;
    let mut out = PipelineOutput::default();
    for &eps in eps_list {
        let fam = invariant_surfaces(&sys, &code, eps, None, &surface_config(cfg))?;
        let traj = drift_run(&sys, &fam, &z0, eps, spec.steps)?;
        out.file(format!("drift_{}.csv", eps_tag(eps)), "drift", to_bytes(|b| traj.write_csv(b))?);
        out.checks.push(
            Check::new("surface invariance residual", fam.residual, format!("<= {tol:e}"), fam.residual <= tol)
                .at_eps(eps),
        );
        let inside = traj.exit.is_none();
        out.checks.push(Check::new("drift stays in the domain", traj.steps() as f64, "no exit", inside).at_eps(eps));
    }
    Ok(out)
}
