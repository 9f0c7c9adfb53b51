//! Assembly of models, generators and maps from a validated configuration.

use std::sync::Arc;

use slowdrift::horseshoe::{affine_horseshoe, parse_word, CrossFormSystem, Symbol};
use slowdrift::model::{builtin_oscillator, builtin_saddle_oscillator};
use slowdrift::orbit::OrbitGuess;
use slowdrift::shadow::Continuation;
use slowdrift::slowdrive::{path_validate, AccessiblePath, AnalyticGenerator, SlowGenerator, SlowGeneratorSet};
use slowdrift::{Domain, FastPoint, HamiltonianModel, SlowField, SlowPoint};

use crate::config::{DomainSpec, ExperimentConfig, GuessSpec, ModelSpec, QuadraticSpec};
use crate::error::{CliError, Result};

pub fn slow_point(z: &[f64]) -> SlowPoint {
    SlowPoint::from_flat(z)
}

pub fn domain(spec: &DomainSpec) -> Result<Domain> {
    let d = match spec {
        DomainSpec::Box { lo, hi } => Domain::new_box(lo.clone(), hi.clone()),
        DomainSpec::Ball { center, radius } => Domain::new_ball(center.clone(), *radius),
    };
    d.map_err(|e| CliError::Config(format!("domain: {e}")))
}

fn field(spec: &QuadraticSpec) -> Result<SlowField> {
    let n = spec.linear.len();
    let hessian = spec.hessian.clone().unwrap_or_else(|| vec![vec![0.0; n]; n]);
    SlowField::quadratic(spec.constant, spec.linear.clone(), hessian).map_err(|e| CliError::Config(e.to_string()))
}

pub fn guess(spec: &GuessSpec) -> OrbitGuess {
    OrbitGuess::new(FastPoint::new(spec.p.clone(), spec.q.clone()), spec.period)
}

/// The Hamiltonian of `[model]` with its orbit guess.
pub fn model(cfg: &ExperimentConfig) -> Result<(HamiltonianModel, OrbitGuess)> {
    let dom = domain(&cfg.domain)?;
    match &cfg.model {
        ModelSpec::Oscillator { omega, energy, guess: g } => {
            let m = builtin_oscillator(field(omega)?, field(energy)?, &dom)?;
            Ok((m, guess(g)))
        }
        ModelSpec::Saddle { lambda, omega, energy, guess: g } => {
            Ok((builtin_saddle_oscillator(*lambda, *omega, *energy)?, guess(g)))
        }
    }
}

pub fn generators(cfg: &ExperimentConfig) -> Result<Vec<Arc<dyn SlowGenerator>>> {
    let dom = domain(&cfg.domain)?;
    cfg.generators
        .iter()
        .map(|g| {
            let period = SlowField::constant(dom.slow_dof(), g.period);
            let gen = AnalyticGenerator::new(g.label.clone(), field(&g.action)?, period, dom.clone())?;
            Ok(Arc::new(gen) as Arc<dyn SlowGenerator>)
        })
        .collect()
}

pub fn generator_set(cfg: &ExperimentConfig) -> Result<SlowGeneratorSet> {
    Ok(SlowGeneratorSet::new(generators(cfg)?)?)
}

/// The affine horseshoe over `[domain]`, driven by the first two generators,
/// before mollification.
pub fn horseshoe(cfg: &ExperimentConfig) -> Result<CrossFormSystem> {
    let gens = generators(cfg)?;
    let pair: [Arc<dyn SlowGenerator>; 2] = match gens.as_slice() {
        [a, b] => [a.clone(), b.clone()],
        _ => return Err(CliError::Config(format!("the affine horseshoe needs 2 generators, got {}", gens.len()))),
    };
    Ok(affine_horseshoe(cfg.horseshoe.params(), pair, domain(&cfg.domain)?)?)
}

/// The validated path of `[path]`, its orbit codes and continuation.
pub fn path(
    cfg: &ExperimentConfig,
    gens: &SlowGeneratorSet,
) -> Result<(AccessiblePath, Vec<Vec<Symbol>>, Continuation)> {
    let spec = cfg.path.as_ref().ok_or_else(|| CliError::Config("this pipeline needs a [path] section".into()))?;
    let raw = AccessiblePath::from_durations(slow_point(&spec.z0), &spec.segments);
    let path = path_validate(&raw, gens)?;
    let word = |s: &String| parse_word(s).map_err(|e| CliError::Config(e.to_string()));
    let codes = spec.codes.iter().map(word).collect::<Result<Vec<_>>>()?;
    let continuation = match &spec.continuation {
        Some(w) => Continuation::Word(word(w)?),
        None => Continuation::RepeatLast,
    };
    Ok((path, codes, continuation))
}
