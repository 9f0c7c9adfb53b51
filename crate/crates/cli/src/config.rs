//! Experiment configuration: one TOML or JSON document with a versioned
//! schema. Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slowdrift::horseshoe::{parse_word, Code};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    LemmaStab,
    ActionIdentity,
    Floquet,
    HorseshoeLemmas,
    Theorem1,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::LemmaStab,
        PipelineKind::ActionIdentity,
        PipelineKind::Floquet,
        PipelineKind::HorseshoeLemmas,
        PipelineKind::Theorem1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::LemmaStab => "lemma_stab",
            PipelineKind::ActionIdentity => "action_identity",
            PipelineKind::Floquet => "floquet",
            PipelineKind::HorseshoeLemmas => "horseshoe_lemmas",
            PipelineKind::Theorem1 => "theorem1",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown pipeline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: String,
    /// Pipeline run by `slowdrift run`; the other subcommands choose their own.
    #[serde(default)]
    pub pipeline: Option<PipelineKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "circle_generators")]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub horseshoe: HorseshoeSpec,
    #[serde(default)]
    pub path: Option<PathSpec>,
    #[serde(default)]
    pub stab: StabSpec,
    #[serde(default)]
    pub identity: IdentitySpec,
    #[serde(default)]
    pub floquet: FloquetSpec,
    #[serde(default)]
    pub planner: Option<PlannerSpec>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] }
    }
}

/// `constant + linear · z + z·hessian·z / 2` with `z = (v.., u..)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    #[serde(default)]
    pub constant: f64,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub hessian: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessSpec {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `H = omega(z) (p² + q²) / 2 - E(z)`.
    Oscillator { omega: QuadraticSpec, energy: QuadraticSpec, guess: GuessSpec },
    /// A rotation in `(p2, q2)` times a saddle of rate `lambda` in `(p1, q1)`.
    Saddle { lambda: f64, omega: f64, energy: f64, guess: GuessSpec },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Oscillator {
            omega: QuadraticSpec { constant: 1.0, linear: vec![0.1, 0.2], hessian: None },
            energy: QuadraticSpec {
                constant: 1.0,
                linear: vec![0.0, 0.0],
                hessian: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            },
            guess: GuessSpec { p: vec![1.5], q: vec![0.0], period: 6.0 },
        }
    }
}

/// A closed-form action `J` with constant period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub label: String,
    #[serde(flatten)]
    pub action: QuadraticSpec,
    #[serde(default = "one")]
    pub period: f64,
}

fn one() -> f64 {
    1.0
}

fn circle_generators() -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec {
            label: "J_a = u^2 + v^2".into(),
            action: QuadraticSpec {
                constant: 0.0,
                linear: vec![0.0, 0.0],
                hessian: Some(vec![vec![2.0, 0.0], vec![0.0, 2.0]]),
            },
            period: 1.0,
        },
        GeneratorSpec {
            label: "J_b = (v - 1)^2 + u^2".into(),
            action: QuadraticSpec {
                constant: 1.0,
                linear: vec![-2.0, 0.0],
                hessian: Some(vec![vec![2.0, 0.0], vec![0.0, 2.0]]),
            },
            period: 1.0,
        },
    ]
}

/// Affine horseshoe coefficients (per-pair arrays in the order aa, ab, ba,
/// bb) and the solver settings of the horseshoe checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorseshoeSpec {
    pub fx: f64,
    pub fy: f64,
    pub gx: f64,
    pub gy: f64,
    pub f0: [f64; 4],
    pub g0: [f64; 4],
    pub fz: [f64; 2],
    pub gz: [f64; 2],
    pub feps: f64,
    pub geps: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub radius: f64,
    /// Width of the boundary layer where slow increments are cut off.
    pub mollifier: f64,
    /// Surface grid nodes per axis.
    pub resolution: usize,
    pub contraction_samples: usize,
    /// Codes whose orbits are solved at `orbit_z`.
    pub orbit_codes: Vec<String>,
    pub orbit_z: Vec<f64>,
    /// Random code pairs for the mixing bound.
    pub mix_pairs: usize,
    pub mix_max_block: usize,
    /// Code whose invariant surfaces are compared across `eps`.
    pub surface_code: String,
    /// Slow time of the shared block in the block-closeness check.
    pub block_time: f64,
    pub block_z: Vec<f64>,
}

impl Default for HorseshoeSpec {
    fn default() -> Self {
        let p = slowdrift::horseshoe::AffineHorseshoeParams::default();
        HorseshoeSpec {
            fx: p.fx,
            fy: p.fy,
            gx: p.gx,
            gy: p.gy,
            f0: p.f0,
            g0: p.g0,
            fz: p.fz,
            gz: p.gz,
            feps: p.feps,
            geps: p.geps,
            kappa: p.kappa,
            lambda: p.lambda,
            radius: p.radius,
            mollifier: 0.2,
            resolution: 33,
            contraction_samples: 7,
            orbit_codes: vec!["a".into(), "ab".into(), "a|abbab|b".into(), "ab|aab|b@-1".into()],
            orbit_z: vec![0.5, 0.0],
            mix_pairs: 100,
            mix_max_block: 8,
            surface_code: "a|abb|b".into(),
            block_time: 0.5,
            block_z: vec![0.5, 0.0],
        }
    }
}

impl HorseshoeSpec {
    pub fn params(&self) -> slowdrift::horseshoe::AffineHorseshoeParams {
        slowdrift::horseshoe::AffineHorseshoeParams {
            fx: self.fx,
            fy: self.fy,
            gx: self.gx,
            gy: self.gy,
            f0: self.f0,
            g0: self.g0,
            fz: self.fz,
            gz: self.gz,
            feps: self.feps,
            geps: self.geps,
            kappa: self.kappa,
            lambda: self.lambda,
            radius: self.radius,
        }
    }
}

/// An accessible path and the orbit codes behind its generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub z0: Vec<f64>,
    /// `(generator, duration)` per segment.
    pub segments: Vec<(usize, f64)>,
    /// Periodic code of the orbit family behind each generator.
    pub codes: Vec<String>,
    /// Word repeated after the planned prefix; the last block's word when absent.
    #[serde(default)]
    pub continuation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabSpec {
    pub z0: Vec<f64>,
    pub horizon: f64,
    pub samples: usize,
    /// Grid nodes per axis of the action field.
    pub resolution: usize,
    pub integrator_tol: f64,
}

impl Default for StabSpec {
    fn default() -> Self {
        StabSpec { z0: vec![0.2, 0.1], horizon: 1.0, samples: 1000, resolution: 21, integrator_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitySpec {
    /// Random points of the domain, drawn from `seed`.
    pub points: usize,
    /// Central-difference step.
    pub step: f64,
    /// Points are drawn this far inside the boundary.
    pub inset: f64,
}

impl Default for IdentitySpec {
    fn default() -> Self {
        IdentitySpec { points: 10, step: 1e-4, inset: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloquetSpec {
    pub lambdas: Vec<f64>,
    pub omega: f64,
    pub energy: f64,
    pub z: Vec<f64>,
    pub guess: GuessSpec,
}

impl Default for FloquetSpec {
    fn default() -> Self {
        FloquetSpec {
            lambdas: vec![0.25, 0.5, 1.0],
            omega: 1.0,
            energy: 1.0,
            z: vec![0.0, 0.0],
            guess: GuessSpec { p: vec![0.0, 1.5], q: vec![0.0, 0.0], period: 6.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub pair: [usize; 2],
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub tau_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    /// Code in the `left|core|right@start` notation.
    pub code: String,
    pub z0: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Band for the error ratio under halving of `eps`.
    pub halving_ratio: (f64, f64),
    /// Band for a measured constant under halving of `eps`.
    pub constant_ratio: (f64, f64),
    pub identity: f64,
    pub floquet: f64,
    pub orbit_residual: f64,
    pub convergence_slack: f64,
    pub surface_residual: f64,
    /// Largest allowed max/min of `K₁` across `eps`.
    pub k1_spread: f64,
    pub planner: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            halving_ratio: (1.5, 3.0),
            constant_ratio: (0.5, 2.0),
            identity: 1e-6,
            floquet: 1e-6,
            orbit_residual: 1e-12,
            convergence_slack: 1e-3,
            surface_residual: 1e-8,
            k1_spread: 2.0,
            planner: 1e-6,
        }
    }
}

/// A parsed configuration with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Lowercase hex SHA-256 of the source bytes.
    pub hash: String,
    /// File path, or `builtin:<name>` for shipped defaults.
    pub source: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `text` as JSON when it starts with `{`, as TOML otherwise, and
/// validates the result.
pub fn parse_config(text: &str, source: impl Into<String>) -> Result<LoadedConfig> {
    let source = source.into();
    let config: ExperimentConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?
    };
    config.validate()?;
    Ok(LoadedConfig { config, hash: sha256_hex(text.as_bytes()), source })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.display().to_string())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Box { lo, .. } => lo.len(),
            DomainSpec::Ball { center, .. } => center.len(),
        }
    }
}

impl QuadraticSpec {
    fn validate(&self, dim: usize, what: &str) -> Result<()> {
        check(self.linear.len() == dim, || format!("{what}: linear part needs {dim} entries"))?;
        if let Some(h) = &self.hessian {
            check(h.len() == dim && h.iter().all(|r| r.len() == dim), || {
                format!("{what}: hessian must be {dim}×{dim}")
            })?;
        }
        let finite = self.constant.is_finite()
            && self.linear.iter().all(|x| x.is_finite())
            && self.hessian.iter().flatten().flatten().all(|x| x.is_finite());
        check(finite, || format!("{what}: coefficients must be finite"))
    }
}

fn point(z: &[f64], dim: usize, what: &str) -> Result<()> {
    check(z.len() == dim && z.iter().all(|x| x.is_finite()), || format!("{what} needs {dim} finite coordinates"))
}

fn positive(x: f64, what: &str) -> Result<()> {
    check(x > 0.0 && x.is_finite(), || format!("{what} must be positive, got {x}"))
}

impl ExperimentConfig {
    /// Schema checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        check(self.schema_version == SCHEMA_VERSION, || {
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version)
        })?;
        check(!self.scenario.is_empty(), || "scenario name is empty".into())?;
        for &e in &self.eps {
            check(e > 0.0 && e.is_finite(), || format!("eps values must be positive and finite, got {e}"))?;
        }
        let dim = self.domain.dim();
        check(dim >= 2 && dim % 2 == 0, || "the domain needs an even dimension of at least 2".into())?;
        match &self.domain {
            DomainSpec::Box { lo, hi } => {
                check(lo.len() == hi.len(), || "domain lo and hi differ in length".into())?;
                check(lo.iter().zip(hi).all(|(a, b)| a < b), || "domain needs lo < hi in every coordinate".into())?;
            }
            DomainSpec::Ball { radius, .. } => positive(*radius, "domain radius")?,
        }
        match &self.model {
            ModelSpec::Oscillator { omega, energy, guess } => {
                omega.validate(dim, "model omega")?;
                energy.validate(dim, "model energy")?;
                positive(guess.period, "orbit guess period")?;
            }
            ModelSpec::Saddle { lambda, omega, energy, guess } => {
                positive(*lambda, "saddle lambda")?;
                positive(*omega, "saddle omega")?;
                positive(*energy, "saddle energy")?;
                positive(guess.period, "orbit guess period")?;
            }
        }
        for g in &self.generators {
            g.action.validate(dim, &format!("generator {:?}", g.label))?;
            positive(g.period, "generator period")?;
        }
        let h = &self.horseshoe;
        check(h.lambda > 0.0 && h.lambda < 1.0, || format!("horseshoe lambda must lie in (0, 1), got {}", h.lambda))?;
        positive(h.radius, "horseshoe radius")?;
        positive(h.mollifier, "horseshoe mollifier")?;
        check(h.resolution >= 2, || "surface resolution must be at least 2".into())?;
        check(h.mix_max_block >= 1, || "mix_max_block must be at least 1".into())?;
        positive(h.block_time, "block_time")?;
        for c in h.orbit_codes.iter().chain([&h.surface_code]) {
            parse_code(c)?;
        }
        point(&h.orbit_z, dim, "horseshoe orbit_z")?;
        point(&h.block_z, dim, "horseshoe block_z")?;
        if let Some(p) = &self.path {
            point(&p.z0, dim, "path z0")?;
            for &(k, d) in &p.segments {
                check(k < self.generators.len(), || {
                    format!("path segment uses generator {k} of {}", self.generators.len())
                })?;
                check(d >= 0.0 && d.is_finite(), || format!("segment durations must be nonnegative, got {d}"))?;
            }
            check(p.codes.len() == self.generators.len(), || "path needs one orbit code per generator".into())?;
            for c in p.codes.iter().chain(&p.continuation) {
                parse_word(c).map_err(|e| CliError::Config(format!("bad word {c:?}: {e}")))?;
            }
        }
        point(&self.stab.z0, dim, "stab z0")?;
        positive(self.stab.horizon, "stab horizon")?;
        check(self.stab.samples > 0, || "stab samples must be positive".into())?;
        check(self.stab.resolution >= 2, || "stab resolution must be at least 2".into())?;
        positive(self.stab.integrator_tol, "stab integrator_tol")?;
        positive(self.identity.step, "identity step")?;
        check(self.identity.inset >= 0.0, || "identity inset must be nonnegative".into())?;
        for &l in &self.floquet.lambdas {
            positive(l, "floquet lambda")?;
        }
        point(&self.floquet.z, dim, "floquet z")?;
        if let Some(p) = &self.planner {
            point(&p.z0, dim, "planner z0")?;
            point(&p.z1, dim, "planner z1")?;
            check(p.pair.iter().all(|&k| k < self.generators.len()), || {
                "planner pair names a missing generator".into()
            })?;
        }
        if let Some(d) = &self.drift {
            parse_code(&d.code)?;
            point(&d.z0, dim, "drift z0")?;
        }
        let t = &self.tolerances;
        for (name, (lo, hi)) in [("halving_ratio", t.halving_ratio), ("constant_ratio", t.constant_ratio)] {
            check(lo > 0.0 && hi >= lo, || format!("tolerance band {name} must satisfy 0 < lo <= hi"))?;
        }
        Ok(())
    }

    pub fn with_eps(mut self, eps: Vec<f64>) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }
}

pub fn parse_code(s: &str) -> Result<Code> {
    s.parse::<Code>().map_err(|e| CliError::Config(format!("bad code {s:?}: {e}")))
}

/// Parses a comma-separated list such as `1e-2,5e-3`.
pub fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let v: f64 = x.trim().parse().map_err(|_| CliError::Config(format!("bad eps value {x:?}")))?;
            check(v > 0.0 && v.is_finite(), || format!("eps values must be positive and finite, got {v}"))?;
            Ok(v)
        })
        .collect()
}

/// Shipped scenario configurations, by file stem.
pub const BUILTIN: [(&str, &str); 7] = [
    ("lemma_stab", include_str!("../scenarios/lemma_stab.toml")),
    ("action_identity", include_str!("../scenarios/action_identity.toml")),
    ("floquet", include_str!("../scenarios/floquet.toml")),
    ("horseshoe_lemmas", include_str!("../scenarios/horseshoe_lemmas.toml")),
    ("theorem1", include_str!("../scenarios/theorem1.toml")),
    ("path_plan", include_str!("../scenarios/path_plan.toml")),
    ("drift", include_str!("../scenarios/drift.json")),
];

pub fn builtin(name: &str) -> Result<LoadedConfig> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Config(format!("no shipped scenario named {name:?}")))?;
    parse_config(text, format!("builtin:{name}"))
}
