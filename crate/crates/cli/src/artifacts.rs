//! Output directories: emitted files, the check table and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Floats in every CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt_f64)
}

/// One measured quantity with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub eps: Option<f64>,
    pub measured: f64,
    /// `measured / eps` where that is the quantity of interest.
    pub constant: Option<f64>,
    /// Ratio against the previous `eps`, for scaling checks.
    pub ratio: Option<f64>,
    /// Human-readable acceptance rule.
    pub bound: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: impl Into<String>, pass: bool) -> Self {
        Check { name: name.into(), eps: None, measured, constant: None, ratio: None, bound: bound.into(), pass }
    }

    pub fn at_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = Some(c);
        self
    }

    pub fn with_ratio(mut self, r: Option<f64>) -> Self {
        self.ratio = r;
        self
    }
}

/// A file produced by a pipeline, before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub role: String,
    pub bytes: Vec<u8>,
}

/// Everything a pipeline produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
}

impl PipelineOutput {
    pub fn file(&mut self, name: impl Into<String>, role: impl Into<String>, bytes: Vec<u8>) {
        self.files.push(OutputFile { name: name.into(), role: role.into(), bytes });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactFile {
    /// Relative to the output directory.
    pub path: String,
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub task: String,
    pub scenario: String,
    pub config_source: String,
    pub config_hash: String,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<ArtifactFile>,
}

/// A finished run: its directory, manifest and checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub checks: Vec<Check>,
}

pub const MANIFEST: &str = "manifest.json";
pub const CHECKS: &str = "checks.csv";

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn checks_csv(checks: &[Check]) -> Vec<u8> {
    let mut s = String::from("check,eps,measured,constant,ratio,bound,pass\n");
    for c in checks {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.name.replace(',', ";"),
            fmt_opt(c.eps),
            fmt_f64(c.measured),
            fmt_opt(c.constant),
            fmt_opt(c.ratio),
            c.bound.replace(',', ";"),
            c.pass
        )
        .expect("writing to a string");
    }
    s.into_bytes()
}

fn parse_checks(text: &str) -> Result<Vec<Check>> {
    let bad = |line: &str| CliError::Config(format!("malformed checks row {line:?}"));
    let num = |s: &str, line: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(line))
        }
    };
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(line));
            }
            Ok(Check {
                name: f[0].to_string(),
                eps: num(f[1], line)?,
                measured: num(f[2], line)?.ok_or_else(|| bad(line))?,
                constant: num(f[3], line)?,
                ratio: num(f[4], line)?,
                bound: f[5].to_string(),
                pass: f[6].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes the pipeline files, `checks.csv` and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, output: &PipelineOutput, mut manifest: Manifest) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let checks = checks_csv(&output.checks);
    let all =
        output.files.iter().map(|f| (f.name.as_str(), f.role.as_str(), &f.bytes)).chain([(CHECKS, "checks", &checks)]);
    manifest.files.clear();
    for (name, role, bytes) in all {
        if name.contains(['/', '\\']) || name == MANIFEST {
            return Err(CliError::Config(format!("invalid artifact name {name:?}")));
        }
        write(&dir.join(name), bytes)?;
        manifest.files.push(ArtifactFile {
            path: name.to_string(),
            role: role.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
    manifest.finished_unix = unix_now();
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write(&dir.join(MANIFEST), &json)?;
    Ok(RunArtifacts { dir: dir.to_path_buf(), manifest, checks: output.checks.clone() })
}

impl RunArtifacts {
    /// Reads a finished run back from its directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let checks = match manifest.files.iter().find(|f| f.role == "checks") {
            Some(f) => {
                let p = dir.join(&f.path);
                parse_checks(&std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?)?
            }
            None => Vec::new(),
        };
        Ok(RunArtifacts { dir: dir.to_path_buf(), manifest, checks })
    }

    /// Fails with an I/O error naming the first listed file that is missing.
    pub fn verify_files(&self) -> Result<()> {
        for f in &self.manifest.files {
            let p = self.dir.join(&f.path);
            if !p.is_file() {
                return Err(CliError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "listed in the manifest"),
                ));
            }
        }
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn short(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.4e}"))
}

/// The check table of a run, one row per check.
pub fn render_summary(artifacts: &RunArtifacts) -> Result<String> {
    artifacts.verify_files()?;
    let mut out = String::new();
    if artifacts.checks.is_empty() {
        return Ok(out);
    }
    let width = artifacts.checks.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
    writeln!(
        out,
        "{:<width$}  {:>11}  {:>11}  {:>11}  {:>11}  {:<4}  bound",
        "check", "eps", "measured", "measured/eps", "ratio", "pass"
    )
    .expect("writing to a string");
    for c in &artifacts.checks {
        writeln!(
            out,
            "{:<width$}  {:>11}  {:>11}  {:>11}  {:>11}  {:<4}  {}",
            c.name,
            short(c.eps),
            short(Some(c.measured)),
            short(c.constant),
            short(c.ratio),
            if c.pass { "PASS" } else { "FAIL" },
            c.bound
        )
        .expect("writing to a string");
    }
    Ok(out)
}

/// Prints the check table and returns whether every check passed.
pub fn emit_summary(artifacts: &RunArtifacts) -> Result<bool> {
    print!("{}", render_summary(artifacts)?);
    Ok(artifacts.all_pass())
}
