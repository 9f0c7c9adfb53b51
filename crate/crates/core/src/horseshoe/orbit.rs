use super::{Code, CrossFormSystem, Symbol};
use crate::error::{Error, Result};
use crate::model::SlowPoint;

#[derive(Debug, Clone)]
pub struct OrbitSolverConfig {
    /// Required fixed-point residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Indices kept beyond the core on each side.
    pub margin: i64,
}

impl Default for OrbitSolverConfig {
    fn default() -> Self {
        OrbitSolverConfig { tolerance: 1e-12, max_iterations: 2000, margin: 20 }
    }
}

/// The orbit with a given code, on a finite window of indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicOrbit {
    pub lo: i64,
    pub hi: i64,
    pub z: SlowPoint,
    pub eps: f64,
    /// `x_i` for `i = lo..=hi`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Largest fixed-point residual over the window.
    pub residual: f64,
    pub iterations: usize,
    /// Largest ratio of successive iterate differences above the noise floor.
    pub convergence_factor: f64,
    /// `2 R λ^W` with `W` the distance from the core to the window edge.
    pub truncation_bound: f64,
}

impl SymbolicOrbit {
    pub fn at(&self, i: i64) -> Result<(&[f64], &[f64])> {
        if i < self.lo || i > self.hi {
            return Err(Error::OutOfRange(format!("index {i} outside the window [{}, {}]", self.lo, self.hi)));
        }
        let j = (i - self.lo) as usize;
        Ok((&self.x[j], &self.y[j]))
    }

    /// `max(‖x‖, ‖y‖)` over the window, max norm.
    pub fn sup_norm(&self) -> f64 {
        self.x.iter().chain(&self.y).flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

const NOISE_FLOOR: f64 = 1e-10;

struct Solved {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    iterations: usize,
    factor: f64,
}

/// Jacobi iteration of the sequence operator on `n` indices. `pair(j)` gives
/// `(ξ_j, ξ_{j+1})`; `left`/`right` supply `x_{-1}` and `y_n`, or wrap around
/// when `None` (periodic words).
fn jacobi(
    sys: &CrossFormSystem,
    n: usize,
    pair: impl Fn(i64) -> (Symbol, Symbol),
    left: Option<&[f64]>,
    right: Option<&[f64]>,
    z: &SlowPoint,
    eps: f64,
    cfg: &OrbitSolverConfig,
) -> Result<Solved> {
    let k = sys.fast_dim();
    let mut x = vec![vec![0.0; k]; n];
    let mut y = vec![vec![0.0; k]; n];
    let mut prev_diff: Option<f64> = None;
    let mut factor: f64 = 0.0;
    let stop = 1e-3 * cfg.tolerance;
    for it in 1..=cfg.max_iterations {
        let mut nx = Vec::with_capacity(n);
        let mut ny = Vec::with_capacity(n);
        for j in 0..n {
            let xm = if j > 0 { &x[j - 1] } else { left.unwrap_or(&x[n - 1]) };
            nx.push(sys.f(pair(j as i64 - 1), xm, &y[j], z, eps)?);
            let yp = if j + 1 < n { &y[j + 1] } else { right.unwrap_or(&y[0]) };
            ny.push(sys.g(pair(j as i64), &x[j], yp, z, eps)?);
        }
        let diff = sup_diff(&nx, &x).max(sup_diff(&ny, &y));
        if let Some(p) = prev_diff {
            if p > NOISE_FLOOR && diff > NOISE_FLOOR {
                factor = factor.max(diff / p);
            }
        }
        prev_diff = Some(diff);
        x = nx;
        y = ny;
        if diff <= stop {
            return Ok(Solved { x, y, iterations: it, factor });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        reason: format!("sequence iteration stalled at change {:.3e}", prev_diff.unwrap_or(f64::NAN)),
    })
}

/// The `eps`-map orbit of a periodic word, one point per letter.
fn periodic_orbit(
    sys: &CrossFormSystem,
    word: &[Symbol],
    z: &SlowPoint,
    eps: f64,
    cfg: &OrbitSolverConfig,
) -> Result<Solved> {
    let l = word.len() as i64;
    let pair = |j: i64| (word[j.rem_euclid(l) as usize], word[(j + 1).rem_euclid(l) as usize]);
    jacobi(sys, word.len(), pair, None, None, z, eps, cfg)
}

fn residual(
    sys: &CrossFormSystem,
    code: &Code,
    lo: i64,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    xb: &[f64],
    yb: &[f64],
    z: &SlowPoint,
    eps: f64,
) -> Result<f64> {
    let n = x.len();
    let mut r: f64 = 0.0;
    for j in 0..n {
        let i = lo + j as i64;
        let xm = if j > 0 { &x[j - 1] } else { xb };
        let yp = if j + 1 < n { &y[j + 1] } else { yb };
        let fx = sys.f(code.pair(i - 1), xm, &y[j], z, eps)?;
        let gy = sys.g(code.pair(i), &x[j], yp, z, eps)?;
        r = fx.iter().zip(&x[j]).chain(gy.iter().zip(&y[j])).fold(r, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(r)
}

pub(crate) fn solve_code_orbit(
    sys: &CrossFormSystem,
    code: &Code,
    z: &SlowPoint,
    eps: f64,
    window: Option<(i64, i64)>,
    cfg: &OrbitSolverConfig,
) -> Result<SymbolicOrbit> {
    if z.dof() != sys.slow_dof() {
        return Err(Error::Dimension("slow point does not match the system".into()));
    }
    let (lo, hi) = window.unwrap_or_else(|| code.window(cfg.margin));
    if hi < lo {
        return Err(Error::Parameter(format!("empty window [{lo}, {hi}]")));
    }
    let n = (hi - lo + 1) as usize;
    if let Some(word) = code.periodic_word() {
        let s = periodic_orbit(sys, &word, z, eps, cfg)?;
        let l = word.len() as i64;
        let x: Vec<Vec<f64>> = (lo..=hi).map(|i| s.x[i.rem_euclid(l) as usize].clone()).collect();
        let y: Vec<Vec<f64>> = (lo..=hi).map(|i| s.y[i.rem_euclid(l) as usize].clone()).collect();
        let xb = &s.x[(lo - 1).rem_euclid(l) as usize];
        let yb = &s.y[(hi + 1).rem_euclid(l) as usize];
        let r = residual(sys, code, lo, &x, &y, xb, yb, z, eps)?;
        if r > cfg.tolerance {
            return Err(Error::NoConvergence { iterations: s.iterations, reason: format!("residual {r:.3e}") });
        }
        return Ok(SymbolicOrbit {
            lo,
            hi,
            z: z.clone(),
            eps,
            x,
            y,
            residual: r,
            iterations: s.iterations,
            convergence_factor: s.factor,
            truncation_bound: 0.0,
        });
    }
    if lo > code.start() || hi < code.core_end() - 1 {
        return Err(Error::Parameter(format!(
            "window [{lo}, {hi}] must cover the core [{}, {}]",
            code.start(),
            code.core_end() - 1
        )));
    }
    let boundary = |i: i64, want_x: bool| -> Result<Vec<f64>> {
        let (word, phase) = code.tail_at(i).expect("boundary index lies in a tail");
        let s = periodic_orbit(sys, word, z, eps, cfg)?;
        Ok(if want_x { s.x[phase].clone() } else { s.y[phase].clone() })
    };
    let xb = boundary(lo - 1, true)?;
    let yb = boundary(hi + 1, false)?;
    let s = jacobi(sys, n, |j| code.pair(lo + j), Some(&xb), Some(&yb), z, eps, cfg)?;
    let r = residual(sys, code, lo, &s.x, &s.y, &xb, &yb, z, eps)?;
    if r > cfg.tolerance {
        return Err(Error::NoConvergence { iterations: s.iterations, reason: format!("residual {r:.3e}") });
    }
    let w = (code.start() - lo).min(hi - (code.core_end() - 1));
    Ok(SymbolicOrbit {
        lo,
        hi,
        z: z.clone(),
        eps,
        x: s.x,
        y: s.y,
        residual: r,
        iterations: s.iterations,
        convergence_factor: s.factor,
        truncation_bound: 2.0 * sys.radius * sys.lambda.powi(w.min(i32::MAX as i64) as i32),
    })
}

/// The frozen (`eps = 0`) orbit with the given code on a window of indices,
/// by fixed-point iteration of the sequence operator with pure-tail orbits
/// as boundary data. The default window reaches 20 indices past the core.
pub fn orbit_for_code(
    sys: &CrossFormSystem,
    code: &Code,
    z: &SlowPoint,
    window: Option<(i64, i64)>,
    cfg: &OrbitSolverConfig,
) -> Result<SymbolicOrbit> {
    solve_code_orbit(sys, code, z, 0.0, window, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixEntry {
    pub index: i64,
    pub measured: f64,
    pub bound: f64,
}

impl MixEntry {
    pub fn ratio(&self) -> f64 {
        self.measured / self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixReport {
    pub n: i64,
    pub entries: Vec<MixEntry>,
    pub violations: usize,
    pub max_ratio: f64,
}

/// Compares the orbits of two codes sharing the block `|i| <= n` against
/// `2 R λ^{n - |i|}`.
pub fn mix_check(
    sys: &CrossFormSystem,
    code1: &Code,
    code2: &Code,
    n: i64,
    z: &SlowPoint,
    window: Option<(i64, i64)>,
    cfg: &OrbitSolverConfig,
) -> Result<MixReport> {
    if n < 0 {
        return Err(Error::Parameter(format!("block half-length must be nonnegative, got {n}")));
    }
    if !code1.agrees_with(code2, n) {
        return Err(Error::Precondition(format!("codes differ inside the block |i| <= {n}")));
    }
    let window = window.unwrap_or_else(|| {
        let (a, b) = code1.window(cfg.margin + n);
        let (c, d) = code2.window(cfg.margin + n);
        (a.min(c), b.max(d))
    });
    let o1 = orbit_for_code(sys, code1, z, Some(window), cfg)?;
    let o2 = orbit_for_code(sys, code2, z, Some(window), cfg)?;
    let mut entries = Vec::with_capacity(2 * n as usize + 1);
    for i in -n..=n {
        let (x1, y1) = o1.at(i)?;
        let (x2, y2) = o2.at(i)?;
        let dx = x1.iter().zip(x2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dy = y1.iter().zip(y2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let bound = 2.0 * sys.radius * sys.lambda.powi((n - i.abs()) as i32);
        entries.push(MixEntry { index: i, measured: dx.max(dy), bound });
    }
    let violations = entries.iter().filter(|e| e.measured > e.bound).count();
    let max_ratio = entries.iter().map(|e| e.ratio()).fold(0.0, f64::max);
    Ok(MixReport { n, entries, violations, max_ratio })
}
