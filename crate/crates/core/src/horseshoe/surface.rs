//! Invariant surface families of the `eps`-coupled maps.
//!
//! For a code `ξ` the surfaces `L_i : (x, y) = (x_i(z), y_i(z))` satisfy, with
//! the slow map `S_i(z) = z + eps φ_{ξ_i ξ_{i+1}}(x_i(z), y_i(z), z)`,
//!
//! ```text
//! x_{i+1}(S_i(z)) = f(x_i(z), y_{i+1}(S_i(z)), z),   y_i(z) = g(x_i(z), y_{i+1}(S_i(z)), z).
//! ```
//!
//! The x-graphs are swept forward in `i` (pulling grid nodes back through
//! `S_i`), the y-graphs backward. Both sweeps contract, so repeating them
//! converges geometrically.

use std::io::Write;

use rayon::prelude::*;

use super::{slow_map_rate, Code, CrossFormSystem, Pair, Symbol};
use crate::error::{Error, Result};
use crate::interp::{CubicConvolution, Grid};
use crate::model::SlowPoint;

#[derive(Debug, Clone)]
pub struct SurfaceConfig {
    /// Grid nodes per slow coordinate.
    pub resolution: usize,
    /// Sweeps stop once the largest nodal change drops below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Required invariance residual at the grid nodes.
    pub residual_tolerance: f64,
    /// Indices kept beyond the core on each side.
    pub margin: i64,
    /// Largest accepted `eps · max ‖∂φ/∂z‖`.
    pub max_slow_map_rate: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            resolution: 33,
            tolerance: 1e-12,
            max_sweeps: 500,
            residual_tolerance: 1e-8,
            margin: 20,
            max_slow_map_rate: 0.5,
        }
    }
}

/// Nodal values of one surface, node-major: `x[node * k + c]`.
#[derive(Debug, Clone)]
struct Layer {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Last preimages of the grid nodes under the incoming slow map, reused
    /// as starting guesses.
    pre: Vec<Vec<f64>>,
}

impl Layer {
    /// Interpolated `(x(z), y(z))`.
    fn at(&self, grid: &Grid, k: usize, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; k];
        let mut y = vec![0.0; k];
        CubicConvolution::for_each_weight(grid, z, |n, w| {
            for c in 0..k {
                x[c] += w * self.x[n * k + c];
                y[c] += w * self.y[n * k + c];
            }
        });
        (x, y)
    }
}

/// The solver's view of one system at one `eps`.
struct Ctx<'a> {
    sys: &'a CrossFormSystem,
    eps: f64,
    grid: &'a Grid,
    nodes: Vec<Vec<f64>>,
    k: usize,
}

impl Ctx<'_> {
    fn phi(&self, pair: Pair, layer: &Layer, z: &[f64]) -> Result<Vec<f64>> {
        let zp = SlowPoint::from_flat(z);
        let (x, y) = layer.at(self.grid, self.k, z);
        Ok(self.sys.phi(pair, &x, &y, &zp, self.eps)?.to_flat())
    }

    /// `z` with `S(z) = zeta` for the slow map of `layer`.
    fn preimage(&self, pair: Pair, layer: &Layer, zeta: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        if self.eps == 0.0 {
            return Ok(zeta.to_vec());
        }
        let mut z = guess.to_vec();
        for _ in 0..200 {
            let phi = self.phi(pair, layer, &z)?;
            let next: Vec<f64> = zeta.iter().zip(&phi).map(|(a, p)| a - self.eps * p).collect();
            let step = next.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            z = next;
            if step <= 1e-15 * (1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                return Ok(z);
            }
        }
        Err(Error::NoConvergence { iterations: 200, reason: "slow-map preimage iteration stalled".into() })
    }

    /// New x-values and node preimages of the layer after `prev`, whose
    /// current y-values and preimage guesses are in `cur`.
    fn x_update(&self, pair: Pair, prev: &Layer, cur: &Layer) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.k;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(n, zeta)| {
                let z = self.preimage(pair, prev, zeta, &cur.pre[n])?;
                let zp = SlowPoint::from_flat(&z);
                let x = self.sys.f(pair, &prev.at(self.grid, k, &z).0, &cur.y[n * k..(n + 1) * k], &zp, self.eps)?;
                Ok((x, z))
            })
            .collect::<Result<_>>()?;
        let (x, pre): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        Ok((x.concat(), pre))
    }

    /// New y-values of `cur` given the next layer.
    fn y_update(&self, pair: Pair, cur: &Layer, next: &Layer) -> Result<Vec<f64>> {
        let k = self.k;
        let rows: Vec<Vec<f64>> = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(n, z)| {
                let x = &cur.x[n * k..(n + 1) * k];
                let y = &cur.y[n * k..(n + 1) * k];
                let zp = SlowPoint::from_flat(z);
                let phi = self.sys.phi(pair, x, y, &zp, self.eps)?.to_flat();
                let zb: Vec<f64> = z.iter().zip(&phi).map(|(a, p)| a + self.eps * p).collect();
                self.sys.g(pair, x, &next.at(self.grid, k, &zb).1, &zp, self.eps)
            })
            .collect::<Result<_>>()?;
        Ok(rows.concat())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Boundary data for a chain of layers.
enum Ends<'a> {
    /// Layer indices wrap around.
    Periodic,
    /// Fixed layers before the first and after the last, with the pair
    /// linking the `before` layer to the first.
    Fixed { before: &'a Layer, before_pair: Pair, after: &'a Layer },
}

struct Chain {
    layers: Vec<Layer>,
    sweeps: usize,
    residual: f64,
}

fn zero_layer(ctx: &Ctx<'_>) -> Layer {
    let len = ctx.nodes.len() * ctx.k;
    Layer { x: vec![0.0; len], y: vec![0.0; len], pre: ctx.nodes.clone() }
}

/// Max nodal residual of both invariance relations.
fn chain_residual(ctx: &Ctx<'_>, layers: &[Layer], pairs: &[Pair], ends: &Ends<'_>) -> Result<f64> {
    let n = layers.len();
    let mut r: f64 = 0.0;
    for j in 0..n {
        let (prev, prev_pair) = match ends {
            Ends::Periodic => (&layers[(j + n - 1) % n], pairs[(j + n - 1) % n]),
            Ends::Fixed { before, before_pair, .. } => {
                if j == 0 {
                    (*before, *before_pair)
                } else {
                    (&layers[j - 1], pairs[j - 1])
                }
            }
        };
        let (nx, _) = ctx.x_update(prev_pair, prev, &layers[j])?;
        r = r.max(sup_diff(&nx, &layers[j].x));
        let next = match ends {
            Ends::Periodic => &layers[(j + 1) % n],
            Ends::Fixed { after, .. } => {
                if j + 1 == n {
                    *after
                } else {
                    &layers[j + 1]
                }
            }
        };
        let ny = ctx.y_update(pairs[j], &layers[j], next)?;
        r = r.max(sup_diff(&ny, &layers[j].y));
    }
    Ok(r)
}

/// Solves a chain of `pairs.len()` layers; `pairs[j]` links layer `j` to `j + 1`.
fn solve_chain(ctx: &Ctx<'_>, pairs: &[Pair], ends: Ends<'_>, cfg: &SurfaceConfig) -> Result<Chain> {
    let n = pairs.len();
    let mut layers: Vec<Layer> = (0..n).map(|_| zero_layer(ctx)).collect();
    let mut change = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        change = 0.0;
        for j in 0..n {
            let (nx, pre) = match &ends {
                Ends::Periodic => {
                    let p = (j + n - 1) % n;
                    ctx.x_update(pairs[p], &layers[p], &layers[j])?
                }
                Ends::Fixed { before, before_pair, .. } => {
                    if j == 0 {
                        ctx.x_update(*before_pair, before, &layers[0])?
                    } else {
                        ctx.x_update(pairs[j - 1], &layers[j - 1], &layers[j])?
                    }
                }
            };
            change = change.max(sup_diff(&nx, &layers[j].x));
            layers[j].x = nx;
            layers[j].pre = pre;
        }
        for j in (0..n).rev() {
            let ny = match &ends {
                Ends::Periodic => ctx.y_update(pairs[j], &layers[j], &layers[(j + 1) % n])?,
                Ends::Fixed { after, .. } => {
                    if j + 1 == n {
                        ctx.y_update(pairs[j], &layers[j], after)?
                    } else {
                        ctx.y_update(pairs[j], &layers[j], &layers[j + 1])?
                    }
                }
            };
            change = change.max(sup_diff(&ny, &layers[j].y));
            layers[j].y = ny;
        }
        if change <= cfg.tolerance {
            let residual = chain_residual(ctx, &layers, pairs, &ends)?;
            return Ok(Chain { layers, sweeps: sweep, residual });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_sweeps,
        reason: format!("surface sweeps stalled at change {change:.3e}"),
    })
}

fn word_pairs(word: &[Symbol]) -> Vec<Pair> {
    let l = word.len();
    (0..l).map(|j| (word[j], word[(j + 1) % l])).collect()
}

/// A family of invariant surfaces for one code and one `eps`.
#[derive(Debug, Clone)]
pub struct SurfaceFamily {
    pub code: Code,
    pub eps: f64,
    /// Boundary cutoff width of the system the family was computed for.
    pub mollifier: Option<f64>,
    pub grid: Grid,
    /// Dimension `k` of `x` and `y`.
    pub fast_dim: usize,
    /// `Some(L)` when the code is `w^∞` with `|w| = L`; index `i` then uses
    /// layer `i mod L` and every index is available.
    pub period: Option<usize>,
    /// Window of stored indices; for periodic codes `[0, L - 1]`.
    pub lo: i64,
    pub hi: i64,
    /// Largest nodal invariance residual.
    pub residual: f64,
    pub sweeps: usize,
    /// `eps · max ‖∂φ/∂z‖` measured before solving.
    pub slow_map_rate: f64,
    layers: Vec<Layer>,
}

impl SurfaceFamily {
    fn layer(&self, i: i64) -> Result<&Layer> {
        match self.period {
            Some(l) => Ok(&self.layers[i.rem_euclid(l as i64) as usize]),
            None => {
                if i < self.lo || i > self.hi {
                    Err(Error::SurfaceWindowExceeded { index: i, lo: self.lo, hi: self.hi })
                } else {
                    Ok(&self.layers[(i - self.lo) as usize])
                }
            }
        }
    }

    pub fn contains(&self, i: i64) -> bool {
        self.period.is_some() || (self.lo..=self.hi).contains(&i)
    }

    /// `(x_i(z), y_i(z))`.
    pub fn point(&self, i: i64, z: &SlowPoint) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(self.layer(i)?.at(&self.grid, self.fast_dim, &z.to_flat()))
    }

    /// Nodal values `(x_i, y_i)` at grid node `node`.
    pub fn node_values(&self, i: i64, node: usize) -> Result<(&[f64], &[f64])> {
        let layer = self.layer(i)?;
        let k = self.fast_dim;
        Ok((&layer.x[node * k..(node + 1) * k], &layer.y[node * k..(node + 1) * k]))
    }

    /// Stored indices.
    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    /// Largest nodal `max(|x|, |y|)`.
    pub fn sup_norm(&self) -> f64 {
        self.layers.iter().flat_map(|l| l.x.iter().chain(&l.y)).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|∂x/∂z|`, `|∂y/∂z|` component sampled at the grid nodes.
    pub fn derivative_bound(&self) -> f64 {
        let nodes = self.grid.nodes();
        let k = self.fast_dim;
        let mut worst: f64 = 0.0;
        for layer in &self.layers {
            for vals in [&layer.x, &layer.y] {
                for c in 0..k {
                    let comp = vals.iter().skip(c).step_by(k).copied().collect();
                    let interp = CubicConvolution::new(self.grid.clone(), comp).expect("grid matches the values");
                    for p in &nodes {
                        worst = interp.eval(p).1.iter().fold(worst, |m, g| m.max(g.abs()));
                    }
                }
            }
        }
        worst
    }

    /// Largest nodal difference to `other` over the indices stored by both.
    pub fn sup_distance(&self, other: &SurfaceFamily) -> Result<f64> {
        if self.grid != other.grid || self.fast_dim != other.fast_dim {
            return Err(Error::Parameter("surface families live on different grids".into()));
        }
        let (lo, hi) = match (self.period, other.period) {
            (Some(a), Some(b)) => (0, (a.max(b) - 1) as i64),
            _ => (self.lo.max(other.lo), self.hi.min(other.hi)),
        };
        let mut d: f64 = 0.0;
        for i in lo..=hi {
            let (a, b) = (self.layer(i)?, other.layer(i)?);
            d = d.max(sup_diff(&a.x, &b.x)).max(sup_diff(&a.y, &b.y));
        }
        Ok(d)
    }

    /// Rows `i, v.., u.., x.., y..` at every grid node of every stored index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.grid.dim() / 2;
        let k = self.fast_dim;
        let name = |s: &str, n: usize, i: usize| if n == 1 { s.to_string() } else { format!("{s}{}", i + 1) };
        writeln!(out, "# slowdrift-surfaces v1")?;
        writeln!(out, "# code: {}", self.code)?;
        writeln!(out, "# eps: {:.16e}", self.eps)?;
        match self.mollifier {
            Some(delta) => writeln!(out, "# mollifier: {delta:.16e}")?,
            None => writeln!(out, "# mollifier: none")?,
        }
        let mut header = vec!["i".to_string()];
        header.extend((0..d).map(|i| name("v", d, i)));
        header.extend((0..d).map(|i| name("u", d, i)));
        header.extend((0..k).map(|i| name("x", k, i)));
        header.extend((0..k).map(|i| name("y", k, i)));
        writeln!(out, "{}", header.join(","))?;
        let nodes = self.grid.nodes();
        for i in self.indices() {
            let layer = self.layer(i)?;
            for (n, node) in nodes.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(node.iter().map(|v| format!("{v:.16e}")));
                row.extend(layer.x[n * k..(n + 1) * k].iter().map(|v| format!("{v:.16e}")));
                row.extend(layer.y[n * k..(n + 1) * k].iter().map(|v| format!("{v:.16e}")));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Computes the invariant surfaces of `code` at `eps` on a grid over the
/// domain's bounding box. Non-periodic codes are solved on the window
/// reaching `cfg.margin` indices past the core, with the periodic tail
/// families as boundary data.
///
/// For `eps != 0` the system must be mollified, so that the domain is
/// invariant under the slow maps.
pub fn invariant_surfaces(
    sys: &CrossFormSystem,
    code: &Code,
    eps: f64,
    window: Option<(i64, i64)>,
    cfg: &SurfaceConfig,
) -> Result<SurfaceFamily> {
    if !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be finite, got {eps}")));
    }
    if eps != 0.0 && sys.mollifier.is_none() {
        return Err(Error::Precondition("the slow increment must be mollified before coupling eps".into()));
    }
    if cfg.resolution < 3 {
        return Err(Error::Parameter("surfaces need at least 3 grid nodes per axis".into()));
    }
    let rate = slow_map_rate(sys, eps, 9)?;
    if rate > cfg.max_slow_map_rate {
        return Err(Error::SlowMapNotInvertible { eps, rate });
    }
    let (blo, bhi) = sys.domain.bounding_box();
    let grid = Grid::uniform(blo, bhi, cfg.resolution)?;
    let ctx = Ctx { sys, eps, grid: &grid, nodes: grid.nodes(), k: sys.fast_dim() };

    let family = |period, lo, hi, chain: Chain| SurfaceFamily {
        code: code.clone(),
        eps,
        mollifier: sys.mollifier,
        grid: grid.clone(),
        fast_dim: sys.fast_dim(),
        period,
        lo,
        hi,
        residual: chain.residual,
        sweeps: chain.sweeps,
        slow_map_rate: rate,
        layers: chain.layers,
    };

    if let Some(word) = code.periodic_word() {
        let chain = solve_chain(&ctx, &word_pairs(&word), Ends::Periodic, cfg)?;
        check_residual(chain.residual, cfg)?;
        return Ok(family(Some(word.len()), 0, word.len() as i64 - 1, chain));
    }
    let (lo, hi) = window.unwrap_or_else(|| code.window(cfg.margin));
    if lo > code.start() || hi < code.core_end() - 1 {
        return Err(Error::Parameter(format!(
            "window [{lo}, {hi}] must cover the core [{}, {}]",
            code.start(),
            code.core_end() - 1
        )));
    }
    let tail = |i: i64| -> Result<Layer> {
        let (word, phase) = code.tail_at(i).expect("boundary index lies in a tail");
        let chain = solve_chain(&ctx, &word_pairs(word), Ends::Periodic, cfg)?;
        check_residual(chain.residual, cfg)?;
        Ok(chain.layers[phase].clone())
    };
    let before = tail(lo - 1)?;
    let after = tail(hi + 1)?;
    let pairs: Vec<Pair> = (lo..=hi).map(|i| code.pair(i)).collect();
    let ends = Ends::Fixed { before: &before, before_pair: code.pair(lo - 1), after: &after };
    let chain = solve_chain(&ctx, &pairs, ends, cfg)?;
    check_residual(chain.residual, cfg)?;
    Ok(family(None, lo, hi, chain))
}

fn check_residual(residual: f64, cfg: &SurfaceConfig) -> Result<()> {
    if residual > cfg.residual_tolerance {
        return Err(Error::NoConvergence {
            iterations: cfg.max_sweeps,
            reason: format!("invariance residual {residual:.3e} above {:.1e}", cfg.residual_tolerance),
        });
    }
    Ok(())
}
