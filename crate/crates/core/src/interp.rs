//! Uniform tensor grids and the interpolants used for action fields and
//! invariant surfaces.

use crate::error::{Error, Result};

/// A uniform tensor grid; flat indices are row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis.
    pub n: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
            return Err(Error::Dimension("grid bounds and resolution must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || n.iter().any(|&k| k < 2) {
            return Err(Error::Parameter(format!("grid needs lo < hi and >= 2 nodes per axis: {lo:?} {hi:?} {n:?}")));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>, nodes: usize) -> Result<Self> {
        let n = vec![nodes; lo.len()];
        Grid::new(lo, hi, n)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / (self.n[k] - 1) as f64
    }

    pub fn coord(&self, k: usize, i: usize) -> f64 {
        if i + 1 == self.n[k] {
            self.hi[k]
        } else {
            self.lo[k] + i as f64 * self.spacing(k)
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.n[k];
            flat /= self.n[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(k, &i)| self.coord(k, i)).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Nodes differing by one step along one axis.
    pub fn neighbors(&self, flat: usize) -> Vec<usize> {
        let idx = self.multi_index(flat);
        let mut out = Vec::with_capacity(2 * self.dim());
        for k in 0..self.dim() {
            for delta in [-1i64, 1] {
                let j = idx[k] as i64 + delta;
                if j >= 0 && (j as usize) < self.n[k] {
                    let mut other = idx.clone();
                    other[k] = j as usize;
                    out.push(self.flat_index(&other));
                }
            }
        }
        out
    }

    /// Cell index and fractional position along axis `k`, clamped to the grid.
    pub fn locate(&self, k: usize, x: f64) -> (usize, f64) {
        let h = self.spacing(k);
        let s = ((x - self.lo[k]) / h).clamp(0.0, (self.n[k] - 1) as f64);
        let i = (s.floor() as usize).min(self.n[k] - 2);
        (i, s - i as f64)
    }

    /// Corners of the cell containing `x` with their multilinear weights and
    /// the weights' gradients.
    pub fn multilinear(&self, x: &[f64]) -> Vec<(usize, f64, Vec<f64>)> {
        let d = self.dim();
        let cells: Vec<(usize, f64)> = (0..d).map(|k| self.locate(k, x[k])).collect();
        let mut out = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            let mut idx = vec![0; d];
            let mut w = 1.0;
            let mut factors = vec![0.0; d];
            let mut dfactors = vec![0.0; d];
            for k in 0..d {
                let (i, t) = cells[k];
                let upper = mask >> k & 1 == 1;
                idx[k] = i + upper as usize;
                factors[k] = if upper { t } else { 1.0 - t };
                dfactors[k] = if upper { 1.0 } else { -1.0 } / self.spacing(k);
                w *= factors[k];
            }
            let grad =
                (0..d).map(|k| (0..d).map(|j| if j == k { dfactors[j] } else { factors[j] }).product()).collect();
            out.push((self.flat_index(&idx), w, grad));
        }
        out
    }
}

fn hermite_basis(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2, t3 - 2.0 * t2 + t, t3 - t2],
        [6.0 * t2 - 6.0 * t, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, 3.0 * t2 - 2.0 * t],
    )
}

/// Bicubic Hermite interpolation on a 2-d grid from nodal values, first
/// partials and cross partials. Globally C¹.
#[derive(Debug, Clone)]
pub struct BicubicHermite {
    pub grid: Grid,
    pub f: Vec<f64>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub fxy: Vec<f64>,
}

impl BicubicHermite {
    pub fn new(grid: Grid, f: Vec<f64>, fx: Vec<f64>, fy: Vec<f64>, fxy: Vec<f64>) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::Dimension("bicubic interpolation needs a 2-d grid".into()));
        }
        let n = grid.len();
        if [f.len(), fx.len(), fy.len(), fxy.len()].iter().any(|&l| l != n) {
            return Err(Error::Dimension("nodal arrays must match the grid size".into()));
        }
        Ok(BicubicHermite { grid, f, fx, fy, fxy })
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 2]) {
        let (i, t) = self.grid.locate(0, x[0]);
        let (j, s) = self.grid.locate(1, x[1]);
        let (hx, hy) = (self.grid.spacing(0), self.grid.spacing(1));
        let (bt, dbt) = hermite_basis(t);
        let (bs, dbs) = hermite_basis(s);
        let mut val = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let k = self.grid.flat_index(&[i + a, j + b]);
                let terms = [
                    (self.f[k], bt[a], bs[b], dbt[a], dbs[b]),
                    (self.fx[k] * hx, bt[2 + a], bs[b], dbt[2 + a], dbs[b]),
                    (self.fy[k] * hy, bt[a], bs[2 + b], dbt[a], dbs[2 + b]),
                    (self.fxy[k] * hx * hy, bt[2 + a], bs[2 + b], dbt[2 + a], dbs[2 + b]),
                ];
                for (c, p, r, dp, dr) in terms {
                    val += c * p * r;
                    gx += c * dp * r;
                    gy += c * p * dr;
                }
            }
        }
        (val, [gx / hx, gy / hy])
    }
}

/// Catmull-Rom weights for offsets `-1, 0, 1, 2` and their derivatives.
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// Tensor-product cubic convolution (Catmull-Rom) on an n-d grid. Values
/// beyond the edges are extrapolated as `3 f0 - 3 f1 + f2`, which keeps
/// quadratics exact. C¹ inside the grid.
#[derive(Debug, Clone)]
pub struct CubicConvolution {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl CubicConvolution {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension("values must match the grid size".into()));
        }
        if grid.n.iter().any(|&k| k < 3) {
            return Err(Error::Parameter("cubic convolution needs at least 3 nodes per axis".into()));
        }
        Ok(CubicConvolution { grid, values })
    }

    /// Axis-wise stencil: four (index, extrapolation coefficients) entries.
    fn stencil(n: usize, i: usize) -> [[(usize, f64); 3]; 4] {
        let mut st = [[(0usize, 0.0); 3]; 4];
        for (slot, off) in (-1i64..=2).enumerate() {
            let j = i as i64 + off;
            st[slot] = if j < 0 {
                [(0, 3.0), (1, -3.0), (2, 1.0)]
            } else if j as usize >= n {
                [(n - 1, 3.0), (n - 2, -3.0), (n - 3, 1.0)]
            } else {
                [(j as usize, 1.0), (0, 0.0), (0, 0.0)]
            };
        }
        st
    }

    /// `(node, weight, weight derivative)` entries of axis `k` at `x`, with
    /// extrapolated ghosts folded into real nodes. At most four entries.
    fn axis_stencil(grid: &Grid, k: usize, x: f64) -> ([(usize, f64, f64); 4], usize) {
        let (i, t) = grid.locate(k, x);
        let (w, dw) = catmull_rom(t);
        let st = Self::stencil(grid.n[k], i);
        let mut entries = [(0usize, 0.0, 0.0); 4];
        let mut len = 0;
        for slot in 0..4 {
            for &(node, c) in &st[slot] {
                if c != 0.0 {
                    if let Some(e) = entries[..len].iter_mut().find(|e| e.0 == node) {
                        e.1 += c * w[slot];
                        e.2 += c * dw[slot];
                    } else {
                        entries[len] = (node, c * w[slot], c * dw[slot]);
                        len += 1;
                    }
                }
            }
        }
        (entries, len)
    }

    fn axis_entries(grid: &Grid, x: &[f64]) -> Vec<Vec<(usize, f64, f64)>> {
        (0..grid.dim())
            .map(|k| {
                let (e, len) = Self::axis_stencil(grid, k, x[k]);
                e[..len].to_vec()
            })
            .collect()
    }

    /// Calls `visit(node, w)` for the flat node indices and weights with
    /// `value(x) = Σ w f[node]`. Lets several fields on the same grid share
    /// one stencil without allocating.
    pub fn for_each_weight(grid: &Grid, x: &[f64], mut visit: impl FnMut(usize, f64)) {
        const MAX_DIM: usize = 8;
        let d = grid.dim();
        if d > MAX_DIM {
            for (n, w) in Self::weights(grid, x) {
                visit(n, w);
            }
            return;
        }
        let mut axes = [[(0usize, 0.0, 0.0); 4]; MAX_DIM];
        let mut lens = [0usize; MAX_DIM];
        for k in 0..d {
            (axes[k], lens[k]) = Self::axis_stencil(grid, k, x[k]);
        }
        let mut counters = [0usize; MAX_DIM];
        loop {
            let mut node = 0;
            let mut w = 1.0;
            for k in 0..d {
                let e = axes[k][counters[k]];
                node = node * grid.n[k] + e.0;
                w *= e.1;
            }
            visit(node, w);
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                counters[k] += 1;
                if counters[k] < lens[k] {
                    break;
                }
                counters[k] = 0;
            }
        }
    }

    /// Flat node indices and weights with `value(x) = Σ w f[node]`.
    pub fn weights(grid: &Grid, x: &[f64]) -> Vec<(usize, f64)> {
        let axes = Self::axis_entries(grid, x);
        let mut out: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (k, entries) in axes.iter().enumerate() {
            let n_k = grid.n[k];
            out = out.iter().flat_map(|&(n, w)| entries.iter().map(move |e| (n * n_k + e.0, w * e.1))).collect();
        }
        out
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.grid.dim();
        let axes = Self::axis_entries(&self.grid, x);
        let mut val = 0.0;
        let mut grad = vec![0.0; d];
        let mut counters = vec![0usize; d];
        loop {
            let mut idx = vec![0; d];
            let mut w = 1.0;
            for k in 0..d {
                idx[k] = axes[k][counters[k]].0;
                w *= axes[k][counters[k]].1;
            }
            let f = self.values[self.grid.flat_index(&idx)];
            val += w * f;
            for (g, slot) in grad.iter_mut().enumerate() {
                let mut dw = 1.0;
                for k in 0..d {
                    let e = axes[k][counters[k]];
                    dw *= if k == g { e.2 } else { e.1 };
                }
                *slot += dw * f;
            }
            let mut k = d;
            loop {
                if k == 0 {
                    for (g, h) in grad.iter_mut().zip(0..d) {
                        *g /= self.grid.spacing(h);
                    }
                    return (val, grad);
                }
                k -= 1;
                counters[k] += 1;
                if counters[k] < axes[k].len() {
                    break;
                }
                counters[k] = 0;
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        Self::for_each_weight(&self.grid, x, |n, w| v += w * self.values[n]);
        v
    }
}
