//! Dormand-Prince 5(4) with Hairer's fourth-order continuous extension.
//!
//! The integrator works on flat `f64` slices so the same engine drives full
//! and frozen systems, variational equations and the slow flows.

use crate::error::{Error, Result};

/// Tolerances and limits for adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Order of the propagating solution. Only 5 is implemented.
    pub method_order: u32,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            method_order: 5,
            max_steps: 500_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorConfig { rel_tol: tol, abs_tol: tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0) {
            return Err(Error::Parameter(format!("integrator tolerances and max_step must be positive: {self:?}")));
        }
        if self.method_order != 5 {
            return Err(Error::Parameter(format!(
                "method_order {} not available; the adaptive integrator is fifth order",
                self.method_order
            )));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Interpolating polynomial over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.r[0]
    }

    pub fn end(&self) -> Vec<f64> {
        self.r[0].iter().zip(&self.r[1]).map(|(a, b)| a + b).collect()
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.r[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [_, r2, r3, r4, r5] = &self.r;
        (0..r2.len())
            .map(|i| {
                let a = r4[i] + th1 * r5[i];
                let b = r3[i] + th * a;
                let c = r2[i] + th1 * b;
                let db = a - th * r5[i];
                let dc = -b + th1 * db;
                (c + th * dc) / self.h
            })
            .collect()
    }
}

/// Accepted step endpoints plus their dense segments.
#[derive(Debug, Clone, Default)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty solution")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty solution")
    }

    /// Index of the segment covering `t` (clamped to the ends).
    pub fn segment_index(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.t1() < t);
        Some(idx.min(self.segments.len() - 1))
    }

    /// Dense evaluation; exact stored states are returned at step endpoints.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self.segment_index(t) {
            None => self.states[0].clone(),
            Some(i) => {
                let s = &self.segments[i];
                if t == s.t1() {
                    self.states[i + 1].clone()
                } else {
                    s.eval(t)
                }
            }
        }
    }
}

/// Right-hand side `dy/dt = f(t, y)` written into the output slice.
pub trait OdeRhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> OdeRhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    /// One Dormand-Prince step; `k[0]` must hold `f(t, y)`. Leaves the
    /// solution in `y1`, `f(t + h, y1)` in `k[6]` and returns the embedded
    /// error vector in `err`.
    fn step<F: OdeRhs>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, y1: &mut [f64], err: &mut [f64]) -> Result<()> {
        let n = y.len();
        let Stages { k, tmp } = self;
        macro_rules! stage {
            ($dst:expr, $c:expr, $($a:expr => $j:expr),+) => {{
                for i in 0..n {
                    tmp[i] = y[i] + h * (0.0 $(+ $a * k[$j][i])+);
                }
                let (lo, hi) = k.split_at_mut($dst);
                let _ = lo;
                f.eval(t + $c * h, tmp, &mut hi[0])?;
            }};
        }
        stage!(1, C2, A21 => 0);
        stage!(2, C3, A31 => 0, A32 => 1);
        stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        f.eval(t + h, y1, &mut k[6])?;
        for i in 0..n {
            err[i] = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        Ok(())
    }

    fn dense(&self, t0: f64, h: f64, y0: &[f64], y1: &[f64]) -> DenseSegment {
        let k = &self.k;
        let n = y0.len();
        let r1 = y0.to_vec();
        let r2: Vec<f64> = (0..n).map(|i| y1[i] - y0[i]).collect();
        let r3: Vec<f64> = (0..n).map(|i| h * k[0][i] - r2[i]).collect();
        let r4: Vec<f64> = (0..n).map(|i| r2[i] - h * k[6][i] - r3[i]).collect();
        let r5: Vec<f64> = (0..n)
            .map(|i| h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]))
            .collect();
        DenseSegment { t0, h, r: [r1, r2, r3, r4, r5] }
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Adaptive integration over `[t0, t1]` (either direction). After every
/// accepted step `stop` sees the new dense segment; returning `true` ends
/// the integration there.
pub fn solve_until<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    cfg: &IntegratorConfig,
    mut stop: S,
) -> Result<OdeSolution>
where
    F: OdeRhs,
    S: FnMut(&DenseSegment) -> Result<bool>,
{
    cfg.validate()?;
    check_finite(y0, t0)?;
    let n = y0.len();
    let mut sol = OdeSolution { times: vec![t0], states: vec![y0.to_vec()], segments: Vec::new() };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut st = Stages::new(n);
    f.eval(t0, y0, &mut st.k[0])?;
    check_finite(&st.k[0], t0)?;

    // initial step guess (Hairer, Norsett & Wanner, II.4)
    let sc = |i: usize, y: &[f64]| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let d0 = (0..n).map(|i| (y0[i] / sc(i, y0)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let d1 = (0..n).map(|i| (st.k[0][i] / sc(i, y0)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(cfg.max_step).min(span);
    {
        let ytmp: Vec<f64> = (0..n).map(|i| y0[i] + dir * h * st.k[0][i]).collect();
        let mut f1 = vec![0.0; n];
        f.eval(t0 + dir * h, &ytmp, &mut f1)?;
        let d2 = (0..n).map(|i| ((f1[i] - st.k[0][i]) / sc(i, y0)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt() / h;
        let h1 = if d1.max(d2) <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        h = (100.0 * h).min(h1).min(cfg.max_step).min(span);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut steps = 0usize;
    let mut rejected_last = false;
    loop {
        if steps >= cfg.max_steps {
            return Err(Error::Stiffness { t });
        }
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        let last = h >= remaining * (1.0 - 1e-12);
        let hs = if last { remaining } else { h };
        if hs < 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::Stiffness { t });
        }
        st.step(&mut f, t, &y, dir * hs, &mut y1, &mut err)?;
        let en = error_norm(&err, &y, &y1, cfg);
        if !en.is_finite() {
            h = hs * 0.1;
            rejected_last = true;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Divergence { t });
            }
            continue;
        }
        steps += 1;
        if en <= 1.0 {
            let t_new = if last { t1 } else { t + dir * hs };
            check_finite(&y1, t_new)?;
            let mut seg = st.dense(t, t_new - t, &y, &y1);
            seg.h = t_new - t;
            let halt = stop(&seg)?;
            sol.times.push(t_new);
            sol.states.push(y1.clone());
            sol.segments.push(seg);
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            let (first, rest) = st.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if halt || last {
                break;
            }
            let mut fac = 0.9 * en.powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (hs * fac).min(cfg.max_step);
            rejected_last = false;
        } else {
            let fac = (0.9 * en.powf(-0.2)).max(0.2);
            h = hs * fac;
            rejected_last = true;
        }
    }
    Ok(sol)
}

/// Adaptive integration over `[t0, t1]` with dense output.
pub fn solve<F: OdeRhs>(f: F, t0: f64, y0: &[f64], t1: f64, cfg: &IntegratorConfig) -> Result<OdeSolution> {
    solve_until(f, t0, y0, t1, cfg, |_| Ok(false))
}

/// `n` equal Dormand-Prince steps without error control; returns the end state.
pub fn solve_fixed<F: OdeRhs>(mut f: F, t0: f64, y0: &[f64], t1: f64, n: usize) -> Result<Vec<f64>> {
    let dim = y0.len();
    let h = (t1 - t0) / n as f64;
    let mut st = Stages::new(dim);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut t = t0;
    f.eval(t, &y, &mut st.k[0])?;
    for i in 0..n {
        st.step(&mut f, t, &y, h, &mut y1, &mut err)?;
        t = t0 + (i + 1) as f64 * h;
        std::mem::swap(&mut y, &mut y1);
        let (first, rest) = st.k.split_at_mut(1);
        first[0].copy_from_slice(&rest[5]);
    }
    check_finite(&y, t)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_period_closes() {
        let cfg = IntegratorConfig::with_tol(1e-12);
        let sol = solve(harmonic, 0.0, &[0.0, 1.0], 2.0 * std::f64::consts::PI, &cfg).unwrap();
        let y = sol.final_state();
        assert!(y[0].abs() < 1e-10 && (y[1] - 1.0).abs() < 1e-10, "{y:?}");
    }

    #[test]
    fn backwards_integration() {
        let cfg = IntegratorConfig::with_tol(1e-12);
        let sol = solve(harmonic, 1.0, &[1.0f64.sin(), 1.0f64.cos()], 0.0, &cfg).unwrap();
        let y = sol.final_state();
        assert!(y[0].abs() < 1e-10 && (y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_accurate_and_differentiable() {
        let cfg = IntegratorConfig::with_tol(1e-11);
        let sol = solve(harmonic, 0.0, &[0.0, 1.0], 10.0, &cfg).unwrap();
        for k in 0..200 {
            let t = 0.05 * k as f64 + 0.013;
            let y = sol.eval(t);
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}");
            let s = &sol.segments[sol.segment_index(t).unwrap()];
            let dy = s.derivative(t);
            assert!((dy[0] - t.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let sol = solve(harmonic, 3.0, &[0.5, 0.25], 3.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(sol.times, vec![3.0]);
        assert_eq!(sol.states, vec![vec![0.5, 0.25]]);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = y[0] * y[0];
            Ok(())
        };
        let r = solve(f, 0.0, &[1.0], 2.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::Stiffness { .. }) | Err(Error::Divergence { .. })), "{r:?}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = IntegratorConfig { rel_tol: -1.0, ..Default::default() };
        assert!(solve(harmonic, 0.0, &[0.0, 1.0], 1.0, &cfg).is_err());
        let cfg = IntegratorConfig { method_order: 4, ..Default::default() };
        assert!(solve(harmonic, 0.0, &[0.0, 1.0], 1.0, &cfg).is_err());
    }
}
