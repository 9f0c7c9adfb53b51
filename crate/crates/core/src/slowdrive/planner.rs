//! Accessibility planning in one slow degree of freedom.
//!
//! For `d = 1` each slow flow moves along a level curve of its own generator.
//! The planner searches the lattice of crossings between level curves of two
//! generators: from the current point it follows one generator until it meets
//! a discretized level of the other, switches, and repeats until it runs along
//! the target's own level curve through the target.

use std::collections::{HashSet, VecDeque};

use super::{field_at, integrate_slow_until, slow_integrator, AccessiblePath, SlowGenerator, SlowGeneratorSet};
use crate::error::{Error, Result};
use crate::flow::ode::OdeSolution;
use crate::flow::section::refine_root;
use crate::model::SlowPoint;

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    /// Discretized levels per generator, spread over its range on the domain.
    pub levels: usize,
    /// Distance to the target accepted by the lattice search.
    pub tolerance: f64,
    /// Distance to the target required after refining the last durations.
    pub refine_tolerance: f64,
    /// Longest single segment that is traced.
    pub tau_max: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { levels: 64, tolerance: 1e-4, refine_tolerance: 1e-6, tau_max: 1e3 }
    }
}

/// A traced piece of one slow flow: the run and the usable time window.
struct Trace {
    solution: OdeSolution,
    t_end: f64,
}

/// Follows `gen` from `p` until the curve closes, leaves the domain or
/// reaches `tau_max`.
fn trace(gen: &dyn SlowGenerator, p: &SlowPoint, tau_max: f64, close_tol: f64) -> Result<Trace> {
    let x0 = field_at(gen, p).to_flat();
    let p_flat = p.to_flat();
    let s = |y: &[f64]| -> f64 { y.iter().zip(&p_flat).zip(&x0).map(|((a, b), n)| (a - b) * n).sum() };
    let mut closed = None;
    let run = integrate_slow_until(gen, p, tau_max, &slow_integrator(), |seg| {
        const SUB: usize = 4;
        let mut ta = seg.t0;
        let mut sa = s(seg.start());
        for k in 1..=SUB {
            let tb = if k == SUB { seg.t1() } else { seg.t0 + seg.h * k as f64 / SUB as f64 };
            let sb = s(&seg.eval(tb));
            if sa < 0.0 && sb >= 0.0 {
                let t = refine_root(|t| s(&seg.eval(t)), ta, sa, tb, sb);
                let dist = SlowPoint::from_flat(&seg.eval(t)).distance(p);
                if dist <= close_tol {
                    closed = Some(t);
                    return Ok(true);
                }
            }
            ta = tb;
            sa = sb;
        }
        Ok(false)
    })?;
    let t_end = closed.or(run.exit).unwrap_or(run.solution.t_end());
    Ok(Trace { solution: run.solution, t_end })
}

/// Crossings of the levels of `other` along a trace, as `(time, level index)`.
fn level_crossings(tr: &Trace, other: &dyn SlowGenerator, levels: &[f64]) -> Vec<(f64, usize)> {
    const SUB: usize = 4;
    const T_MIN: f64 = 1e-9;
    let g = |t: f64| other.value(&SlowPoint::from_flat(&tr.solution.eval(t)));
    let mut out = Vec::new();
    for seg in &tr.solution.segments {
        if seg.t0 >= tr.t_end {
            break;
        }
        let t_hi = seg.t1().min(tr.t_end);
        let ts: Vec<f64> = (0..=SUB).map(|k| seg.t0 + (t_hi - seg.t0) * k as f64 / SUB as f64).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
        for k in 0..SUB {
            let (ga, gb) = (vals[k], vals[k + 1]);
            for (idx, &c) in levels.iter().enumerate() {
                let (fa, fb) = (ga - c, gb - c);
                if fa == 0.0 || fa * fb >= 0.0 && fb != 0.0 {
                    continue;
                }
                let t = refine_root(|t| g(t) - c, ts[k], fa, ts[k + 1], fb);
                if t > T_MIN && t < tr.t_end {
                    out.push((t, idx));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn levels_for(gen: &dyn SlowGenerator, samples: &[SlowPoint], n: usize, target: f64) -> Vec<f64> {
    let vals: Vec<f64> = samples.iter().map(|z| gen.value(z)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut levels: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * (hi - lo) / n as f64).collect();
    levels.push(target);
    levels
}

/// Endpoint of the path made of `fixed` segments from `z0` followed by the
/// given tail durations.
fn endpoint(gens: &SlowGeneratorSet, start: &SlowPoint, tail: &[(usize, f64)]) -> Result<SlowPoint> {
    let mut z = start.clone();
    for &(k, dt) in tail {
        if !(dt > 0.0) {
            return Err(Error::Parameter("nonpositive duration during refinement".into()));
        }
        z = super::slow_flow(gens.get(k)?.as_ref(), &z, dt, &slow_integrator())?;
    }
    Ok(z)
}

/// Gauss-Newton on the last (up to two) durations so the endpoint hits `z1`.
fn refine_tail(gens: &SlowGeneratorSet, z0: &SlowPoint, segments: &mut [(usize, f64)], z1: &SlowPoint) -> Result<f64> {
    let n = segments.len();
    let free = n.min(2);
    let head = &segments[..n - free];
    let start = endpoint(gens, z0, head)?;
    let mut tail: Vec<(usize, f64)> = segments[n - free..].to_vec();
    let resid = |tail: &[(usize, f64)]| -> Result<Vec<f64>> {
        let e = endpoint(gens, &start, tail)?.to_flat();
        Ok(e.iter().zip(z1.to_flat()).map(|(a, b)| a - b).collect())
    };
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut r = resid(&tail)?;
    for _ in 0..20 {
        if norm(&r) <= 1e-11 {
            break;
        }
        let mut jac = nalgebra::DMatrix::zeros(r.len(), free);
        for j in 0..free {
            let h = 1e-7 * tail[j].1.max(1.0);
            let mut shifted = tail.clone();
            shifted[j].1 += h;
            let rp = resid(&shifted)?;
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let svd = jac.svd(true, true);
        let rhs = nalgebra::DVector::from_vec(r.iter().map(|x| -x).collect());
        let step = match svd.solve(&rhs, 1e-12) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let trial: Vec<(usize, f64)> =
                tail.iter().enumerate().map(|(j, &(k, dt))| (k, dt + lambda * step[j])).collect();
            if trial.iter().all(|s| s.1 > 0.0) {
                if let Ok(rt) = resid(&trial) {
                    if norm(&rt) < norm(&r) {
                        tail = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    segments[n - free..].copy_from_slice(&tail);
    Ok(norm(&r))
}

/// Plans a path from `z0` to `z1` alternating the generators `pair[0]` and
/// `pair[1]` of `gens`, inside the shared domain.
///
/// Only `d = 1` is supported. Generators with common level lines leave the
/// target unreachable unless it lies on the start's level curve.
pub fn plan_level_lines(
    gens: &SlowGeneratorSet,
    pair: [usize; 2],
    z0: &SlowPoint,
    z1: &SlowPoint,
    cfg: &PlannerConfig,
) -> Result<AccessiblePath> {
    let domain = gens.domain();
    if domain.slow_dof() != 1 || z0.dof() != 1 || z1.dof() != 1 {
        return Err(Error::Dimension("level-line planning needs one slow degree of freedom".into()));
    }
    for z in [z0, z1] {
        if !domain.contains(z) {
            return Err(Error::Domain(format!("{z} is outside the domain")));
        }
    }
    if z0 == z1 {
        return Ok(AccessiblePath::empty(z0.clone()));
    }
    let g = [gens.get(pair[0])?.as_ref(), gens.get(pair[1])?.as_ref()];
    let samples = domain.sample_points(33);
    let levels = [
        levels_for(g[0], &samples, cfg.levels, g[0].value(z1)),
        levels_for(g[1], &samples, cfg.levels, g[1].value(z1)),
    ];
    let target_level = cfg.levels;
    let (lo, hi) = domain.bounding_box();
    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
    let close_tol = 1e-6 * diam;

    // queue entries: (side to follow, start point, segments so far)
    let mut queue: VecDeque<(usize, SlowPoint, Vec<(usize, f64)>)> = VecDeque::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    queue.push_back((0, z0.clone(), Vec::new()));
    queue.push_back((1, z0.clone(), Vec::new()));
    let mut found = None;
    'search: while let Some((side, p, segs)) = queue.pop_front() {
        let gen = g[side];
        let speed = field_at(gen, &p).norm();
        if speed < 1e-12 {
            continue;
        }
        let tr = trace(gen, &p, cfg.tau_max, close_tol)?;
        let other = 1 - side;
        let crossings = level_crossings(&tr, g[other], &levels[other]);
        let mut best: Option<(f64, f64)> = None;
        for &(t, idx) in &crossings {
            if idx == target_level {
                let d = SlowPoint::from_flat(&tr.solution.eval(t)).distance(z1);
                if best.map_or(true, |b| d < b.1) {
                    best = Some((t, d));
                }
            }
        }
        if let Some((t, d)) = best {
            if d <= cfg.tolerance {
                let mut done = segs.clone();
                done.push((pair[side], t));
                found = Some(done);
                break 'search;
            }
        }
        for (t, idx) in crossings {
            if seen.insert((other, idx)) {
                let q = SlowPoint::from_flat(&tr.solution.eval(t));
                let mut next = segs.clone();
                next.push((pair[side], t));
                queue.push_back((other, q, next));
            }
        }
    }
    let mut segments =
        found.ok_or_else(|| Error::NotAccessible(format!("no route along level lines from {z0} to {z1}")))?;
    let miss = refine_tail(gens, z0, &mut segments, z1)?;
    if miss > cfg.refine_tolerance {
        return Err(Error::Accuracy(format!("planned path ends {miss:.3e} from the target")));
    }
    super::path_validate(&AccessiblePath::from_durations(z0.clone(), &segments), gens)
}
