//! Poincaré sections and crossing detection on dense output.

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::model::{FullState, SlowPoint};

use super::ode::DenseSegment;
use super::Trajectory;

/// Which sign changes of `s` count as crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `s` goes from `<= 0` to `> 0`.
    Rising,
    /// `s` goes from `>= 0` to `< 0`.
    Falling,
    Any,
}

impl Orientation {
    pub fn reversed(self) -> Self {
        match self {
            Orientation::Rising => Orientation::Falling,
            Orientation::Falling => Orientation::Rising,
            Orientation::Any => Orientation::Any,
        }
    }

    fn matches(self, a: f64, b: f64) -> bool {
        let rising = a <= 0.0 && b > 0.0;
        let falling = a >= 0.0 && b < 0.0;
        match self {
            Orientation::Rising => rising,
            Orientation::Falling => falling,
            Orientation::Any => rising || falling,
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A hypersurface `s(w, z) = 0` in the flat `[p.., q.., v.., u..]` layout.
#[derive(Clone)]
pub struct Section {
    pub label: String,
    pub orientation: Orientation,
    s: ScalarFn,
    grad: GradFn,
    /// `|grad s . field|` below this marks a tangency.
    pub tangency_threshold: f64,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Section").field("label", &self.label).field("orientation", &self.orientation).finish()
    }
}

impl Section {
    pub fn from_fns(
        label: impl Into<String>,
        orientation: Orientation,
        s: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Section { label: label.into(), orientation, s: Arc::new(s), grad: Arc::new(grad), tangency_threshold: 1e-8 }
    }

    /// The affine hyperplane `normal . (x - point) = 0`.
    pub fn hyperplane(label: impl Into<String>, orientation: Orientation, normal: Vec<f64>, point: Vec<f64>) -> Self {
        let n1 = normal.clone();
        let offset: f64 = normal.iter().zip(&point).map(|(a, b)| a * b).sum();
        Section::from_fns(
            label,
            orientation,
            move |x| n1.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - offset,
            move |_| normal.clone(),
        )
    }

    /// `x[index] = value` for a flat state of length `len`.
    pub fn coordinate(
        label: impl Into<String>,
        orientation: Orientation,
        len: usize,
        index: usize,
        value: f64,
    ) -> Self {
        let mut normal = vec![0.0; len];
        normal[index] = 1.0;
        let mut point = vec![0.0; len];
        point[index] = value;
        Section::hyperplane(label, orientation, normal, point)
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.s)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
}

/// Attached to crossings where the flow is nearly tangent to the section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangencyWarning {
    /// `|grad s . x'|` at the root.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEvent {
    pub t: f64,
    pub state: FullState,
    pub z: SlowPoint,
    pub label: String,
    /// `s` at the refined root.
    pub residual: f64,
    pub tangency: Option<TangencyWarning>,
}

const SUBDIVISIONS: usize = 4;
const TIME_TOL: f64 = 1e-12;
const VALUE_TOL: f64 = 1e-10;

/// Root of `g` in `[a, b]` with `g(a) * g(b) <= 0`, by the Illinois variant of
/// regula falsi with bisection safeguards.
pub(crate) fn refine_root(g: impl Fn(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { a } else { b };
    for _ in 0..200 {
        let width = (b - a).abs();
        let mut t = (a * fb - b * fa) / (fb - fa);
        if !t.is_finite() || t <= a.min(b) || t >= a.max(b) {
            t = 0.5 * (a + b);
        }
        let ft = g(t);
        best = t;
        if ft == 0.0 || (width < TIME_TOL && ft.abs() <= VALUE_TOL) {
            break;
        }
        if (ft > 0.0) == (fb > 0.0) {
            b = t;
            fb = ft;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = t;
            fa = ft;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if (b - a).abs() < TIME_TOL {
            best = if fa.abs() < fb.abs() { a } else { b };
            if fa.abs().min(fb.abs()) <= VALUE_TOL {
                break;
            }
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Oriented crossings of one dense segment, using `y0`/`y1` as exact
/// endpoint states.
pub(crate) fn segment_crossings(
    seg: &DenseSegment,
    y0: &[f64],
    y1: &[f64],
    section: &Section,
) -> Vec<(f64, Vec<f64>, f64, Option<TangencyWarning>)> {
    let mut out = Vec::new();
    let n = SUBDIVISIONS;
    let ts: Vec<f64> = (0..=n).map(|k| if k == n { seg.t1() } else { seg.t0 + seg.h * k as f64 / n as f64 }).collect();
    let vals: Vec<f64> = ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            if k == 0 {
                section.value(y0)
            } else if k == n {
                section.value(y1)
            } else {
                section.value(&seg.eval(t))
            }
        })
        .collect();
    for k in 0..n {
        if !section.orientation.matches(vals[k], vals[k + 1]) {
            continue;
        }
        let g = |t: f64| section.value(&seg.eval(t));
        let t = if vals[k] == 0.0 { ts[k] } else { refine_root(g, ts[k], vals[k], ts[k + 1], vals[k + 1]) };
        let y = if t == ts[0] {
            y0.to_vec()
        } else if t == ts[n] {
            y1.to_vec()
        } else {
            seg.eval(t)
        };
        let residual = section.value(&y);
        let rate = dot(&section.gradient(&y), &seg.derivative(t)).abs();
        let tangency = (rate < section.tangency_threshold).then_some(TangencyWarning { rate });
        out.push((t, y, residual, tangency));
    }
    out
}

/// All oriented crossings of `section` along a trajectory, in time order.
///
/// Each step is scanned at a few interior points, so two crossings closer
/// together than about a quarter step (a near-tangency) can go unseen.
pub fn detect_crossings(traj: &Trajectory, section: &Section) -> Result<Vec<CrossingEvent>> {
    let sol = &traj.solution;
    let mut events = Vec::new();
    for (i, seg) in sol.segments.iter().enumerate() {
        for (t, y, residual, tangency) in segment_crossings(seg, &sol.states[i], &sol.states[i + 1], section) {
            let state = FullState::from_flat(&y, traj.dims);
            let z = state.z.clone();
            events.push(CrossingEvent { t, state, z, label: section.label.clone(), residual, tangency });
        }
    }
    Ok(events)
}
