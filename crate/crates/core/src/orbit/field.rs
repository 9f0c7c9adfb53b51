//! Action fields: `J`, `T` and `grad J` on a grid over the slow domain, built
//! by continuation of one seed orbit.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{BicubicHermite, Grid};
use crate::model::{Domain, HamiltonianModel, SlowPoint};

use super::{action, action_gradient, find_periodic_orbit, OrbitConfig, OrbitGuess, PeriodicOrbit};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    pub orbit: OrbitConfig,
    /// Nodes per axis of the grid over the bounding box of the domain.
    pub resolution: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig { orbit: OrbitConfig::default(), resolution: 21 }
    }
}

#[derive(Debug, Clone)]
enum Interpolant {
    /// `d = 1`: C¹ bicubic Hermite for both `J` and `T`.
    Bicubic { action: BicubicHermite, period: BicubicHermite },
    /// `d > 1`: multilinear blend of first-order Taylor expansions of `J`,
    /// multilinear gradient and period.
    Multilinear,
}

/// The action `J`, period `T` and identity-based gradient of a family of
/// frozen periodic orbits, sampled on a grid and interpolated.
#[derive(Debug, Clone)]
pub struct ActionField {
    pub label: String,
    pub domain: Domain,
    pub grid: Grid,
    pub action: Vec<f64>,
    pub period: Vec<f64>,
    /// Flattened `[dJ/dv.., dJ/du..]` per node.
    pub gradient: Vec<Vec<f64>>,
    interp: Interpolant,
}

/// Second-order finite difference of nodal values along `axis`.
fn grid_derivative(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    let n = grid.n[axis];
    (0..grid.len())
        .map(|k| {
            let idx = grid.multi_index(k);
            let at = |i: usize| {
                let mut j = idx.clone();
                j[axis] = i;
                values[grid.flat_index(&j)]
            };
            let i = idx[axis];
            if n == 2 {
                (at(1) - at(0)) / h
            } else if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * at(i) - 4.0 * at(i - 1) + at(i - 2)) / (2.0 * h)
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            }
        })
        .collect()
}

impl ActionField {
    /// Assembles a field from nodal data on `grid`.
    pub fn from_nodes(
        label: impl Into<String>,
        domain: Domain,
        grid: Grid,
        action: Vec<f64>,
        period: Vec<f64>,
        gradient: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = grid.len();
        if grid.dim() != domain.dim() {
            return Err(Error::Dimension("grid and domain dimensions differ".into()));
        }
        if action.len() != n
            || period.len() != n
            || gradient.len() != n
            || gradient.iter().any(|g| g.len() != grid.dim())
        {
            return Err(Error::Dimension("nodal arrays must match the grid".into()));
        }
        if let Some(t) = period.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Parameter(format!("periods must be positive, found {t}")));
        }
        let interp = if grid.dim() == 2 {
            let jv: Vec<f64> = gradient.iter().map(|g| g[0]).collect();
            let ju: Vec<f64> = gradient.iter().map(|g| g[1]).collect();
            let cross_a = grid_derivative(&grid, &ju, 0);
            let cross_b = grid_derivative(&grid, &jv, 1);
            let jvu: Vec<f64> = cross_a.iter().zip(&cross_b).map(|(a, b)| 0.5 * (a + b)).collect();
            let tv = grid_derivative(&grid, &period, 0);
            let tu = grid_derivative(&grid, &period, 1);
            let tvu = grid_derivative(&grid, &tu, 0);
            Interpolant::Bicubic {
                action: BicubicHermite::new(grid.clone(), action.clone(), jv, ju, jvu)?,
                period: BicubicHermite::new(grid.clone(), period.clone(), tv, tu, tvu)?,
            }
        } else {
            Interpolant::Multilinear
        };
        Ok(ActionField { label: label.into(), domain, grid, action, period, gradient, interp })
    }

    pub fn slow_dof(&self) -> usize {
        self.domain.slow_dof()
    }

    pub fn value(&self, z: &SlowPoint) -> f64 {
        let x = z.to_flat();
        match &self.interp {
            Interpolant::Bicubic { action, .. } => action.eval(&x).0,
            Interpolant::Multilinear => self
                .grid
                .multilinear(&x)
                .iter()
                .map(|(k, w, _)| {
                    let node = self.grid.node(*k);
                    let taylor: f64 =
                        self.gradient[*k].iter().zip(x.iter().zip(&node)).map(|(g, (a, b))| g * (a - b)).sum();
                    w * (self.action[*k] + taylor)
                })
                .sum(),
        }
    }

    pub fn gradient(&self, z: &SlowPoint) -> SlowPoint {
        let x = z.to_flat();
        match &self.interp {
            Interpolant::Bicubic { action, .. } => {
                let g = action.eval(&x).1;
                SlowPoint::planar(g[0], g[1])
            }
            Interpolant::Multilinear => {
                let mut g = vec![0.0; x.len()];
                for (k, w, _) in self.grid.multilinear(&x) {
                    for (gi, ni) in g.iter_mut().zip(&self.gradient[k]) {
                        *gi += w * ni;
                    }
                }
                SlowPoint::from_flat(&g)
            }
        }
    }

    pub fn period_at(&self, z: &SlowPoint) -> f64 {
        let x = z.to_flat();
        match &self.interp {
            Interpolant::Bicubic { period, .. } => period.eval(&x).0,
            Interpolant::Multilinear => self.grid.multilinear(&x).iter().map(|(k, w, _)| w * self.period[*k]).sum(),
        }
    }

    /// Writes the versioned CSV grid file.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# slowdrift-action-field v1")?;
        writeln!(out, "# label: {}", self.label)?;
        let dom = match &self.domain {
            Domain::Box { lo, hi } => {
                format!("box {}", lo.iter().chain(hi).map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" "))
            }
            Domain::Ball { center, radius } => format!(
                "ball {} {radius:.16e}",
                center.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
            ),
        };
        writeln!(out, "# domain: {dom}")?;
        writeln!(out, "# resolution: {}", self.grid.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "))?;
        let d = self.slow_dof();
        let names = |base: &str| -> Vec<String> {
            (0..d).map(|i| if d == 1 { base.to_string() } else { format!("{base}{}", i + 1) }).collect()
        };
        let mut header = names("v");
        header.extend(names("u"));
        header.push("J".into());
        header.push("T".into());
        header.extend(names("dJdv"));
        header.extend(names("dJdu"));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.node(k).iter().map(|x| format!("{x:.16e}")).collect();
            row.push(format!("{:.16e}", self.action[k]));
            row.push(format!("{:.16e}", self.period[k]));
            row.extend(self.gradient[k].iter().map(|x| format!("{x:.16e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a file written by [`ActionField::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of action field file".into()))?.map_err(Error::from)
        };
        let magic = next()?;
        if magic.trim() != "# slowdrift-action-field v1" {
            return Err(Error::Parse(format!("not an action field file: {magic:?}")));
        }
        let field = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(&format!("# {key}: "))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `# {key}:` header, got {line:?}")))
        };
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}")))).collect()
        };
        let label = field(next()?, "label")?;
        let dom = field(next()?, "domain")?;
        let domain = if let Some(rest) = dom.strip_prefix("box ") {
            let v = nums(rest)?;
            let h = v.len() / 2;
            Domain::new_box(v[..h].to_vec(), v[h..].to_vec())?
        } else if let Some(rest) = dom.strip_prefix("ball ") {
            let v = nums(rest)?;
            let (r, c) = v.split_last().ok_or_else(|| Error::Parse("empty ball".into()))?;
            Domain::new_ball(c.to_vec(), *r)?
        } else {
            return Err(Error::Parse(format!("unknown domain {dom:?}")));
        };
        let res: Vec<usize> = field(next()?, "resolution")?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let (lo, hi) = domain.bounding_box();
        let grid = Grid::new(lo, hi, res)?;
        let _header = next()?;
        let dim = grid.dim();
        let (mut action, mut period, mut gradient) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..grid.len() {
            let line = next()?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * dim + 2 {
                return Err(Error::Parse(format!("row {k} has {} columns, expected {}", vals.len(), 2 * dim + 2)));
            }
            let node = grid.node(k);
            if node.iter().zip(&vals[..dim]).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
                return Err(Error::Parse(format!("row {k} is not at grid node {node:?}")));
            }
            action.push(vals[dim]);
            period.push(vals[dim + 1]);
            gradient.push(vals[dim + 2..].to_vec());
        }
        ActionField::from_nodes(label, domain, grid, action, period, gradient)
    }
}

struct NodeSolution {
    orbit: OrbitGuess,
    action: f64,
    gradient: Vec<f64>,
}

fn solve_node(model: &HamiltonianModel, z: &SlowPoint, guess: &OrbitGuess, cfg: &OrbitConfig) -> Result<NodeSolution> {
    let orbit: PeriodicOrbit = find_periodic_orbit(model, z, guess, cfg)?;
    Ok(NodeSolution {
        action: action(&orbit)?,
        gradient: action_gradient(model, &orbit)?.to_flat(),
        orbit: orbit.guess(),
    })
}

/// Continues `seed` over a grid covering `domain`, layer by layer outward from
/// the node nearest the seed. Each node is warm-started from its solved
/// neighbour with the smallest index, so the result does not depend on thread
/// scheduling.
pub fn build_action_field(
    model: &HamiltonianModel,
    label: impl Into<String>,
    seed: &PeriodicOrbit,
    domain: &Domain,
    cfg: &ContinuationConfig,
) -> Result<ActionField> {
    if domain.slow_dof() != model.dims().slow_dof || seed.z.dof() != model.dims().slow_dof {
        return Err(Error::Dimension("domain, seed and model disagree on d".into()));
    }
    if !domain.contains(&seed.z) {
        return Err(Error::Domain(format!("seed orbit at {} is outside the domain", seed.z)));
    }
    let (lo, hi) = domain.bounding_box();
    let grid = Grid::uniform(lo, hi, cfg.resolution)?;
    let n = grid.len();
    let zs: Vec<SlowPoint> = grid.nodes().iter().map(|x| SlowPoint::from_flat(x)).collect();
    let start =
        (0..n).min_by(|&a, &b| zs[a].distance(&seed.z).total_cmp(&zs[b].distance(&seed.z))).expect("grid is nonempty");
    let mut solved: Vec<Option<NodeSolution>> = (0..n).map(|_| None).collect();
    let mut failed: Vec<bool> = vec![false; n];
    match solve_node(model, &zs[start], &seed.guess(), &cfg.orbit) {
        Ok(s) => solved[start] = Some(s),
        Err(_) => failed[start] = true,
    }
    loop {
        let mut frontier: Vec<usize> = (0..n)
            .filter(|&k| solved[k].is_none() && !failed[k] && grid.neighbors(k).iter().any(|&j| solved[j].is_some()))
            .collect();
        frontier.sort_unstable();
        if frontier.is_empty() {
            break;
        }
        let results: Vec<(usize, Option<NodeSolution>)> = frontier
            .par_iter()
            .map(|&k| {
                let mut parents: Vec<usize> = grid.neighbors(k).into_iter().filter(|&j| solved[j].is_some()).collect();
                parents.sort_unstable();
                for j in parents {
                    let guess = &solved[j].as_ref().expect("filtered").orbit;
                    if let Ok(s) = solve_node(model, &zs[k], guess, &cfg.orbit) {
                        return (k, Some(s));
                    }
                }
                (k, None)
            })
            .collect();
        for (k, r) in results {
            match r {
                Some(s) => solved[k] = Some(s),
                None => failed[k] = true,
            }
        }
    }
    let frontier: Vec<usize> = (0..n).filter(|&k| solved[k].is_some()).collect();
    if frontier.len() < n {
        let first = (0..n).find(|&k| solved[k].is_none()).expect("some node unsolved");
        return Err(Error::ContinuationBreakdown {
            solved: frontier.len(),
            failed: n - frontier.len(),
            first_failure: grid.multi_index(first),
            frontier,
        });
    }
    let nodes: Vec<NodeSolution> = solved.into_iter().map(|s| s.expect("all solved")).collect();
    ActionField::from_nodes(
        label,
        domain.clone(),
        grid,
        nodes.iter().map(|s| s.action).collect(),
        nodes.iter().map(|s| s.orbit.period).collect(),
        nodes.iter().map(|s| s.gradient.clone()).collect(),
    )
}
