//! Pinned distance measures `Δ_y μ`, the pushforward of μ under `z ↦ |z − y|`,
//! and their comparison with projections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::CubeIndex;
use crate::error::{Error, Result};
use crate::projection::{project_atoms, Direction, Grid1D};
use crate::scalar::Scalar;
use crate::schedule::ScaleSchedule;
use crate::tree::{GridMeasure, MeasureTree};

/// `θ(x, y) = (x − y)/|x − y|`, the direction from `y` toward `x`.
pub fn direction(x: [f64; 2], y: [f64; 2]) -> Result<Direction> {
    if x == y {
        return Err(Error::CoincidentPoints);
    }
    Direction::from_vector([x[0] - y[0], x[1] - y[1]])
}

/// `θ(y, x_Q)` with `x_Q` the center of Q, or a quarter-offset point of Q
/// when the center is `y` itself.
pub fn pin_direction(y: [f64; 2], q: &CubeIndex) -> Direction {
    let c = q.center();
    let h = 0.25 * q.side();
    direction(y, c).or_else(|_| direction(y, [c[0] - h, c[1] - h])).expect("distinct points")
}

/// Smallest distance from `y` to a positive-mass cell of the grid.
pub fn separation<S: Scalar>(grid: &GridMeasure<S>, y: [f64; 2]) -> f64 {
    grid.cubes().map(|(c, _)| c.distance_to(y)).fold(f64::INFINITY, f64::min)
}

fn check_separation(distance: f64, required: f64) -> Result<()> {
    if distance < required {
        return Err(Error::Separation { distance, required });
    }
    Ok(())
}

/// `Δ_y` of the grid's atomization (`4^subdiv` sub-atoms per cell), binned at
/// `out_level`. The pin must be at distance at least `2^{-out_level}` from the
/// support.
pub fn pinned_pushforward<S: Scalar>(grid: &GridMeasure<S>, y: [f64; 2], out_level: u32, subdiv: u32) -> Result<Grid1D> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParameter("pinned distances need a planar grid".into()));
    }
    check_separation(separation(grid, y), (-(out_level as f64)).exp2())?;
    Ok(pushforward_unchecked(grid, y, out_level, subdiv))
}

pub(crate) fn pushforward_unchecked<S: Scalar>(grid: &GridMeasure<S>, y: [f64; 2], out_level: u32, subdiv: u32) -> Grid1D {
    let side = (-(grid.level() as f64)).exp2();
    let per_axis = 1u32 << subdiv;
    let h = side / per_axis as f64;
    let share = 1.0 / (per_axis * per_axis) as f64;
    let scale = (out_level as f64).exp2();
    let mut bins = Vec::with_capacity(grid.len() << (2 * subdiv));
    for (cube, m) in grid.cubes() {
        let m = m.to_f64() * share;
        let c = cube.corner();
        for b in 0..per_axis {
            for a in 0..per_axis {
                let z = [c[0] + (a as f64 + 0.5) * h, c[1] + (b as f64 + 0.5) * h];
                let r = (z[0] - y[0]).hypot(z[1] - y[1]);
                bins.push(((r * scale).floor() as i64, m));
            }
        }
    }
    Grid1D::from_bins(out_level, grid.total().to_f64(), bins)
}

/// The grid of `μ_Q` at level `fine`, normalized.
fn local_grid<S: Scalar>(tree: &MeasureTree<S>, q: &CubeIndex, fine: u32) -> Result<GridMeasure<f64>> {
    let mq = tree.mass(q).to_f64();
    if !(mq > 0.0) {
        return Err(Error::ZeroMass);
    }
    let cells = tree
        .descendants(q, fine)?
        .iter()
        .map(|(k, m)| (CubeIndex::from_key(2, fine, *k), m.to_f64() / mq))
        .collect();
    GridMeasure::new(2, fine, cells)
}

/// `|H(Δ_y μ_Q, D_fine | D_m) − H(Π_θ μ_Q, D_fine | D_m)|` for `Q ∈ D_m`
/// and `θ = θ(y, x_Q)` with `x_Q` the center of Q.
pub fn linearization_gap<S: Scalar>(tree: &MeasureTree<S>, q: &CubeIndex, y: [f64; 2], fine: u32, slack: u32) -> Result<f64> {
    let m = q.level();
    if fine < m {
        return Err(Error::InvalidSchedule(format!("fine level {fine} above the level {m} of {q}")));
    }
    if fine - m > m + slack {
        return Err(Error::InvalidSchedule(format!("gap {} exceeds m + T = {}", fine - m, m + slack)));
    }
    check_separation(q.distance_to(y), (-(fine as f64)).exp2())?;
    let grid = local_grid(tree, q, fine)?;
    let pinned = pushforward_unchecked(&grid, y, fine, 0);
    let theta = pin_direction(y, q);
    let projected = project_atoms(&grid, theta, 0, fine)?;
    Ok((pinned.conditional_entropy(m)? - projected.conditional_entropy(m)?).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntropy {
    pub j: usize,
    pub m_j: u32,
    pub d_j: u32,
    /// `Σ_Q μ(Q)·H(μ^Q_{θ(y, x_Q)}, D_{d_j})`.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleBound {
    /// `H(Δ_y μ, D_{m_k})`.
    pub lhs: f64,
    pub rhs_sum: f64,
    pub per_scale: Vec<ScaleEntropy>,
}

/// Both sides of the multiscale lower bound for the entropy of `Δ_y μ`.
pub fn multiscale_entropy_bound<S: Scalar>(tree: &MeasureTree<S>, y: [f64; 2], schedule: &ScaleSchedule) -> Result<MultiscaleBound> {
    schedule.check_within(tree.depth())?;
    if !schedule.linearization_admissible() {
        return Err(Error::InvalidSchedule(format!(
            "{:?} violates d_j <= m_j + {}",
            schedule.levels(),
            schedule.slack()
        )));
    }
    let finest = tree.discretize(tree.depth())?;
    let total = tree.total().to_f64();
    let lhs = pinned_pushforward(&finest, y, schedule.last(), 0)?.entropy();
    let per_scale = (0..schedule.k())
        .map(|j| {
            let (m, d) = (schedule.m(j), schedule.gap(j));
            let nodes = tree.level(m)?;
            let parts: Vec<f64> = nodes
                .par_iter()
                .map(|(key, mass)| {
                    let q = CubeIndex::from_key(2, m, *key);
                    let local = tree.renormalize_to_unit(&q)?;
                    let grid = local.discretize(local.depth())?;
                    let theta = pin_direction(y, &q);
                    let h = project_atoms(&grid, theta, 0, d)?.entropy();
                    Ok(mass.to_f64() / total * h)
                })
                .collect::<Result<_>>()?;
            Ok(ScaleEntropy { j, m_j: m, d_j: d, contribution: parts.iter().sum() })
        })
        .collect::<Result<Vec<_>>>()?;
    let rhs_sum = per_scale.iter().map(|s| s.contribution).sum();
    Ok(MultiscaleBound { lhs, rhs_sum, per_scale })
}
