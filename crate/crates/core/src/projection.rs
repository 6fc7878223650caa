//! Orthogonal projections `Π_θ(x) = θ·x` of planar grids onto lines.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::dyadic_energy;
use crate::entropy::shannon;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sobolev::{sobolev_norm_sq, SobolevParams};
use crate::tree::{GridMeasure, MeasureTree};

/// Default number of sub-atoms per axis exponent for density-faithful projections.
pub const DEFAULT_SUBDIV: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    angle: f64,
}

impl Direction {
    /// The direction at `angle` radians, reduced to `[0, 2π)`.
    pub fn from_angle(angle: f64) -> Self {
        let mut a = angle.rem_euclid(TAU);
        if a >= TAU {
            a = 0.0;
        }
        Direction { angle: a }
    }

    pub fn from_vector(v: [f64; 2]) -> Result<Self> {
        if v[0] == 0.0 && v[1] == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        Ok(Self::from_angle(v[1].atan2(v[0])))
    }

    /// `n` equispaced directions starting at angle 0.
    pub fn equispaced(n: usize) -> Vec<Direction> {
        (0..n).map(|i| Direction::from_angle(TAU * i as f64 / n as f64)).collect()
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn vector(&self) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [c, s]
    }

    pub fn project(&self, p: [f64; 2]) -> f64 {
        let v = self.vector();
        v[0] * p[0] + v[1] * p[1]
    }

    /// Index of the nearest of `n` equispaced angles.
    pub fn nearest_index(&self, n: usize) -> usize {
        ((self.angle / TAU * n as f64).round() as usize) % n
    }
}

/// A measure on the line binned on the dyadic intervals `[i 2^{-m}, (i+1) 2^{-m})`
/// for `i` in `first_index..first_index + masses.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    level: u32,
    first_index: i64,
    masses: Vec<f64>,
    total: f64,
}

impl Grid1D {
    /// Bin `(position, mass)` atoms at `level`; the total is carried separately
    /// so that it is preserved without rounding.
    pub fn from_atoms(level: u32, total: f64, atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let scale = (level as f64).exp2();
        let binned: Vec<(i64, f64)> = atoms.into_iter().map(|(t, m)| ((t * scale).floor() as i64, m)).collect();
        Self::from_bins(level, total, binned)
    }

    pub fn from_bins(level: u32, total: f64, bins: Vec<(i64, f64)>) -> Self {
        let (Some(lo), Some(hi)) = (bins.iter().map(|b| b.0).min(), bins.iter().map(|b| b.0).max()) else {
            return Grid1D { level, first_index: 0, masses: Vec::new(), total };
        };
        let mut masses = vec![0.0; (hi - lo + 1) as usize];
        for (i, m) in bins {
            masses[(i - lo) as usize] += m;
        }
        Grid1D { level, first_index: lo, masses, total }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn first_index(&self) -> i64 {
        self.first_index
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `(bin index, mass)` for the positive bins.
    pub fn bins(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses.iter().enumerate().filter(|(_, m)| **m > 0.0).map(|(i, m)| (self.first_index + i as i64, *m))
    }

    pub fn support_bins(&self) -> usize {
        self.bins().count()
    }

    /// `2^m Σ mass²`, the squared L² norm of the binned density.
    pub fn l2_norm_sq(&self) -> f64 {
        (self.level as f64).exp2() * self.masses.iter().map(|m| m * m).sum::<f64>()
    }

    /// Shannon entropy of the normalized bin masses.
    pub fn entropy(&self) -> f64 {
        let t: f64 = self.masses.iter().sum();
        if t <= 0.0 {
            return 0.0;
        }
        shannon(self.masses.iter().map(|m| m / t))
    }

    pub fn normalized_entropy(&self) -> f64 {
        if self.level == 0 {
            0.0
        } else {
            self.entropy() / self.level as f64
        }
    }

    /// Merge bins into the coarser level `level`.
    pub fn coarsen(&self, level: u32) -> Result<Grid1D> {
        if level > self.level {
            return Err(Error::OutOfResolution { level, depth: self.level });
        }
        let shift = self.level - level;
        let bins = self.bins().map(|(i, m)| (i >> shift, m)).collect();
        Ok(Grid1D::from_bins(level, self.total, bins))
    }

    /// `H(ν, D_level | D_given)` for the normalized bin masses.
    pub fn conditional_entropy(&self, given: u32) -> Result<f64> {
        Ok(self.entropy() - self.coarsen(given)?.entropy())
    }
}

/// Offsets of the `4^subdiv` sub-atom centers from the cell center, in units
/// of the cell side.
fn sub_offsets(subdiv: u32) -> Vec<[f64; 2]> {
    let n = 1u32 << subdiv;
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity((n * n) as usize);
    for b in 0..n {
        for a in 0..n {
            out.push([(a as f64 + 0.5) * h - 0.5, (b as f64 + 0.5) * h - 0.5]);
        }
    }
    out
}

/// Project a planar grid onto `θ`, splitting each cell into `4^subdiv`
/// sub-atoms, and bin the result at `out_level`.
pub fn project_atoms<S: Scalar>(grid: &GridMeasure<S>, theta: Direction, subdiv: u32, out_level: u32) -> Result<Grid1D> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParameter("projections need a planar grid".into()));
    }
    let side = (-(grid.level() as f64)).exp2();
    let v = theta.vector();
    let offsets: Vec<f64> = sub_offsets(subdiv).iter().map(|o| (v[0] * o[0] + v[1] * o[1]) * side).collect();
    let share = 1.0 / offsets.len() as f64;
    let scale = (out_level as f64).exp2();
    let mut bins = Vec::with_capacity(grid.len() * offsets.len());
    for (cube, m) in grid.cubes() {
        let m = m.to_f64() * share;
        let t = theta.project(cube.center());
        for o in &offsets {
            bins.push((((t + o) * scale).floor() as i64, m));
        }
    }
    Ok(Grid1D::from_bins(out_level, grid.total().to_f64(), bins))
}

/// `Π_θ` of the grid binned at its own level: `subdiv = 0` gives the
/// surrogate of `(μ_θ)^(m)`, larger values approach `Π_θ(μ^(m))`.
pub fn project_grid<S: Scalar>(grid: &GridMeasure<S>, theta: Direction, subdiv: u32) -> Result<Grid1D> {
    project_atoms(grid, theta, subdiv, grid.level())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Comparison {
    /// `‖(μ_θ)^(m)‖₂²`.
    pub atoms: f64,
    /// `‖Π_θ(μ^(m))‖₂²`.
    pub density: f64,
    pub ratio: f64,
}

pub fn l2_comparison<S: Scalar>(grid: &GridMeasure<S>, theta: Direction) -> Result<L2Comparison> {
    if !grid.total().is_positive() {
        return Err(Error::ZeroMass);
    }
    let atoms = project_grid(grid, theta, 0)?.l2_norm_sq();
    let density = project_grid(grid, theta, DEFAULT_SUBDIV)?.l2_norm_sq();
    Ok(L2Comparison { atoms, density, ratio: atoms / density })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarstrandIntegral {
    pub gamma: f64,
    pub n_angles: usize,
    /// Mean over the angle grid of `‖Π_θ μ‖²_{2,γ}`.
    pub lhs: f64,
    /// Dyadic `(1 + 2γ)`-energy.
    pub rhs: f64,
    pub ratio: f64,
}

/// Compare `∫ ‖Π_θ μ‖²_{2,γ} dσ(θ)` with `E_{1+2γ}(μ)` on the finest grid.
pub fn marstrand_integral<S: Scalar>(tree: &MeasureTree<S>, gamma: f64, n_angles: usize) -> Result<MarstrandIntegral> {
    let s = 1.0 + 2.0 * gamma;
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::InvalidExponent { s, dim: 2 });
    }
    if n_angles < 16 {
        return Err(Error::InvalidParameter(format!("n_angles = {n_angles} < 16")));
    }
    let rhs = dyadic_energy(&tree.to_f64(), s)?;
    let grid = tree.discretize(tree.depth())?.cast::<f64>();
    let params = SobolevParams::default_for(grid.level());
    let sweep = angle_sweep(&grid, gamma, n_angles, DEFAULT_SUBDIV, &params)?;
    let lhs = sweep.iter().map(|r| r.sobolev).sum::<f64>() / n_angles as f64;
    Ok(MarstrandIntegral { gamma, n_angles, lhs, rhs, ratio: lhs / rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub theta: f64,
    pub sobolev: f64,
    pub l2: f64,
}

/// Sobolev and L² norms of the projections onto `n_angles` equispaced directions.
pub fn angle_sweep(
    grid: &GridMeasure<f64>,
    gamma: f64,
    n_angles: usize,
    subdiv: u32,
    params: &SobolevParams,
) -> Result<Vec<AngleRow>> {
    Direction::equispaced(n_angles)
        .into_par_iter()
        .map(|theta| {
            let line = project_grid(grid, theta, subdiv)?;
            Ok(AngleRow { theta: theta.angle(), sobolev: sobolev_norm_sq(&line, gamma, params)?, l2: line.l2_norm_sq() })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[AngleRow]) -> String {
    let mut out = String::from("theta,sobolev,l2\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.theta, r.sobolev, r.l2));
    }
    out
}
