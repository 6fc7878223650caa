//! Heavy, good and bad squares at one level of a schedule.

use serde::{Deserialize, Serialize};

use crate::cube::CubeIndex;
use crate::energy::dyadic_energy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::MeasureTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareLabel {
    pub cube: CubeIndex,
    pub heavy: bool,
    pub good: bool,
    /// μ(Q).
    pub mass: f64,
    /// μ̃(Q).
    pub weighted_mass: f64,
    /// `E_{s1}(μ^{Q,(d_j)})`.
    pub local_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareClassification {
    pub level: u32,
    pub labels: Vec<SquareLabel>,
    /// `2^{-(s1+5δ)m}`.
    pub heavy_threshold: f64,
    /// Σ μ(Q) over light squares.
    pub light_mass: f64,
    /// Number of positive-mass squares times the heavy threshold.
    pub light_bound: f64,
    /// Σ μ̃(Q) over bad squares.
    pub bad_mass: f64,
    pub good_mass: f64,
}

/// Label the positive-mass squares of `D_level`: heavy when
/// `μ(Q) > 2^{-(s1+5δ)m}`, good when `μ̃(Q) ≥ 2^{-4δm} μ(Q) > 0` and
/// `E_{s1}(μ^{Q,(d)}) ≤ 2^{6δm}`, bad otherwise.
pub fn classify_squares<S: Scalar>(
    mu: &MeasureTree<S>,
    weighted: &MeasureTree<S>,
    level: u32,
    s1: f64,
    delta: f64,
    gap: u32,
) -> Result<SquareClassification> {
    if mu.dim() != weighted.dim() || mu.depth() != weighted.depth() {
        return Err(Error::MismatchedTrees(format!(
            "dim/depth {}/{} vs {}/{}",
            mu.dim(),
            mu.depth(),
            weighted.dim(),
            weighted.depth()
        )));
    }
    if weighted.leaves().iter().any(|(k, _)| mu.leaves().binary_search_by_key(k, |(j, _)| *j).is_err()) {
        return Err(Error::MismatchedTrees("weighted measure charges cells outside the support".into()));
    }
    if level + gap > mu.depth() {
        return Err(Error::OutOfResolution { level: level + gap, depth: mu.depth() });
    }
    let m = level as f64;
    let heavy_threshold = (-(s1 + 5.0 * delta) * m).exp2();
    let retention = (-4.0 * delta * m).exp2();
    let energy_cap = (6.0 * delta * m).exp2();
    let mut labels = Vec::new();
    let (mut light_mass, mut bad_mass, mut good_mass) = (0.0, 0.0, 0.0);
    for (cube, mass) in mu.cubes(level)? {
        let mass = mass.to_f64();
        let weighted_mass = weighted.mass(&cube).to_f64();
        let local_energy = dyadic_energy(&mu.local_tree(&cube, gap)?.to_f64(), s1)?;
        let heavy = mass > heavy_threshold;
        let good = weighted_mass > 0.0 && weighted_mass >= retention * mass && local_energy <= energy_cap;
        if !heavy {
            light_mass += mass;
        }
        if good {
            good_mass += weighted_mass;
        } else {
            bad_mass += weighted_mass;
        }
        labels.push(SquareLabel { cube, heavy, good, mass, weighted_mass, local_energy });
    }
    let light_bound = labels.len() as f64 * heavy_threshold;
    Ok(SquareClassification { level, labels, heavy_threshold, light_mass, light_bound, bad_mass, good_mass })
}
