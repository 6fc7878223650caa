//! Shannon entropy over dyadic partitions, in bits.

use serde::{Deserialize, Serialize};

use crate::cube::descendant_range;
use crate::energy::l2_norm_sq;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{GridMeasure, MeasureTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub bits: f64,
    /// Level of the partition being measured.
    pub level: u32,
    /// Level of the conditioning partition, if any.
    pub given: Option<u32>,
}

/// `−Σ p log₂ p` over the positive entries.
pub fn shannon(masses: impl IntoIterator<Item = f64>) -> f64 {
    masses.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum::<f64>().max(0.0)
}

fn require_normalized<S: Scalar>(total: &S) -> Result<()> {
    let t = total.to_f64();
    if (t - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(t));
    }
    Ok(())
}

pub fn partition_entropy<S: Scalar>(grid: &GridMeasure<S>) -> Result<EntropyValue> {
    require_normalized(grid.total())?;
    Ok(EntropyValue { bits: shannon(grid.cells().iter().map(|(_, m)| m.to_f64())), level: grid.level(), given: None })
}

/// `H(μ, D_fine | D_coarse) = Σ_G μ(G)·H(μ_G, D_fine)`.
pub fn conditional_entropy<S: Scalar>(tree: &MeasureTree<S>, fine: u32, coarse: u32) -> Result<EntropyValue> {
    if coarse > fine {
        return Err(Error::InvalidParameter(format!("conditioning level {coarse} is finer than {fine}")));
    }
    require_normalized(&tree.total())?;
    let fine_nodes = tree.level(fine)?;
    let mut bits = 0.0;
    for (key, mg) in tree.level(coarse)? {
        let mg = mg.to_f64();
        let range = descendant_range(tree.dim(), *key, coarse, fine);
        let lo = fine_nodes.partition_point(|(k, _)| *k < range.start);
        let hi = fine_nodes.partition_point(|(k, _)| *k < range.end);
        let local = shannon(fine_nodes[lo..hi].iter().map(|(_, m)| m.to_f64() / mg));
        bits += mg * local;
    }
    Ok(EntropyValue { bits, level: fine, given: Some(coarse) })
}

/// `H(μ, D_m)/m`.
pub fn normalized_entropy<S: Scalar>(grid: &GridMeasure<S>) -> Result<f64> {
    if grid.level() == 0 {
        return Err(Error::InvalidParameter("normalized entropy needs level >= 1".into()));
    }
    Ok(partition_entropy(grid)?.bits / grid.level() as f64)
}

/// `d − (1/m)·log₂ ‖μ^(m)‖₂²`, a lower bound for the normalized entropy.
pub fn entropy_lower_bound_from_l2<S: Scalar>(grid: &GridMeasure<S>) -> Result<f64> {
    if grid.level() == 0 {
        return Err(Error::InvalidParameter("entropy bound needs level >= 1".into()));
    }
    require_normalized(grid.total())?;
    let l2 = l2_norm_sq(grid).to_f64();
    Ok(grid.dim() as f64 - l2.log2() / grid.level() as f64)
}

/// Entropy of the partition `D_m + 2^{-m-1}(1,…,1)`, cut to `[0,1)^d`.
pub fn shifted_partition_entropy<S: Scalar>(tree: &MeasureTree<S>, level: u32) -> Result<EntropyValue> {
    require_normalized(&tree.total())?;
    let mut cells: Vec<(u64, f64)> = tree
        .cubes(level + 1)?
        .map(|(c, m)| {
            let shifted: Vec<u32> = c.coords().iter().map(|&x| (x + 1) >> 1).collect();
            let key = shifted.iter().enumerate().fold(0u64, |k, (axis, &x)| k | (x as u64) << (32 * axis));
            (key, m.to_f64())
        })
        .collect();
    cells.sort_by_key(|(k, _)| *k);
    let mut merged: Vec<f64> = Vec::new();
    let mut last = None;
    for (k, m) in cells {
        if last == Some(k) {
            *merged.last_mut().expect("nonempty") += m;
        } else {
            merged.push(m);
            last = Some(k);
        }
    }
    Ok(EntropyValue { bits: shannon(merged), level, given: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::CubeIndex;
    use crate::generators::{beta_model_measure, branching_measure, point_mass, uniform_measure};
    use crate::scalar::Rational;
    use proptest::prelude::*;

    #[test]
    fn partition_examples() {
        let u: MeasureTree<Rational> = uniform_measure(2, 5).unwrap();
        assert!((partition_entropy(&u.discretize(4).unwrap()).unwrap().bits - 8.0).abs() < 1e-12);
        let p: MeasureTree<Rational> = point_mass(2, 5, &[3, 3]).unwrap();
        assert_eq!(partition_entropy(&p.discretize(5).unwrap()).unwrap().bits, 0.0);
        let g = GridMeasure::new(
            1,
            2,
            vec![
                (CubeIndex::new(1, 2, &[0]).unwrap(), Rational::from_ratio(1, 2)),
                (CubeIndex::new(1, 2, &[1]).unwrap(), Rational::from_ratio(1, 4)),
                (CubeIndex::new(1, 2, &[3]).unwrap(), Rational::from_ratio(1, 4)),
            ],
        )
        .unwrap();
        assert!((partition_entropy(&g).unwrap().bits - 1.5).abs() < 1e-15);
        let half = u.restrict(&[CubeIndex::new(2, 1, &[0, 0]).unwrap()]).unwrap();
        assert!(matches!(partition_entropy(&half.discretize(1).unwrap()), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn conditional_examples() {
        let u: MeasureTree<f64> = uniform_measure(2, 6).unwrap();
        assert!((conditional_entropy(&u, 5, 2).unwrap().bits - 6.0).abs() < 1e-12);
        assert_eq!(conditional_entropy(&u, 3, 3).unwrap().bits, 0.0);
        let t: MeasureTree<f64> = branching_measure(&[0, 1, 3], 6).unwrap();
        assert!((conditional_entropy(&t, 4, 3).unwrap().bits - 3f64.log2()).abs() < 1e-12);
        assert!(conditional_entropy(&t, 2, 3).is_err());
    }

    #[test]
    fn normalized_and_bound_examples() {
        let u: MeasureTree<f64> = uniform_measure(2, 4).unwrap();
        let g = u.discretize(4).unwrap();
        assert!((normalized_entropy(&g).unwrap() - 2.0).abs() < 1e-12);
        assert!((entropy_lower_bound_from_l2(&g).unwrap() - 2.0).abs() < 1e-12);
        let p: MeasureTree<f64> = point_mass(2, 4, &[0, 9]).unwrap();
        let g = p.discretize(4).unwrap();
        assert_eq!(normalized_entropy(&g).unwrap(), 0.0);
        assert!(entropy_lower_bound_from_l2(&g).unwrap().abs() < 1e-12);
        let t: MeasureTree<f64> = branching_measure(&[0, 1, 3], 4).unwrap();
        assert!((normalized_entropy(&t.discretize(3).unwrap()).unwrap() - 3f64.log2()).abs() < 1e-12);
        let two = GridMeasure::new(
            1,
            1,
            vec![(CubeIndex::new(1, 1, &[0]).unwrap(), 0.5), (CubeIndex::new(1, 1, &[1]).unwrap(), 0.5)],
        )
        .unwrap();
        assert!((entropy_lower_bound_from_l2(&two).unwrap() - 1.0).abs() < 1e-15);
        assert!((normalized_entropy(&two).unwrap() - 1.0).abs() < 1e-15);
        assert!(normalized_entropy(&u.discretize(0).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn chain_rule_and_bounds(seed in any::<u64>(), p in 0.3f64..1.0, b in 0u32..6, extra in 0u32..3) {
            let t: MeasureTree<f64> = beta_model_measure(2, p, 8, seed).unwrap();
            let a = b + extra;
            let ha = partition_entropy(&t.discretize(a).unwrap()).unwrap().bits;
            let hb = partition_entropy(&t.discretize(b).unwrap()).unwrap().bits;
            let hc = conditional_entropy(&t, a, b).unwrap().bits;
            prop_assert!((ha - hb - hc).abs() < 1e-9);
            prop_assert!(ha <= 2.0 * a as f64 + 1e-9);
            if a > 0 {
                let g = t.discretize(a).unwrap();
                prop_assert!(entropy_lower_bound_from_l2(&g).unwrap() <= normalized_entropy(&g).unwrap() + 1e-9);
            }
            let shifted = shifted_partition_entropy(&t, b).unwrap().bits;
            prop_assert!((shifted - hb).abs() <= 2.0 + 1e-9);
        }

        #[test]
        fn conditional_entropy_is_concave(s1 in any::<u64>(), s2 in any::<u64>(), ti in 1u64..4) {
            let mu: MeasureTree<f64> = beta_model_measure(2, 0.6, 6, s1).unwrap();
            let nu: MeasureTree<f64> = beta_model_measure(2, 0.6, 6, s2).unwrap();
            let t = ti as f64 / 4.0;
            let mix = mu.combine(&t, &nu, &(1.0 - t)).unwrap();
            let lhs = conditional_entropy(&mix, 5, 2).unwrap().bits;
            let rhs = t * conditional_entropy(&mu, 5, 2).unwrap().bits + (1.0 - t) * conditional_entropy(&nu, 5, 2).unwrap().bits;
            prop_assert!(lhs >= rhs - 2f64.powi(-30));
        }
    }
}
