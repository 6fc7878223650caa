//! Dyadic and Euclidean `s`-energies, correlation sums and their multiscale
//! block decomposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{descendant_range, CubeIndex};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedule::ScaleSchedule;
use crate::tree::{GridMeasure, MeasureTree};

const PAR_CHUNK: usize = 1 << 15;

/// `Σ m²` over a slice, summed in fixed-size chunks so the result does not
/// depend on the thread count.
pub(crate) fn sum_of_squares<S: Scalar>(nodes: &[(u64, S)]) -> S {
    if nodes.len() <= PAR_CHUNK {
        return nodes.iter().fold(S::zero(), |acc, (_, m)| acc + m.square());
    }
    let partial: Vec<S> = nodes
        .par_chunks(PAR_CHUNK)
        .map(|c| c.iter().fold(S::zero(), |acc, (_, m)| acc + m.square()))
        .collect();
    partial.into_iter().fold(S::zero(), |a, b| a + b)
}

fn check_exponent(s: f64, dim: u32) -> Result<()> {
    if !(s > 0.0 && s < dim as f64) {
        return Err(Error::InvalidExponent { s, dim });
    }
    Ok(())
}

/// The sums `T_j = 2^{sj} Σ_{Q ∈ D_j} μ(Q)²`, `j = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile<S> {
    pub s: f64,
    pub dim: u32,
    /// `terms[j - 1] = T_j`.
    pub terms: Vec<S>,
}

impl<S: Scalar> CorrelationProfile<S> {
    pub fn term(&self, j: usize) -> &S {
        &self.terms[j - 1]
    }

    pub fn depth(&self) -> u32 {
        self.terms.len() as u32
    }

    /// `Σ_{j=a}^{b} T_j`.
    pub fn partial_sum(&self, a: usize, b: usize) -> S {
        (a..=b).fold(S::zero(), |acc, j| acc + self.term(j).clone())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,t_j\n");
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, t.to_f64()));
        }
        out
    }
}

pub fn correlation_profile<S: Scalar>(tree: &MeasureTree<S>, s: f64) -> Result<CorrelationProfile<S>> {
    check_exponent(s, tree.dim())?;
    let r = S::exp2(s)?;
    let mut weight = S::one();
    let mut terms = Vec::with_capacity(tree.depth() as usize);
    for j in 1..=tree.depth() {
        weight = weight * r.clone();
        terms.push(weight.clone() * sum_of_squares(tree.nodes(j)));
    }
    Ok(CorrelationProfile { s, dim: tree.dim(), terms })
}

/// Dyadic energy `∫∫ 2^{s|x∧y|} dμ^(M) dμ^(M)` of the discretization at the
/// tree depth, with the levels below `M` summed in closed form.
pub fn dyadic_energy<S: Scalar>(tree: &MeasureTree<S>, s: f64) -> Result<S> {
    let profile = correlation_profile(tree, s)?;
    let total = tree.total();
    Ok(energy_from_profile(&profile, &total.square())?)
}

pub(crate) fn energy_from_profile<S: Scalar>(profile: &CorrelationProfile<S>, t0: &S) -> Result<S> {
    let r = S::exp2(profile.s)?;
    let q = r.clone() * S::exp2_int(-(profile.dim as i32));
    let t_last = profile.terms.last().cloned().unwrap_or_else(|| t0.clone());
    let tail = t_last * q.clone() / (S::one() - q);
    let sum = profile.terms.iter().fold(S::zero(), |acc, t| acc + t.clone());
    let factor = S::one() - S::one() / r;
    Ok(t0.clone() + factor * (sum + tail))
}

/// `B_j = 2^{s m_j} Σ_{Q ∈ D_{m_j}} μ(Q)² · Σ_{i=1}^{d_j} 2^{si} Σ_{Q' ∈ D_i} μ^Q(Q')²`
/// for `j = 0..k`, computed through the renormalized measures μ^Q.
pub fn block_decomposition<S: Scalar>(
    tree: &MeasureTree<S>,
    s: f64,
    schedule: &ScaleSchedule,
) -> Result<Vec<S>> {
    check_exponent(s, tree.dim())?;
    schedule.check_within(tree.depth())?;
    let r = S::exp2(s)?;
    let dim = tree.dim();
    let mut blocks = Vec::with_capacity(schedule.k());
    for j in 0..schedule.k() {
        let (m, d) = (schedule.m(j), schedule.gap(j));
        let scale = S::exp2(s * m as f64)?;
        let weights: Vec<S> = (1..=d).scan(S::one(), |w, _| {
            *w = w.clone() * r.clone();
            Some(w.clone())
        })
        .collect();
        let per_cube = |(key, mq): &(u64, S)| -> S {
            let mut corr = S::zero();
            for (i, w) in weights.iter().enumerate() {
                let level = m + i as u32 + 1;
                let range = descendant_range(dim, *key, m, level);
                let nodes = tree.nodes(level);
                let lo = nodes.partition_point(|(k, _)| *k < range.start);
                let hi = nodes.partition_point(|(k, _)| *k < range.end);
                let local = nodes[lo..hi]
                    .iter()
                    .fold(S::zero(), |acc, (_, x)| acc + (x.clone() / mq.clone()).square());
                corr = corr + w.clone() * local;
            }
            mq.square() * corr
        };
        let nodes = tree.nodes(m);
        let sum = if nodes.len() > 64 {
            let parts: Vec<S> = nodes.par_chunks(64).map(|c| c.iter().map(per_cube).fold(S::zero(), |a, b| a + b)).collect();
            parts.into_iter().fold(S::zero(), |a, b| a + b)
        } else {
            nodes.iter().map(per_cube).fold(S::zero(), |a, b| a + b)
        };
        blocks.push(scale * sum);
    }
    Ok(blocks)
}

/// `‖μ^(m)‖₂² = 2^{dm} Σ_Q μ(Q)²`.
pub fn l2_norm_sq<S: Scalar>(grid: &GridMeasure<S>) -> S {
    S::exp2_int((grid.dim() * grid.level()) as i32) * sum_of_squares(grid.cells())
}

/// `∫∫_{[0,1]^d × [0,1]^d} |x − y|^{-s} dx dy`, the self-energy of the unit cube.
pub fn unit_cube_self_energy(s: f64, dim: u32) -> Result<f64> {
    check_exponent(s, dim)?;
    Ok(match dim {
        1 => 2.0 / ((1.0 - s) * (2.0 - s)),
        _ => {
            // 8 ∫_0^{π/4} ∫_0^{sec φ} (1 − r cos φ)(1 − r sin φ) r^{1−s} dr dφ
            let n = 4096;
            let h = std::f64::consts::FRAC_PI_4 / n as f64;
            let f = |phi: f64| {
                let (sn, c) = phi.sin_cos();
                let r = 1.0 / c;
                r.powf(2.0 - s) / (2.0 - s) - (c + sn) * r.powf(3.0 - s) / (3.0 - s) + c * sn * r.powf(4.0 - s) / (4.0 - s)
            };
            let mut acc = f(0.0) + f(std::f64::consts::FRAC_PI_4);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            8.0 * acc * h / 3.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuclideanEnergy {
    pub s: f64,
    pub subdiv: u32,
    pub off_diagonal: f64,
    pub diagonal: f64,
    /// Self-energy constant of the unit cube used for the diagonal.
    pub self_energy: f64,
    pub total: f64,
}

/// Riesz energy `∫∫ |x − y|^{-s}` of μ^(M) atomized at the centers of the
/// leaves, each leaf split into `2^{dim·subdiv}` equal sub-atoms. The
/// interaction of a sub-cell with itself is replaced by
/// `c(s)·mass²·side^{-s}`, the exact self-energy of a uniform cube.
pub fn euclidean_energy<S: Scalar>(tree: &MeasureTree<S>, s: f64, subdiv: u32) -> Result<EuclideanEnergy> {
    let dim = tree.dim();
    let c = unit_cube_self_energy(s, dim)?;
    let level = tree.depth() + subdiv;
    let side = (-(level as f64)).exp2();
    let per_axis = 1u32 << subdiv;
    let split = (-((dim * subdiv) as f64)).exp2();
    let mut atoms: Vec<([f64; 2], f64)> = Vec::new();
    for (key, m) in tree.leaves() {
        let cube = CubeIndex::from_key(dim, tree.depth(), *key);
        let corner = cube.corner();
        let mass = m.to_f64() * split;
        for a in 0..per_axis {
            for b in 0..if dim == 2 { per_axis } else { 1 } {
                let x = corner[0] + (a as f64 + 0.5) * side;
                let y = if dim == 2 { corner[1] + (b as f64 + 0.5) * side } else { 0.0 };
                atoms.push(([x, y], mass));
            }
        }
    }
    let off_diagonal: f64 = atoms
        .par_iter()
        .enumerate()
        .map(|(i, (p, m))| {
            let mut acc = 0.0;
            for (q, n) in &atoms[i + 1..] {
                let d = (p[0] - q[0]).hypot(p[1] - q[1]);
                acc += n * d.powf(-s);
            }
            2.0 * m * acc
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    let diagonal = c * side.powf(-s) * atoms.iter().map(|(_, m)| m * m).sum::<f64>();
    Ok(EuclideanEnergy { s, subdiv, off_diagonal, diagonal, self_energy: c, total: off_diagonal + diagonal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{branching_measure, point_mass, uniform_measure};
    use crate::scalar::{Rational, Surd2};
    use num_traits::{One, Zero};

    fn q(n: u64, d: u64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn profile_examples() {
        let u: MeasureTree<Rational> = uniform_measure(2, 5).unwrap();
        let p = correlation_profile(&u, 1.0).unwrap();
        for j in 1..=5 {
            assert_eq!(p.term(j), &q(1, 1 << j));
        }
        let b: MeasureTree<Rational> = branching_measure(&[0, 1, 3], 4).unwrap();
        let p = correlation_profile(&b, 1.0).unwrap();
        assert_eq!(p.term(3), &q(8, 27));
        let pt: MeasureTree<Rational> = point_mass(2, 4, &[3, 5]).unwrap();
        let p = correlation_profile(&pt, 1.0).unwrap();
        assert_eq!(p.term(4), &q(16, 1));
        assert!(p.to_csv().starts_with("j,t_j\n1,2\n"));
        assert!(correlation_profile(&u, 2.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let u: MeasureTree<Rational> = uniform_measure(2, 6).unwrap();
        assert_eq!(dyadic_energy(&u, 1.0).unwrap(), q(3, 2));
        let line: MeasureTree<Surd2> = uniform_measure(1, 7).unwrap();
        let e = dyadic_energy(&line, 0.5).unwrap();
        assert_eq!(e, Surd2::new(q(1, 1), q(1, 2)));
        let pt: MeasureTree<f64> = point_mass(2, 3, &[0, 0]).unwrap();
        let s = 1.0f64;
        let r = 2f64.powf(s);
        let head: f64 = (1..=3).map(|j| r.powi(j)).sum();
        let tail = r.powi(3) * 0.5 / 0.5;
        let expected = 1.0 + (1.0 - 1.0 / r) * (head + tail);
        assert!((dyadic_energy(&pt, s).unwrap() - expected).abs() < 1e-12);
        let deeper: MeasureTree<f64> = point_mass(2, 4, &[0, 0]).unwrap();
        assert!(dyadic_energy(&deeper, s).unwrap() > expected);
    }

    #[test]
    fn block_examples() {
        let u: MeasureTree<Rational> = uniform_measure(2, 5).unwrap();
        let b = block_decomposition(&u, 1.0, &ScaleSchedule::from_levels(vec![0, 2, 5]).unwrap()).unwrap();
        assert_eq!(b, vec![q(3, 4), q(7, 32)]);
        let t: MeasureTree<Rational> = branching_measure(&[0, 1, 3], 3).unwrap();
        let b = block_decomposition(&t, 1.0, &ScaleSchedule::from_levels(vec![0, 1, 2]).unwrap()).unwrap();
        assert_eq!(b, vec![q(2, 3), q(4, 9)]);
        let whole = block_decomposition(&t, 1.0, &ScaleSchedule::from_levels(vec![0, 3]).unwrap()).unwrap();
        assert_eq!(whole[0], correlation_profile(&t, 1.0).unwrap().partial_sum(1, 3));
        assert!(block_decomposition(&t, 1.0, &ScaleSchedule::from_levels(vec![0, 4]).unwrap()).is_err());
    }

    #[test]
    fn l2_examples() {
        let u: MeasureTree<Rational> = uniform_measure(2, 4).unwrap();
        assert!(l2_norm_sq(&u.discretize(3).unwrap()).is_one());
        let pt: MeasureTree<Rational> = point_mass(2, 3, &[1, 2]).unwrap();
        assert_eq!(l2_norm_sq(&pt.discretize(3).unwrap()), q(64, 1));
        let t: MeasureTree<Rational> = branching_measure(&[0, 1, 3], 4).unwrap();
        assert_eq!(l2_norm_sq(&t.discretize(4).unwrap()), q(256, 81));
    }

    #[test]
    fn self_energy_constants() {
        // s → 0 recovers the volume of the product.
        assert!((unit_cube_self_energy(1e-9, 2).unwrap() - 1.0).abs() < 1e-6);
        let known = 4.0 * (1.0 + 2f64.sqrt()).ln() - 4.0 / 3.0 * (2f64.sqrt() - 1.0);
        assert!((unit_cube_self_energy(1.0, 2).unwrap() - known).abs() < 1e-9);
        assert!((unit_cube_self_energy(0.5, 1).unwrap() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_examples() {
        let two: MeasureTree<f64> = MeasureTree::from_cubes(
            2,
            1,
            vec![
                (CubeIndex::new(2, 1, &[0, 0]).unwrap(), 0.5),
                (CubeIndex::new(2, 1, &[1, 0]).unwrap(), 0.5),
            ],
        )
        .unwrap();
        let e = euclidean_energy(&two, 1.0, 0).unwrap();
        assert!((e.off_diagonal - 1.0).abs() < 1e-12);
        let pt: MeasureTree<f64> = point_mass(2, 3, &[2, 2]).unwrap();
        let e = euclidean_energy(&pt, 1.0, 0).unwrap();
        assert!(e.off_diagonal.is_zero());
        assert!((e.diagonal - e.self_energy * 8.0).abs() < 1e-9);
        let u: MeasureTree<f64> = uniform_measure(2, 6).unwrap();
        let e = euclidean_energy(&u, 1.0, 1).unwrap();
        let ratio = e.total / 1.5;
        assert!((0.25..=4.0).contains(&ratio), "ratio {ratio}");
        // Uniform atoms reproduce the continuous self-energy of the square.
        assert!((e.total / e.self_energy - 1.0).abs() < 0.02);
    }

    #[test]
    fn restriction_lowers_energy() {
        let t: MeasureTree<Rational> = branching_measure(&[0, 1, 3], 5).unwrap();
        let r = t.restrict(&[CubeIndex::new(2, 1, &[0, 0]).unwrap(), CubeIndex::new(2, 1, &[1, 1]).unwrap()]).unwrap();
        let (pt, pr) = (correlation_profile(&t, 1.0).unwrap(), correlation_profile(&r, 1.0).unwrap());
        assert!(pt.terms.iter().zip(&pr.terms).all(|(a, b)| b <= a));
        assert!(dyadic_energy(&r, 1.0).unwrap() <= dyadic_energy(&t, 1.0).unwrap());
        assert!(l2_norm_sq(&r.discretize(5).unwrap()) <= l2_norm_sq(&t.discretize(5).unwrap()));
        assert!(!Rational::zero().is_positive());
    }
}
