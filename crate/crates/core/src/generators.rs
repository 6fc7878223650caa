//! Test measures with known dimension: self-similar branching measures,
//! digit-restricted Cantor products, random beta-model cascades, and
//! measures on circles and segments.
//!
//! Random generators use ChaCha8 (the `rand_chacha` stream, which is
//! value-stable across platforms and releases). Every structural decision is
//! made by comparing a raw `u64` draw against an integer threshold, so no
//! floating point enters the random path.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cube::CubeIndex;
use crate::error::{Error, Result};
use crate::raycast::segment_cells;
use crate::scalar::Scalar;
use crate::tree::MeasureTree;

const MAX_EXTINCTION_RETRIES: u32 = 100;

/// Build a tree top-down. `split(level, key)` lists `(digit, share)` pairs
/// for the children of a node; digits must be increasing and shares sum to one.
fn build_top_down<S: Scalar>(
    dim: u32,
    depth: u32,
    mut split: impl FnMut(u32, u64) -> Vec<(u64, S)>,
) -> Result<MeasureTree<S>> {
    let mut levels: Vec<Vec<(u64, S)>> = vec![vec![(0, S::one())]];
    for n in 1..=depth {
        let prev = levels.last().expect("root");
        let mut next = Vec::with_capacity(prev.len() << dim);
        for (k, m) in prev {
            for (digit, share) in split(n, *k) {
                next.push(((k << dim) | digit, m.clone() * share));
            }
        }
        if next.is_empty() {
            return Err(Error::ZeroMass);
        }
        levels.push(next);
    }
    Ok(MeasureTree::from_levels_unchecked(dim, levels))
}

/// Self-similar measure: every cube splits its mass equally among the
/// children whose digits (`x + 2y`) are in `pattern`.
pub fn branching_measure_dim<S: Scalar>(dim: u32, pattern: &[u8], depth: u32) -> Result<MeasureTree<S>> {
    let mut digits: Vec<u64> = pattern.iter().map(|&d| d as u64).collect();
    digits.sort_unstable();
    digits.dedup();
    if digits.is_empty() {
        return Err(Error::InvalidParameter("empty branching pattern".into()));
    }
    if digits.iter().any(|&d| d >= 1 << dim) {
        return Err(Error::InvalidParameter(format!("pattern {pattern:?} has digits outside 0..{}", 1 << dim)));
    }
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dimension {dim}")));
    }
    let share = S::from_ratio(1, digits.len() as u64);
    build_top_down(dim, depth, |_, _| digits.iter().map(|&d| (d, share.clone())).collect())
}

/// Planar branching measure.
pub fn branching_measure<S: Scalar>(pattern: &[u8], depth: u32) -> Result<MeasureTree<S>> {
    branching_measure_dim(2, pattern, depth)
}

/// Lebesgue measure on the unit cube.
pub fn uniform_measure<S: Scalar>(dim: u32, depth: u32) -> Result<MeasureTree<S>> {
    let all: Vec<u8> = (0..(1u8 << dim)).collect();
    branching_measure_dim(dim, &all, depth)
}

/// Unit mass on a single leaf.
pub fn point_mass<S: Scalar>(dim: u32, depth: u32, coords: &[u32]) -> Result<MeasureTree<S>> {
    let cube = CubeIndex::new(dim, depth, coords)?;
    MeasureTree::from_cubes(dim, depth, vec![(cube, S::one())])
}

/// Which binary digits are forced to zero in a digit-restricted set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockedDigits {
    /// Digits `n` with `(2k)^2 <= n < (2k+1)^2` for some `k >= 1`.
    Squares,
    Never,
    Always,
}

impl BlockedDigits {
    pub fn is_blocked(self, n: u32) -> bool {
        match self {
            BlockedDigits::Never => false,
            BlockedDigits::Always => true,
            BlockedDigits::Squares => {
                let n = n as u64;
                (1u64..).map(|k| (4 * k * k, (2 * k + 1) * (2 * k + 1))).take_while(|(lo, _)| *lo <= n).any(|(lo, hi)| lo <= n && n < hi)
            }
        }
    }

    /// Number of free digits among `1..=m`.
    pub fn free_digits(self, m: u32) -> u32 {
        (1..=m).filter(|&n| !self.is_blocked(n)).count() as u32
    }
}

/// The natural measure on `{Σ a_n 2^{-n} : a_n ∈ {0,1}, a_n = 0 for blocked n}`,
/// or on its `dim`-fold product with itself.
pub fn digit_restricted_measure<S: Scalar>(dim: u32, depth: u32, blocked: BlockedDigits) -> Result<MeasureTree<S>> {
    if depth == 0 {
        return Err(Error::InvalidParameter("digit-restricted measures need depth >= 1".into()));
    }
    let n = 1u64 << dim;
    let share = S::from_ratio(1, n);
    build_top_down(dim, depth, |level, _| {
        if blocked.is_blocked(level) {
            vec![(0, S::one())]
        } else {
            (0..n).map(|d| (d, share.clone())).collect()
        }
    })
}

/// Product of two one-dimensional trees of equal depth.
pub fn product_measure<S: Scalar>(x: &MeasureTree<S>, y: &MeasureTree<S>) -> Result<MeasureTree<S>> {
    if x.dim() != 1 || y.dim() != 1 || x.depth() != y.depth() {
        return Err(Error::MismatchedTrees("product needs two 1-D trees of equal depth".into()));
    }
    let depth = x.depth();
    let mut leaves = Vec::with_capacity(x.leaves().len() * y.leaves().len());
    for (kx, mx) in x.leaves() {
        for (ky, my) in y.leaves() {
            let c = CubeIndex::new(2, depth, &[*kx as u32, *ky as u32])?;
            leaves.push((c.key(), mx.clone() * my.clone()));
        }
    }
    MeasureTree::from_leaves(2, depth, leaves)
}

fn survival_threshold(p: f64) -> Option<u64> {
    // None means "always survives".
    if p >= 1.0 {
        None
    } else {
        Some((p * 2f64.powi(64)) as u64)
    }
}

/// Random cascade: each child cube survives independently with probability
/// `p`. Branches that die out before `depth` are pruned and each node splits
/// its mass equally among its remaining children. Extinct realizations are
/// discarded and redrawn from the continuing stream.
pub fn beta_model_measure<S: Scalar>(dim: u32, p: f64, depth: u32, seed: u64) -> Result<MeasureTree<S>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("survival probability {p} not in (0, 1]")));
    }
    let threshold = survival_threshold(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1u64 << dim;
    for _ in 0..MAX_EXTINCTION_RETRIES {
        // Survival structure, level by level.
        let mut keys: Vec<Vec<u64>> = vec![vec![0]];
        for _ in 0..depth {
            let prev = keys.last().expect("root");
            let mut next = Vec::with_capacity(prev.len() << dim);
            for k in prev {
                for d in 0..n {
                    if threshold.is_none_or(|t| rng.next_u64() < t) {
                        next.push((k << dim) | d);
                    }
                }
            }
            keys.push(next);
        }
        if keys[depth as usize].is_empty() {
            continue;
        }
        // Prune branches without descendants at full depth.
        for level in (0..depth as usize).rev() {
            let (upper, lower) = keys.split_at_mut(level + 1);
            let children = &lower[0];
            upper[level].retain(|k| {
                let lo = children.partition_point(|c| (c >> dim) < *k);
                lo < children.len() && children[lo] >> dim == *k
            });
        }
        return Ok(split_equally(dim, keys));
    }
    Err(Error::Extinction(MAX_EXTINCTION_RETRIES))
}

/// Masses for a pruned key structure: every node splits equally among its children.
fn split_equally<S: Scalar>(dim: u32, keys: Vec<Vec<u64>>) -> MeasureTree<S> {
    let mut levels: Vec<Vec<(u64, S)>> = vec![vec![(0, S::one())]];
    for children in keys.iter().skip(1) {
        let parents = levels.last().expect("root");
        let mut next = Vec::with_capacity(children.len());
        let mut i = 0;
        for (pk, pm) in parents {
            let start = i;
            while i < children.len() && children[i] >> dim == *pk {
                i += 1;
            }
            let share = pm.clone() / S::from_ratio((i - start) as u64, 1);
            next.extend(children[start..i].iter().map(|c| (*c, share.clone())));
        }
        levels.push(next);
    }
    MeasureTree::from_levels_unchecked(dim, levels)
}

fn from_lengths<S: Scalar>(level: u32, lengths: HashMap<u64, f64>) -> Result<MeasureTree<S>> {
    let total: f64 = lengths.values().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let leaves: Vec<(u64, S)> = lengths.into_iter().map(|(k, l)| (k, S::from_f64(l))).collect();
    MeasureTree::from_leaves(2, level, leaves)?.normalize()
}

/// Normalized arc length on a circle, resolved at `level`; the circle is
/// approximated by a polygon with `2^{level+4}` sides.
pub fn circle_measure<S: Scalar>(center: [f64; 2], radius: f64, level: u32) -> Result<MeasureTree<S>> {
    if !(radius > 0.0)
        || center[0] - radius <= 0.0
        || center[1] - radius <= 0.0
        || center[0] + radius >= 1.0
        || center[1] + radius >= 1.0
    {
        return Err(Error::InvalidParameter(format!("circle {center:?}, r = {radius} escapes the unit square")));
    }
    let segments = 1usize << (level + 4);
    let point = |i: usize| {
        let a = std::f64::consts::TAU * i as f64 / segments as f64;
        [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
    };
    let mut lengths: HashMap<u64, f64> = HashMap::new();
    for i in 0..segments {
        for (c, len) in segment_cells(point(i), point(i + 1), level) {
            *lengths.entry(CubeIndex::new(2, level, &c)?.key()).or_default() += len;
        }
    }
    from_lengths(level, lengths)
}

/// Normalized length on the horizontal segment `[x0, x1) × {y}`.
pub fn line_measure<S: Scalar>(y: f64, x0: f64, x1: f64, level: u32) -> Result<MeasureTree<S>> {
    if !(0.0..1.0).contains(&y) || !(0.0 <= x0 && x0 < x1 && x1 <= 1.0) {
        return Err(Error::InvalidParameter(format!("segment [{x0}, {x1}) x {{{y}}} outside the unit square")));
    }
    let mut lengths: HashMap<u64, f64> = HashMap::new();
    for (c, len) in segment_cells([x0, y], [x1, y], level) {
        *lengths.entry(CubeIndex::new(2, level, &c)?.key()).or_default() += len;
    }
    from_lengths(level, lengths)
}

/// Serializable description of a generated measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Branching {
        #[serde(default = "two")]
        dim: u32,
        pattern: Vec<u8>,
        depth: u32,
    },
    Uniform {
        #[serde(default = "two")]
        dim: u32,
        depth: u32,
    },
    DigitRestricted {
        #[serde(default = "two")]
        dim: u32,
        depth: u32,
        #[serde(default = "squares")]
        blocked: BlockedDigits,
    },
    Beta {
        #[serde(default = "two")]
        dim: u32,
        p: f64,
        depth: u32,
        seed: u64,
    },
    Circle {
        center: [f64; 2],
        radius: f64,
        level: u32,
    },
    Line {
        y: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default = "one")]
        x1: f64,
        level: u32,
    },
    Point {
        #[serde(default = "two")]
        dim: u32,
        depth: u32,
        coords: Vec<u32>,
    },
}

fn two() -> u32 {
    2
}

fn one() -> f64 {
    1.0
}

fn squares() -> BlockedDigits {
    BlockedDigits::Squares
}

impl GeneratorSpec {
    pub fn build<S: Scalar>(&self) -> Result<MeasureTree<S>> {
        match self {
            GeneratorSpec::Branching { dim, pattern, depth } => branching_measure_dim(*dim, pattern, *depth),
            GeneratorSpec::Uniform { dim, depth } => uniform_measure(*dim, *depth),
            GeneratorSpec::DigitRestricted { dim, depth, blocked } => digit_restricted_measure(*dim, *depth, *blocked),
            GeneratorSpec::Beta { dim, p, depth, seed } => beta_model_measure(*dim, *p, *depth, *seed),
            GeneratorSpec::Circle { center, radius, level } => circle_measure(*center, *radius, *level),
            GeneratorSpec::Line { y, x0, x1, level } => line_measure(*y, *x0, *x1, *level),
            GeneratorSpec::Point { dim, depth, coords } => point_mass(*dim, *depth, coords),
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            GeneratorSpec::Branching { depth, .. }
            | GeneratorSpec::Uniform { depth, .. }
            | GeneratorSpec::DigitRestricted { depth, .. }
            | GeneratorSpec::Beta { depth, .. }
            | GeneratorSpec::Point { depth, .. } => *depth,
            GeneratorSpec::Circle { level, .. } | GeneratorSpec::Line { level, .. } => *level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::partition_entropy;
    use crate::scalar::Rational;

    fn q(n: u64, d: u64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn branching_examples() {
        let full: MeasureTree<Rational> = branching_measure(&[0, 1, 2, 3], 3).unwrap();
        assert_eq!(full, uniform_measure(2, 3).unwrap());
        let chain: MeasureTree<Rational> = branching_measure(&[0], 4).unwrap();
        assert_eq!(chain.leaves(), &[(0, q(1, 1))]);
        let three: MeasureTree<Rational> = branching_measure(&[3, 0, 1], 5).unwrap();
        three.check_consistency().unwrap();
        for m in 1..=5 {
            let h = partition_entropy(&three.discretize(m).unwrap()).unwrap();
            assert!((h.bits / m as f64 - 3f64.log2()).abs() < 1e-12);
        }
        assert!(branching_measure::<f64>(&[], 3).is_err());
        assert!(branching_measure::<f64>(&[4], 3).is_err());
    }

    #[test]
    fn squares_digits() {
        let free: Vec<u32> = (1..=16).filter(|&n| !BlockedDigits::Squares.is_blocked(n)).collect();
        assert_eq!(free, vec![1, 2, 3, 9, 10, 11, 12, 13, 14, 15]);
        assert!(BlockedDigits::Squares.is_blocked(24));
        assert!(!BlockedDigits::Squares.is_blocked(25));
        assert!(BlockedDigits::Squares.is_blocked(36));
    }

    #[test]
    fn digit_restricted_examples() {
        let never: MeasureTree<Rational> = digit_restricted_measure(2, 4, BlockedDigits::Never).unwrap();
        assert_eq!(never, uniform_measure(2, 4).unwrap());
        let always: MeasureTree<Rational> = digit_restricted_measure(1, 4, BlockedDigits::Always).unwrap();
        assert_eq!(always.leaves(), &[(0, q(1, 1))]);
        let s: MeasureTree<f64> = digit_restricted_measure(1, 16, BlockedDigits::Squares).unwrap();
        let h = partition_entropy(&s.discretize(16).unwrap()).unwrap();
        assert!((h.bits / 16.0 - 10.0 / 16.0).abs() < 1e-12);
        let s2: MeasureTree<f64> = digit_restricted_measure(2, 16, BlockedDigits::Squares).unwrap();
        let h2 = partition_entropy(&s2.discretize(16).unwrap()).unwrap();
        assert!((h2.bits - 20.0).abs() < 1e-9);
    }

    #[test]
    fn product_of_copies_matches_planar_version() {
        let a: MeasureTree<Rational> = digit_restricted_measure(1, 10, BlockedDigits::Squares).unwrap();
        let p = product_measure(&a, &a).unwrap();
        assert_eq!(p, digit_restricted_measure(2, 10, BlockedDigits::Squares).unwrap());
    }

    #[test]
    fn beta_model_examples() {
        let full: MeasureTree<Rational> = beta_model_measure(2, 1.0, 4, 9).unwrap();
        assert_eq!(full, uniform_measure(2, 4).unwrap());
        let a: MeasureTree<f64> = beta_model_measure(2, 0.7, 8, 42).unwrap();
        let b: MeasureTree<f64> = beta_model_measure(2, 0.7, 8, 42).unwrap();
        assert_eq!(a, b);
        a.check_consistency().unwrap();
        assert!(a.is_normalized());
        let sparse: MeasureTree<f64> = beta_model_measure(2, 0.25, 10, 3).unwrap();
        let h = partition_entropy(&sparse.discretize(10).unwrap()).unwrap();
        assert!(h.bits / 10.0 < 0.6, "entropy {}", h.bits);
    }

    #[test]
    fn circle_examples() {
        let c: MeasureTree<f64> = circle_measure([0.5, 0.5], 0.25, 10).unwrap();
        c.check_consistency().unwrap();
        assert!((c.total() - 1.0).abs() < 1e-12);
        let m = 10.0;
        let h = partition_entropy(&c.discretize(10).unwrap()).unwrap().bits;
        let expected = m + (std::f64::consts::TAU * 0.25).log2();
        assert!((h - expected).abs() < 1.0, "{h} vs {expected}");
        assert!(circle_measure::<f64>([0.1, 0.5], 0.2, 5).is_err());
    }

    #[test]
    fn line_measure_is_one_row() {
        let l: MeasureTree<f64> = line_measure(0.3, 0.0, 1.0, 6).unwrap();
        assert_eq!(l.leaves().len(), 64);
        assert!(l.cubes(6).unwrap().all(|(c, _)| c.coords()[1] == 19));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec::Beta { dim: 2, p: 0.7, depth: 6, seed: 5 };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GeneratorSpec>(&text).unwrap(), spec);
        let parsed: GeneratorSpec = serde_json::from_str(r#"{"kind":"branching","pattern":[0,1,3],"depth":4}"#).unwrap();
        assert_eq!(parsed.build::<f64>().unwrap().leaves().len(), 81);
    }
}
