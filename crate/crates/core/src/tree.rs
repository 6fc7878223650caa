//! Sparse dyadic measure trees and single-level grids.

use crate::cube::{descendant_range, CubeIndex, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// A measure on `[0,1)^dim` resolved down to dyadic level `depth`.
///
/// `levels[m]` holds the positive-mass cubes of level `m` as `(morton key,
/// mass)` pairs sorted by key. Zero-mass cubes are never stored. Every
/// level-`m` mass equals the sum of its children's masses (exactly in exact
/// modes, within [`Scalar::TOLERANCE`] otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTree<S> {
    dim: u32,
    depth: u32,
    levels: Vec<Vec<(u64, S)>>,
}

fn check_dim_depth(dim: u32, depth: u32) -> Result<()> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dimension {dim} not in {{1, 2}}")));
    }
    if depth > MAX_LEVEL || (dim == 1 && depth > 63) {
        return Err(Error::InvalidParameter(format!("depth {depth} exceeds {MAX_LEVEL}")));
    }
    Ok(())
}

/// Sort by key, merge duplicates and drop zeros.
fn canonicalize<S: Scalar>(mut nodes: Vec<(u64, S)>) -> Vec<(u64, S)> {
    nodes.sort_unstable_by_key(|(k, _)| *k);
    let mut out: Vec<(u64, S)> = Vec::with_capacity(nodes.len());
    for (k, m) in nodes {
        match out.last_mut() {
            Some((lk, lm)) if *lk == k => *lm = lm.clone() + m,
            _ => out.push((k, m)),
        }
    }
    out.retain(|(_, m)| m.is_positive());
    out
}

/// Sum sorted children into their parents.
fn coarsen<S: Scalar>(dim: u32, children: &[(u64, S)]) -> Vec<(u64, S)> {
    let mut out: Vec<(u64, S)> = Vec::with_capacity(children.len() / 2 + 1);
    for (k, m) in children {
        let p = k >> dim;
        match out.last_mut() {
            Some((lk, lm)) if *lk == p => *lm = lm.clone() + m.clone(),
            _ => out.push((p, m.clone())),
        }
    }
    out
}

fn slice_in_range<S>(nodes: &[(u64, S)], range: std::ops::Range<u64>) -> &[(u64, S)] {
    let lo = nodes.partition_point(|(k, _)| *k < range.start);
    let hi = nodes.partition_point(|(k, _)| *k < range.end);
    &nodes[lo..hi]
}

impl<S: Scalar> MeasureTree<S> {
    /// Build a tree from leaf masses at level `depth`; ancestors are summed
    /// bottom-up. Duplicate keys are merged and zero masses dropped.
    pub fn from_leaves(dim: u32, depth: u32, leaves: Vec<(u64, S)>) -> Result<Self> {
        check_dim_depth(dim, depth)?;
        let limit = 1u128 << (dim * depth);
        for (k, m) in &leaves {
            if *k as u128 >= limit {
                return Err(Error::InvalidCube(format!("key {k} at level {depth}")));
            }
            if *m < S::zero() {
                return Err(Error::Inconsistent(format!("negative mass {m:?}")));
            }
        }
        let leaves = canonicalize(leaves);
        if leaves.is_empty() {
            return Err(Error::ZeroMass);
        }
        Ok(Self::from_leaf_level(dim, depth, leaves))
    }

    pub fn from_cubes(dim: u32, depth: u32, cubes: Vec<(CubeIndex, S)>) -> Result<Self> {
        let mut leaves = Vec::with_capacity(cubes.len());
        for (c, m) in cubes {
            if c.dim() != dim || c.level() != depth {
                return Err(Error::InvalidCube(format!("{c} in a dim-{dim} depth-{depth} tree")));
            }
            leaves.push((c.key(), m));
        }
        Self::from_leaves(dim, depth, leaves)
    }

    /// Leaves must already be canonical (sorted, unique, positive).
    pub(crate) fn from_leaf_level(dim: u32, depth: u32, leaves: Vec<(u64, S)>) -> Self {
        let mut levels = vec![Vec::new(); depth as usize + 1];
        levels[depth as usize] = leaves;
        for m in (0..depth as usize).rev() {
            levels[m] = coarsen(dim, &levels[m + 1]);
        }
        MeasureTree { dim, depth, levels }
    }

    /// Levels must be canonical and consistent; used by generators that
    /// build trees top-down.
    pub(crate) fn from_levels_unchecked(dim: u32, levels: Vec<Vec<(u64, S)>>) -> Self {
        let depth = levels.len() as u32 - 1;
        MeasureTree { dim, depth, levels }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn total(&self) -> S {
        self.levels[0].first().map(|(_, m)| m.clone()).unwrap_or_else(S::zero)
    }

    pub fn is_normalized(&self) -> bool {
        self.total().approx_eq(&S::one())
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level > self.depth {
            Err(Error::OutOfResolution { level, depth: self.depth })
        } else {
            Ok(())
        }
    }

    /// Positive-mass cubes of a level as sorted `(key, mass)` pairs.
    pub fn level(&self, level: u32) -> Result<&[(u64, S)]> {
        self.check_level(level)?;
        Ok(&self.levels[level as usize])
    }

    pub(crate) fn nodes(&self, level: u32) -> &[(u64, S)] {
        &self.levels[level as usize]
    }

    pub fn leaves(&self) -> &[(u64, S)] {
        &self.levels[self.depth as usize]
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn cubes(&self, level: u32) -> Result<impl Iterator<Item = (CubeIndex, &S)> + '_> {
        let dim = self.dim;
        Ok(self.level(level)?.iter().map(move |(k, m)| (CubeIndex::from_key(dim, level, *k), m)))
    }

    /// μ(Q); zero for absent cubes and for cubes below the resolution.
    pub fn mass(&self, cube: &CubeIndex) -> S {
        if cube.dim() != self.dim || cube.level() > self.depth {
            return S::zero();
        }
        let nodes = self.nodes(cube.level());
        match nodes.binary_search_by_key(&cube.key(), |(k, _)| *k) {
            Ok(i) => nodes[i].1.clone(),
            Err(_) => S::zero(),
        }
    }

    /// Nodes of level `level` lying inside `cube`.
    pub fn descendants(&self, cube: &CubeIndex, level: u32) -> Result<&[(u64, S)]> {
        self.check_level(level)?;
        if level < cube.level() {
            return Err(Error::InvalidParameter(format!("level {level} above {cube}")));
        }
        let range = descendant_range(self.dim, cube.key(), cube.level(), level);
        Ok(slice_in_range(self.nodes(level), range))
    }

    /// Verify ordering, positivity and the children-sum invariant.
    pub fn check_consistency(&self) -> Result<()> {
        if self.levels.len() != self.depth as usize + 1 {
            return Err(Error::Inconsistent("level count".into()));
        }
        if !self.total().is_positive() {
            return Err(Error::ZeroMass);
        }
        for (m, nodes) in self.levels.iter().enumerate() {
            if nodes.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Inconsistent(format!("level {m} keys not strictly sorted")));
            }
            if nodes.iter().any(|(_, v)| !v.is_positive()) {
                return Err(Error::Inconsistent(format!("level {m} stores a non-positive mass")));
            }
            if m > 0 {
                let sums = coarsen(self.dim, nodes);
                let parents = &self.levels[m - 1];
                if sums.len() != parents.len() {
                    return Err(Error::Inconsistent(format!("level {m} has orphaned or childless nodes")));
                }
                for ((ks, vs), (kp, vp)) in sums.iter().zip(parents) {
                    if ks != kp || !vs.approx_eq(vp) {
                        return Err(Error::Inconsistent(format!("children of key {kp} at level {} sum to {vs:?}, parent {vp:?}", m - 1)));
                    }
                }
            }
        }
        Ok(())
    }

    /// μ^(m): the masses of level `m` as a grid.
    pub fn discretize(&self, level: u32) -> Result<GridMeasure<S>> {
        let cells = self.level(level)?.to_vec();
        Ok(GridMeasure { dim: self.dim, level, total: self.total(), cells })
    }

    /// μ|_A for A the union of `cells` (all on one level). Not renormalized.
    pub fn restrict(&self, cells: &[CubeIndex]) -> Result<Self> {
        let Some(first) = cells.first() else {
            return Err(Error::EmptyRestriction);
        };
        let level = first.level();
        self.check_level(level)?;
        if cells.iter().any(|c| c.level() != level || c.dim() != self.dim) {
            return Err(Error::InvalidParameter("restriction cells must share one level and dimension".into()));
        }
        let mut keys: Vec<u64> = cells.iter().map(CubeIndex::key).collect();
        keys.sort_unstable();
        keys.dedup();
        let shift = self.dim * (self.depth - level);
        self.restrict_leaves(|k, _| keys.binary_search(&(k >> shift)).is_ok())
    }

    /// Restriction to the union of the leaves accepted by `keep`.
    pub fn restrict_leaves(&self, mut keep: impl FnMut(u64, &S) -> bool) -> Result<Self> {
        let leaves: Vec<(u64, S)> = self.leaves().iter().filter(|(k, m)| keep(*k, m)).cloned().collect();
        if leaves.is_empty() {
            return Err(Error::EmptyRestriction);
        }
        Ok(Self::from_leaf_level(self.dim, self.depth, leaves))
    }

    /// μ / μ([0,1)^d).
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total();
        if !total.is_positive() {
            return Err(Error::ZeroMass);
        }
        if total == S::one() {
            return Ok(self.clone());
        }
        Ok(self.map_masses(|m| m.clone() / total.clone()))
    }

    /// μ^Q: the part of μ inside `q`, divided by μ(Q) and mapped onto the
    /// unit cube. The result has depth `depth − level(Q)`.
    pub fn renormalize_to_unit(&self, q: &CubeIndex) -> Result<Self> {
        self.local_tree(q, self.depth.saturating_sub(q.level()))
    }

    /// μ^Q truncated to `levels` levels below Q, i.e. the tree of μ^{Q,(levels)}.
    pub fn local_tree(&self, q: &CubeIndex, levels: u32) -> Result<Self> {
        if q.dim() != self.dim {
            return Err(Error::InvalidCube(q.to_string()));
        }
        self.check_level(q.level())?;
        self.check_level(q.level() + levels)?;
        let mq = self.mass(q);
        if !mq.is_positive() {
            return Err(Error::ZeroMass);
        }
        let mut out = Vec::with_capacity(levels as usize + 1);
        for j in 0..=levels {
            let lvl = q.level() + j;
            let mask = if j == 0 { 0 } else { (1u64 << (self.dim * j)) - 1 };
            let nodes = self.descendants(q, lvl)?;
            out.push(nodes.iter().map(|(k, m)| (k & mask, m.clone() / mq.clone())).collect());
        }
        Ok(MeasureTree { dim: self.dim, depth: levels, levels: out })
    }

    /// Drop all levels below `depth`.
    pub fn truncate(&self, depth: u32) -> Result<Self> {
        self.check_level(depth)?;
        Ok(MeasureTree { dim: self.dim, depth, levels: self.levels[..=depth as usize].to_vec() })
    }

    /// Extend to `new_depth` by splitting every leaf evenly among all its
    /// descendants, i.e. the depth-`new_depth` tree of the discretization μ^(depth).
    pub fn refine_uniform(&self, new_depth: u32) -> Result<Self> {
        if new_depth < self.depth {
            return Err(Error::InvalidParameter(format!("cannot refine depth {} to {new_depth}", self.depth)));
        }
        check_dim_depth(self.dim, new_depth)?;
        let mut levels = self.levels.clone();
        let n = 1u64 << self.dim;
        let split = S::exp2_int(-(self.dim as i32));
        for _ in self.depth..new_depth {
            let last = levels.last().expect("nonempty");
            let next = last
                .iter()
                .flat_map(|(k, m)| {
                    let child = m.clone() * split.clone();
                    (0..n).map(move |c| ((k << self.dim) | c, child.clone()))
                })
                .collect();
            levels.push(next);
        }
        Ok(MeasureTree { dim: self.dim, depth: new_depth, levels })
    }

    /// μ^(m) viewed as a tree of the original depth.
    pub fn discretized_tree(&self, level: u32) -> Result<Self> {
        self.truncate(level)?.refine_uniform(self.depth)
    }

    /// `a·self + b·other` for trees of the same dimension and depth.
    pub fn combine(&self, a: &S, other: &Self, b: &S) -> Result<Self> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::MismatchedTrees(format!(
                "dim/depth {}/{} vs {}/{}",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        let mut leaves: Vec<(u64, S)> = self.leaves().iter().map(|(k, m)| (*k, m.clone() * a.clone())).collect();
        leaves.extend(other.leaves().iter().map(|(k, m)| (*k, m.clone() * b.clone())));
        let leaves = canonicalize(leaves);
        if leaves.is_empty() {
            return Err(Error::ZeroMass);
        }
        Ok(Self::from_leaf_level(self.dim, self.depth, leaves))
    }

    pub fn map_masses<T: Scalar>(&self, f: impl Fn(&S) -> T) -> MeasureTree<T> {
        MeasureTree {
            dim: self.dim,
            depth: self.depth,
            levels: self.levels.iter().map(|lvl| lvl.iter().map(|(k, m)| (*k, f(m))).collect()).collect(),
        }
    }

    /// Convert to another scalar mode, exactly when both modes are exact.
    pub fn cast<T: Scalar>(&self) -> MeasureTree<T> {
        self.map_masses(|m| cast_scalar(m))
    }

    pub fn to_f64(&self) -> MeasureTree<f64> {
        self.map_masses(|m| m.to_f64())
    }
}

pub(crate) fn cast_scalar<S: Scalar, T: Scalar>(m: &S) -> T {
    if S::TOLERANCE == 0.0 {
        if let Some(r) = m.to_rational() {
            return T::from_rational(&r);
        }
    }
    T::from_f64(m.to_f64())
}

/// A single level of a measure: the data of the discretization μ^(m), whose
/// density on a cell Q is `2^{dim·m}·mass(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure<S> {
    dim: u32,
    level: u32,
    cells: Vec<(u64, S)>,
    total: S,
}

impl<S: Scalar> GridMeasure<S> {
    pub fn new(dim: u32, level: u32, cells: Vec<(CubeIndex, S)>) -> Result<Self> {
        check_dim_depth(dim, level)?;
        let mut raw = Vec::with_capacity(cells.len());
        for (c, m) in cells {
            if c.dim() != dim || c.level() != level {
                return Err(Error::InvalidCube(c.to_string()));
            }
            if m < S::zero() {
                return Err(Error::Inconsistent(format!("negative mass {m:?}")));
            }
            raw.push((c.key(), m));
        }
        let cells = canonicalize(raw);
        let total = cells.iter().fold(S::zero(), |acc, (_, m)| acc + m.clone());
        Ok(GridMeasure { dim, level, cells, total })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn total(&self) -> &S {
        &self.total
    }

    pub fn cells(&self) -> &[(u64, S)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.total.approx_eq(&S::one())
    }

    pub fn cubes(&self) -> impl Iterator<Item = (CubeIndex, &S)> + '_ {
        self.cells.iter().map(move |(k, m)| (CubeIndex::from_key(self.dim, self.level, *k), m))
    }

    pub fn mass(&self, cube: &CubeIndex) -> S {
        if cube.dim() != self.dim || cube.level() != self.level {
            return S::zero();
        }
        self.mass_by_key(cube.key())
    }

    pub(crate) fn mass_by_key(&self, key: u64) -> S {
        match self.cells.binary_search_by_key(&key, |(k, _)| *k) {
            Ok(i) => self.cells[i].1.clone(),
            Err(_) => S::zero(),
        }
    }

    /// Density of μ^(m) on `cube`.
    pub fn density(&self, cube: &CubeIndex) -> S {
        self.mass(cube) * S::exp2_int((self.dim * self.level) as i32)
    }

    pub fn normalize(&self) -> Result<Self> {
        if !self.total.is_positive() {
            return Err(Error::ZeroMass);
        }
        let t = self.total.clone();
        Ok(GridMeasure {
            dim: self.dim,
            level: self.level,
            cells: self.cells.iter().map(|(k, m)| (*k, m.clone() / t.clone())).collect(),
            total: S::one(),
        })
    }

    pub fn cast<T: Scalar>(&self) -> GridMeasure<T> {
        GridMeasure {
            dim: self.dim,
            level: self.level,
            cells: self.cells.iter().map(|(k, m)| (*k, cast_scalar(m))).collect(),
            total: cast_scalar(&self.total),
        }
    }
}

impl MeasureTree<Rational> {
    /// Exact tree from integer leaf weights, normalized to total mass one.
    pub fn from_weights(dim: u32, depth: u32, weights: &[(u64, u64)]) -> Result<Self> {
        let sum: u64 = weights.iter().map(|(_, w)| *w).sum();
        if sum == 0 {
            return Err(Error::ZeroMass);
        }
        let leaves = weights.iter().map(|&(k, w)| (k, <Rational as Scalar>::from_ratio(w, sum))).collect();
        Self::from_leaves(dim, depth, leaves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{branching_measure, uniform_measure};
    use proptest::prelude::*;

    fn q(n: u64, d: u64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn three_branch(depth: u32) -> MeasureTree<Rational> {
        branching_measure(&[0, 1, 3], depth).unwrap()
    }

    #[test]
    fn discretize_uniform_and_root() {
        let t: MeasureTree<Rational> = uniform_measure(2, 5).unwrap();
        let g = t.discretize(3).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.cells().iter().all(|(_, m)| *m == q(1, 64)));
        let root = t.discretize(0).unwrap();
        assert_eq!(root.cells(), &[(0, q(1, 1))]);
        assert!(matches!(t.discretize(6), Err(Error::OutOfResolution { level: 6, depth: 5 })));
    }

    #[test]
    fn discretize_three_branch() {
        let g = three_branch(4).discretize(2).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.cells().iter().all(|(_, m)| *m == q(1, 9)));
        assert_eq!(*g.total(), q(1, 1));
    }

    #[test]
    fn restrict_examples() {
        let t: MeasureTree<Rational> = uniform_measure(2, 4).unwrap();
        let quad = CubeIndex::new(2, 1, &[1, 1]).unwrap();
        let r = t.restrict(&[quad]).unwrap();
        assert_eq!(r.total(), q(1, 4));
        assert_eq!(r.mass(&CubeIndex::new(2, 3, &[7, 7]).unwrap()), q(1, 64));
        assert_eq!(r.mass(&CubeIndex::new(2, 3, &[0, 0]).unwrap()), q(0, 1));
        r.check_consistency().unwrap();

        let all: Vec<_> = t.cubes(2).unwrap().map(|(c, _)| c).collect();
        assert_eq!(t.restrict(&all).unwrap(), t);

        let b = three_branch(5);
        let kept = [CubeIndex::new(2, 1, &[0, 0]).unwrap(), CubeIndex::new(2, 1, &[1, 0]).unwrap()];
        let r = b.restrict(&kept).unwrap();
        assert_eq!(r.total(), q(2, 3));
        let n = r.normalize().unwrap();
        assert!(n.cubes(1).unwrap().all(|(_, m)| *m == q(1, 2)));
        assert_eq!(n.normalize().unwrap(), n);

        let empty = CubeIndex::new(2, 1, &[0, 1]).unwrap();
        assert!(matches!(b.restrict(&[empty]), Err(Error::EmptyRestriction)));
    }

    #[test]
    fn normalize_scales() {
        let t: MeasureTree<Rational> = uniform_measure(2, 3).unwrap();
        let r = t.restrict(&[CubeIndex::new(2, 1, &[0, 0]).unwrap()]).unwrap();
        let n = r.normalize().unwrap();
        for m in 0..=3 {
            for ((k1, a), (k2, b)) in r.level(m).unwrap().iter().zip(n.level(m).unwrap()) {
                assert_eq!(k1, k2);
                assert_eq!(a.clone() * q(4, 1), *b);
            }
        }
    }

    #[test]
    fn renormalize_examples() {
        let t: MeasureTree<Rational> = uniform_measure(2, 5).unwrap();
        let qd = CubeIndex::new(2, 2, &[3, 1]).unwrap();
        assert_eq!(t.renormalize_to_unit(&qd).unwrap(), uniform_measure(2, 3).unwrap());

        let leaf = CubeIndex::new(2, 5, &[3, 9]).unwrap();
        let r = t.renormalize_to_unit(&leaf).unwrap();
        assert_eq!(r.depth(), 0);
        assert_eq!(r.total(), q(1, 1));

        let b = three_branch(6);
        assert_eq!(b.renormalize_to_unit(&CubeIndex::root(2).child(0)).unwrap(), three_branch(5));
        assert!(matches!(b.renormalize_to_unit(&CubeIndex::root(2).child(2)), Err(Error::ZeroMass)));
    }

    #[test]
    fn refine_matches_discretization_scaling() {
        let b = three_branch(3);
        let d = b.discretized_tree(2).unwrap();
        assert_eq!(d.depth(), 3);
        d.check_consistency().unwrap();
        assert_eq!(d.leaves().len(), 9 * 4);
        assert!(d.leaves().iter().all(|(_, m)| *m == q(1, 36)));
    }

    #[test]
    fn consistency_detects_corruption() {
        let mut t: MeasureTree<f64> = uniform_measure(2, 2).unwrap();
        t.levels[1][0].1 += 1e-6;
        assert!(t.check_consistency().is_err());
    }

    fn arb_tree() -> impl Strategy<Value = MeasureTree<Rational>> {
        (1u32..=2, 1u32..=4).prop_flat_map(|(dim, depth)| {
            let n = 1u64 << (dim * depth);
            prop::collection::vec((0..n, 1u64..20), 1..24).prop_map(move |w| MeasureTree::from_weights(dim, depth, &w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn operations_preserve_consistency(t in arb_tree(), level_frac in 0.0f64..1.0) {
            t.check_consistency().unwrap();
            let level = ((t.depth() as f64) * level_frac) as u32;
            let g = t.discretize(level).unwrap();
            prop_assert_eq!(g.total().clone(), t.total());

            let cubes: Vec<_> = t.cubes(level).unwrap().map(|(c, _)| c).step_by(2).collect();
            let expected = cubes.iter().fold(Rational::from_ratio(0, 1), |a, c| a + t.mass(c));
            let r = t.restrict(&cubes).unwrap();
            r.check_consistency().unwrap();
            prop_assert_eq!(r.total(), expected);

            let (c, mc) = t.cubes(level).unwrap().next().map(|(c, m)| (c, m.clone())).unwrap();
            let u = t.renormalize_to_unit(&c).unwrap();
            u.check_consistency().unwrap();
            for j in 0..=u.depth() {
                for (sub, m) in t.descendants(&c, level + j).unwrap() {
                    let local = CubeIndex::from_key(t.dim(), j, sub & if j == 0 { 0 } else { (1u64 << (t.dim() * j)) - 1 });
                    prop_assert_eq!(u.mass(&local), m.clone() / mc.clone());
                }
            }
        }
    }
}
