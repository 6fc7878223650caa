//! Direction sets `Θ_x`, vantage points and direction incidences.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{descendant_range, CubeIndex};
use crate::energy::dyadic_energy;
use crate::error::{Error, Result};
use crate::pinned::{direction, separation};
use crate::projection::{project_grid, Direction};
use crate::raycast::slice_measure;
use crate::scalar::Scalar;
use crate::schedule::ScaleSchedule;
use crate::tree::{GridMeasure, MeasureTree};

pub const DEFAULT_ANGLES: usize = 1024;
/// Sub-atoms per axis exponent used when projecting `μ^{x,j}`.
pub const DIRECTION_SUBDIV: u32 = 2;
pub const DEFAULT_TAU: f64 = 0.05;

/// A set of angle indices out of `n` equispaced angles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AngleMask {
    n: usize,
    bits: Vec<u64>,
}

impl AngleMask {
    pub fn empty(n: usize) -> Self {
        AngleMask { n, bits: vec![0; n.div_ceil(64)] }
    }

    pub fn full(n: usize) -> Self {
        let mut m = Self::empty(n);
        (0..n).for_each(|i| m.insert(i));
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn insert(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn contains_direction(&self, theta: Direction) -> bool {
        self.contains(theta.nearest_index(self.n))
    }

    pub fn intersect(&mut self, other: &AngleMask) {
        self.bits.iter_mut().zip(&other.bits).for_each(|(a, b)| *a &= b);
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleMask {
    pub j: usize,
    pub m_j: u32,
    pub d_j: u32,
    /// `E_s(μ^{x,j})`.
    pub energy: f64,
    /// `2^{ε d_j} E_s(μ^{x,j})`.
    pub threshold: f64,
    pub mask: AngleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub anchor: [f64; 2],
    pub n_angles: usize,
    pub scales: Vec<ScaleMask>,
    /// Θ_x, the angles passing at every scale.
    pub passing: AngleMask,
}

impl DirectionSet {
    pub fn pass_fractions(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.mask.fraction()).collect()
    }
}

/// Angles θ with `‖(μ^{Q,(d)})_θ‖₂² ≤ 2^{εd}·E_s(μ^{Q,(d)})`.
fn scale_mask(local: &MeasureTree<f64>, s: f64, epsilon: f64, angles: &[Direction]) -> Result<(f64, f64, AngleMask)> {
    let energy = dyadic_energy(local, s)?;
    let threshold = (epsilon * local.depth() as f64).exp2() * energy;
    let grid = local.discretize(local.depth())?;
    let mut mask = AngleMask::empty(angles.len());
    for (i, theta) in angles.iter().enumerate() {
        if project_grid(&grid, *theta, DIRECTION_SUBDIV)?.l2_norm_sq() <= threshold {
            mask.insert(i);
        }
    }
    Ok((energy, threshold, mask))
}

fn check_parameters(schedule: &ScaleSchedule, depth: u32, j0: usize, n_angles: usize) -> Result<()> {
    schedule.check_within(depth)?;
    if j0 >= schedule.k() {
        return Err(Error::InvalidSchedule(format!("j0 = {j0} leaves no scales below k = {}", schedule.k())));
    }
    if n_angles == 0 {
        return Err(Error::InvalidParameter("n_angles must be positive".into()));
    }
    Ok(())
}

/// Per-scale masks and Θ_x for `j0 ≤ j < k`, with `μ^{x,j} = μ^{D_{m_j}(x),(d_j)}`.
pub fn direction_set<S: Scalar>(
    tree: &MeasureTree<S>,
    x: [f64; 2],
    schedule: &ScaleSchedule,
    s: f64,
    epsilon: f64,
    j0: usize,
    n_angles: usize,
) -> Result<DirectionSet> {
    check_parameters(schedule, tree.depth(), j0, n_angles)?;
    let leaf = CubeIndex::containing(2, tree.depth(), &x).ok_or(Error::OutsideSupport)?;
    if !tree.mass(&leaf).is_positive() {
        return Err(Error::OutsideSupport);
    }
    let angles = Direction::equispaced(n_angles);
    let mut passing = AngleMask::full(n_angles);
    let mut scales = Vec::new();
    for j in j0..schedule.k() {
        let (m, d) = (schedule.m(j), schedule.gap(j));
        let q = leaf.ancestor(m).expect("schedule within depth");
        let local = tree.local_tree(&q, d)?.to_f64();
        let (energy, threshold, mask) = scale_mask(&local, s, epsilon, &angles)?;
        passing.intersect(&mask);
        scales.push(ScaleMask { j, m_j: m, d_j: d, energy, threshold, mask });
    }
    Ok(DirectionSet { anchor: x, n_angles, scales, passing })
}

/// Θ_x for every point of the support at once. Θ_x depends on `x` only
/// through its ancestors at levels `m_{j0}, …, m_{k−1}`, so masks are stored
/// per cube of level `m_{k−1}`; identical local measures share one mask.
#[derive(Debug, Clone)]
pub struct DirectionAtlas {
    level: u32,
    n_angles: usize,
    cells: Vec<(u64, Arc<AngleMask>)>,
    /// Mean pass fraction per scale, weighted by μ.
    scale_pass: Vec<(usize, f64)>,
}

type LocalKey = (u32, Vec<(u64, u64)>);

impl DirectionAtlas {
    pub fn build<S: Scalar>(
        tree: &MeasureTree<S>,
        schedule: &ScaleSchedule,
        s: f64,
        epsilon: f64,
        j0: usize,
        n_angles: usize,
    ) -> Result<Self> {
        check_parameters(schedule, tree.depth(), j0, n_angles)?;
        let tree = tree.to_f64().normalize()?;
        let angles = Direction::equispaced(n_angles);
        let level = schedule.m(schedule.k() - 1);
        let mut combined: Vec<(u64, AngleMask)> =
            tree.level(level)?.iter().map(|(k, _)| (*k, AngleMask::full(n_angles))).collect();
        let mut scale_pass = Vec::new();
        for j in j0..schedule.k() {
            let (m, d) = (schedule.m(j), schedule.gap(j));
            let locals: Vec<(u64, f64, LocalKey, MeasureTree<f64>)> = tree
                .level(m)?
                .iter()
                .map(|(key, mass)| {
                    let local = tree.local_tree(&CubeIndex::from_key(2, m, *key), d)?;
                    let signature = (d, local.leaves().iter().map(|(k, x)| (*k, x.to_bits())).collect());
                    Ok((*key, *mass, signature, local))
                })
                .collect::<Result<_>>()?;
            let mut distinct: HashMap<&LocalKey, &MeasureTree<f64>> = HashMap::new();
            for (_, _, sig, local) in &locals {
                distinct.entry(sig).or_insert(local);
            }
            let mut work: Vec<(&LocalKey, &MeasureTree<f64>)> = distinct.into_iter().collect();
            work.sort_by(|a, b| a.0.cmp(b.0));
            let masks: HashMap<&LocalKey, AngleMask> = work
                .par_iter()
                .map(|(sig, local)| Ok((*sig, scale_mask(local, s, epsilon, &angles)?.2)))
                .collect::<Result<_>>()?;
            let mut pass = 0.0;
            for (key, mass, sig, _) in &locals {
                let mask = &masks[sig];
                pass += mass * mask.fraction();
                let range = descendant_range(2, *key, m, level);
                let lo = combined.partition_point(|(k, _)| *k < range.start);
                let hi = combined.partition_point(|(k, _)| *k < range.end);
                combined[lo..hi].iter_mut().for_each(|(_, c)| c.intersect(mask));
            }
            scale_pass.push((j, pass));
        }
        let mut shared: HashMap<AngleMask, Arc<AngleMask>> = HashMap::new();
        let cells = combined
            .into_iter()
            .map(|(k, mask)| {
                let arc = shared.entry(mask.clone()).or_insert_with(|| Arc::new(mask)).clone();
                (k, arc)
            })
            .collect();
        Ok(DirectionAtlas { level, n_angles, cells, scale_pass })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    /// μ-weighted fraction of angles passing at each scale `j`.
    pub fn scale_pass(&self) -> &[(usize, f64)] {
        &self.scale_pass
    }

    /// Θ_x for `x` in the level-`m_{k−1}` cube with Morton key `key`.
    pub fn mask(&self, key: u64) -> Option<&AngleMask> {
        self.cells.binary_search_by_key(&key, |(k, _)| *k).ok().map(|i| self.cells[i].1.as_ref())
    }

    /// Does the direction `θ(x, y)` lie in Θ_x?
    pub fn accepts(&self, x: [f64; 2], y: [f64; 2]) -> bool {
        let Some(cube) = CubeIndex::containing(2, self.level, &x) else {
            return false;
        };
        match (self.mask(cube.key()), direction(x, y)) {
            (Some(mask), Ok(theta)) => mask.contains_direction(theta),
            _ => false,
        }
    }
}

/// `μ{x : θ(x, y) ∈ Θ_x} / μ([0,1)²)`, with `x` ranging over leaf centers.
pub fn vantage_score<S: Scalar>(tree: &MeasureTree<S>, y: [f64; 2], atlas: &DirectionAtlas) -> Result<f64> {
    let finest = tree.discretize(tree.depth())?;
    let required = (-(tree.depth() as f64)).exp2();
    let distance = separation(&finest, y);
    if distance < required {
        return Err(Error::Separation { distance, required });
    }
    let shift = 2 * (tree.depth() - atlas.level());
    let total = tree.total().to_f64();
    let hits: f64 = tree
        .leaves()
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .filter(|(key, _)| {
                    let x = CubeIndex::from_key(2, tree.depth(), *key).center();
                    match (atlas.mask(key >> shift), direction(x, y)) {
                        (Some(mask), Ok(theta)) => mask.contains_direction(theta),
                        _ => false,
                    }
                })
                .map(|(_, m)| m.to_f64())
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    Ok(hits / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VantageResult {
    pub index: usize,
    pub point: [f64; 2],
    pub score: f64,
    pub scores: Vec<f64>,
}

/// The candidate with the highest vantage score; ties go to the lowest index.
pub fn vantage_search<S: Scalar>(tree: &MeasureTree<S>, candidates: &[[f64; 2]], atlas: &DirectionAtlas) -> Result<VantageResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores: Vec<f64> = candidates.iter().map(|y| vantage_score(tree, *y, atlas)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(VantageResult { index: best, point: candidates[best], score: scores[best], scores })
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (-53f64).exp2()
}

/// Fraction of pairs `(y, θ)`, `y ~ μ` and θ uniform, whose slice
/// `|ν_{θ,y}|` through `y` is at least `τ`.
pub fn direction_incidence<S: Scalar, T: Scalar>(
    mu: &MeasureTree<S>,
    nu: &GridMeasure<T>,
    tau: f64,
    n_angles: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!("tau = {tau} is negative")));
    }
    if mu.dim() != 2 || n_angles == 0 || n_samples == 0 {
        return Err(Error::InvalidParameter("incidence needs a planar measure and positive sample counts".into()));
    }
    let leaves = mu.leaves();
    let mut cumulative = Vec::with_capacity(leaves.len());
    let mut acc = 0.0;
    for (_, m) in leaves {
        acc += m.to_f64();
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<([f64; 2], f64)> = (0..n_samples)
        .map(|_| {
            let u = unit_draw(&mut rng) * acc;
            let i = cumulative.partition_point(|c| *c <= u).min(leaves.len() - 1);
            let cube = CubeIndex::from_key(2, mu.depth(), leaves[i].0);
            let (c, h) = (cube.corner(), cube.side());
            let y = [c[0] + unit_draw(&mut rng) * h, c[1] + unit_draw(&mut rng) * h];
            (y, unit_draw(&mut rng) * TAU / n_angles as f64)
        })
        .collect();
    let hits: usize = samples
        .par_iter()
        .map(|(y, offset)| {
            (0..n_angles)
                .map(|a| {
                    let theta = Direction::from_angle(offset + TAU * a as f64 / n_angles as f64);
                    slice_measure(nu, theta, *y).map(|v| usize::from(v >= tau))
                })
                .sum::<Result<usize>>()
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / (n_samples * n_angles) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{branching_measure, line_measure, point_mass, uniform_measure};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn mask_operations() {
        let mut a = AngleMask::empty(100);
        a.insert(3);
        a.insert(99);
        assert_eq!(a.count(), 2);
        let mut f = AngleMask::full(100);
        assert_eq!(f.count(), 100);
        f.intersect(&a);
        assert_eq!(f, a);
        assert!(a.contains_direction(Direction::from_angle(TAU * 3.2 / 100.0)));
    }

    #[test]
    fn uniform_passes_everywhere() {
        let u: MeasureTree<f64> = uniform_measure(2, 8).unwrap();
        let schedule = ScaleSchedule::hyperdyadic(0.5, 5).unwrap();
        let set = direction_set(&u, [0.3, 0.6], &schedule, 1.5, 0.1, 0, 64).unwrap();
        assert_eq!(set.passing.count(), 64);
        assert_eq!(set.scales.len(), 5);
    }

    #[test]
    fn line_fails_across_the_line() {
        let l: MeasureTree<f64> = line_measure(0.5, 0.0, 1.0, 10).unwrap();
        let schedule = ScaleSchedule::from_levels(vec![0, 2, 8]).unwrap();
        let set = direction_set(&l, [0.3, 0.5], &schedule, 0.5, 0.1, 1, 64).unwrap();
        let deep = &set.scales.last().unwrap().mask;
        assert!(!deep.contains_direction(Direction::from_angle(FRAC_PI_2)));
        assert!(deep.contains_direction(Direction::from_angle(0.0)));
        assert!(direction_set(&l, [0.3, 0.2], &schedule, 0.5, 0.1, 1, 64).is_err());
    }

    #[test]
    fn atom_fails_at_large_gaps() {
        let p: MeasureTree<f64> = point_mass(2, 10, &[5, 5]).unwrap();
        let schedule = ScaleSchedule::from_levels(vec![0, 2, 10]).unwrap();
        let x = CubeIndex::new(2, 10, &[5, 5]).unwrap().center();
        let set = direction_set(&p, x, &schedule, 0.5, 0.1, 1, 32).unwrap();
        assert!(set.passing.is_empty());
    }

    #[test]
    fn atlas_agrees_with_direction_sets() {
        let t: MeasureTree<f64> = branching_measure(&[0, 1, 3], 8).unwrap();
        let schedule = ScaleSchedule::hyperdyadic(0.5, 5).unwrap();
        let atlas = DirectionAtlas::build(&t, &schedule, 1.2, 0.3, 1, 128).unwrap();
        for (key, _) in t.leaves().iter().step_by(97) {
            let x = CubeIndex::from_key(2, 8, *key).center();
            let set = direction_set(&t, x, &schedule, 1.2, 0.3, 1, 128).unwrap();
            let cube = CubeIndex::containing(2, atlas.level(), &x).unwrap();
            assert_eq!(atlas.mask(cube.key()).unwrap(), &set.passing);
        }
    }

    #[test]
    fn vantage_examples() {
        let u: MeasureTree<f64> = uniform_measure(2, 6).unwrap();
        let schedule = ScaleSchedule::hyperdyadic(0.5, 4).unwrap();
        let atlas = DirectionAtlas::build(&u, &schedule, 1.5, 0.1, 0, 64).unwrap();
        assert!((vantage_score(&u, [-0.5, -0.5], &atlas).unwrap() - 1.0).abs() < 1e-12);
        let best = vantage_search(&u, &[[-0.5, 0.2], [-0.3, -0.3]], &atlas).unwrap();
        assert_eq!(best.index, 0);
        assert!(vantage_search(&u, &[], &atlas).is_err());
        assert!(vantage_score(&u, [0.5, 0.5], &atlas).is_err());
    }

    #[test]
    fn line_vantage_prefers_the_axis() {
        let l: MeasureTree<f64> = line_measure(0.5, 0.0, 1.0, 10).unwrap();
        let schedule = ScaleSchedule::from_levels(vec![0, 2, 4, 8]).unwrap();
        let atlas = DirectionAtlas::build(&l, &schedule, 0.5, 0.1, 1, 256).unwrap();
        let on_axis = vantage_score(&l, [-0.5, 0.5], &atlas).unwrap();
        let broadside = vantage_score(&l, [0.5, -1.5], &atlas).unwrap();
        assert!(on_axis > 0.9, "{on_axis}");
        assert!(broadside < 0.1, "{broadside}");
        let best = vantage_search(&l, &[[0.5, -1.5], [-0.5, 0.5]], &atlas).unwrap();
        assert_eq!(best.index, 1);
    }

    #[test]
    fn incidence_examples() {
        let u: MeasureTree<f64> = uniform_measure(2, 5).unwrap();
        let g = u.discretize(5).unwrap();
        let hi = direction_incidence(&u, &g, 0.1, 16, 200, 1).unwrap();
        assert!(hi > 0.9, "{hi}");
        assert_eq!(direction_incidence(&u, &g, 0.0, 8, 50, 1).unwrap(), 1.0);
        let p: MeasureTree<f64> = point_mass(2, 5, &[9, 9]).unwrap();
        let lo = direction_incidence(&u, &p.discretize(5).unwrap(), 0.5, 16, 200, 1).unwrap();
        assert!(lo < 0.05, "{lo}");
        assert_eq!(hi, direction_incidence(&u, &g, 0.1, 16, 200, 1).unwrap());
    }
}
