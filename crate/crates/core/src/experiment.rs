//! The full pinned-distance pipeline: schedule, Frostman check, vantage
//! search, the set `A_1`, adversarial subsets `A_2`, square classification
//! and the entropy of `Δ_y μ_{A_2}`.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cube::CubeIndex;
use crate::directions::{vantage_search, DirectionAtlas, DEFAULT_ANGLES};
use crate::energy::{correlation_profile, sum_of_squares};
use crate::entropy::shannon;
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::pinned::{multiscale_entropy_bound, pin_direction, pinned_pushforward, separation};
use crate::projection::project_atoms;
use crate::scalar::Rational;
use crate::schedule::ScaleSchedule;
use crate::squares::classify_squares;
use crate::tree::MeasureTree;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEPARATION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSpec {
    /// Centers of an `n × n` grid of cells covering the box `[lo, hi]`.
    Grid { lo: [f64; 2], hi: [f64; 2], n: usize },
    Points(Vec<[f64; 2]>),
}

impl CandidateSpec {
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            CandidateSpec::Points(p) => p.clone(),
            CandidateSpec::Grid { lo, hi, n } => {
                let step = [(hi[0] - lo[0]) / *n as f64, (hi[1] - lo[1]) / *n as f64];
                let mut out = Vec::with_capacity(n * n);
                for b in 0..*n {
                    for a in 0..*n {
                        out.push([lo[0] + (a as f64 + 0.5) * step[0], lo[1] + (b as f64 + 0.5) * step[1]]);
                    }
                }
                out
            }
        }
    }
}

fn default_j0() -> usize {
    1
}

fn default_angles() -> usize {
    DEFAULT_ANGLES
}

fn default_frostman() -> f64 {
    4.0
}

fn default_subsets() -> usize {
    8
}

fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub measure: GeneratorSpec,
    pub candidates: CandidateSpec,
    /// Target normalized entropy.
    pub t: f64,
    pub epsilon: f64,
    /// Frostman exponent of the measure.
    pub s: f64,
    #[serde(default = "default_j0")]
    pub j0: usize,
    #[serde(default = "default_angles")]
    pub n_angles: usize,
    /// Largest accepted constant `C` in `μ(Q) ≤ C 2^{-(m−δ)s}`.
    #[serde(default = "default_frostman")]
    pub frostman_bound: f64,
    #[serde(default = "default_subsets")]
    pub random_subsets: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minimum distance from a candidate pin to the support.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Also record exact level sums `Σ μ(Q)²` as rationals.
    #[serde(default)]
    pub exact_sections: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanCheck {
    /// Smallest `C` with `μ(Q) ≤ C 2^{-(m−δ)s}` for all cubes.
    pub constant: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    /// `a1`, `random` or `annulus`.
    pub kind: String,
    /// Seed of a random subset, or the distance bin of an annulus.
    pub tag: i64,
    /// μ(A_2)/μ(A_1).
    pub relative_mass: f64,
    /// `H_{m_k}(Δ_y μ_{A_2})`.
    pub entropy: f64,
}

/// Worst entropy among annuli of one coarser width, for diagnostics only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseAnnulus {
    pub level: u32,
    pub qualifying: usize,
    pub worst_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub j: usize,
    pub m_j: u32,
    pub d_j: u32,
    pub direction_pass: Option<f64>,
    pub heavy: usize,
    pub squares: usize,
    pub light_mass: f64,
    pub light_bound: f64,
    pub good_mass: f64,
    pub bad_mass: f64,
    /// μ̃-weighted mean of `H(μ̃^Q_{θ(y,x_Q)}, D_{d_j})`.
    pub mean_local_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub spec: ExperimentSpec,
    pub depth: u32,
    pub leaves: usize,
    pub schedule: Vec<u32>,
    pub k: usize,
    pub delta: f64,
    pub s1: f64,
    pub linearization_admissible: bool,
    pub vantage_admissible: bool,
    pub frostman: FrostmanCheck,
    pub candidates: usize,
    pub candidates_rejected: usize,
    pub vantage: Option<[f64; 2]>,
    pub vantage_score: f64,
    pub a1_mass: f64,
    pub a1_entropy: f64,
    pub adversaries: Vec<Adversary>,
    pub coarse_annuli: Vec<CoarseAnnulus>,
    /// `H_{m_k}(Δ_y μ_{A_2})` for the worst adversary.
    pub entropy: f64,
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub scales: Vec<ScaleRow>,
    /// Exact `Σ_{Q ∈ D_j} μ(Q)²` for `j = 0..=M`, when requested.
    pub level_sums: Option<Vec<String>>,
    /// Correlation sums `T_j` at the Frostman exponent.
    pub correlation: Vec<f64>,
    pub verdict: bool,
    /// Excluded from byte comparisons.
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report as JSON with the timing removed, for comparisons.
    pub fn comparable(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timing");
        }
        Ok(v)
    }
}

fn frostman_constant(tree: &MeasureTree<f64>, s: f64, delta: f64) -> f64 {
    (0..=tree.depth())
        .map(|m| {
            let heaviest = tree.nodes(m).iter().map(|(_, x)| *x).fold(0.0, f64::max);
            heaviest * ((m as f64 - delta) * s).exp2()
        })
        .fold(0.0, f64::max)
}

/// Leaf-center distances to `y`, binned at `level`.
fn distance_bins(tree: &MeasureTree<f64>, y: [f64; 2], level: u32) -> Vec<i64> {
    let scale = (level as f64).exp2();
    tree.leaves()
        .iter()
        .map(|(k, _)| {
            let c = CubeIndex::from_key(2, tree.depth(), *k).center();
            ((c[0] - y[0]).hypot(c[1] - y[1]) * scale).floor() as i64
        })
        .collect()
}

fn pinned_entropy(tree: &MeasureTree<f64>, y: [f64; 2], level: u32) -> Result<f64> {
    let grid = tree.discretize(tree.depth())?;
    Ok(pinned_pushforward(&grid, y, level, 0)?.normalized_entropy())
}

fn restrict_mask(tree: &MeasureTree<f64>, keep: &[bool]) -> Result<MeasureTree<f64>> {
    let mut i = 0;
    tree.restrict_leaves(|_, _| {
        i += 1;
        keep[i - 1]
    })
}

pub fn run_distance_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(spec.epsilon > 0.0 && spec.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {} not in (0, 1)", spec.epsilon)));
    }
    let tree: MeasureTree<f64> = spec.measure.build()?;
    if tree.dim() != 2 {
        return Err(Error::InvalidParameter("experiments need a planar measure".into()));
    }
    let depth = tree.depth();
    let schedule = ScaleSchedule::hyperdyadic_within(spec.epsilon, depth)?;
    let k = schedule.k();
    if k < 2 {
        return Err(Error::InvalidSchedule(format!("depth {depth} gives only k = {k} scales")));
    }
    let m_k = schedule.last();
    let delta = spec.epsilon * spec.epsilon;
    let s1 = spec.s - 2.0 * delta;
    let constant = frostman_constant(&tree, spec.s, delta);
    let frostman = FrostmanCheck { constant, bound: spec.frostman_bound, passed: constant <= spec.frostman_bound };

    let finest = tree.discretize(depth)?;
    let all = spec.candidates.points();
    let candidates: Vec<[f64; 2]> = all.iter().copied().filter(|y| separation(&finest, *y) >= spec.separation).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let atlas = DirectionAtlas::build(&tree, &schedule, s1, spec.epsilon, spec.j0, spec.n_angles)?;
    let vantage = vantage_search(&tree, &candidates, &atlas)?;
    let y = vantage.point;

    let accepted: Vec<bool> = tree
        .leaves()
        .iter()
        .map(|(key, _)| {
            let x = CubeIndex::from_key(2, depth, *key).center();
            atlas.accepts(x, y)
        })
        .collect();
    let a1_mass: f64 = tree.leaves().iter().zip(&accepted).filter(|(_, a)| **a).map(|((_, m), _)| m).sum();

    let mut report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        depth,
        leaves: tree.leaves().len(),
        schedule: schedule.levels().to_vec(),
        k,
        delta,
        s1,
        linearization_admissible: schedule.linearization_admissible(),
        vantage_admissible: schedule.vantage_admissible(spec.j0),
        frostman,
        candidates: candidates.len(),
        candidates_rejected: all.len() - candidates.len(),
        vantage: Some(y),
        vantage_score: vantage.score,
        a1_mass,
        a1_entropy: 0.0,
        adversaries: Vec::new(),
        coarse_annuli: Vec::new(),
        entropy: 0.0,
        bound_lhs: 0.0,
        bound_rhs: 0.0,
        scales: Vec::new(),
        level_sums: None,
        correlation: correlation_profile(&tree, spec.s.min(1.999))?.terms,
        verdict: false,
        timing: Timing { wall_clock_seconds: 0.0 },
    };
    if spec.exact_sections {
        let exact: MeasureTree<Rational> = spec.measure.build()?;
        report.level_sums = Some((0..=depth).map(|j| sum_of_squares(exact.nodes(j)).to_string()).collect());
    }
    if a1_mass <= 0.0 {
        report.timing.wall_clock_seconds = start.elapsed().as_secs_f64();
        return Ok(report);
    }

    let a1 = restrict_mask(&tree, &accepted)?;
    report.a1_entropy = pinned_entropy(&a1.normalize()?, y, m_k)?;
    let floor = a1_mass / (k * k) as f64;
    let leaves = tree.leaves();
    let members: Vec<usize> = (0..leaves.len()).filter(|&i| accepted[i]).collect();

    let mut candidates_a2: Vec<(Adversary, Vec<bool>)> = Vec::new();
    candidates_a2.push((
        Adversary { kind: "a1".into(), tag: 0, relative_mass: 1.0, entropy: report.a1_entropy },
        accepted.clone(),
    ));
    for r in 0..spec.random_subsets {
        let tag = spec.seed.wrapping_add(r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(tag);
        let mut order = members.clone();
        for i in (1..order.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut keep = vec![false; leaves.len()];
        let mut mass = 0.0;
        for i in order {
            if mass >= floor {
                break;
            }
            keep[i] = true;
            mass += leaves[i].1;
        }
        candidates_a2.push((Adversary { kind: "random".into(), tag: tag as i64, relative_mass: mass / a1_mass, entropy: 0.0 }, keep));
    }
    // Single annuli of width 2^{-m_k}, the shape of A_2 in the covering argument.
    let fine_bins = distance_bins(&tree, y, m_k);
    let mut annulus_mass: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for &i in &members {
        *annulus_mass.entry(fine_bins[i]).or_default() += leaves[i].1;
    }
    for (bin, mass) in &annulus_mass {
        if *mass >= floor {
            let keep = (0..leaves.len()).map(|i| accepted[i] && fine_bins[i] == *bin).collect();
            candidates_a2.push((Adversary { kind: "annulus".into(), tag: *bin, relative_mass: mass / a1_mass, entropy: 0.0 }, keep));
        }
    }
    for (adv, keep) in candidates_a2.iter_mut().skip(1) {
        adv.entropy = pinned_entropy(&restrict_mask(&tree, keep)?.normalize()?, y, m_k)?;
    }
    let worst = candidates_a2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.entropy.total_cmp(&b.1 .0.entropy).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("A_1 is always a candidate");
    report.entropy = candidates_a2[worst].0.entropy;
    let worst_set = restrict_mask(&tree, &candidates_a2[worst].1)?.normalize()?;
    report.adversaries = candidates_a2.into_iter().map(|(a, _)| a).collect();

    // Wider annuli defeat any fixed target at desk scale; recorded, not used in the verdict.
    for level in 0..m_k {
        let bins = distance_bins(&tree, y, level);
        let mut mass: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
        for &i in &members {
            *mass.entry(bins[i]).or_default() += leaves[i].1;
        }
        let mut worst_entropy: Option<f64> = None;
        let mut qualifying = 0;
        for (bin, m) in &mass {
            if *m >= floor {
                qualifying += 1;
                let keep: Vec<bool> = (0..leaves.len()).map(|i| accepted[i] && bins[i] == *bin).collect();
                let h = pinned_entropy(&restrict_mask(&tree, &keep)?.normalize()?, y, m_k)?;
                worst_entropy = Some(worst_entropy.map_or(h, |w: f64| w.min(h)));
            }
        }
        report.coarse_annuli.push(CoarseAnnulus { level, qualifying, worst_entropy });
    }

    let pass = atlas.scale_pass();
    for j in 0..k {
        let (m, d) = (schedule.m(j), schedule.gap(j));
        let c = classify_squares(&tree, &worst_set, m, s1, delta, d)?;
        let mut local = 0.0;
        let mut weight = 0.0;
        for (key, w) in worst_set.level(m)? {
            let q = CubeIndex::from_key(2, m, *key);
            let sub = worst_set.renormalize_to_unit(&q)?;
            let theta = pin_direction(y, &q);
            let grid = sub.discretize(sub.depth())?;
            let masses = project_atoms(&grid, theta, 0, d)?;
            local += w * shannon(masses.masses().iter().copied());
            weight += w;
        }
        report.scales.push(ScaleRow {
            j,
            m_j: m,
            d_j: d,
            direction_pass: pass.iter().find(|(i, _)| *i == j).map(|(_, p)| *p),
            heavy: c.labels.iter().filter(|l| l.heavy).count(),
            squares: c.labels.len(),
            light_mass: c.light_mass,
            light_bound: c.light_bound,
            good_mass: c.good_mass,
            bad_mass: c.bad_mass,
            mean_local_entropy: local / weight,
        });
    }
    let bound = multiscale_entropy_bound(&worst_set, y, &schedule)?;
    report.bound_lhs = bound.lhs;
    report.bound_rhs = bound.rhs_sum;
    report.verdict = report.entropy >= spec.t;
    report.timing.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The 3-branch flagship configuration.
pub fn flagship_spec() -> ExperimentSpec {
    ExperimentSpec {
        measure: GeneratorSpec::Branching { dim: 2, pattern: vec![0, 1, 3], depth: 12 },
        candidates: CandidateSpec::Grid { lo: [-1.0, -1.0], hi: [0.0, 0.0], n: 8 },
        t: 0.8,
        epsilon: 0.3,
        s: 3f64.log2(),
        j0: default_j0(),
        n_angles: DEFAULT_ANGLES,
        frostman_bound: default_frostman(),
        random_subsets: default_subsets(),
        seed: 0,
        separation: DEFAULT_SEPARATION,
        exact_sections: false,
    }
}

/// Circle pinned at its center: the radial degeneracy.
pub fn circle_spec() -> ExperimentSpec {
    ExperimentSpec {
        measure: GeneratorSpec::Circle { center: [0.5, 0.5], radius: 0.3, level: 12 },
        candidates: CandidateSpec::Points(vec![[0.5, 0.5]]),
        t: 0.8,
        epsilon: 0.3,
        s: 1.0,
        j0: default_j0(),
        n_angles: 256,
        frostman_bound: 64.0,
        random_subsets: default_subsets(),
        seed: 0,
        separation: DEFAULT_SEPARATION,
        exact_sections: false,
    }
}

/// Product of two digit-restricted copies of the blocked-squares set.
pub fn digit_product_spec() -> ExperimentSpec {
    ExperimentSpec {
        measure: GeneratorSpec::DigitRestricted { dim: 2, depth: 12, blocked: crate::generators::BlockedDigits::Squares },
        candidates: CandidateSpec::Grid { lo: [-1.0, -1.0], hi: [0.0, 0.0], n: 4 },
        t: 0.8,
        epsilon: 0.3,
        s: 1.0,
        j0: default_j0(),
        n_angles: 256,
        frostman_bound: 4096.0,
        random_subsets: 4,
        seed: 0,
        separation: DEFAULT_SEPARATION,
        exact_sections: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_grid() {
        let g = CandidateSpec::Grid { lo: [-1.0, -1.0], hi: [0.0, 0.0], n: 2 }.points();
        assert_eq!(g, vec![[-0.75, -0.75], [-0.25, -0.75], [-0.75, -0.25], [-0.25, -0.25]]);
    }

    #[test]
    fn circle_is_degenerate() {
        let mut spec = circle_spec();
        spec.measure = GeneratorSpec::Circle { center: [0.5, 0.5], radius: 0.3, level: 9 };
        spec.n_angles = 64;
        let r = run_distance_experiment(&spec).unwrap();
        assert!(!r.verdict);
        assert!(r.entropy <= 0.1, "{}", r.entropy);
    }

    #[test]
    fn small_run_is_deterministic() {
        let mut spec = flagship_spec();
        spec.measure = GeneratorSpec::Branching { dim: 2, pattern: vec![0, 1, 3], depth: 7 };
        spec.n_angles = 64;
        spec.candidates = CandidateSpec::Grid { lo: [-1.0, -1.0], hi: [0.0, 0.0], n: 3 };
        let a = run_distance_experiment(&spec).unwrap();
        let b = run_distance_experiment(&spec).unwrap();
        assert_eq!(a.comparable().unwrap(), b.comparable().unwrap());
        assert!(a.frostman.passed);
        assert_eq!(a.scales.len(), a.k);
        for row in &a.scales {
            assert!(row.light_mass <= row.light_bound);
        }
        let text = a.to_json().unwrap();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.comparable().unwrap(), a.comparable().unwrap());
    }

    #[test]
    fn spec_parses_with_defaults() {
        let text = r#"{"measure":{"kind":"branching","pattern":[0,1,3],"depth":6},
            "candidates":{"points":[[-0.5,-0.5]]},"t":0.5,"epsilon":0.3,"s":1.58}"#;
        let spec: ExperimentSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.n_angles, DEFAULT_ANGLES);
        assert_eq!(spec.separation, DEFAULT_SEPARATION);
    }
}
