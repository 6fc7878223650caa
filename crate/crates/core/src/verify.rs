//! Self-checks run by `fractalmeter verify`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::energy::{block_decomposition, correlation_profile, dyadic_energy};
use crate::entropy::{conditional_entropy, entropy_lower_bound_from_l2, partition_entropy, shifted_partition_entropy};
use crate::error::{Error, Result};
use crate::experiment::{circle_spec, flagship_spec, run_distance_experiment};
use crate::generators::beta_model_measure;
use crate::projection::{l2_comparison, Direction};
use crate::scalar::{Rational, Scalar, Surd2};
use crate::schedule::ScaleSchedule;
use crate::tree::MeasureTree;

/// Slack for entropy identities and inequalities evaluated in floating point.
pub const ENTROPY_SLACK: f64 = 1.0 / (1u64 << 30) as f64;
/// Accepted range of `‖(μ_θ)^(m)‖₂² / ‖Π_θ(μ^(m))‖₂²`.
pub const L2_RATIO_BRACKET: (f64, f64) = (0.5, 2.0);
/// Recorded flagship entropy `H_{m_k}(Δ_y μ_{A_2})`.
pub const FLAGSHIP_ENTROPY: f64 = 1.0146285854379755;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identities,
    Inequalities,
    Pipeline,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identities" => Ok(Suite::Identities),
            "inequalities" => Ok(Suite::Inequalities),
            "pipeline" => Ok(Suite::Pipeline),
            other => Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A random exact tree with integer leaf weights in `1..=9` on a random
/// subset of the leaves.
pub fn random_exact_tree(rng: &mut ChaCha8Rng, dim: u32, depth: u32) -> Result<MeasureTree<Rational>> {
    let n = 1u64 << (dim * depth);
    let mut weights = Vec::new();
    for k in 0..n {
        if rng.next_u64() % 3 != 0 {
            weights.push((k, 1 + rng.next_u64() % 9));
        }
    }
    if weights.is_empty() {
        weights.push((rng.next_u64() % n, 1));
    }
    MeasureTree::from_weights(dim, depth, &weights)
}

/// A random schedule `0 = m_0 ≤ … ≤ m_k = depth`.
pub fn random_schedule(rng: &mut ChaCha8Rng, depth: u32) -> Result<ScaleSchedule> {
    let mut levels = vec![0];
    while *levels.last().expect("nonempty") < depth {
        let last = *levels.last().expect("nonempty");
        levels.push((last + rng.next_u64() as u32 % 4).min(depth));
    }
    ScaleSchedule::from_levels(levels)
}

/// `∫∫ 2^{s|x∧y|} dμ^(M) dμ^(M)` summed over pairs of leaves; a leaf paired
/// with itself contributes `μ(P)² 2^{sM}·U` with `U` the mean of
/// `2^{s(|x∧y|−M)}` for independent uniform points of one cube.
fn pairwise_energy<S: Scalar>(tree: &MeasureTree<S>, s: f64) -> Result<S> {
    let (dim, depth) = (tree.dim(), tree.depth());
    let r = S::exp2(s)?;
    let q = r.clone() * S::exp2_int(-(dim as i32));
    let u = S::one() + (S::one() - S::one() / r.clone()) * q.clone() / (S::one() - q);
    let pow = |n: u32| (0..n).fold(S::one(), |acc, _| acc * r.clone());
    let mut total = S::zero();
    for (a, ma) in tree.leaves() {
        for (b, mb) in tree.leaves() {
            let kernel = if a == b {
                pow(depth) * u.clone()
            } else {
                let common = (0..=depth).rev().find(|l| a >> (dim * (depth - l)) == b >> (dim * (depth - l))).unwrap_or(0);
                pow(common)
            };
            total = total + ma.clone() * mb.clone() * kernel;
        }
    }
    Ok(total)
}

fn check(suite: Suite, name: &str, passed: bool, detail: String) -> Check {
    Check { suite, name: name.into(), passed, detail }
}

fn identities(seed: u64, size: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut failures = 0;
    for i in 0..size {
        let dim = 1 + (i % 2) as u32;
        let depth = 1 + rng.next_u64() as u32 % if dim == 1 { 4 } else { 3 };
        let tree = random_exact_tree(&mut rng, dim, depth)?;
        let surd: MeasureTree<Surd2> = tree.cast();
        for s in [0.5, 1.0, 1.5] {
            if s >= dim as f64 {
                continue;
            }
            if dyadic_energy(&surd, s)? != pairwise_energy(&surd, s)? {
                failures += 1;
            }
        }
    }
    out.push(check(Suite::Identities, "energy-equals-pair-sum", failures == 0, format!("{failures} mismatches over {size} trees")));

    let mut failures = 0;
    for i in 0..size {
        let dim = 1 + (i % 2) as u32;
        let depth = 2 + rng.next_u64() as u32 % if dim == 1 { 9 } else { 5 };
        let tree = random_exact_tree(&mut rng, dim, depth)?;
        let schedule = random_schedule(&mut rng, depth)?;
        let surd: MeasureTree<Surd2> = tree.cast();
        let blocks = block_decomposition(&surd, 0.5, &schedule)?;
        let total = blocks.into_iter().fold(Surd2::from_ratio(0, 1), |a, b| a + b);
        if total != correlation_profile(&surd, 0.5)?.partial_sum(1, depth as usize) {
            failures += 1;
        }
    }
    out.push(check(Suite::Identities, "blocks-telescope", failures == 0, format!("{failures} mismatches over {size} schedules")));

    let mut failures = 0;
    for i in 0..size {
        let dim = 1 + (i % 2) as u32;
        let depth = 3 + rng.next_u64() as u32 % 4;
        let m = 1 + rng.next_u64() as u32 % (depth - 1);
        let tree: MeasureTree<Surd2> = random_exact_tree(&mut rng, dim, depth)?.discretized_tree(m)?.cast();
        let s = 0.5 * (1 + rng.next_u64() % (2 * dim as u64 - 1)) as f64;
        let p = correlation_profile(&tree, s)?;
        let ratio = Surd2::exp2(s - dim as f64)?;
        for j in m + 1..=depth {
            if *p.term(j as usize) != p.term(j as usize - 1).clone() * ratio.clone() {
                failures += 1;
            }
        }
    }
    out.push(check(Suite::Identities, "discretization-scaling", failures == 0, format!("{failures} mismatches over {size} trees")));

    let mut worst: f64 = 0.0;
    for _ in 0..size {
        let tree = beta_model_measure::<f64>(2, 0.7, 7, rng.next_u64())?;
        for b in 0..=7 {
            for a in b..=7 {
                let gap = partition_entropy(&tree.discretize(a)?)?.bits
                    - partition_entropy(&tree.discretize(b)?)?.bits
                    - conditional_entropy(&tree, a, b)?.bits;
                worst = worst.max(gap.abs());
            }
        }
    }
    out.push(check(Suite::Identities, "entropy-chain-rule", worst <= ENTROPY_SLACK, format!("largest defect {worst:e}")));
    Ok(out)
}

fn inequalities(seed: u64, size: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l2_violations = 0;
    let mut size_violations = 0;
    let mut shift_violations = 0;
    let mut concavity_violations = 0;
    let mut ratio_range = (f64::INFINITY, 0.0f64);
    for i in 0..size {
        let p = 0.3 + 0.7 * (rng.next_u64() % 1000) as f64 / 1000.0;
        let depth = 4 + (i % 5) as u32;
        let tree = beta_model_measure::<f64>(2, p.min(1.0), depth, rng.next_u64())?;
        for m in 1..=depth {
            let g = tree.discretize(m)?;
            let h = partition_entropy(&g)?.bits;
            if entropy_lower_bound_from_l2(&g)? > h / m as f64 + ENTROPY_SLACK {
                l2_violations += 1;
            }
            if h > 2.0 * m as f64 + ENTROPY_SLACK {
                size_violations += 1;
            }
            if m < depth && (shifted_partition_entropy(&tree, m)?.bits - h).abs() > 2.0 + ENTROPY_SLACK {
                shift_violations += 1;
            }
        }
        if i % 10 == 0 {
            let other = beta_model_measure::<f64>(2, 0.6, depth, rng.next_u64())?;
            for t in [0.25, 0.5, 0.75] {
                let mix = tree.combine(&t, &other, &(1.0 - t))?;
                let lhs = conditional_entropy(&mix, depth, depth / 2)?.bits;
                let rhs = t * conditional_entropy(&tree, depth, depth / 2)?.bits
                    + (1.0 - t) * conditional_entropy(&other, depth, depth / 2)?.bits;
                if lhs < rhs - ENTROPY_SLACK {
                    concavity_violations += 1;
                }
            }
            let theta = Direction::from_angle((rng.next_u64() % 1024) as f64 / 1024.0 * std::f64::consts::TAU);
            let c = l2_comparison(&tree.discretize(depth)?, theta)?;
            ratio_range = (ratio_range.0.min(c.ratio), ratio_range.1.max(c.ratio));
        }
    }
    let in_bracket = ratio_range.0 >= L2_RATIO_BRACKET.0 && ratio_range.1 <= L2_RATIO_BRACKET.1;
    Ok(vec![
        check(Suite::Inequalities, "l2-entropy-bound", l2_violations == 0, format!("{l2_violations} violations")),
        check(Suite::Inequalities, "entropy-size-bound", size_violations == 0, format!("{size_violations} violations")),
        check(Suite::Inequalities, "shifted-partition", shift_violations == 0, format!("{shift_violations} violations")),
        check(Suite::Inequalities, "concavity", concavity_violations == 0, format!("{concavity_violations} violations")),
        check(
            Suite::Inequalities,
            "projection-l2-ratio",
            in_bracket,
            format!("ratios in [{:.4}, {:.4}], bracket {:?}", ratio_range.0, ratio_range.1, L2_RATIO_BRACKET),
        ),
    ])
}

fn pipeline() -> Result<Vec<Check>> {
    let circle = run_distance_experiment(&circle_spec())?;
    let flagship = run_distance_experiment(&flagship_spec())?;
    Ok(vec![
        check(
            Suite::Pipeline,
            "circle-degenerate",
            !circle.verdict && circle.entropy <= 0.1,
            format!("entropy {}, verdict {}", circle.entropy, circle.verdict),
        ),
        check(
            Suite::Pipeline,
            "flagship",
            flagship.verdict && (flagship.entropy - FLAGSHIP_ENTROPY).abs() <= 1e-9,
            format!("entropy {} (recorded {FLAGSHIP_ENTROPY}), verdict {}", flagship.entropy, flagship.verdict),
        ),
    ])
}

pub fn run_suite(suite: Suite, seed: u64, size: usize) -> Result<Vec<Check>> {
    match suite {
        Suite::Identities => identities(seed, size),
        Suite::Inequalities => inequalities(seed, size),
        Suite::Pipeline => pipeline(),
    }
}
