//! Exact traversal of the dyadic grid of `[0,1)^2` along segments and lines.
//!
//! A segment is cut at every crossing with a vertical or horizontal grid
//! line; each piece lies in one closed cell, identified by its midpoint under
//! the half-open convention.

use crate::error::Result;
use crate::projection::Direction;
use crate::scalar::Scalar;
use crate::tree::GridMeasure;

/// Snap tolerance for merging nearly coincident crossings.
const SNAP: f64 = 1.0 / (1u64 << 40) as f64;

/// Parameter interval of `p + t·v` inside the closed unit square, if any.
fn clip_unit_square(p: [f64; 2], v: [f64; 2], mut lo: f64, mut hi: f64) -> Option<(f64, f64)> {
    for axis in 0..2 {
        if v[axis] == 0.0 {
            if !(0.0..=1.0).contains(&p[axis]) {
                return None;
            }
            continue;
        }
        let t0 = (0.0 - p[axis]) / v[axis];
        let t1 = (1.0 - p[axis]) / v[axis];
        let (a, b) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        lo = lo.max(a);
        hi = hi.min(b);
    }
    (hi > lo).then_some((lo, hi))
}

/// Walk the cells crossed by `p + t·v` for `t ∈ [lo, hi]`, calling `visit`
/// with the cell coordinates and the length (in units of `|v|·t`) inside it.
fn traverse(p: [f64; 2], v: [f64; 2], lo: f64, hi: f64, level: u32, mut visit: impl FnMut([u32; 2], f64)) {
    let Some((lo, hi)) = clip_unit_square(p, v, lo, hi) else {
        return;
    };
    let n = (1u64 << level) as f64;
    let mut ts = vec![lo, hi];
    for axis in 0..2 {
        if v[axis] == 0.0 {
            continue;
        }
        let a = p[axis] + lo * v[axis];
        let b = p[axis] + hi * v[axis];
        let (first, last) = if a <= b { (a, b) } else { (b, a) };
        let i0 = (first * n).floor() as i64 + 1;
        let i1 = (last * n).ceil() as i64 - 1;
        for i in i0..=i1 {
            let t = (i as f64 / n - p[axis]) / v[axis];
            if t > lo && t < hi {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
    let speed = v[0].hypot(v[1]);
    let side = 1u64 << level;
    for w in ts.windows(2) {
        let dt = w[1] - w[0];
        if dt * speed <= SNAP / n {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let x = p[0] + mid * v[0];
        let y = p[1] + mid * v[1];
        let (cx, cy) = ((x * n).floor(), (y * n).floor());
        if cx < 0.0 || cy < 0.0 || cx as u64 >= side || cy as u64 >= side {
            continue;
        }
        visit([cx as u32, cy as u32], dt * speed);
    }
}

/// Cells of the level-`level` grid crossed by the segment `a → b`, with the
/// length of the segment inside each.
pub fn segment_cells(a: [f64; 2], b: [f64; 2], level: u32) -> Vec<([u32; 2], f64)> {
    let v = [b[0] - a[0], b[1] - a[1]];
    let mut out = Vec::new();
    traverse(a, v, 0.0, 1.0, level, |c, len| out.push((c, len)));
    out
}

/// Line integral of the density of μ^(m) along the line through `x` with
/// direction `theta`.
///
/// This is the mass of the sliced measure of a grid density on that line;
/// it coincides with the conditional measure for almost every line only.
pub fn slice_measure<S: Scalar>(grid: &GridMeasure<S>, theta: Direction, x: [f64; 2]) -> Result<f64> {
    if grid.dim() != 2 {
        return Err(crate::error::Error::InvalidParameter("slices need a planar grid".into()));
    }
    let v = theta.vector();
    let level = grid.level();
    let density_scale = (2.0 * level as f64).exp2();
    let mut total = 0.0;
    traverse(x, v, f64::NEG_INFINITY, f64::INFINITY, level, |[cx, cy], len| {
        let key = crate::cube::CubeIndex::new(2, level, &[cx, cy]).expect("in range").key();
        let m = grid.mass_by_key(key);
        if m.is_positive() {
            total += m.to_f64() * density_scale * len;
        }
    });
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{point_mass, uniform_measure};
    use crate::tree::MeasureTree;
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    #[test]
    fn segment_lengths_sum_to_chord() {
        let cells = segment_cells([0.1, 0.2], [0.9, 0.7], 5);
        let total: f64 = cells.iter().map(|(_, l)| l).sum();
        assert!((total - 0.8f64.hypot(0.5)).abs() < 1e-12);
        // every piece is inside the cell reported for it
        assert!(cells.iter().all(|(c, l)| *l <= SQRT_2 / 32.0 + 1e-15 && c[0] < 32 && c[1] < 32));
    }

    #[test]
    fn slice_examples() {
        let g = uniform_measure::<f64>(2, 4).unwrap().discretize(4).unwrap();
        let horizontal = slice_measure(&g, Direction::from_angle(0.0), [0.0, 0.5]).unwrap();
        assert!((horizontal - 1.0).abs() < 1e-12);
        let diagonal = slice_measure(&g, Direction::from_angle(FRAC_PI_4), [0.0, 0.0]).unwrap();
        assert!((diagonal - SQRT_2).abs() < 1e-12);
        let miss = slice_measure(&g, Direction::from_angle(0.0), [0.0, 1.5]).unwrap();
        assert_eq!(miss, 0.0);
        let reversed = slice_measure(&g, Direction::from_angle(PI + FRAC_PI_4), [0.5, 0.5]).unwrap();
        assert!((reversed - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn slice_of_single_cell() {
        let t: MeasureTree<f64> = point_mass(2, 3, &[2, 5]).unwrap();
        let g = t.discretize(3).unwrap();
        // horizontal line through the cell: density 64 times chord 1/8
        let through = slice_measure(&g, Direction::from_angle(0.0), [0.0, 5.5 / 8.0]).unwrap();
        assert!((through - 8.0).abs() < 1e-12);
        let beside = slice_measure(&g, Direction::from_angle(0.0), [0.0, 4.5 / 8.0]).unwrap();
        assert_eq!(beside, 0.0);
    }

    #[test]
    fn disintegration_recovers_mass() {
        let t = crate::generators::branching_measure::<f64>(&[0, 1, 3], 5).unwrap();
        let g = t.discretize(5).unwrap();
        for &angle in &[0.3f64, 1.1, 2.0] {
            let theta = Direction::from_angle(angle);
            let normal = [-angle.sin(), angle.cos()];
            // offsets along the normal through the square's center
            let n = 4000;
            let (lo, hi) = (-0.75, 0.75);
            let h = (hi - lo) / n as f64;
            let mut mass = 0.0;
            for i in 0..n {
                let o = lo + (i as f64 + 0.5) * h;
                let p = [0.5 + o * normal[0], 0.5 + o * normal[1]];
                mass += slice_measure(&g, theta, p).unwrap() * h;
            }
            assert!((mass - 1.0).abs() < 0.01, "angle {angle}: {mass}");
        }
    }
}
