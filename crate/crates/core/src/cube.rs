//! Half-open dyadic cubes addressed by level and integer coordinates.
//!
//! Inside a level, cubes are keyed by their Morton code: in two dimensions
//! bit `2i` of the key is bit `i` of the x coordinate and bit `2i + 1` is
//! bit `i` of y. The key of a child is `parent << dim | digit`, where the
//! digit is `xbit + 2·ybit` (0 lower-left, 1 lower-right, 2 upper-left,
//! 3 upper-right), so the descendants of a cube form a contiguous key range.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest level addressable with 64-bit Morton keys in two dimensions.
pub const MAX_LEVEL: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeIndex {
    dim: u8,
    level: u32,
    coords: [u32; 2],
}

impl CubeIndex {
    pub fn new(dim: u32, level: u32, coords: &[u32]) -> Result<Self> {
        if !(1..=2).contains(&dim) || coords.len() != dim as usize || level > MAX_LEVEL {
            return Err(Error::InvalidCube(format!("dim {dim}, level {level}, coords {coords:?}")));
        }
        let side = 1u64 << level;
        if coords.iter().any(|&c| c as u64 >= side) {
            return Err(Error::InvalidCube(format!("level {level}, coords {coords:?}")));
        }
        let mut c = [0u32; 2];
        c[..coords.len()].copy_from_slice(coords);
        Ok(CubeIndex { dim: dim as u8, level, coords: c })
    }

    pub fn root(dim: u32) -> Self {
        CubeIndex { dim: dim as u8, level: 0, coords: [0, 0] }
    }

    pub fn from_key(dim: u32, level: u32, key: u64) -> Self {
        let coords = match dim {
            1 => [key as u32, 0],
            _ => [compact_bits(key) as u32, compact_bits(key >> 1) as u32],
        };
        CubeIndex { dim: dim as u8, level, coords }
    }

    /// The level-`level` cube containing `point`, if the point lies in `[0,1)^dim`.
    pub fn containing(dim: u32, level: u32, point: &[f64]) -> Option<Self> {
        let side = (1u64 << level) as f64;
        let mut coords = [0u32; 2];
        for (c, &x) in coords.iter_mut().zip(point.iter().take(dim as usize)) {
            if !(0.0..1.0).contains(&x) {
                return None;
            }
            *c = ((x * side).floor() as u64).min((1u64 << level) - 1) as u32;
        }
        Some(CubeIndex { dim: dim as u8, level, coords })
    }

    pub fn dim(&self) -> u32 {
        self.dim as u32
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords[..self.dim as usize]
    }

    pub fn key(&self) -> u64 {
        match self.dim {
            1 => self.coords[0] as u64,
            _ => spread_bits(self.coords[0] as u64) | (spread_bits(self.coords[1] as u64) << 1),
        }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| CubeIndex {
            dim: self.dim,
            level: self.level - 1,
            coords: [self.coords[0] >> 1, self.coords[1] >> 1],
        })
    }

    /// Ancestor at a coarser (or equal) level.
    pub fn ancestor(&self, level: u32) -> Option<Self> {
        (level <= self.level).then(|| {
            let shift = self.level - level;
            CubeIndex {
                dim: self.dim,
                level,
                coords: [self.coords[0] >> shift, self.coords[1] >> shift],
            }
        })
    }

    pub fn children(&self) -> impl Iterator<Item = CubeIndex> + '_ {
        let n = 1u32 << self.dim;
        (0..n).map(move |digit| self.child(digit))
    }

    pub fn child(&self, digit: u32) -> CubeIndex {
        let (dx, dy) = (digit & 1, (digit >> 1) & 1);
        CubeIndex {
            dim: self.dim,
            level: self.level + 1,
            coords: [(self.coords[0] << 1) | dx, if self.dim == 2 { (self.coords[1] << 1) | dy } else { 0 }],
        }
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Lower-left corner.
    pub fn corner(&self) -> [f64; 2] {
        let h = self.side();
        [self.coords[0] as f64 * h, self.coords[1] as f64 * h]
    }

    pub fn center(&self) -> [f64; 2] {
        let h = self.side();
        let c = self.corner();
        if self.dim == 1 {
            [c[0] + 0.5 * h, 0.0]
        } else {
            [c[0] + 0.5 * h, c[1] + 0.5 * h]
        }
    }

    pub fn contains(&self, other: &CubeIndex) -> bool {
        other.dim == self.dim && other.ancestor(self.level).as_ref() == Some(self)
    }

    /// Euclidean distance from a planar point to the closed cube.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let h = self.side();
        let c = self.corner();
        let axis = |x: f64, lo: f64| (lo - x).max(0.0).max(x - (lo + h));
        let dx = axis(p[0], c[0]);
        let dy = if self.dim == 2 { axis(p[1], c[1]) } else { p[1].abs() };
        dx.hypot(dy)
    }
}

impl fmt::Display for CubeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}{:?}", self.level, self.coords())
    }
}

/// Range of level-`fine` keys descending from `key` at level `coarse`.
pub fn descendant_range(dim: u32, key: u64, coarse: u32, fine: u32) -> std::ops::Range<u64> {
    let shift = dim * (fine - coarse);
    (key << shift)..((key + 1) << shift)
}

fn spread_bits(x: u64) -> u64 {
    let mut x = x & 0xffff_ffff;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    (x | (x << 1)) & 0x5555_5555_5555_5555
}

fn compact_bits(x: u64) -> u64 {
    let mut x = x & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    (x | (x >> 16)) & 0x0000_0000_ffff_ffff
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(CubeIndex::new(2, 2, &[4, 0]).is_err());
        assert!(CubeIndex::new(2, 2, &[1]).is_err());
        assert!(CubeIndex::new(3, 0, &[0, 0, 0]).is_err());
    }

    #[test]
    fn child_digits() {
        let root = CubeIndex::root(2);
        let kids: Vec<_> = root.children().map(|c| (c.coords().to_vec(), c.key())).collect();
        assert_eq!(kids, vec![(vec![0, 0], 0), (vec![1, 0], 1), (vec![0, 1], 2), (vec![1, 1], 3)]);
    }

    #[test]
    fn containing_point() {
        let q = CubeIndex::containing(2, 2, &[0.3, 0.8]).unwrap();
        assert_eq!(q.coords(), &[1, 3]);
        assert!(CubeIndex::containing(2, 2, &[1.0, 0.5]).is_none());
        assert_eq!(q.distance_to([0.3, 0.8]), 0.0);
        assert!((q.distance_to([0.0, 0.0]) - (0.25f64.hypot(0.75))).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn morton_round_trip(level in 0u32..=20, x in any::<u32>(), y in any::<u32>()) {
            let m = 1u32 << level;
            let c = CubeIndex::new(2, level, &[x % m, y % m]).unwrap();
            prop_assert_eq!(CubeIndex::from_key(2, level, c.key()), c);
            if let Some(p) = c.parent() {
                prop_assert_eq!(p.key(), c.key() >> 2);
                prop_assert!(p.contains(&c));
                prop_assert!(descendant_range(2, p.key(), level - 1, level).contains(&c.key()));
            }
        }
    }
}
