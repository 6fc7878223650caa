//! Numeric modes for masses and energies.
//!
//! Every mass-carrying structure is generic over [`Scalar`]. Float modes
//! (`f32`, `f64`) carry a relative consistency tolerance; exact modes
//! ([`Rational`], [`Surd2`]) never round, so identities checked in them hold
//! with `==`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::surd::Surd2;

/// Arbitrary-precision rational, the exact mass type.
pub type Rational = BigRational;

/// Storage mode of a measure file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    Rational,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Mode::Float),
            "rational" => Ok(Mode::Rational),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Storage mode used when this scalar is written to a measure file.
    const MODE: Mode;
    /// Relative tolerance for consistency checks; zero for exact modes.
    const TOLERANCE: f64;

    fn from_ratio(num: u64, den: u64) -> Self;
    /// Exact for exact modes (every finite binary float is a rational).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// `Some` when the value is a rational number.
    fn to_rational(&self) -> Option<Rational>;
    fn from_rational(r: &Rational) -> Self;

    /// `2^k` for integer `k`, exact in every mode.
    fn exp2_int(k: i32) -> Self;

    /// `2^s` for a real exponent; exact modes reject exponents they cannot
    /// represent.
    fn exp2(s: f64) -> Result<Self>;

    fn approx_eq(&self, other: &Self) -> bool {
        if Self::TOLERANCE == 0.0 {
            return self == other;
        }
        let (a, b) = (self.to_f64(), other.to_f64());
        (a - b).abs() <= Self::TOLERANCE * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

macro_rules! float_scalar {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            const MODE: Mode = Mode::Float;
            const TOLERANCE: f64 = $tol;

            fn from_ratio(num: u64, den: u64) -> Self {
                (num as f64 / den as f64) as $t
            }

            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn to_rational(&self) -> Option<Rational> {
                <Rational as FromPrimitive>::from_f64(*self as f64)
            }

            fn from_rational(r: &Rational) -> Self {
                ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as $t
            }

            fn exp2_int(k: i32) -> Self {
                (2.0 as $t).powi(k)
            }

            fn exp2(s: f64) -> Result<Self> {
                Ok(s.exp2() as $t)
            }
        }
    };
}

float_scalar!(f64, 1.0 / (1u64 << 40) as f64);
float_scalar!(f32, 1.0 / (1u64 << 18) as f64);

pub(crate) fn rational_exp2(k: i32) -> Rational {
    let p = BigInt::one() << k.unsigned_abs() as usize;
    if k >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;
    const TOLERANCE: f64 = 0.0;

    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(x: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(x).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn exp2_int(k: i32) -> Self {
        rational_exp2(k)
    }

    fn exp2(s: f64) -> Result<Self> {
        if s.fract() == 0.0 && s.abs() < i32::MAX as f64 {
            Ok(rational_exp2(s as i32))
        } else {
            Err(Error::NotRepresentable(s))
        }
    }

    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
}

impl Scalar for Surd2 {
    const MODE: Mode = Mode::Rational;
    const TOLERANCE: f64 = 0.0;

    fn from_ratio(num: u64, den: u64) -> Self {
        Surd2::rational(<Rational as Scalar>::from_ratio(num, den))
    }

    fn from_f64(x: f64) -> Self {
        Surd2::rational(<Rational as Scalar>::from_f64(x))
    }

    fn to_f64(&self) -> f64 {
        Surd2::to_f64(self)
    }

    fn to_rational(&self) -> Option<Rational> {
        self.as_rational()
    }

    fn from_rational(r: &Rational) -> Self {
        Surd2::rational(r.clone())
    }

    fn exp2_int(k: i32) -> Self {
        Surd2::rational(rational_exp2(k))
    }

    /// Exact for half-integer exponents: `2^(n/2)` lies in Q(√2).
    fn exp2(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if twice.fract() != 0.0 || twice.abs() >= i32::MAX as f64 {
            return Err(Error::NotRepresentable(s));
        }
        let n = twice as i32;
        let half = n.div_euclid(2);
        let base = rational_exp2(half);
        Ok(if n.rem_euclid(2) == 0 {
            Surd2::rational(base)
        } else {
            Surd2::new(Rational::zero(), base)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp2_modes_agree() {
        for &s in &[-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 3.0] {
            let f = <f64 as Scalar>::exp2(s).unwrap();
            let q = <Surd2 as Scalar>::exp2(s).unwrap();
            assert!((f - q.to_f64()).abs() < 1e-12 * f, "s = {s}");
        }
        assert!(<Rational as Scalar>::exp2(0.5).is_err());
        assert!(<Surd2 as Scalar>::exp2(0.25).is_err());
        assert_eq!(<Rational as Scalar>::exp2(-3.0).unwrap(), <Rational as Scalar>::from_ratio(1, 8));
    }

    #[test]
    fn sqrt2_squares_to_two() {
        let r = <Surd2 as Scalar>::exp2(0.5).unwrap();
        assert_eq!(r.clone() * r, <Surd2 as Scalar>::from_ratio(2, 1));
    }

    #[test]
    fn float_tolerance_is_relative() {
        let a = 1.0f64;
        assert!(a.approx_eq(&(1.0 + 1e-13)));
        assert!(!a.approx_eq(&(1.0 + 1e-11)));
        assert!(!<Rational as Scalar>::from_ratio(1, 3).approx_eq(&<Rational as Scalar>::from_ratio(1, 2)));
    }
}
