//! Exact arithmetic in the quadratic field Q(√2).
//!
//! Dyadic energies at half-integer exponents involve powers of `2^(1/2)`;
//! representing values as `a + b√2` with rational `a`, `b` keeps them exact.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// The number `a + b·√2` with `a, b` rational.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Surd2 {
    a: BigRational,
    b: BigRational,
}

impl Surd2 {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        Surd2 { a, b }
    }

    pub fn rational(a: BigRational) -> Self {
        Surd2 { a, b: BigRational::zero() }
    }

    /// Rational part.
    pub fn a(&self) -> &BigRational {
        &self.a
    }

    /// Coefficient of √2.
    pub fn b(&self) -> &BigRational {
        &self.b
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        self.b.is_zero().then(|| self.a.clone())
    }

    /// `a − b√2`; the product with `self` is the rational norm.
    pub fn conjugate(&self) -> Self {
        Surd2 { a: self.a.clone(), b: -self.b.clone() }
    }

    /// `a² − 2b²`, zero only for zero.
    pub fn norm(&self) -> BigRational {
        &self.a * &self.a - BigRational::from_integer(BigInt::from(2)) * &self.b * &self.b
    }

    pub fn to_f64(&self) -> f64 {
        // Evaluate a + b√2 with the larger term first when they nearly cancel.
        let a = self.a.to_f64().unwrap_or(f64::NAN);
        let b = self.b.to_f64().unwrap_or(f64::NAN);
        if a.signum() != b.signum() && a != 0.0 && b != 0.0 {
            // (a² − 2b²)/(a − b√2) avoids cancellation.
            let n = self.norm().to_f64().unwrap_or(f64::NAN);
            return n / (a - b * std::f64::consts::SQRT_2);
        }
        a + b * std::f64::consts::SQRT_2
    }

    /// Sign in {-1, 0, 1}, decided exactly.
    pub fn signum(&self) -> i8 {
        let sa = sign(&self.a);
        let sb = sign(&self.b);
        if sa >= 0 && sb >= 0 {
            return (sa + sb).signum();
        }
        if sa <= 0 && sb <= 0 {
            return -((sa + sb).abs().signum());
        }
        // Opposite signs: compare a² against 2b².
        let a2 = &self.a * &self.a;
        let b2 = BigRational::from_integer(BigInt::from(2)) * &self.b * &self.b;
        match a2.cmp(&b2) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => 0,
        }
    }
}

fn sign(x: &BigRational) -> i8 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

impl fmt::Debug for Surd2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}√2)", self.a, self.b)
    }
}

impl fmt::Display for Surd2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            write!(f, "{}", self.a)
        } else {
            write!(f, "{} + {}√2", self.a, self.b)
        }
    }
}

impl PartialOrd for Surd2 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Surd2 {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.clone() - other.clone()).signum().cmp(&0)
    }
}

impl Zero for Surd2 {
    fn zero() -> Self {
        Surd2::rational(BigRational::zero())
    }

    fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }
}

impl One for Surd2 {
    fn one() -> Self {
        Surd2::rational(BigRational::one())
    }
}

impl Add for Surd2 {
    type Output = Surd2;

    fn add(self, rhs: Self) -> Self {
        Surd2 { a: self.a + rhs.a, b: self.b + rhs.b }
    }
}

impl Sub for Surd2 {
    type Output = Surd2;

    fn sub(self, rhs: Self) -> Self {
        Surd2 { a: self.a - rhs.a, b: self.b - rhs.b }
    }
}

impl Mul for Surd2 {
    type Output = Surd2;

    fn mul(self, rhs: Self) -> Self {
        let two = BigRational::from_integer(BigInt::from(2));
        let a = &self.a * &rhs.a + two * &self.b * &rhs.b;
        let b = &self.a * &rhs.b + &self.b * &rhs.a;
        Surd2 { a, b }
    }
}

impl Div for Surd2 {
    type Output = Surd2;

    fn div(self, rhs: Self) -> Self {
        let n = rhs.norm();
        assert!(!n.is_zero(), "division by zero in Q(√2)");
        let num = self * rhs.conjugate();
        Surd2 { a: num.a / &n, b: num.b / n }
    }
}

impl Neg for Surd2 {
    type Output = Surd2;

    fn neg(self) -> Self {
        Surd2 { a: -self.a, b: -self.b }
    }
}

impl From<BigRational> for Surd2 {
    fn from(a: BigRational) -> Self {
        Surd2::rational(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn ordering_is_exact() {
        // 1.4142 < √2 < 1.4143
        let root2 = Surd2::new(q(0, 1), q(1, 1));
        assert!(Surd2::rational(q(14142, 10000)) < root2);
        assert!(Surd2::rational(q(14143, 10000)) > root2);
        assert_eq!(Surd2::new(q(3, 1), q(-2, 1)).signum(), 1); // 3 − 2√2 > 0
        assert_eq!(Surd2::new(q(-3, 1), q(2, 1)).signum(), -1);
    }

    proptest! {
        #[test]
        fn field_operations_match_floats(a in -50i64..50, b in -50i64..50, c in -50i64..50, d in 1i64..50) {
            let x = Surd2::new(q(a, 7), q(b, 3));
            let y = Surd2::new(q(c, 5), q(d, 11));
            let (xf, yf) = (x.to_f64(), y.to_f64());
            prop_assert!(((x.clone() * y.clone()).to_f64() - xf * yf).abs() < 1e-9 * (1.0 + (xf * yf).abs()));
            prop_assert!(((x.clone() / y.clone()).to_f64() - xf / yf).abs() < 1e-9 * (1.0 + (xf / yf).abs()));
            prop_assert_eq!((x.clone() / y.clone()) * y.clone(), x.clone());
            prop_assert_eq!(x.clone() < y.clone(), xf < yf);
        }
    }
}
