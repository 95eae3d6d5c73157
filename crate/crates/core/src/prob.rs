//! Probability scalars.
//!
//! Models are generic over the type used for rule probabilities. The
//! qualitative algorithms only look at supports, but derived quantities
//! (bounds, precision splits, counter thresholds) are computed in the scalar.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// A scalar usable as a rule probability.
pub trait Probability: Num + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Builds `num / den`.
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self;

    /// Nearest `f64`, used for sampling.
    fn to_f64(&self) -> f64;

    /// Exact rational value (floats convert exactly).
    fn to_rational(&self) -> BigRational;

    /// Whether the value is one, exactly or within the scalar's tolerance.
    fn is_unit(&self) -> bool;

    /// A value at least `sqrt(self)`, as close as the scalar allows.
    fn sqrt_upper(&self) -> Self;

    fn from_u64(v: u64) -> Self {
        Self::from_ratio(&BigInt::from(v), &BigInt::one())
    }

    /// `self^e` by repeated squaring.
    fn powu(&self, e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            e >>= 1;
        }
        acc
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

const SQRT_BITS: u32 = 40;

impl Probability for BigRational {
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        BigRational::new(num.clone(), den.clone())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> BigRational {
        self.clone()
    }

    fn is_unit(&self) -> bool {
        self.is_one()
    }

    fn sqrt_upper(&self) -> Self {
        if !self.is_positive() {
            return BigRational::zero();
        }
        let scale = BigInt::one() << SQRT_BITS;
        let scaled = self.numer() * &scale * &scale / self.denom();
        if &scaled * self.denom() == self.numer() * &scale * &scale {
            let r = scaled.sqrt();
            if &r * &r == scaled {
                return BigRational::new(r, scale);
            }
        }
        BigRational::new(scaled.sqrt() + 1, scale)
    }
}

impl Probability for f64 {
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        ToPrimitive::to_f64(num).unwrap_or(f64::NAN) / ToPrimitive::to_f64(den).unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_f64(*self).unwrap_or_else(BigRational::zero)
    }

    fn is_unit(&self) -> bool {
        (self - 1.0).abs() <= 1e-9
    }

    fn sqrt_upper(&self) -> Self {
        if *self <= 0.0 {
            0.0
        } else {
            self.sqrt().next_up()
        }
    }
}

impl Probability for f32 {
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        (<f64 as Probability>::from_ratio(num, den)) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_f32(*self).unwrap_or_else(BigRational::zero)
    }

    fn is_unit(&self) -> bool {
        (self - 1.0).abs() <= 1e-5
    }

    fn sqrt_upper(&self) -> Self {
        if *self <= 0.0 {
            0.0
        } else {
            self.sqrt().next_up()
        }
    }
}

/// Parses `p/q`, an integer, or a decimal literal into an exact rational.
pub fn parse_ratio(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits: BigInt = format!("{int}{frac}").parse().ok()?;
        let den = num_traits::pow(BigInt::from(10u32), frac.len());
        return Some(BigRational::new(digits, den));
    }
    let n: BigInt = text.parse().ok()?;
    Some(BigRational::from_integer(n))
}

/// Converts an exact rational into any probability scalar.
pub fn from_rational<P: Probability>(r: &BigRational) -> P {
    P::from_ratio(r.numer(), r.denom())
}

/// Smallest `d >= 0` with `base^d <= target`, for `0 < base < 1` and `0 < target`.
///
/// The search is exact when the candidate is small; for huge exponents it
/// falls back to a logarithm estimate padded upwards.
pub fn ceil_log<P: Probability>(base: &P, target: &P) -> Option<u64> {
    if !(*base > P::zero() && *base < P::one() && *target > P::zero()) {
        return None;
    }
    if *target >= P::one() {
        return Some(0);
    }
    let estimate = (target.to_f64().ln() / base.to_f64().ln()).ceil();
    if !estimate.is_finite() {
        return None;
    }
    if estimate > 1e6 {
        return Some(estimate as u64 + 2);
    }
    let mut d = (estimate as u64).saturating_sub(2);
    let mut power = base.powu(d);
    while power > *target {
        power = power * base.clone();
        d += 1;
    }
    while d > 0 {
        let prev = power.clone() / base.clone();
        if prev <= *target {
            power = prev;
            d -= 1;
        } else {
            break;
        }
    }
    Some(d)
}
