//! Scalar abstraction shared by the exact-rational and floating-point paths.
//!
//! The discrete enumeration, the payment programs and the simplex solver are
//! generic over an ordered field: instantiated at [`crate::Rational`] they are
//! exact, at `f64` they carry the usual tolerances. The continuous
//! quantile-space machinery additionally needs transcendental operations and
//! is generic over [`Real`] (`f32`/`f64`).

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// An ordered field scalar: exact rationals or binary floats.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    fn from_i64(v: i64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parse a decimal literal like `-12.0375` or `8.5e-3`. Exact in rational
    /// mode; ordinary `f64` parsing otherwise.
    fn from_decimal_str(s: &str) -> Option<Self>;

    fn as_f64(&self) -> f64;

    /// Feasibility/pivot tolerance used by the simplex and by constraint
    /// checks: zero for exact scalars, 1e-9 for floats.
    fn feas_tol() -> Self;

    /// Render a money amount without round-trip loss: exact decimal (or
    /// `p/q` when non-terminating) in rational mode, shortest float repr
    /// otherwise.
    fn money_string(&self) -> String;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_decimal_str(s: &str) -> Option<Self> {
        s.parse().ok()
    }

    fn as_f64(&self) -> f64 {
        *self
    }

    fn feas_tol() -> Self {
        1e-9
    }

    fn money_string(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_i64(v: i64) -> Self {
        v as f32
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f32 / den as f32
    }

    fn from_decimal_str(s: &str) -> Option<Self> {
        s.parse().ok()
    }

    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn feas_tol() -> Self {
        1e-5
    }

    fn money_string(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_decimal_str(s: &str) -> Option<Self> {
        rational_from_decimal(s)
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn feas_tol() -> Self {
        num_traits::Zero::zero()
    }

    fn money_string(&self) -> String {
        rational_to_money(self)
    }
}

/// Continuous scalar for quantile-space work: adds transcendental operations.
pub trait Real: Scalar + Float + FromPrimitive {
    /// Shorthand conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize conversion")
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Exact rational from a decimal string with optional sign, fraction part and
/// exponent. Also accepts plain `p/q` fractions.
pub fn rational_from_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den == BigInt::from(0) {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (mantissa, neg) = match mantissa.strip_prefix('-') {
        Some(rest) => (rest, true),
        None => (mantissa.strip_prefix('+').unwrap_or(mantissa), false),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut value = BigRational::new(digits.parse().ok()?, BigInt::from(1));
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    if shift > 0 {
        value *= BigRational::from_integer(ten.pow(shift as u32));
    } else if shift < 0 {
        value /= BigRational::from_integer(ten.pow((-shift) as u32));
    }
    if neg {
        value = -value;
    }
    Some(value)
}

/// Exact decimal rendering when the reduced denominator is 2^a·5^b,
/// otherwise a `p/q` fraction.
pub fn rational_to_money(r: &BigRational) -> String {
    use num_traits::Zero;
    let num = r.numer().clone();
    let den = r.denom().clone();
    let (two, five, ten) = (BigInt::from(2), BigInt::from(5), BigInt::from(10));
    let mut rest = den.clone();
    let mut a = 0u32;
    let mut b = 0u32;
    while (&rest % &two).is_zero() && rest > BigInt::from(1) {
        rest /= &two;
        a += 1;
    }
    while (&rest % &five).is_zero() && rest > BigInt::from(1) {
        rest /= &five;
        b += 1;
    }
    if rest != BigInt::from(1) {
        return format!("{num}/{den}");
    }
    let places = a.max(b);
    let scaled = num * ten.pow(places) / den;
    let neg = scaled < BigInt::zero();
    let digits = scaled.abs().to_string();
    let digits = if digits.len() <= places as usize {
        format!(
            "{}{}",
            "0".repeat(places as usize + 1 - digits.len()),
            digits
        )
    } else {
        digits
    };
    let (int_part, frac_part) = digits.split_at(digits.len() - places as usize);
    let frac_part = frac_part.trim_end_matches('0');
    let sign = if neg { "-" } else { "" };
    if frac_part.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}
