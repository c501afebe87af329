//! Dual-mode arithmetic: exact rationals for oracle paths, doubles for the
//! main path.

use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational, FromPrimitive, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Absolute tolerance used by every double-mode comparison.
pub const F64_TOL: f64 = 1e-12;

/// Field element the engine computes over.
///
/// Implemented for `f64` (tolerance [`F64_TOL`]) and [`Rational`] (exact).
pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialOrd
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// True for the exact rational implementation.
    const EXACT: bool;

    /// Zero within the mode's tolerance.
    fn negligible(&self) -> bool;

    /// Parses `"p/q"`, integers and decimal literals. Decimals are read
    /// exactly in rational mode (`"0.1"` is one tenth).
    fn parse_literal(text: &str) -> Option<Self>;

    /// Lossy conversion used for reporting.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Converts a double through its shortest decimal representation, so
    /// `0.1_f64` becomes exactly one tenth in rational mode.
    fn from_decimal_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        Self::parse_literal(&format!("{x}"))
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).negligible()
    }

    /// Strictly positive beyond the tolerance.
    fn is_mass(&self) -> bool {
        *self > Self::zero() && !self.negligible()
    }

    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    fn sum_of<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = &'a Self>,
    {
        items
            .into_iter()
            .fold(Self::zero(), |acc, x| acc + x.clone())
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn negligible(&self) -> bool {
        self.abs() <= F64_TOL
    }

    fn parse_literal(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((num, den)) = text.split_once('/') {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            if den == 0.0 {
                return None;
            }
            return Some(num / den);
        }
        text.parse().ok().filter(|x: &f64| x.is_finite())
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }

    fn from_decimal_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn negligible(&self) -> bool {
        self.is_zero()
    }

    fn parse_literal(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((num, den)) = text.split_once('/') {
            let num = BigInt::from_str(num.trim()).ok()?;
            let den = BigInt::from_str(den.trim()).ok()?;
            if den.is_zero() {
                return None;
            }
            return Some(Rational::new(num, den));
        }
        parse_decimal(text)
    }
}

fn parse_decimal(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let negative = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches(['-', '+']);
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(BigInt::from_str(&digits).ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    let factor = num::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    if negative {
        value = -value;
    }
    Some(value)
}

/// Shorthand for building rationals in tests and presets.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact_in_rational_mode() {
        assert_eq!(Rational::parse_literal("0.1").unwrap(), ratio(1, 10));
        assert_eq!(Rational::parse_literal("-2.50").unwrap(), ratio(-5, 2));
        assert_eq!(Rational::parse_literal("3/7").unwrap(), ratio(3, 7));
        assert_eq!(Rational::parse_literal("1e-2").unwrap(), ratio(1, 100));
        assert_eq!(Rational::from_decimal_f64(0.3).unwrap(), ratio(3, 10));
        assert!(Rational::parse_literal("abc").is_none());
        assert!(Rational::parse_literal("1/0").is_none());
    }

    #[test]
    fn double_tolerance() {
        assert!(1e-13_f64.negligible());
        assert!(!1e-11_f64.negligible());
        assert!(0.1_f64.approx_eq(&(0.3 - 0.2)));
        assert_eq!(f64::parse_literal("1/4"), Some(0.25));
    }
}
