//! Signed fixed-point arithmetic over a power-of-two scale.
//!
//! Every value is an integer mantissa interpreted as `mantissa / 2^F`.
//! Arithmetic never touches floating point: multiplication is a full-width
//! integer product followed by an integer *division* by the scale (truncating
//! toward zero, the signed-division semantics of the EVM), and all operations
//! on bounded mantissa types report overflow instead of wrapping.
//!
//! The mantissa type is generic: `i64` and `i128` give bounded, checked
//! arithmetic; `BigInt` never overflows. Concrete aliases for the common
//! instantiations live at the crate root.

use std::fmt;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, ToPrimitive};
use thiserror::Error;

/// Default scale exponent: values are mantissa / 2^20, giving roughly six
/// decimal digits of fractional resolution.
pub const DEFAULT_SCALE_BITS: u32 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixedError {
    #[error("fixed-point overflow in {op}")]
    Overflow { op: &'static str },
    #[error("fixed-point division by zero")]
    DivisionByZero,
    #[error("cannot parse {text:?} as a fixed-point decimal: {reason}")]
    BadDecimal { text: String, reason: &'static str },
}

/// Everything a mantissa type must provide. Blanket-implemented, so any
/// integer satisfying the bounds (i64, i128, BigInt, ...) works unchanged.
pub trait Mantissa:
    Signed
    + Ord
    + Clone
    + CheckedAdd
    + CheckedSub
    + CheckedMul
    + CheckedDiv
    + From<i64>
    + ToPrimitive
    + fmt::Debug
    + fmt::Display
{
}

impl<T> Mantissa for T where
    T: Signed
        + Ord
        + Clone
        + CheckedAdd
        + CheckedSub
        + CheckedMul
        + CheckedDiv
        + From<i64>
        + ToPrimitive
        + fmt::Debug
        + fmt::Display
{
}

/// A fixed-point number: `mantissa / 2^F`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FixedPoint<M, const F: u32 = DEFAULT_SCALE_BITS> {
    mantissa: M,
}

impl<M: Mantissa, const F: u32> FixedPoint<M, F> {
    /// The scale exponent baked into this type.
    pub const SCALE_BITS: u32 = F;

    fn scale() -> M {
        // F must leave the scale representable in an i64; 62 bits is far
        // beyond any scale this simulator uses.
        assert!(F < 63, "scale exponent too large");
        M::from(1i64 << F)
    }

    pub fn from_mantissa(mantissa: M) -> Self {
        Self { mantissa }
    }

    pub fn mantissa(&self) -> &M {
        &self.mantissa
    }

    pub fn into_mantissa(self) -> M {
        self.mantissa
    }

    pub fn zero() -> Self {
        Self::from_mantissa(M::zero())
    }

    pub fn one() -> Self {
        Self::from_mantissa(Self::scale())
    }

    /// Exact conversion from an integer value.
    pub fn from_int(value: i64) -> Result<Self, FixedError> {
        let m = M::from(value)
            .checked_mul(&Self::scale())
            .ok_or(FixedError::Overflow { op: "from_int" })?;
        Ok(Self::from_mantissa(m))
    }

    /// `numerator / denominator` as a fixed-point value, truncating toward
    /// zero. This is the accuracy computation: `correct * 2^F / total`.
    pub fn ratio(numerator: i64, denominator: i64) -> Result<Self, FixedError> {
        if denominator == 0 {
            return Err(FixedError::DivisionByZero);
        }
        let m = M::from(numerator)
            .checked_mul(&Self::scale())
            .ok_or(FixedError::Overflow { op: "ratio" })?
            .checked_div(&M::from(denominator))
            .ok_or(FixedError::Overflow { op: "ratio" })?;
        Ok(Self::from_mantissa(m))
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self, FixedError> {
        self.mantissa
            .checked_add(&rhs.mantissa)
            .map(Self::from_mantissa)
            .ok_or(FixedError::Overflow { op: "add" })
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self, FixedError> {
        self.mantissa
            .checked_sub(&rhs.mantissa)
            .map(Self::from_mantissa)
            .ok_or(FixedError::Overflow { op: "sub" })
    }

    /// Fixed-point product: full-width mantissa product, then an integer
    /// division by 2^F truncating toward zero. Division, not a shift — an
    /// arithmetic right shift would floor instead of truncate and disagree
    /// with signed-division semantics on negative products.
    pub fn checked_mul(&self, rhs: &Self) -> Result<Self, FixedError> {
        let product = self
            .mantissa
            .checked_mul(&rhs.mantissa)
            .ok_or(FixedError::Overflow { op: "mul" })?;
        let m = product
            .checked_div(&Self::scale())
            .ok_or(FixedError::Overflow { op: "mul" })?;
        Ok(Self::from_mantissa(m))
    }

    /// Fixed-point quotient, truncating toward zero.
    pub fn checked_div(&self, rhs: &Self) -> Result<Self, FixedError> {
        if rhs.mantissa.is_zero() {
            return Err(FixedError::DivisionByZero);
        }
        let scaled = self
            .mantissa
            .checked_mul(&Self::scale())
            .ok_or(FixedError::Overflow { op: "div" })?;
        let m = scaled
            .checked_div(&rhs.mantissa)
            .ok_or(FixedError::Overflow { op: "div" })?;
        Ok(Self::from_mantissa(m))
    }

    /// max(0, x).
    pub fn relu(&self) -> Self {
        if self.mantissa.is_negative() {
            Self::zero()
        } else {
            self.clone()
        }
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    /// Lossy conversion for reporting and cross-checking only; protocol
    /// arithmetic never reads this back.
    pub fn to_f64(&self) -> f64 {
        match self.mantissa.to_f64() {
            Some(m) => m / (1u64 << F) as f64,
            None => f64::NAN,
        }
    }

    /// Exact decimal rendering, truncated toward zero after `frac_digits`
    /// fractional digits.
    pub fn to_decimal(&self, frac_digits: usize) -> String {
        let scale = Self::scale();
        let negative = self.mantissa.is_negative();
        let abs = self.mantissa.abs();
        let int_part = abs.clone() / scale.clone();
        let mut rem = abs % scale.clone();
        let mut frac = String::with_capacity(frac_digits);
        let ten = M::from(10);
        for _ in 0..frac_digits {
            rem = match rem.checked_mul(&ten) {
                Some(r) => r,
                None => break,
            };
            let digit = rem.clone() / scale.clone();
            frac.push_str(&digit.to_string());
            rem = rem % scale.clone();
        }
        let sign = if negative && (!int_part.is_zero() || frac.chars().any(|c| c != '0')) {
            "-"
        } else {
            ""
        };
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    }

    /// Parse a plain decimal literal ("0.5", "-1.25", "3") into the nearest
    /// representable value toward zero.
    pub fn parse_decimal(text: &str) -> Result<Self, FixedError> {
        let bad = |reason| FixedError::BadDecimal {
            text: text.to_string(),
            reason,
        };
        let trimmed = text.trim();
        let (negative, digits) = match trimmed.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
        };
        if digits.is_empty() {
            return Err(bad("empty"));
        }
        let mut parts = digits.splitn(2, '.');
        let int_text = parts.next().unwrap_or("");
        let frac_text = parts.next().unwrap_or("");
        if int_text.is_empty() && frac_text.is_empty() {
            return Err(bad("no digits"));
        }
        if !int_text.chars().all(|c| c.is_ascii_digit())
            || !frac_text.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad("non-digit character"));
        }
        if frac_text.len() > 18 {
            return Err(bad("more than 18 fractional digits"));
        }
        let int_value: i64 = if int_text.is_empty() {
            0
        } else {
            int_text.parse().map_err(|_| bad("integer part too large"))?
        };
        let frac_value: i64 = if frac_text.is_empty() {
            0
        } else {
            frac_text.parse().map_err(|_| bad("fractional part too large"))?
        };
        let pow10: i64 = 10i64.pow(frac_text.len() as u32);
        // value = int + frac/10^d; mantissa = (int*10^d + frac) * 2^F / 10^d
        let numerator = M::from(int_value)
            .checked_mul(&M::from(pow10))
            .and_then(|v| v.checked_add(&M::from(frac_value)))
            .and_then(|v| v.checked_mul(&Self::scale()))
            .ok_or(FixedError::Overflow { op: "parse_decimal" })?;
        let mut mantissa = numerator
            .checked_div(&M::from(pow10))
            .ok_or(FixedError::Overflow { op: "parse_decimal" })?;
        if negative {
            mantissa = -mantissa;
        }
        Ok(Self::from_mantissa(mantissa))
    }
}

impl<M: Mantissa, const F: u32> fmt::Display for FixedPoint<M, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal(6))
    }
}

/// Mantissa addition; overflow on bounded mantissa types is an error.
pub fn fp_add<M: Mantissa, const F: u32>(
    a: &FixedPoint<M, F>,
    b: &FixedPoint<M, F>,
) -> Result<FixedPoint<M, F>, FixedError> {
    a.checked_add(b)
}

/// Fixed-point product via division by the scale (see [`FixedPoint::checked_mul`]).
pub fn fp_mul<M: Mantissa, const F: u32>(
    a: &FixedPoint<M, F>,
    b: &FixedPoint<M, F>,
) -> Result<FixedPoint<M, F>, FixedError> {
    a.checked_mul(b)
}

/// max(0, x).
pub fn relu<M: Mantissa, const F: u32>(x: &FixedPoint<M, F>) -> FixedPoint<M, F> {
    x.relu()
}
