//! Exact monetary amounts.
//!
//! Amounts are kept as exact rationals of micro-dollars so that products like
//! `rate × bytes / 2^40` and sums of thousands of per-millisecond meter
//! entries never round. Rounding happens only when a value is displayed or
//! serialized.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

const MICROS_PER_DOLLAR: i128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(Ratio<i128>);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    pub fn from_micros(micros: i128) -> Money {
        Money(Ratio::from_integer(micros))
    }

    pub fn from_micros_ratio(numer: i128, denom: i128) -> Money {
        Money(Ratio::new(numer, denom))
    }

    /// Parses a decimal dollar amount such as `"0.0005"` exactly.
    pub fn from_dollars_str(text: &str) -> Result<Money> {
        parse_decimal(text)
            .map(|r| Money(r * Ratio::from_integer(MICROS_PER_DOLLAR)))
            .ok_or_else(|| Error::Config(format!("not a decimal amount: {text:?}")))
    }

    /// Converts a configuration float to an exact amount via its shortest
    /// decimal representation, so `0.0005` means exactly 500 micro-dollars.
    pub fn from_dollars_f64(v: f64) -> Result<Money> {
        if !v.is_finite() {
            return Err(Error::Config(format!("non-finite amount {v}")));
        }
        Money::from_dollars_str(&format!("{v}"))
    }

    pub fn micros(&self) -> Ratio<i128> {
        self.0
    }

    pub fn dollars_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN) / MICROS_PER_DOLLAR as f64
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn scale(&self, factor: Ratio<i128>) -> Money {
        Money(self.0 * factor)
    }

    /// Ratio of two amounts; `None` when the divisor is zero.
    pub fn ratio_to(&self, other: &Money) -> Option<Ratio<i128>> {
        if other.0.is_zero() {
            None
        } else {
            Some(self.0 / other.0)
        }
    }
}

/// Exact rational from a decimal literal like `-12.0345` or `5e-4`.
pub fn parse_decimal(text: &str) -> Option<Ratio<i128>> {
    let text = text.trim();
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut numer: i128 = if all.is_empty() { 0 } else { all.parse().ok()? };
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i32;
    let pow = 10i128.checked_pow(scale.unsigned_abs())?;
    Some(if scale >= 0 {
        Ratio::from_integer(numer.checked_mul(pow)?)
    } else {
        Ratio::new(numer, pow)
    })
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 = self.0 + rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Mul<i128> for Money {
    type Output = Money;
    fn mul(self, rhs: i128) -> Money {
        Money(self.0 * Ratio::from_integer(rhs))
    }
}

impl Div<i128> for Money {
    type Output = Money;
    fn div(self, rhs: i128) -> Money {
        Money(self.0 / Ratio::from_integer(rhs))
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + *b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.6}", self.dollars_f64())
    }
}

/// Serialized as a dollar amount (display precision).
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.dollars_f64())
    }
}
