//! Exact rational scalar used throughout the model and solver layers.
//!
//! All constraint data, LP values, and cut thresholds are `Ratio<i128>`.
//! Workspace profiles enable overflow checks, so a (practically
//! unreachable) numerator/denominator overflow panics instead of wrapping.

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Int = i128;
pub type Rat = Ratio<Int>;

pub fn rat(numer: Int, denom: Int) -> Rat {
    Rat::new(numer, denom)
}

pub fn rat_int(n: Int) -> Rat {
    Rat::from_integer(n)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot parse `{0}` as a rational number")]
pub struct ParseRatError(pub String);

/// Parses `"3"`, `"-0.25"`, or `"2/5"` into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, ParseRatError> {
    let s = s.trim();
    let err = || ParseRatError(s.to_string());
    if let Some((n, d)) = s.split_once('/') {
        let n: Int = n.trim().parse().map_err(|_| err())?;
        let d: Int = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(rat(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let negative = int_part.starts_with('-');
        let int_val: Int = if int_part == "-" || int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err())?
        };
        let scale = 10i128
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(err)?;
        let frac_val: Int = frac_part.parse().map_err(|_| err())?;
        let magnitude = rat_int(int_val.abs()) + rat(frac_val, scale);
        Ok(if negative || int_val < 0 {
            -magnitude
        } else {
            magnitude
        })
    } else {
        let n: Int = s.parse().map_err(|_| err())?;
        Ok(rat_int(n))
    }
}

/// Renders as `"3"` or `"2/5"`; `parse_rat` round-trips it.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact decimal rendering, or `None` when the denominator has a prime
/// factor other than 2 or 5 (the decimal would not terminate).
pub fn to_exact_decimal(r: &Rat) -> Option<String> {
    let mut d = *r.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d != 1 {
        return None;
    }
    let digits = twos.max(fives);
    let scaled = r * rat_int(10i128.checked_pow(digits)?);
    debug_assert!(scaled.is_integer());
    let n = scaled.to_integer();
    if digits == 0 {
        return Some(n.to_string());
    }
    let sign = if n < 0 { "-" } else { "" };
    let abs = n.abs();
    let base = 10i128.pow(digits);
    Some(format!(
        "{}{}.{:0width$}",
        sign,
        abs / base,
        abs % base,
        width = digits as usize
    ))
}

/// Lossy 17-significant-digit rendering for non-terminating rationals.
pub fn to_approx_decimal(r: &Rat) -> String {
    let f = *r.numer() as f64 / *r.denom() as f64;
    format!("{:.17e}", f)
}

pub fn floor_int(r: &Rat) -> Int {
    r.floor().to_integer()
}

pub fn ceil_int(r: &Rat) -> Int {
    r.ceil().to_integer()
}

pub fn is_int(r: &Rat) -> bool {
    r.is_integer()
}

/// Nearest integer, halves rounded away from zero.
pub fn round_half_away(r: &Rat) -> Int {
    let two = rat_int(2);
    if r.is_negative() {
        -floor_int(&(-r + Rat::one() / two))
    } else {
        floor_int(&(r + Rat::one() / two))
    }
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}
