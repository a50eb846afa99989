//! Exact rational helpers shared by the symbolic layer.

use num::bigint::BigInt;
use num::traits::{One, Pow, Signed, ToPrimitive, Zero};
use num::BigRational;

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses an exact decimal literal such as `-0.125`, `3`, `1e-3` or `2.5E2`.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let (neg, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * Pow::pow(&ten, scale as u32))
    } else {
        Rational::new(numer, Pow::pow(&ten, (-scale) as u32))
    };
    if neg {
        value = -value;
    }
    Some(value)
}

/// Parses either a decimal literal or a fraction `p/q`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    match text.split_once('/') {
        Some((n, d)) => {
            let n = parse_decimal(n)?;
            let d = parse_decimal(d)?;
            if d.is_zero() {
                None
            } else {
                Some(n / d)
            }
        }
        None => parse_decimal(text),
    }
}

/// The exact rational value of the shortest decimal string that round-trips `x`.
pub fn from_f64(x: f64) -> Rational {
    debug_assert!(x.is_finite());
    parse_decimal(&format!("{x:e}")).unwrap_or_else(Rational::zero)
}

pub fn to_f64(r: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Huge numerators or denominators: fall back to scaled division.
    let shift = r.numer().bits().max(r.denom().bits()) as i64 - 900;
    if shift <= 0 {
        return f64::NAN;
    }
    let two = BigInt::from(2);
    let s = Pow::pow(&two, shift as u64);
    let n = (r.numer() / &s).to_f64().unwrap_or(0.0);
    let d = (r.denom() / &s).to_f64().unwrap_or(0.0);
    if d == 0.0 {
        if n > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        n / d
    }
}

/// True when the denominator only has factors 2 and 5, so the value has a
/// finite decimal expansion.
pub fn is_finite_decimal(r: &Rational) -> bool {
    let mut d = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
    }
    while (&d % &five).is_zero() {
        d /= &five;
    }
    d.is_one()
}

/// Renders a rational exactly: a plain decimal when the expansion terminates,
/// otherwise `p/q`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    if !is_finite_decimal(r) {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let neg = r.is_negative();
    let abs = r.abs();
    let ten = BigInt::from(10);
    let mut scale = 0u32;
    let mut scaled = abs.clone();
    while !scaled.is_integer() {
        scaled *= Rational::from_integer(ten.clone());
        scale += 1;
    }
    let digits = scaled.to_integer().to_string();
    let digits = if digits.len() <= scale as usize {
        format!("{}{}", "0".repeat(scale as usize - digits.len() + 1), digits)
    } else {
        digits
    };
    let split = digits.len() - scale as usize;
    let text = format!("{}.{}", &digits[..split], &digits[split..]);
    if neg {
        format!("-{text}")
    } else {
        text
    }
}
