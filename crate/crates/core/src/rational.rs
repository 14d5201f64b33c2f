//! Exact scalars: arbitrary-precision rationals plus a few helpers used
//! throughout the exact engine.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational number, always in lowest terms with a
/// positive denominator (guaranteed by the backing implementation).
pub type Rational = BigRational;

/// `n/d` as a [`Rational`]. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Integer `n` as a [`Rational`].
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Nearest `f64`, for display and for handing values to the oracle.
pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Exact square root if `x` is a perfect square of a rational, else `None`.
///
/// Used to decide whether a surd pair |gamma_i gamma_k|^(1/2) collapses to a
/// rational matrix entry.
pub fn sqrt_exact(x: &Rational) -> Option<Rational> {
    if x.is_negative() {
        return None;
    }
    if x.is_zero() {
        return Some(Rational::zero());
    }
    let ns = x.numer().sqrt();
    let ds = x.denom().sqrt();
    if &(&ns * &ns) == x.numer() && &(&ds * &ds) == x.denom() {
        Some(Rational::new(ns, ds))
    } else {
        None
    }
}

/// `x^k` for signed integer `k` (`x != 0` required when `k < 0`).
pub fn pow_i(x: &Rational, k: i32) -> Rational {
    if k >= 0 {
        num::pow::pow(x.clone(), k as usize)
    } else {
        num::pow::pow(x.clone(), (-k) as usize)
            .recip()
    }
}

/// Renders `x` as `num/den`, or plain `num` for integers.
pub fn fmt_rational(x: &Rational) -> String {
    if x.denom().is_one() {
        format!("{}", x.numer())
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Renders `x` as `num/den (float)` with the float at 12 significant digits.
pub fn fmt_rational_with_float(x: &Rational) -> String {
    format!("{} ({:.11e})", fmt_rational(x), to_f64(x))
}

/// Parses `num`, `-num`, or `num/den` (den > 0 after normalization).
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty rational".into());
    }
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let numer: BigInt = n
        .parse()
        .map_err(|_| format!("bad integer `{n}` in rational `{s}`"))?;
    let denom: BigInt = d
        .parse()
        .map_err(|_| format!("bad integer `{d}` in rational `{s}`"))?;
    if denom.is_zero() {
        return Err(format!("zero denominator in rational `{s}`"));
    }
    Ok(Rational::new(numer, denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_terms_and_positive_denominator() {
        let x = rat(4, -6);
        assert_eq!(x, rat(-2, 3));
        assert!(x.denom() > &BigInt::zero());
    }

    #[test]
    fn sqrt_exact_detects_squares() {
        assert_eq!(sqrt_exact(&rat(9, 4)), Some(rat(3, 2)));
        assert_eq!(sqrt_exact(&rat(2, 1)), None);
        assert_eq!(sqrt_exact(&rat(45, 56)), None);
        assert_eq!(sqrt_exact(&rat(0, 1)), Some(int(0)));
        assert_eq!(sqrt_exact(&rat(-4, 1)), None);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["3", "-3", "3/4", "-147/40", "0"] {
            let x = parse_rational(s).unwrap();
            assert_eq!(fmt_rational(&x), s);
        }
        assert_eq!(parse_rational(" 6/8 ").unwrap(), rat(3, 4));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("a/b").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn pow_i_negative_exponent() {
        assert_eq!(pow_i(&rat(2, 3), -2), rat(9, 4));
        assert_eq!(pow_i(&rat(5, 1), 0), int(1));
    }
}
