//! Exact rational helpers shared across the crate.
//!
//! All codebook weights in the constructions are dyadic (power-of-two
//! denominators), which is what makes exact forward passes cheap; inputs and
//! target values may be arbitrary rationals.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Shorthand for a small rational constant.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `2^exp` for possibly negative `exp`.
pub fn pow2(exp: i64) -> Rat {
    if exp >= 0 {
        Rat::from_integer(BigInt::one() << exp as usize)
    } else {
        Rat::new(BigInt::one(), BigInt::one() << (-exp) as usize)
    }
}

/// Parses "p/q" or a plain integer string.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(Rat::new(p, q))
            }
        }
        None => Some(Rat::from_integer(s.parse().ok()?)),
    }
}

/// Renders as "p/q" (or "p" when integral), the wire format for weights.
pub fn format_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact conversion; every finite f64 is a dyadic rational.
pub fn from_f64(x: f64) -> Option<Rat> {
    Rat::from_float(x)
}

/// Rounds `x` to the nearest integral multiple of `step` (> 0).
/// Ties round toward zero.
pub fn round_to_multiple(x: &Rat, step: &Rat) -> Rat {
    assert!(step.is_positive());
    let q = x / step;
    let floor = q.floor();
    let frac = &q - &floor;
    let half = rat(1, 2);
    let k = if frac > half {
        floor + Rat::one()
    } else if frac < half {
        floor
    } else {
        // tie: toward zero
        if q.is_negative() {
            floor + Rat::one()
        } else {
            floor
        }
    };
    k * step
}

/// Rounds `x` up to the next integral multiple of `step` (> 0).
pub fn ceil_to_multiple(x: &Rat, step: &Rat) -> Rat {
    assert!(step.is_positive());
    (x / step).ceil() * step
}

/// If `r` is a nonnegative dyadic rational, returns `(numer, s)` with
/// `r = numer / 2^s` in lowest terms.
pub fn dyadic_parts(r: &Rat) -> Option<(BigInt, u64)> {
    if r.is_negative() {
        return None;
    }
    let den = r.denom();
    if den.is_one() {
        return Some((r.numer().clone(), 0));
    }
    // power of two check
    let (sign, bytes) = den.to_bytes_le();
    debug_assert_eq!(sign, Sign::Plus);
    let bits = den.bits();
    let is_pow2 = {
        let mut ones = 0u32;
        for b in &bytes {
            ones += b.count_ones();
        }
        ones == 1
    };
    if is_pow2 {
        Some((r.numer().clone(), bits - 1))
    } else {
        None
    }
}

/// Binary digits of a dyadic `r` in `[0, 1)` as `r = sum b_i 2^-i`,
/// returned as the set bit positions `i >= 1`. Panics if not dyadic.
pub fn dyadic_frac_bits(r: &Rat) -> Vec<u64> {
    assert!(!r.is_negative() && r < &Rat::one());
    let (num, s) = dyadic_parts(r).expect("dyadic rational required");
    let mut bits = Vec::new();
    for i in 0..s {
        if ((&num >> (s - 1 - i)) & BigInt::one()).is_one() {
            bits.push(i + 1);
        }
    }
    bits
}

/// Smallest integer `k >= 0` with `2^k >= n` (n >= 1).
pub fn ceil_log2(n: u128) -> u32 {
    assert!(n >= 1);
    let mut k = 0;
    while (1u128 << k) < n {
        k += 1;
    }
    k
}

/// Greatest common divisor convenience for tests.
pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["1/2", "-1/2", "3", "-7/16", "0"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
        }
        assert!(parse_rat("1/0").is_none());
        assert!(parse_rat("x").is_none());
    }

    #[test]
    fn rounding_nearest_ties_toward_zero() {
        let step = rat(1, 8);
        assert_eq!(round_to_multiple(&rat(3, 10), &step), rat(1, 4));
        // 0.3125 is exactly between 1/4 and 3/8 -> toward zero
        assert_eq!(round_to_multiple(&rat(5, 16), &step), rat(1, 4));
        assert_eq!(round_to_multiple(&rat(-5, 16), &step), rat(-1, 4));
        assert_eq!(round_to_multiple(&rat(0, 1), &step), rat(0, 1));
    }

    #[test]
    fn ceil_multiple() {
        assert_eq!(ceil_to_multiple(&rat(1, 6), &rat(1, 4)), rat(1, 4));
        assert_eq!(ceil_to_multiple(&rat(1, 4), &rat(1, 4)), rat(1, 4));
        assert_eq!(ceil_to_multiple(&rat(-1, 6), &rat(1, 4)), rat(0, 1));
    }

    #[test]
    fn dyadic_decomposition() {
        let (n, s) = dyadic_parts(&rat(5, 16)).unwrap();
        assert_eq!((n.to_string(), s), ("5".to_string(), 4));
        assert!(dyadic_parts(&rat(1, 3)).is_none());
        assert_eq!(dyadic_frac_bits(&rat(5, 16)), vec![2, 4]);
    }

    #[test]
    fn pow2_both_signs() {
        assert_eq!(pow2(3), rat_int(8));
        assert_eq!(pow2(-3), rat(1, 8));
    }
}
