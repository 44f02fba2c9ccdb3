//! Scalar kernels shared by the rest of the crate: double factorials,
//! log-gamma and overflow-free `log10` of exact rationals.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m!! = m (m-2) (m-4) ...`, with `(-1)!! = 0!! = 1`.
pub fn double_factorial(m: i64) -> Result<BigInt> {
    if m < -1 {
        return Err(Error::Domain(format!("double factorial of {m} is undefined")));
    }
    let mut acc = BigInt::one();
    let mut k = m;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    Ok(acc)
}

/// Natural logarithm of the Gamma function for real `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires a finite x > 0, got {x}")));
    }
    // exact zeros of ln Γ
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Sign and `log10` magnitude of a real number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log10_magnitude: f64,
    /// `-1`, `0` or `+1`. The magnitude is meaningless when this is zero.
    pub sign: i8,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue { log10_magnitude: f64::NEG_INFINITY, sign: 0 };

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }
}

/// `log10 |x|` for a nonzero big integer, from the top 64 bits plus the
/// binary exponent. Never converts the full integer to `f64`.
pub fn log10_of_bigint(x: &BigInt) -> f64 {
    debug_assert!(!x.is_zero());
    let bits = x.bits();
    if bits <= 64 {
        return (x.abs().to_u64().unwrap() as f64).log10();
    }
    let shift = bits - 64;
    let top: BigInt = x.abs() >> shift;
    let mantissa = top.to_u64().unwrap() as f64;
    mantissa.log10() + shift as f64 * std::f64::consts::LOG10_2
}

pub fn log10_of_rational(q: &BigRational) -> LogValue {
    if q.is_zero() {
        return LogValue::ZERO;
    }
    let sign = match q.numer().sign() {
        Sign::Minus => -1,
        _ => 1,
    };
    LogValue {
        log10_magnitude: log10_of_bigint(q.numer()) - log10_of_bigint(q.denom()),
        sign,
    }
}

/// `log10 (2d+1)!!` summed over parts; used by the asymptotic normalisation.
pub fn log10_odd_double_factorial_product(parts: &[u32]) -> f64 {
    parts
        .iter()
        .map(|&d| log10_of_bigint(&double_factorial(2 * d as i64 + 1).expect("2d+1 >= 1")))
        .sum()
}

/// Exact rational formatted as `p/q` (always with the slash, `1/1` for one).
pub fn format_rational(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `p/q` or a bare integer `p` into lowest terms.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|e| Error::Parse(format!("bad rational {s:?}: {e}")))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let den = parse_int(d)?;
            if den.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            Ok(BigRational::new(parse_int(n)?, den))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn double_factorial_values() {
        assert_eq!(double_factorial(-1).unwrap(), BigInt::from(1));
        assert_eq!(double_factorial(0).unwrap(), BigInt::from(1));
        assert_eq!(double_factorial(5).unwrap(), BigInt::from(15));
        assert_eq!(double_factorial(9).unwrap(), BigInt::from(9 * 7 * 5 * 3));
        assert!(matches!(double_factorial(-2), Err(Error::Domain(_))));
    }

    #[test]
    fn double_factorial_pairs_to_factorial() {
        let mut fact = BigInt::one();
        for m in 1..60i64 {
            fact *= m;
            let lhs = double_factorial(m).unwrap() * double_factorial(m - 1).unwrap();
            assert_eq!(lhs, fact, "m = {m}");
        }
    }

    #[test]
    fn log_gamma_values() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_relative_eq!(log_gamma(5.0).unwrap(), 24f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(
            log_gamma(0.5).unwrap(),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-12
        );
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-3.5).is_err());
    }

    #[test]
    fn log_gamma_recurrence() {
        let mut x = 0.5;
        while x <= 50.0 {
            let ratio = (log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap()).exp();
            assert_relative_eq!(ratio, x, max_relative = 1e-10);
            x += 0.5;
        }
    }

    #[test]
    fn log_gamma_large_argument() {
        // ln Γ(10^4) = ln(9999!) checked against the exact factorial.
        let mut fact = BigInt::one();
        for k in 2..10_000u32 {
            fact *= k;
        }
        let expected = log10_of_bigint(&fact) * std::f64::consts::LN_10;
        assert_relative_eq!(log_gamma(10_000.0).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn log10_examples() {
        let one = log10_of_rational(&rat(1, 1));
        assert_eq!(one, LogValue { log10_magnitude: 0.0, sign: 1 });
        let v = log10_of_rational(&rat(1, 24));
        assert_eq!(v.sign, 1);
        assert_relative_eq!(v.log10_magnitude, -24f64.log10(), max_relative = 1e-12);
        assert_relative_eq!(v.log10_magnitude, -1.3802112417116059, max_relative = 1e-12);
        assert!(log10_of_rational(&rat(0, 5)).is_zero());
        assert_eq!(log10_of_rational(&rat(-3, 7)).sign, -1);
    }

    #[test]
    fn log10_of_huge_integer() {
        let big = BigInt::from(10).pow(450) * 7;
        let v = log10_of_rational(&BigRational::from_integer(big));
        assert_relative_eq!(v.log10_magnitude, 450.0 + 7f64.log10(), max_relative = 1e-14);
    }

    #[test]
    fn rational_strings() {
        assert_eq!(format_rational(&rat(2, 48)), "1/24");
        assert_eq!(format_rational(&rat(3, 1)), "3/1");
        assert_eq!(parse_rational("1/24").unwrap(), rat(1, 24));
        assert_eq!(parse_rational("4/-8").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("17").unwrap(), rat(17, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
    }

    proptest! {
        #[test]
        fn log10_is_additive(a in 1i64..1_000_000_000, b in 1i64..1_000_000_000,
                             c in 1i64..1_000_000_000, d in 1i64..1_000_000_000,
                             e in 0u32..40) {
            let x = rat(a, b) * BigRational::from_integer(BigInt::from(10).pow(e));
            let y = rat(-c, d);
            let lx = log10_of_rational(&x);
            let ly = log10_of_rational(&y);
            let lxy = log10_of_rational(&(&x * &y));
            prop_assert_eq!(lxy.sign, lx.sign * ly.sign);
            prop_assert!((lxy.log10_magnitude - lx.log10_magnitude - ly.log10_magnitude).abs() < 1e-9);
        }
    }
}
