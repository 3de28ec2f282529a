//! Working-precision arithmetic used by the posterior and the DRPM encoder.
//!
//! The transmission scheme is generic over [`Real`]. Three implementations
//! ship with the crate:
//!
//! * [`rug::Float`] at a caller-chosen number of mantissa bits (MPFR);
//! * [`LogF64`], a signed log-domain double for fast smoke runs;
//! * [`BigRational`], exact rationals used by test oracles.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rug::Float;

/// Scalar field operations required by the scheme.
///
/// `prec` arguments are mantissa bits and are ignored by types without a
/// notion of precision.
pub trait Real: Clone + PartialOrd + fmt::Debug + Send + Sync {
    /// Exact conversion of a binary64 value (rounded to `prec` bits if needed).
    fn from_f64(v: f64, prec: u32) -> Self;
    /// Correctly rounded conversion of a decimal literal such as `"0.9"` or `"1e-12"`.
    fn from_decimal(s: &str, prec: u32) -> Self;
    fn add_assign_ref(&mut self, other: &Self);
    fn sub_ref(&self, other: &Self) -> Self;
    fn mul_assign_ref(&mut self, other: &Self);
    fn div_assign_ref(&mut self, other: &Self);
    fn mul_u64(&self, n: u64) -> Self;
    fn is_nil(&self) -> bool;
    fn to_f64(&self) -> f64;
    /// Base-2 logarithm evaluated at working precision, reported as `f64`.
    /// Zero maps to `-inf`.
    fn log2(&self) -> f64;
    /// `clamp(ceil(self), 0, hi)` as an integer.
    fn ceil_clamp(&self, hi: u64) -> u64;
    fn precision(&self) -> u32;

    fn zero_prec(prec: u32) -> Self {
        Self::from_f64(0.0, prec)
    }

    fn one_prec(prec: u32) -> Self {
        Self::from_f64(1.0, prec)
    }

    fn mul_ref(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.mul_assign_ref(other);
        out
    }

    fn div_ref(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.div_assign_ref(other);
        out
    }

    fn add_ref(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign_ref(other);
        out
    }
}

/// Formats an `f64` as the shortest decimal that round-trips, so kernel
/// entries such as `0.1` enter higher precision as the decimal `1/10`
/// rather than its binary64 approximation.
pub fn decimal_repr(v: f64) -> String {
    let s = format!("{v:e}");
    if s.contains("inf") || s.contains("NaN") {
        panic!("non-finite value {v} has no decimal representation");
    }
    s
}

impl Real for Float {
    fn from_f64(v: f64, prec: u32) -> Self {
        Float::with_val(prec, v)
    }

    fn from_decimal(s: &str, prec: u32) -> Self {
        let parsed = Float::parse(s).unwrap_or_else(|e| panic!("bad decimal {s:?}: {e}"));
        Float::with_val(prec, parsed)
    }

    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }

    fn sub_ref(&self, other: &Self) -> Self {
        Float::with_val(self.prec(), self - other)
    }

    fn mul_assign_ref(&mut self, other: &Self) {
        *self *= other;
    }

    fn div_assign_ref(&mut self, other: &Self) {
        *self /= other;
    }

    fn mul_u64(&self, n: u64) -> Self {
        Float::with_val(self.prec(), self * n)
    }

    fn is_nil(&self) -> bool {
        Float::is_zero(self)
    }

    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }

    fn log2(&self) -> f64 {
        if Float::is_zero(self) {
            return f64::NEG_INFINITY;
        }
        Float::with_val(self.prec(), self.log2_ref()).to_f64()
    }

    fn ceil_clamp(&self, hi: u64) -> u64 {
        if *self <= 0 {
            return 0;
        }
        if *self >= hi {
            return hi;
        }
        let c = Float::with_val(self.prec(), self.ceil_ref());
        c.to_integer()
            .and_then(|i| i.to_u64())
            .map_or(hi, |v| v.min(hi))
    }

    fn precision(&self) -> u32 {
        self.prec()
    }
}

/// Signed log-domain double: value = ±exp(`ln_abs`).
#[derive(Clone, Copy)]
pub struct LogF64 {
    negative: bool,
    ln_abs: f64,
}

impl LogF64 {
    pub fn new(v: f64) -> Self {
        LogF64 {
            negative: v < 0.0,
            ln_abs: v.abs().ln(),
        }
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    fn signed_add(a: LogF64, b: LogF64) -> LogF64 {
        if a.ln_abs == f64::NEG_INFINITY {
            return b;
        }
        if b.ln_abs == f64::NEG_INFINITY {
            return a;
        }
        let (big, small) = if a.ln_abs >= b.ln_abs { (a, b) } else { (b, a) };
        let d = small.ln_abs - big.ln_abs;
        if big.negative == small.negative {
            LogF64 {
                negative: big.negative,
                ln_abs: big.ln_abs + d.exp().ln_1p(),
            }
        } else if d == 0.0 {
            LogF64::new(0.0)
        } else {
            LogF64 {
                negative: big.negative,
                ln_abs: big.ln_abs + (-d.exp()).ln_1p(),
            }
        }
    }
}

impl fmt::Debug for LogF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogF64({})", Real::to_f64(self))
    }
}

impl PartialEq for LogF64 {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for LogF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let zero_a = self.ln_abs == f64::NEG_INFINITY;
        let zero_b = other.ln_abs == f64::NEG_INFINITY;
        let sign = |neg: bool, zero: bool| if zero { 0 } else if neg { -1 } else { 1 };
        let (sa, sb) = (sign(self.negative, zero_a), sign(other.negative, zero_b));
        if sa != sb {
            return sa.partial_cmp(&sb);
        }
        match sa {
            0 => Some(Ordering::Equal),
            1 => self.ln_abs.partial_cmp(&other.ln_abs),
            _ => other.ln_abs.partial_cmp(&self.ln_abs),
        }
    }
}

impl Real for LogF64 {
    fn from_f64(v: f64, _prec: u32) -> Self {
        LogF64::new(v)
    }

    fn from_decimal(s: &str, _prec: u32) -> Self {
        LogF64::new(s.parse().unwrap_or_else(|e| panic!("bad decimal {s:?}: {e}")))
    }

    fn add_assign_ref(&mut self, other: &Self) {
        *self = LogF64::signed_add(*self, *other);
    }

    fn sub_ref(&self, other: &Self) -> Self {
        let neg = LogF64 {
            negative: !other.negative,
            ln_abs: other.ln_abs,
        };
        LogF64::signed_add(*self, neg)
    }

    fn mul_assign_ref(&mut self, other: &Self) {
        self.negative ^= other.negative;
        self.ln_abs += other.ln_abs;
    }

    fn div_assign_ref(&mut self, other: &Self) {
        self.negative ^= other.negative;
        self.ln_abs -= other.ln_abs;
    }

    fn mul_u64(&self, n: u64) -> Self {
        LogF64 {
            negative: self.negative,
            ln_abs: self.ln_abs + (n as f64).ln(),
        }
    }

    fn is_nil(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    fn to_f64(&self) -> f64 {
        let m = self.ln_abs.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }

    fn log2(&self) -> f64 {
        self.ln_abs / std::f64::consts::LN_2
    }

    fn ceil_clamp(&self, hi: u64) -> u64 {
        let v = Real::to_f64(self);
        if v <= 0.0 {
            0
        } else if v >= hi as f64 {
            hi
        } else {
            (v.ceil() as u64).min(hi)
        }
    }

    fn precision(&self) -> u32 {
        53
    }
}

fn log2_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).abs().log2();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.log2() + shift as f64
}

/// Parses a decimal literal (`-1.25e-3`) into an exact rational.
pub fn parse_decimal_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut numer: BigInt = digits.parse().ok()?;
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let r = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(r)
}

impl Real for BigRational {
    fn from_f64(v: f64, _prec: u32) -> Self {
        BigRational::from_float(v).unwrap_or_else(|| panic!("non-finite {v}"))
    }

    fn from_decimal(s: &str, _prec: u32) -> Self {
        parse_decimal_rational(s).unwrap_or_else(|| panic!("bad decimal {s:?}"))
    }

    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }

    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }

    fn mul_assign_ref(&mut self, other: &Self) {
        *self *= other;
    }

    fn div_assign_ref(&mut self, other: &Self) {
        *self /= other;
    }

    fn mul_u64(&self, n: u64) -> Self {
        self * BigRational::from_integer(BigInt::from(n))
    }

    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn log2(&self) -> f64 {
        if Zero::is_zero(self) {
            return f64::NEG_INFINITY;
        }
        log2_bigint(self.numer()) - log2_bigint(self.denom())
    }

    fn ceil_clamp(&self, hi: u64) -> u64 {
        if !self.is_positive() {
            return 0;
        }
        let c = self.ceil().to_integer();
        c.to_u64().map_or(hi, |v| v.min(hi))
    }

    fn precision(&self) -> u32 {
        0
    }

    fn one_prec(_prec: u32) -> Self {
        <BigRational as One>::one()
    }
}
