//! Exact rational interval arithmetic with outward rounding.
//!
//! Ring operations on endpoints are exact; width is introduced only by the
//! transcendental helpers (roots, exp, base-l logarithm), which round
//! outward. Every comparison the engine asserts goes through the
//! `certainly_*` predicates, so an inequality is only ever reported as true
//! when it holds for all points of both intervals.

use num::bigint::BigInt;
use num::integer::Roots;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

/// Default bit accuracy for outward-rounded root computations.
pub const ROOT_BITS: u32 = 96;
/// Denominator cap (in bits) applied by `round_out` inside iterative schedules.
pub const ROUND_BITS: u32 = 192;

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    lo: BigRational,
    hi: BigRational,
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// l^k as an exact rational, for any sign of k.
pub fn ell_pow(ell: u64, k: i64) -> BigRational {
    let base = BigInt::from(ell);
    if k >= 0 {
        BigRational::from_integer(base.pow(k as u32))
    } else {
        BigRational::new(BigInt::one(), base.pow((-k) as u32))
    }
}

impl Interval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi }
    }

    pub fn exact(q: BigRational) -> Self {
        Interval { lo: q.clone(), hi: q }
    }

    pub fn from_int(n: i64) -> Self {
        Self::exact(rat_int(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_zero(&self) -> bool {
        self.lo.is_zero() && self.hi.is_zero()
    }

    pub fn contains_zero(&self) -> bool {
        !self.lo.is_positive() && !self.hi.is_negative()
    }

    pub fn add(&self, other: &Self) -> Self {
        Interval::new(&self.lo + &other.lo, &self.hi + &other.hi)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Interval::new(&self.lo - &other.hi, &self.hi - &other.lo)
    }

    pub fn neg(&self) -> Self {
        Interval::new(-self.hi.clone(), -self.lo.clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let cands = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = cands.iter().min().unwrap().clone();
        let hi = cands.iter().max().unwrap().clone();
        Interval::new(lo, hi)
    }

    pub fn mul_rat(&self, q: &BigRational) -> Self {
        if q.is_negative() {
            Interval::new(&self.hi * q, &self.lo * q)
        } else {
            Interval::new(&self.lo * q, &self.hi * q)
        }
    }

    /// Reciprocal; the interval must not contain zero.
    pub fn recip(&self) -> Self {
        assert!(!self.contains_zero(), "reciprocal of interval containing zero");
        Interval::new(self.hi.recip(), self.lo.recip())
    }

    pub fn div(&self, other: &Self) -> Self {
        self.mul(&other.recip())
    }

    pub fn pow_u(&self, k: u32) -> Self {
        let mut acc = Interval::one();
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn max(&self, other: &Self) -> Self {
        Interval::new(
            self.lo.clone().max(other.lo.clone()),
            self.hi.clone().max(other.hi.clone()),
        )
    }

    pub fn min(&self, other: &Self) -> Self {
        Interval::new(
            self.lo.clone().min(other.lo.clone()),
            self.hi.clone().min(other.hi.clone()),
        )
    }

    pub fn certainly_lt(&self, other: &Self) -> bool {
        self.hi < other.lo
    }

    pub fn certainly_le(&self, other: &Self) -> bool {
        self.hi <= other.lo
    }

    pub fn certainly_gt(&self, other: &Self) -> bool {
        self.lo > other.hi
    }

    pub fn certainly_ge(&self, other: &Self) -> bool {
        self.lo >= other.hi
    }

    pub fn certainly_positive(&self) -> bool {
        self.lo.is_positive()
    }

    /// Widen endpoints to dyadic rationals with denominator 2^bits.
    /// Keeps endpoint sizes bounded inside iterative computations.
    pub fn round_out(&self, bits: u32) -> Self {
        Interval::new(dyadic_floor(&self.lo, bits), dyadic_ceil(&self.hi, bits))
    }

    /// Outward k-th root of a nonnegative interval. Exact for k = 1.
    pub fn kth_root(&self, k: u32, bits: u32) -> Self {
        assert!(k >= 1);
        assert!(
            !self.lo.is_negative(),
            "k-th root of an interval with negative lower endpoint"
        );
        if k == 1 {
            return self.clone();
        }
        Interval::new(
            kth_root_lower(&self.lo, k, bits),
            kth_root_upper(&self.hi, k, bits),
        )
    }

    /// Outward x^(p/q) for a nonnegative interval (positive when p/q < 0).
    pub fn pow_rat(&self, exp: &BigRational, bits: u32) -> Self {
        if exp.is_zero() {
            return Interval::one();
        }
        if exp.is_negative() {
            return self.pow_rat(&-exp.clone(), bits).recip();
        }
        let p = exp.numer().to_u32().expect("rational exponent numerator too large");
        let q = exp.denom().to_u32().expect("rational exponent denominator too large");
        self.pow_u(p).kth_root(q, bits)
    }

    /// Outward e^x.
    pub fn exp(&self, bits: u32) -> Self {
        Interval::new(exp_lower(&self.lo, bits), exp_upper(&self.hi, bits))
    }

    pub fn to_f64(&self) -> f64 {
        let l = self.lo.to_f64().unwrap_or(f64::NAN);
        let h = self.hi.to_f64().unwrap_or(f64::NAN);
        (l + h) / 2.0
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("Interval", 3)?;
        st.serialize_field("lo", &self.lo.to_string())?;
        st.serialize_field("hi", &self.hi.to_string())?;
        st.serialize_field("approx", &self.to_f64())?;
        st.end()
    }
}

fn two_pow(bits: u32) -> BigInt {
    BigInt::one() << bits
}

pub fn dyadic_floor(q: &BigRational, bits: u32) -> BigRational {
    let scaled = q * BigRational::from_integer(two_pow(bits));
    BigRational::new(scaled.floor().to_integer(), two_pow(bits))
}

pub fn dyadic_ceil(q: &BigRational, bits: u32) -> BigRational {
    let scaled = q * BigRational::from_integer(two_pow(bits));
    BigRational::new(scaled.ceil().to_integer(), two_pow(bits))
}

/// Largest dyadic y/2^bits with y^k <= x; requires x >= 0.
fn kth_root_lower(x: &BigRational, k: u32, bits: u32) -> BigRational {
    if x.is_zero() {
        return BigRational::zero();
    }
    // floor((x * 2^(k*bits)))^(1/k) underestimates x^(1/k) * 2^bits.
    let scaled = (x.numer() * two_pow(k * bits)) / x.denom();
    let root = scaled.nth_root(k);
    BigRational::new(root, two_pow(bits))
}

fn kth_root_upper(x: &BigRational, k: u32, bits: u32) -> BigRational {
    if x.is_zero() {
        return BigRational::zero();
    }
    let scaled: BigInt = (x.numer() * two_pow(k * bits)) / x.denom() + 1;
    let root = scaled.nth_root(k) + 1;
    BigRational::new(root, two_pow(bits))
}

/// Lower bound for e^x. Series with directed term rounding; remainder
/// dropped for the lower bound, added for the upper one.
fn exp_lower(x: &BigRational, bits: u32) -> BigRational {
    if x.is_negative() {
        let up = exp_upper(&-x.clone(), bits);
        return dyadic_floor(&up.recip(), bits);
    }
    exp_series(x, bits).0
}

fn exp_upper(x: &BigRational, bits: u32) -> BigRational {
    if x.is_negative() {
        let lo = exp_lower(&-x.clone(), bits);
        assert!(lo.is_positive());
        return dyadic_ceil(&lo.recip(), bits);
    }
    exp_series(x, bits).1
}

/// (lower, upper) for e^x with x >= 0.
fn exp_series(x: &BigRational, bits: u32) -> (BigRational, BigRational) {
    assert!(!x.is_negative());
    let xc = x.ceil().to_integer().to_u32().unwrap_or(0);
    let terms = (2 * xc + 2).max(bits / 2).max(16);
    let mut term_lo = BigRational::one();
    let mut term_hi = BigRational::one();
    let mut sum_lo = BigRational::one();
    let mut sum_hi = BigRational::one();
    for n in 1..=terms {
        term_lo = dyadic_floor(&(&term_lo * x / BigRational::from_integer(BigInt::from(n))), bits + 16);
        term_hi = dyadic_ceil(&(&term_hi * x / BigRational::from_integer(BigInt::from(n))), bits + 16);
        sum_lo += &term_lo;
        sum_hi += &term_hi;
    }
    // Tail: term ratio x/(n+1) <= 1/2 once terms >= 2*ceil(x), so the tail
    // is below twice the next term.
    let next = dyadic_ceil(
        &(&term_hi * x / BigRational::from_integer(BigInt::from(terms + 1))),
        bits + 16,
    );
    sum_hi += next * rat_int(2);
    (sum_lo, sum_hi)
}

/// s-interval such that x lies in [l^-hi, l^-lo], i.e. s = -log_l(x),
/// for a positive rational x. Digit extraction by repeated squaring with
/// dyadic rounding; `frac_bits` binary digits of the fractional part.
pub fn neg_log_ell(x: &BigRational, ell: u64, frac_bits: u32) -> Interval {
    assert!(x.is_positive(), "logarithm of a non-positive value");
    let ell_r = BigRational::from_integer(BigInt::from(ell));
    // Integer part: m with l^m <= x < l^(m+1).
    let mut m: i64 = 0;
    let mut y = x.clone();
    while y >= ell_r {
        y /= &ell_r;
        m += 1;
    }
    while y < BigRational::one() {
        y *= &ell_r;
        m -= 1;
    }
    // Fractional part of log_l(x): digits via y <- y^2, compare with l.
    let mut frac_lo = BigRational::zero();
    let mut frac_hi = BigRational::zero();
    let mut y_lo = dyadic_floor(&y, 128);
    let mut y_hi = dyadic_ceil(&y, 128);
    let mut scale = BigRational::new(BigInt::one(), BigInt::from(2));
    for _ in 0..frac_bits {
        y_lo = dyadic_floor(&(&y_lo * &y_lo), 128);
        y_hi = dyadic_ceil(&(&y_hi * &y_hi), 128);
        let lo_ge = y_lo >= ell_r;
        let hi_ge = y_hi >= ell_r;
        if lo_ge != hi_ge {
            // Digit undecided at this rounding width: stop, pad the bracket.
            frac_hi += &scale * rat_int(2);
            break;
        }
        if lo_ge {
            y_lo /= &ell_r;
            y_hi /= &ell_r;
            frac_lo += &scale;
            frac_hi += &scale;
        }
        scale /= rat_int(2);
    }
    frac_hi += &scale; // remaining digits
    // log_l(x) in [m + frac_lo, m + frac_hi]; negate for s.
    let m_r = rat_int(m);
    Interval::new(-(&m_r + frac_hi), -(&m_r + frac_lo))
}
