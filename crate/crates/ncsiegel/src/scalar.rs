//! l-adic scalars with valuation and precision tracking.
//!
//! Two backends share one type. The exact backend stores a rational in the
//! canonical form l^v * num/den with num and den coprime to l, so the
//! valuation is explicit and never recomputed. The capped backend stores
//! l^v * (unit + O(l^prec)) with `prec` known digits of the unit; precision
//! propagates through arithmetic by the usual O(.) rules and is never
//! silently renormalized. A cancellation that consumes every known digit
//! produces a value that is indistinguishable from zero, carrying only a
//! certified lower bound on its valuation.

use crate::error::{Error, Result};
use crate::interval::{ell_pow, Interval};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, Zero};
use num::Integer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Exact,
    Capped,
}

/// l-adic valuation of a scalar. `AtLeast` is the certified lower bound
/// reported for capped values whose known digits all vanish.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Valuation {
    Finite(i64),
    AtLeast(i64),
    Infinite,
}

impl Valuation {
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Valuation::Finite(v) | Valuation::AtLeast(v) => *v >= 0,
            Valuation::Infinite => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Repr {
    /// Exact zero (either backend).
    Zero,
    /// l^val * num/den with num, den coprime to l, den > 0, gcd(num, den) = 1.
    Exact { val: i64, num: BigInt, den: BigInt },
    /// l^val * (unit + O(l^prec)), 1 <= unit < l^prec, l does not divide unit.
    Capped { val: i64, unit: BigInt, prec: u32 },
    /// All known digits zero: the value is O(l^abs).
    CappedZero { abs: i64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scalar {
    ell: u64,
    repr: Repr,
}

fn split_valuation(ell: u64, mut n: BigInt) -> (i64, BigInt) {
    let l = BigInt::from(ell);
    let mut v = 0i64;
    while !n.is_zero() {
        let (q, r) = n.div_rem(&l);
        if r.is_zero() {
            n = q;
            v += 1;
        } else {
            break;
        }
    }
    (v, n)
}

impl Scalar {
    pub fn zero(ell: u64) -> Self {
        Scalar { ell, repr: Repr::Zero }
    }

    pub fn one(ell: u64) -> Self {
        Scalar::from_integer(ell, 1)
    }

    pub fn from_integer(ell: u64, n: i64) -> Self {
        Scalar::from_rational(ell, BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact-backend scalar from a rational, extracting the l-valuation.
    pub fn from_rational(ell: u64, q: BigRational) -> Self {
        if q.is_zero() {
            return Scalar::zero(ell);
        }
        let (vn, num) = split_valuation(ell, q.numer().clone());
        let (vd, den) = split_valuation(ell, q.denom().clone());
        Scalar {
            ell,
            repr: Repr::Exact { val: vn - vd, num, den },
        }
    }

    /// Capped-backend scalar: l^val * (unit + O(l^prec)). The unit is
    /// reduced mod l^prec and must stay coprime to l.
    pub fn capped(ell: u64, val: i64, unit: BigInt, prec: u32) -> Result<Self> {
        if prec == 0 {
            return Err(Error::InvalidInput("capped scalar needs prec >= 1".into()));
        }
        let modulus = BigInt::from(ell).pow(prec);
        let mut u = unit.mod_floor(&modulus);
        if u.is_zero() {
            return Ok(Scalar {
                ell,
                repr: Repr::CappedZero { abs: val + prec as i64 },
            });
        }
        let (w, reduced) = split_valuation(ell, u.clone());
        if w > 0 {
            // Shift the extracted l-power into the valuation.
            u = reduced.mod_floor(&BigInt::from(ell).pow(prec - w as u32));
            if u.is_zero() {
                return Ok(Scalar { ell, repr: Repr::CappedZero { abs: val + prec as i64 } });
            }
            return Ok(Scalar {
                ell,
                repr: Repr::Capped { val: val + w, unit: u, prec: prec - w as u32 },
            });
        }
        Ok(Scalar { ell, repr: Repr::Capped { val, unit: u, prec } })
    }

    /// A value known only to be O(l^abs).
    pub fn capped_zero(ell: u64, abs: i64) -> Self {
        Scalar { ell, repr: Repr::CappedZero { abs } }
    }

    /// Round an exact value to the capped backend with `prec` digits.
    pub fn to_capped(&self, prec: u32) -> Result<Self> {
        match &self.repr {
            Repr::Zero => Ok(self.clone()),
            Repr::Exact { val, num, den } => {
                let modulus = BigInt::from(self.ell).pow(prec);
                let inv = mod_inverse(den, &modulus).ok_or_else(|| {
                    Error::InvalidInput("denominator not invertible mod l^prec".into())
                })?;
                let unit = (num * inv).mod_floor(&modulus);
                Scalar::capped(self.ell, *val, unit, prec)
            }
            Repr::Capped { .. } | Repr::CappedZero { .. } => Ok(self.clone()),
        }
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn backend(&self) -> Backend {
        match self.repr {
            Repr::Zero | Repr::Exact { .. } => Backend::Exact,
            Repr::Capped { .. } | Repr::CappedZero { .. } => Backend::Capped,
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    /// Zero, or indistinguishable from zero at the tracked precision.
    pub fn is_zeroish(&self) -> bool {
        matches!(self.repr, Repr::Zero | Repr::CappedZero { .. })
    }

    /// True when the value is a fuzzy zero: treated as zero for norms, with
    /// an audit flag on the enclosing computation.
    pub fn is_precision_limited(&self) -> bool {
        matches!(self.repr, Repr::CappedZero { .. })
    }

    pub fn valuation(&self) -> Valuation {
        match &self.repr {
            Repr::Zero => Valuation::Infinite,
            Repr::Exact { val, .. } => Valuation::Finite(*val),
            Repr::Capped { val, .. } => Valuation::Finite(*val),
            Repr::CappedZero { abs } => Valuation::AtLeast(*abs),
        }
    }

    /// |x|_l = l^-v as a point or upper-bound interval.
    pub fn magnitude(&self) -> Interval {
        match &self.repr {
            Repr::Zero => Interval::zero(),
            Repr::Exact { val, .. } | Repr::Capped { val, .. } => {
                Interval::exact(ell_pow(self.ell, -val))
            }
            Repr::CappedZero { abs } => {
                Interval::new(BigRational::zero(), ell_pow(self.ell, -abs))
            }
        }
    }

    /// Exact rational value, when the backend is exact.
    pub fn exact_value(&self) -> Option<BigRational> {
        match &self.repr {
            Repr::Zero => Some(BigRational::zero()),
            Repr::Exact { val, num, den } => {
                Some(ell_pow(self.ell, *val) * BigRational::new(num.clone(), den.clone()))
            }
            _ => None,
        }
    }

    /// Relative precision of the capped representation, if capped nonzero.
    pub fn precision(&self) -> Option<u32> {
        match &self.repr {
            Repr::Capped { prec, .. } => Some(*prec),
            _ => None,
        }
    }

    fn check_ell(&self, other: &Self) -> Result<()> {
        if self.ell != other.ell {
            return Err(Error::ShapeMismatch(format!(
                "primes differ: {} vs {}",
                self.ell, other.ell
            )));
        }
        Ok(())
    }

    pub fn neg(&self) -> Self {
        let repr = match &self.repr {
            Repr::Zero => Repr::Zero,
            Repr::Exact { val, num, den } => Repr::Exact {
                val: *val,
                num: -num.clone(),
                den: den.clone(),
            },
            Repr::Capped { val, unit, prec } => {
                let modulus = BigInt::from(self.ell).pow(*prec);
                Repr::Capped { val: *val, unit: (&modulus - unit).mod_floor(&modulus), prec: *prec }
            }
            Repr::CappedZero { abs } => Repr::CappedZero { abs: *abs },
        };
        Scalar { ell: self.ell, repr }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_ell(other)?;
        let ell = self.ell;
        match (&self.repr, &other.repr) {
            (Repr::Zero, _) => Ok(other.clone()),
            (_, Repr::Zero) => Ok(self.clone()),
            (Repr::Exact { val: v1, num: n1, den: d1 }, Repr::Exact { val: v2, num: n2, den: d2 }) => {
                let v = (*v1).min(*v2);
                let l = BigInt::from(ell);
                let t = n1 * d2 * l.pow((v1 - v) as u32) + n2 * d1 * l.pow((v2 - v) as u32);
                if t.is_zero() {
                    return Ok(Scalar::zero(ell));
                }
                let (w, tn) = split_valuation(ell, t);
                let den = d1 * d2;
                let g = tn.gcd(&den);
                Ok(Scalar { ell, repr: Repr::Exact { val: v + w, num: tn / &g, den: den / g } })
            }
            (Repr::Capped { .. } | Repr::CappedZero { .. }, Repr::Capped { .. } | Repr::CappedZero { .. }) => {
                self.add_capped(other)
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    fn abs_precision(&self) -> i64 {
        match &self.repr {
            Repr::Capped { val, prec, .. } => val + *prec as i64,
            Repr::CappedZero { abs } => *abs,
            _ => unreachable!("abs_precision on exact value"),
        }
    }

    fn add_capped(&self, other: &Self) -> Result<Self> {
        let ell = self.ell;
        let a = self.abs_precision().min(other.abs_precision());
        let lower = |s: &Scalar| match &s.repr {
            Repr::Capped { val, .. } => Some(*val),
            _ => None,
        };
        let v = match (lower(self), lower(other)) {
            (Some(v1), Some(v2)) => v1.min(v2),
            (Some(v1), None) => v1,
            (None, Some(v2)) => v2,
            (None, None) => return Ok(Scalar::capped_zero(ell, a)),
        };
        if v >= a {
            return Ok(Scalar::capped_zero(ell, a));
        }
        let m = (a - v) as u32;
        let modulus = BigInt::from(ell).pow(m);
        let contrib = |s: &Scalar| -> BigInt {
            match &s.repr {
                Repr::Capped { val, unit, .. } => {
                    (unit * BigInt::from(ell).pow((val - v) as u32)).mod_floor(&modulus)
                }
                _ => BigInt::zero(),
            }
        };
        let sum = (contrib(self) + contrib(other)).mod_floor(&modulus);
        if sum.is_zero() {
            return Ok(Scalar::capped_zero(ell, a));
        }
        let (w, unit) = split_valuation(ell, sum);
        Scalar::capped(ell, v + w, unit, m - w as u32)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_ell(other)?;
        let ell = self.ell;
        match (&self.repr, &other.repr) {
            (Repr::Zero, _) | (_, Repr::Zero) => Ok(Scalar::zero(ell)),
            (Repr::Exact { val: v1, num: n1, den: d1 }, Repr::Exact { val: v2, num: n2, den: d2 }) => {
                let num = n1 * n2;
                let den = d1 * d2;
                let g = num.gcd(&den);
                Ok(Scalar { ell, repr: Repr::Exact { val: v1 + v2, num: num / &g, den: den / g } })
            }
            (Repr::Capped { val: v1, unit: u1, prec: p1 }, Repr::Capped { val: v2, unit: u2, prec: p2 }) => {
                let prec = (*p1).min(*p2);
                let modulus = BigInt::from(ell).pow(prec);
                let unit = (u1 * u2).mod_floor(&modulus);
                Scalar::capped(ell, v1 + v2, unit, prec)
            }
            (Repr::CappedZero { abs }, Repr::Capped { val, .. })
            | (Repr::Capped { val, .. }, Repr::CappedZero { abs }) => {
                Ok(Scalar::capped_zero(ell, abs + val))
            }
            (Repr::CappedZero { abs: a1 }, Repr::CappedZero { abs: a2 }) => {
                Ok(Scalar::capped_zero(ell, a1 + a2))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.check_ell(other)?;
        let ell = self.ell;
        match (&self.repr, &other.repr) {
            (_, Repr::Zero) => Err(Error::DivisionByZero),
            (_, Repr::CappedZero { abs }) => {
                Err(Error::DivisionByIndistinguishableZero { abs: *abs })
            }
            (Repr::Zero, _) => Ok(Scalar::zero(ell)),
            (Repr::Exact { val: v1, num: n1, den: d1 }, Repr::Exact { val: v2, num: n2, den: d2 }) => {
                let mut num = n1 * d2;
                let mut den = d1 * n2;
                if den.is_negative() {
                    num = -num;
                    den = -den;
                }
                let g = num.gcd(&den);
                Ok(Scalar { ell, repr: Repr::Exact { val: v1 - v2, num: num / &g, den: den / g } })
            }
            (Repr::Capped { val: v1, unit: u1, prec: p1 }, Repr::Capped { val: v2, unit: u2, prec: p2 }) => {
                let prec = (*p1).min(*p2);
                let modulus = BigInt::from(ell).pow(prec);
                let inv = mod_inverse(u2, &modulus)
                    .ok_or_else(|| Error::PrecisionExhausted("unit not invertible".into()))?;
                let unit = (u1 * inv).mod_floor(&modulus);
                Scalar::capped(ell, v1 - v2, unit, prec)
            }
            (Repr::CappedZero { abs }, Repr::Capped { val, .. }) => {
                Ok(Scalar::capped_zero(ell, abs - val))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let one = match &self.repr {
            Repr::Capped { prec, .. } => Scalar::one(self.ell).to_capped(*prec)?,
            _ => Scalar::one(self.ell),
        };
        one.div(self)
    }

    pub fn pow(&self, k: i64) -> Result<Self> {
        if k < 0 {
            return self.inverse()?.pow(-k);
        }
        let mut acc = Scalar::one(self.ell);
        let mut base = self.clone();
        let mut e = k as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Capped values agree when they match on all jointly known digits and
    /// at least one joint digit exists; exact values compare exactly.
    pub fn certainly_equal(&self, other: &Self) -> Result<bool> {
        let d = self.sub(other)?;
        match d.repr {
            Repr::Zero | Repr::CappedZero { .. } => Ok(true),
            _ => Ok(false),
        }
    }
}

pub fn mod_inverse(a: &BigInt, modulus: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(modulus);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(modulus))
    } else {
        None
    }
}

// ---- serialization ----

/// Wire form of a scalar. Exact scalars take the enclosing prime from
/// context; capped scalars embed it.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ScalarWire {
    Exact {
        num: String,
        den: String,
    },
    Capped {
        v: i64,
        unit: String,
        prec: u32,
        ell: u64,
    },
}

fn parse_bigint(s: &str, what: &str) -> Result<BigInt> {
    s.parse::<BigInt>().map_err(|e| Error::Parse {
        path: what.to_string(),
        detail: format!("bad integer {s:?}: {e}"),
    })
}

impl Scalar {
    pub fn to_wire(&self) -> ScalarWire {
        match &self.repr {
            Repr::Zero => ScalarWire::Exact { num: "0".into(), den: "1".into() },
            Repr::Exact { .. } => {
                let q = self.exact_value().unwrap();
                ScalarWire::Exact { num: q.numer().to_string(), den: q.denom().to_string() }
            }
            Repr::Capped { val, unit, prec } => ScalarWire::Capped {
                v: *val,
                unit: unit.to_string(),
                prec: *prec,
                ell: self.ell,
            },
            Repr::CappedZero { abs } => ScalarWire::Capped {
                v: *abs,
                unit: "0".into(),
                prec: 0,
                ell: self.ell,
            },
        }
    }

    pub fn from_wire(wire: &ScalarWire, ell: u64) -> Result<Self> {
        match wire {
            ScalarWire::Exact { num, den } => {
                let n = parse_bigint(num, "scalar.num")?;
                let d = parse_bigint(den, "scalar.den")?;
                if d.is_zero() {
                    return Err(Error::Parse {
                        path: "scalar.den".into(),
                        detail: "zero denominator".into(),
                    });
                }
                Ok(Scalar::from_rational(ell, BigRational::new(n, d)))
            }
            ScalarWire::Capped { v, unit, prec, ell: wire_ell } => {
                if *wire_ell != ell {
                    return Err(Error::Parse {
                        path: "scalar.ell".into(),
                        detail: format!("prime {wire_ell} does not match context {ell}"),
                    });
                }
                let u = parse_bigint(unit, "scalar.unit")?;
                if u.is_zero() {
                    return Ok(Scalar::capped_zero(ell, *v));
                }
                if *prec == 0 {
                    return Err(Error::Parse {
                        path: "scalar.prec".into(),
                        detail: "nonzero capped scalar needs prec >= 1".into(),
                    });
                }
                Scalar::capped(ell, *v, u, *prec)
            }
        }
    }
}
