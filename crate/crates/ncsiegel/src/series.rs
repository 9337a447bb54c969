//! Sparse truncated noncommutative power series and the Banach r-norm.
//!
//! A series holds coefficients for words of weight at most D; every
//! operation is exact modulo I^(D+1). Multiplication concatenates words.
//! The r-norm is sup over stored words of |a_I| * r^|I|, an upper bound
//! flagged as precision-limited when a coefficient is indistinguishable
//! from zero.

use crate::error::{Error, Result};
use crate::interval::{Interval, ROOT_BITS};
use crate::scalar::{Backend, Scalar, ScalarWire};
use crate::word::Word;
use num::rational::BigRational;
use num::traits::Signed;
use std::collections::BTreeMap;

/// Convergence radius 0 < r < 1, tracked as a linear-scale interval with an
/// optional exact log-l exponent for reporting.
#[derive(Clone, Debug)]
pub struct Radius {
    ell: u64,
    mag: Interval,
    log_hint: Option<BigRational>,
}

impl Radius {
    /// r = l^-s for a positive rational s. Exact when s is an integer,
    /// otherwise a tight outward-rounded interval.
    pub fn from_log(ell: u64, s: BigRational) -> Result<Self> {
        if !s.is_positive() {
            return Err(Error::InvalidInput("radius exponent must be positive".into()));
        }
        let mag = Interval::exact(crate::interval::ell_pow(ell, 1)).pow_rat(&(-s.clone()), ROOT_BITS);
        Ok(Radius { ell, mag, log_hint: Some(s) })
    }

    pub fn from_interval(ell: u64, mag: Interval) -> Result<Self> {
        if !mag.certainly_positive() || !mag.certainly_lt(&Interval::one()) {
            return Err(Error::InvalidInput("radius must lie in (0,1)".into()));
        }
        Ok(Radius { ell, mag, log_hint: None })
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn mag(&self) -> &Interval {
        &self.mag
    }

    /// Shrink by a factor in (0,1], e.g. (1 - eta).
    pub fn shrink(&self, factor: &Interval) -> Result<Self> {
        Radius::from_interval(self.ell, self.mag.mul(factor).round_out(crate::interval::ROUND_BITS))
    }

    /// Divide by sqrt(b).
    pub fn div_sqrt(&self, b: u64) -> Result<Self> {
        let root = Interval::from_int(b as i64).kth_root(2, ROOT_BITS);
        Radius::from_interval(self.ell, self.mag.div(&root).round_out(crate::interval::ROUND_BITS))
    }

    /// Scale down by one power of l.
    pub fn shrink_ell(&self) -> Self {
        let mag = self.mag.mul_rat(&crate::interval::ell_pow(self.ell, -1));
        Radius {
            ell: self.ell,
            mag,
            log_hint: self.log_hint.clone().map(|s| s + BigRational::from_integer(1.into())),
        }
    }

    /// -log_l(r) as an interval; exact when constructed from a log exponent.
    pub fn neg_log_ell(&self) -> Interval {
        match &self.log_hint {
            Some(s) => Interval::exact(s.clone()),
            None => {
                let lo = crate::interval::neg_log_ell(self.mag.hi(), self.ell, 48);
                let hi = crate::interval::neg_log_ell(self.mag.lo(), self.ell, 48);
                Interval::new(lo.lo().clone(), hi.hi().clone())
            }
        }
    }

    /// Powers r^0..r^max, reused by norm computations.
    pub fn powers(&self, max: usize) -> Vec<Interval> {
        let mut out = Vec::with_capacity(max + 1);
        out.push(Interval::one());
        for k in 1..=max {
            out.push(out[k - 1].mul(&self.mag));
        }
        out
    }

    /// Exact log-l exponent when the radius was built as l^-s.
    pub fn log_exponent(&self) -> Option<&BigRational> {
        self.log_hint.as_ref()
    }
}

/// Value of an r-norm: a magnitude interval, flagged when some coefficient
/// was only known to be O(l^k) so the norm is an upper bound.
#[derive(Clone, Debug)]
pub struct RNorm {
    pub mag: Interval,
    pub precision_floor: bool,
}

impl RNorm {
    pub fn zero() -> Self {
        RNorm { mag: Interval::zero(), precision_floor: false }
    }

    pub fn is_zero(&self) -> bool {
        self.mag.is_zero()
    }

    pub fn sup(&self, other: &Self) -> Self {
        RNorm {
            mag: self.mag.max(&other.mag),
            precision_floor: self.precision_floor || other.precision_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NCSeries {
    n: u8,
    deg: u32,
    ell: u64,
    backend: Backend,
    coeffs: BTreeMap<Word, Scalar>,
}

impl NCSeries {
    pub fn zero(n: u8, deg: u32, ell: u64, backend: Backend) -> Self {
        NCSeries { n, deg, ell, backend, coeffs: BTreeMap::new() }
    }

    pub fn one(n: u8, deg: u32, ell: u64, backend: Backend) -> Self {
        let mut s = Self::zero(n, deg, ell, backend);
        s.set(Word::empty(), Scalar::one(ell)).unwrap();
        s
    }

    /// The monomial c * x^I.
    pub fn monomial(n: u8, deg: u32, word: Word, c: Scalar) -> Result<Self> {
        let mut s = Self::zero(n, deg, c.ell(), c.backend());
        s.set(word, c)?;
        Ok(s)
    }

    /// The variable x_i (letters are 1-based).
    pub fn variable(n: u8, deg: u32, ell: u64, backend: Backend, i: u8) -> Result<Self> {
        let mut s = Self::zero(n, deg, ell, backend);
        let mut one = Scalar::one(ell);
        if backend == Backend::Capped {
            one = one.to_capped(crate::DEFAULT_PRECISION)?;
        }
        s.set(Word::single(i), one)?;
        Ok(s)
    }

    pub fn vars(&self) -> u8 {
        self.n
    }

    pub fn truncation_degree(&self) -> u32 {
        self.deg
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn support(&self) -> impl Iterator<Item = (&Word, &Scalar)> {
        self.coeffs.iter()
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, word: &Word) -> Option<&Scalar> {
        self.coeffs.get(word)
    }

    /// Coefficient lookup; absent words mean zero.
    pub fn coeff_or_zero(&self, word: &Word) -> Scalar {
        self.coeffs.get(word).cloned().unwrap_or_else(|| Scalar::zero(self.ell))
    }

    fn validate_word(&self, word: &Word) -> Result<()> {
        if word.weight() > self.deg as usize {
            return Err(Error::ShapeMismatch(format!(
                "word of weight {} exceeds truncation degree {}",
                word.weight(),
                self.deg
            )));
        }
        for &l in word.letters() {
            if l == 0 || l > self.n {
                return Err(Error::ShapeMismatch(format!(
                    "letter {l} outside alphabet 1..={}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Insert or overwrite a coefficient. Exact zeros are dropped; fuzzy
    /// zeros are kept so the precision floor stays visible.
    pub fn set(&mut self, word: Word, c: Scalar) -> Result<()> {
        self.validate_word(&word)?;
        if c.ell() != self.ell {
            return Err(Error::ShapeMismatch("coefficient prime differs from series".into()));
        }
        if !c.is_exact_zero() && c.backend() != self.backend {
            return Err(Error::BackendMismatch);
        }
        if c.is_exact_zero() {
            self.coeffs.remove(&word);
        } else {
            self.coeffs.insert(word, c);
        }
        Ok(())
    }

    /// Add c to the coefficient at `word`.
    pub fn add_to(&mut self, word: Word, c: &Scalar) -> Result<()> {
        let cur = self.coeff_or_zero(&word);
        self.set(word, cur.add(c)?)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.ell != other.ell {
            return Err(Error::ShapeMismatch(format!(
                "series shapes differ: n {} vs {}, ell {} vs {}",
                self.n, other.n, self.ell, other.ell
            )));
        }
        if self.backend != other.backend {
            return Err(Error::BackendMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let deg = self.deg.min(other.deg);
        let mut out = NCSeries::zero(self.n, deg, self.ell, self.backend);
        for (w, c) in self.coeffs.iter().chain(other.coeffs.iter()) {
            if w.weight() <= deg as usize {
                out.add_to(w.clone(), c)?;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn scalar_mul(&self, c: &Scalar) -> Result<Self> {
        let mut out = NCSeries::zero(self.n, self.deg, self.ell, self.backend);
        for (w, a) in self.coeffs.iter() {
            out.add_to(w.clone(), &a.mul(c)?)?;
        }
        Ok(out)
    }

    /// Noncommutative product: convolution over word concatenation,
    /// truncated at min(D_f, D_g).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let deg = self.deg.min(other.deg);
        let mut out = NCSeries::zero(self.n, deg, self.ell, self.backend);
        for (wa, a) in self.coeffs.iter() {
            let budget = deg as usize - wa.weight().min(deg as usize);
            if wa.weight() > deg as usize {
                continue;
            }
            for (wb, b) in other.coeffs.iter() {
                if wb.weight() > budget {
                    break; // graded order: all later words are heavier
                }
                out.add_to(wa.concat(wb), &a.mul(b)?)?;
            }
        }
        Ok(out)
    }

    /// The part of weight >= m. Membership in I^m is `ideal_part(m) == self`.
    pub fn ideal_part(&self, m: usize) -> Self {
        let mut out = NCSeries::zero(self.n, self.deg, self.ell, self.backend);
        for (w, c) in self.coeffs.iter().filter(|(w, _)| w.weight() >= m) {
            out.coeffs.insert(w.clone(), c.clone());
        }
        out
    }

    /// The part of weight <= m (the m-jet).
    pub fn jet_part(&self, m: usize) -> Self {
        let mut out = NCSeries::zero(self.n, self.deg, self.ell, self.backend);
        for (w, c) in self.coeffs.iter().filter(|(w, _)| w.weight() <= m) {
            out.coeffs.insert(w.clone(), c.clone());
        }
        out
    }

    /// True when every coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when every coefficient is zero or indistinguishable from zero.
    pub fn is_zeroish(&self) -> bool {
        self.coeffs.values().all(|c| c.is_zeroish())
    }

    /// Smallest weight carrying a coefficient, or None for the zero series.
    pub fn min_weight(&self) -> Option<usize> {
        self.coeffs.keys().next().map(|w| w.weight())
    }

    pub fn constant_term(&self) -> Scalar {
        self.coeff_or_zero(&Word::empty())
    }

    /// sup over stored words of |a_I| r^|I|. When the radius is an exact
    /// power l^-s and v + s|I| lands on an integer, the term magnitude is
    /// produced exactly rather than through the rounded interval for r.
    pub fn norm_r(&self, r: &Radius) -> RNorm {
        use crate::scalar::Valuation;
        let powers = r.powers(self.deg as usize);
        let mut out = RNorm::zero();
        for (w, c) in self.coeffs.iter() {
            let mag = match (r.log_exponent(), c.valuation()) {
                (Some(s), Valuation::Finite(v)) => {
                    let e = s * BigRational::from_integer(w.weight().into())
                        + BigRational::from_integer(v.into());
                    if e.is_integer() {
                        use num::traits::ToPrimitive;
                        match e.to_integer().to_i64() {
                            Some(ei) => Interval::exact(crate::interval::ell_pow(r.ell(), -ei)),
                            None => c.magnitude().mul(&powers[w.weight()]),
                        }
                    } else {
                        c.magnitude().mul(&powers[w.weight()])
                    }
                }
                _ => c.magnitude().mul(&powers[w.weight()]),
            };
            let term = RNorm { mag, precision_floor: c.is_precision_limited() };
            out = out.sup(&term);
        }
        out
    }

    /// Substitute args into this series: returns f(g_1, ..., g_n), exact on
    /// the degree <= D part. Arguments must have exactly zero constant term.
    pub fn substitute(&self, args: &crate::endo::EndoTuple) -> Result<Self> {
        if args.len() != self.n as usize {
            return Err(Error::ShapeMismatch(format!(
                "series in {} variables substituted with {} arguments",
                self.n,
                args.len()
            )));
        }
        for (i, g) in args.components().iter().enumerate() {
            if g.ell != self.ell {
                return Err(Error::ShapeMismatch("substitution prime mismatch".into()));
            }
            if !g.constant_term().is_exact_zero() {
                return Err(Error::ConstantTermNonzero { index: i });
            }
        }
        let ambient = args.components().first().expect("nonempty tuple");
        let deg = ambient.deg;
        let mut acc = NCSeries::zero(ambient.n, deg, self.ell, ambient.backend);
        let constant = self.constant_term();
        if !constant.is_exact_zero() {
            acc.add_to(Word::empty(), &constant)?;
        }
        // Depth-first over the trie of support words, carrying the running
        // product of substituted letters.
        let words: Vec<(&Word, &Scalar)> =
            self.coeffs.iter().filter(|(w, _)| !w.is_empty()).collect();
        let mut sorted: Vec<usize> = (0..words.len()).collect();
        sorted.sort_by(|&a, &b| words[a].0.letters().cmp(words[b].0.letters()));
        let one = NCSeries::one(ambient.n, deg, self.ell, ambient.backend);
        self.substitute_walk(&words, &sorted, 0, &one, args, &mut acc)?;
        Ok(acc)
    }

    fn substitute_walk(
        &self,
        words: &[(&Word, &Scalar)],
        idxs: &[usize],
        depth: usize,
        prefix: &NCSeries,
        args: &crate::endo::EndoTuple,
        acc: &mut NCSeries,
    ) -> Result<()> {
        let mut i = 0;
        while i < idxs.len() {
            let (w, c) = words[idxs[i]];
            if w.weight() == depth {
                // Word ends here: contribute coefficient * prefix product.
                let term = prefix.scalar_mul(c)?;
                for (tw, tc) in term.coeffs.iter() {
                    acc.add_to(tw.clone(), tc)?;
                }
                i += 1;
                continue;
            }
            // Group by next letter.
            let letter = w.letters()[depth];
            let mut j = i;
            while j < idxs.len() && words[idxs[j]].0.letters()[depth] == letter {
                j += 1;
            }
            let next = prefix.mul(&args.components()[(letter - 1) as usize])?;
            self.substitute_walk(words, &idxs[i..j], depth + 1, &next, args, acc)?;
            i = j;
        }
        Ok(())
    }

    /// Any coefficient only known to be O(l^k)?
    pub fn has_precision_floor(&self) -> bool {
        self.coeffs.values().any(|c| c.is_precision_limited())
    }
}

// ---- serialization ----

#[derive(serde::Serialize, serde::Deserialize)]
pub struct SeriesWire {
    pub n: u8,
    #[serde(rename = "D")]
    pub d: u32,
    pub ell: u64,
    pub coeffs: Vec<CoeffWire>,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct CoeffWire {
    pub word: Vec<u8>,
    pub c: ScalarWire,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl NCSeries {
    pub fn to_wire(&self) -> SeriesWire {
        SeriesWire {
            n: self.n,
            d: self.deg,
            ell: self.ell,
            coeffs: self
                .coeffs
                .iter()
                .map(|(w, c)| CoeffWire { word: w.letters().to_vec(), c: c.to_wire() })
                .collect(),
        }
    }

    pub fn from_wire(wire: &SeriesWire) -> Result<Self> {
        if wire.n == 0 {
            return Err(Error::Parse { path: "series.n".into(), detail: "n must be >= 1".into() });
        }
        if !is_prime(wire.ell) {
            return Err(Error::Parse {
                path: "series.ell".into(),
                detail: format!("{} is not prime", wire.ell),
            });
        }
        if wire.d == 0 || wire.d > 64 {
            return Err(Error::Parse {
                path: "series.D".into(),
                detail: "truncation degree must be in 1..=64".into(),
            });
        }
        let mut backend = Backend::Exact;
        if wire.coeffs.iter().any(|cw| matches!(cw.c, ScalarWire::Capped { .. })) {
            backend = Backend::Capped;
        }
        let mut s = NCSeries::zero(wire.n, wire.d, wire.ell, backend);
        for (i, cw) in wire.coeffs.iter().enumerate() {
            let word = Word::from_letters(&cw.word);
            s.validate_word(&word).map_err(|e| Error::Parse {
                path: format!("series.coeffs[{i}].word"),
                detail: e.to_string(),
            })?;
            if s.coeffs.contains_key(&word) {
                return Err(Error::Parse {
                    path: format!("series.coeffs[{i}].word"),
                    detail: "duplicate word".into(),
                });
            }
            let c = Scalar::from_wire(&cw.c, wire.ell)?;
            if !c.is_exact_zero() && c.backend() != backend {
                return Err(Error::Parse {
                    path: format!("series.coeffs[{i}].c"),
                    detail: "mixed exact and capped coefficients".into(),
                });
            }
            s.set(word, c).map_err(|e| Error::Parse {
                path: format!("series.coeffs[{i}]"),
                detail: e.to_string(),
            })?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("series serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: SeriesWire = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: format!("series json (line {}, column {})", e.line(), e.column()),
            detail: e.to_string(),
        })?;
        Self::from_wire(&wire)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::rat;

    fn s_int(ell: u64, n: i64) -> Scalar {
        Scalar::from_integer(ell, n)
    }

    fn series(n: u8, deg: u32, terms: &[(&[u8], i64)]) -> NCSeries {
        let mut s = NCSeries::zero(n, deg, 5, Backend::Exact);
        for (w, c) in terms {
            s.set(Word::from_letters(w), s_int(5, *c)).unwrap();
        }
        s
    }

    #[test]
    fn norm_two_term_sup() {
        // f = 5 x1 + x2 x1 at r = 5^(-1/2): max(5^(-3/2), 5^-1) = 5^-1.
        let mut f = series(2, 4, &[]);
        f.set(Word::from_letters(&[1]), s_int(5, 5)).unwrap();
        f.set(Word::from_letters(&[2, 1]), s_int(5, 1)).unwrap();
        let r = Radius::from_log(5, rat(1, 2)).unwrap();
        let norm = f.norm_r(&r);
        let expect = Interval::exact(rat(1, 5));
        // 5^(-3/2) < 5^-1, so the sup must be the exact rational 1/5.
        assert!(norm.mag.certainly_ge(&Interval::exact(rat(19, 100))));
        assert_eq!(norm.mag.hi(), expect.hi());
        assert_eq!(norm.mag.lo(), expect.lo());
    }

    #[test]
    fn norm_zero_series() {
        let f = series(2, 4, &[]);
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        assert!(f.norm_r(&r).is_zero());
    }

    #[test]
    fn norm_geometric_attained_at_weight_one() {
        // f = sum over k <= D of x1^k, r = 5^-1: sup 5^-k attained at k = 1.
        let d = 6u32;
        let mut f = NCSeries::zero(1, d, 5, Backend::Exact);
        for k in 1..=d as usize {
            f.set(Word::from_letters(&vec![1u8; k]), s_int(5, 1)).unwrap();
        }
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let norm = f.norm_r(&r);
        // Enumeration oracle: max over k of 5^-k = 5^-1.
        assert_eq!(norm.mag.lo(), &rat(1, 5));
        assert_eq!(norm.mag.hi(), &rat(1, 5));
    }

    #[test]
    fn word_concatenation_order_matters() {
        let a = series(2, 6, &[(&[1, 2], 1)]);
        let b = series(2, 6, &[(&[2], 1)]);
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab.coeff_or_zero(&Word::from_letters(&[1, 2, 2])), s_int(5, 1));
        let ba = b.mul(&a).unwrap();
        assert_eq!(ba.coeff_or_zero(&Word::from_letters(&[2, 1, 2])), s_int(5, 1));
        assert!(ba.coeff(&Word::from_letters(&[1, 2, 2])).is_none());
    }

    #[test]
    fn monomial_norm_saturates_submultiplicativity() {
        let a = series(2, 6, &[(&[1], 5)]);
        let b = series(2, 6, &[(&[2], 1)]);
        let prod = a.mul(&b).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let lhs = prod.norm_r(&r).mag;
        let rhs = a.norm_r(&r).mag.mul(&b.norm_r(&r).mag);
        assert_eq!(lhs.lo(), rhs.lo());
        assert_eq!(lhs.hi(), rhs.hi());
    }

    #[test]
    fn ideal_truncate_examples() {
        let f = series(2, 4, &[(&[], 1), (&[1], 1), (&[1, 2], 1)]);
        let hi = f.ideal_part(2);
        assert_eq!(hi.term_count(), 1);
        assert!(hi.coeff(&Word::from_letters(&[1, 2])).is_some());
        assert_eq!(f.ideal_part(0), f);
        let g = series(2, 4, &[(&[1], 1), (&[2], 1)]);
        assert!(g.ideal_part(2).is_zero());
    }

    #[test]
    fn json_roundtrip_graded_lex() {
        let f = series(2, 6, &[(&[2, 1], 3), (&[1], 2), (&[1, 1, 2], -7)]);
        let text = f.to_json();
        let g = NCSeries::from_json(&text).unwrap();
        assert_eq!(f, g);
        // Serialized order is graded-lex.
        let wire = f.to_wire();
        let words: Vec<Vec<u8>> = wire.coeffs.iter().map(|c| c.word.clone()).collect();
        assert_eq!(words, vec![vec![1], vec![2, 1], vec![1, 1, 2]]);
    }

    #[test]
    fn parse_rejects_bad_letters() {
        let text = r#"{"n":2,"D":4,"ell":5,"coeffs":[{"word":[3],"c":{"mode":"exact","num":"1","den":"1"}}]}"#;
        match NCSeries::from_json(text) {
            Err(Error::Parse { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
