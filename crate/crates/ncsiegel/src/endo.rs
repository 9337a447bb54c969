//! The opposite endomorphism monoid of the truncated series algebra:
//! n-tuples of constant-term-free series under substitution.
//!
//! compose(f, g) is f(g_1, ..., g_n); the order matches the monoid of
//! tuples, which is opposite to the induced algebra endomorphisms.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::scalar::{Backend, Scalar, Valuation};
use crate::series::{NCSeries, RNorm, Radius, SeriesWire};
use crate::word::Word;

#[derive(Clone, Debug, PartialEq)]
pub struct EndoTuple {
    components: Vec<NCSeries>,
}

impl EndoTuple {
    /// Build from components, validating the square shape: n series in n
    /// variables, shared D and l, zero constant terms.
    pub fn new(components: Vec<NCSeries>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::ShapeMismatch("endomorphism tuple is empty".into()));
        }
        let n = components.len();
        let first = &components[0];
        if first.vars() as usize != n {
            return Err(Error::ShapeMismatch(format!(
                "{} components but {} variables",
                n,
                first.vars()
            )));
        }
        for (i, c) in components.iter().enumerate() {
            if c.vars() != first.vars()
                || c.truncation_degree() != first.truncation_degree()
                || c.ell() != first.ell()
                || c.backend() != first.backend()
            {
                return Err(Error::ShapeMismatch(format!("component {i} has a different shape")));
            }
            if !c.constant_term().is_exact_zero() {
                return Err(Error::ConstantTermNonzero { index: i });
            }
        }
        Ok(EndoTuple { components })
    }

    /// The identity tuple (x_1, ..., x_n).
    pub fn identity(n: u8, deg: u32, ell: u64, backend: Backend) -> Result<Self> {
        let comps = (1..=n)
            .map(|i| NCSeries::variable(n, deg, ell, backend, i))
            .collect::<Result<Vec<_>>>()?;
        EndoTuple::new(comps)
    }

    /// The linear diagonal tuple (lambda_1 x_1, ..., lambda_n x_n).
    pub fn linear_diagonal(
        n: u8,
        deg: u32,
        lambdas: &[Scalar],
    ) -> Result<Self> {
        if lambdas.len() != n as usize {
            return Err(Error::ShapeMismatch("diagonal length differs from n".into()));
        }
        let ell = lambdas[0].ell();
        let backend = lambdas[0].backend();
        let comps = (0..n as usize)
            .map(|i| {
                NCSeries::monomial(n, deg, Word::single((i + 1) as u8), lambdas[i].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        // A zero eigenvalue leaves an empty component; normalize its shape.
        let comps = comps
            .into_iter()
            .map(|mut c| {
                if c.is_zero() && c.backend() != backend {
                    c = NCSeries::zero(n, deg, ell, backend);
                }
                c
            })
            .collect();
        EndoTuple::new(comps)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[NCSeries] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &NCSeries {
        &self.components[i]
    }

    pub fn vars(&self) -> u8 {
        self.components[0].vars()
    }

    pub fn truncation_degree(&self) -> u32 {
        self.components[0].truncation_degree()
    }

    pub fn ell(&self) -> u64 {
        self.components[0].ell()
    }

    pub fn backend(&self) -> Backend {
        self.components[0].backend()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .zip(other.components.iter())
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        EndoTuple::new(comps)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .zip(other.components.iter())
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        EndoTuple::new(comps)
    }

    /// max_i norm of the components.
    pub fn norm_r(&self, r: &Radius) -> RNorm {
        self.components
            .iter()
            .map(|c| c.norm_r(r))
            .fold(RNorm::zero(), |a, b| a.sup(&b))
    }

    /// The part of every component of weight >= m.
    pub fn ideal_part(&self, m: usize) -> Self {
        EndoTuple {
            components: self.components.iter().map(|c| c.ideal_part(m)).collect(),
        }
    }

    /// The nonlinear part f - (linear part of f).
    pub fn nonlinear_part(&self) -> Self {
        self.ideal_part(2)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn is_zeroish(&self) -> bool {
        self.components.iter().all(|c| c.is_zeroish())
    }

    /// Eigenvalues of a diagonal linear part; NotDiagonal when some
    /// off-diagonal linear coefficient is present.
    pub fn diagonal_linear_part(&self) -> Result<Vec<Scalar>> {
        let n = self.len();
        let mut lambdas = Vec::with_capacity(n);
        for (j, c) in self.components.iter().enumerate() {
            for i in 1..=n as u8 {
                let coeff = c.coeff_or_zero(&Word::single(i));
                if i as usize != j + 1 && !coeff.is_zeroish() {
                    return Err(Error::NotDiagonal);
                }
            }
            lambdas.push(c.coeff_or_zero(&Word::single((j + 1) as u8)));
        }
        Ok(lambdas)
    }

    /// True when the linear part is exactly the identity.
    pub fn linear_part_is_identity(&self) -> bool {
        let n = self.len();
        self.components.iter().enumerate().all(|(j, c)| {
            (1..=n as u8).all(|i| {
                let coeff = c.coeff_or_zero(&Word::single(i));
                if i as usize == j + 1 {
                    coeff.sub(&Scalar::one(self.ell())).map(|d| d.is_zeroish()).unwrap_or(false)
                } else {
                    coeff.is_zeroish()
                }
            })
        })
    }

    /// compose(f, g) = (f_1(g), ..., f_n(g)).
    pub fn compose(&self, g: &Self) -> Result<Self> {
        if self.len() != g.len() {
            return Err(Error::ShapeMismatch("composition arity mismatch".into()));
        }
        let comps = self
            .components
            .iter()
            .map(|c| c.substitute(g))
            .collect::<Result<Vec<_>>>()?;
        EndoTuple::new(comps)
    }

    /// Two-sided compositional inverse of psi = x + psi_hat with
    /// psi_hat in I^2 and |psi_hat|_r < r. Solved weight by weight: the
    /// coefficient system is triangular in the monomial basis, so each
    /// sweep pins the next weight exactly.
    pub fn invert(&self, r: &Radius) -> Result<Self> {
        if !self.linear_part_is_identity() {
            return Err(Error::NotNormalized);
        }
        let hat_norm = self.nonlinear_part().norm_r(r);
        if !hat_norm.mag.certainly_lt(r.mag()) {
            return Err(Error::NormTooLarge);
        }
        self.invert_unchecked()
    }

    /// Inversion without the norm gate, for formal (degree-by-degree) use.
    pub fn invert_unchecked(&self) -> Result<Self> {
        if !self.linear_part_is_identity() {
            return Err(Error::NotNormalized);
        }
        let deg = self.truncation_degree();
        let mut g = EndoTuple::identity(self.vars(), deg, self.ell(), self.backend())?;
        for w in 2..=deg as usize {
            // E = psi(g) - x vanishes below weight w; subtract its
            // weight-w part from g.
            let err = self.compose(&g)?.sub(&EndoTuple::identity(
                self.vars(),
                deg,
                self.ell(),
                self.backend(),
            )?)?;
            let mut comps = Vec::with_capacity(g.len());
            for (gc, ec) in g.components.iter().zip(err.components.iter()) {
                let mut layer = NCSeries::zero(self.vars(), deg, self.ell(), self.backend());
                for (word, c) in ec.support() {
                    if word.weight() == w {
                        layer.set(word.clone(), c.clone())?;
                    }
                }
                comps.push(gc.sub(&layer)?);
            }
            g = EndoTuple::new(comps)?;
        }
        Ok(g)
    }

    /// |f(Ax + eps) - f(Ax)|_r for a diagonal A with |lambda_i| <= 1 and
    /// |eps|_r < r. The returned gap always satisfies the sharp estimate
    /// |f|_r |eps|_r / r.
    pub fn taylor_gap(
        &self,
        a_diag: &[Scalar],
        eps: &EndoTuple,
        r: &Radius,
    ) -> Result<RNorm> {
        for lam in a_diag {
            if !matches!(
                lam.valuation(),
                Valuation::Finite(v) if v >= 0
            ) && !matches!(lam.valuation(), Valuation::Infinite | Valuation::AtLeast(_))
            {
                return Err(Error::InvalidInput("diagonal entries must satisfy |lambda| <= 1".into()));
            }
        }
        let eps_norm = eps.norm_r(r);
        if !eps_norm.mag.certainly_lt(r.mag()) {
            return Err(Error::RadiusViolation);
        }
        let ax = EndoTuple::linear_diagonal(self.vars(), self.truncation_degree(), a_diag)?;
        let shifted = ax.add(eps)?;
        let gap = self.compose(&shifted)?.sub(&self.compose(&ax)?)?;
        Ok(gap.norm_r(r))
    }

    /// The sharp gap bound |f|_r |eps|_r / r.
    pub fn taylor_bound(&self, eps: &EndoTuple, r: &Radius) -> Interval {
        self.norm_r(r)
            .mag
            .mul(&eps.norm_r(r).mag)
            .div(r.mag())
    }
}

// ---- serialization ----

#[derive(serde::Serialize, serde::Deserialize)]
pub struct EndoWire {
    pub n: u8,
    #[serde(rename = "D")]
    pub d: u32,
    pub ell: u64,
    pub components: Vec<SeriesWire>,
}

impl EndoTuple {
    pub fn to_wire(&self) -> EndoWire {
        EndoWire {
            n: self.vars(),
            d: self.truncation_degree(),
            ell: self.ell(),
            components: self.components.iter().map(|c| c.to_wire()).collect(),
        }
    }

    pub fn from_wire(wire: &EndoWire) -> Result<Self> {
        if wire.components.len() != wire.n as usize {
            return Err(Error::Parse {
                path: "endo.components".into(),
                detail: format!("expected {} components, found {}", wire.n, wire.components.len()),
            });
        }
        let comps = wire
            .components
            .iter()
            .map(|cw| {
                if cw.n != wire.n || cw.d != wire.d || cw.ell != wire.ell {
                    return Err(Error::Parse {
                        path: "endo.components".into(),
                        detail: "component header disagrees with tuple header".into(),
                    });
                }
                NCSeries::from_wire(cw)
            })
            .collect::<Result<Vec<_>>>()?;
        EndoTuple::new(comps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("endo serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: EndoWire = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: format!("endo json (line {}, column {})", e.line(), e.column()),
            detail: e.to_string(),
        })?;
        Self::from_wire(&wire)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::rat;
    use num::rational::BigRational;

    fn s(n: i64, d: i64) -> Scalar {
        Scalar::from_rational(5, rat(n, d))
    }

    fn one_var(deg: u32, terms: &[(usize, i64, i64)]) -> NCSeries {
        // terms: (power of x, numerator, denominator)
        let mut f = NCSeries::zero(1, deg, 5, Backend::Exact);
        for (k, num, den) in terms {
            f.set(Word::from_letters(&vec![1u8; *k]), s(*num, *den)).unwrap();
        }
        f
    }

    #[test]
    fn identity_composes_to_identity() {
        let id = EndoTuple::identity(2, 5, 5, Backend::Exact).unwrap();
        assert_eq!(id.compose(&id).unwrap(), id);
    }

    #[test]
    fn one_variable_composition_hand_expansion() {
        // f = x + x^2, g = x + x^3: f(g) = x + x^3 + (x + x^3)^2
        //   = x + x^2 + x^3 + 2 x^4 + x^6.
        let d = 6;
        let f = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (2, 1, 1)])]).unwrap();
        let g = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (3, 1, 1)])]).unwrap();
        let fg = f.compose(&g).unwrap();
        let expect = one_var(d, &[(1, 1, 1), (2, 1, 1), (3, 1, 1), (4, 2, 1), (6, 1, 1)]);
        assert_eq!(fg.component(0), &expect);
    }

    #[test]
    fn variable_swap_substitution() {
        let d = 4;
        let mut f = NCSeries::zero(2, d, 5, Backend::Exact);
        f.set(Word::from_letters(&[1, 2]), s(1, 1)).unwrap();
        let x2 = NCSeries::variable(2, d, 5, Backend::Exact, 2).unwrap();
        let x1 = NCSeries::variable(2, d, 5, Backend::Exact, 1).unwrap();
        let swap = EndoTuple::new(vec![x2, x1]).unwrap();
        let g = f.substitute(&swap).unwrap();
        assert_eq!(g.coeff_or_zero(&Word::from_letters(&[2, 1])), s(1, 1));
        assert_eq!(g.term_count(), 1);
    }

    #[test]
    fn substitution_expansion_oracle() {
        // f = x1^2, args = (x1 + x2^2, 0):
        // f(args) = x1^2 + x1 x2^2 + x2^2 x1 + x2^4 at D >= 4.
        let d = 4;
        let mut f = NCSeries::zero(2, d, 5, Backend::Exact);
        f.set(Word::from_letters(&[1, 1]), s(1, 1)).unwrap();
        let mut g1 = NCSeries::zero(2, d, 5, Backend::Exact);
        g1.set(Word::from_letters(&[1]), s(1, 1)).unwrap();
        g1.set(Word::from_letters(&[2, 2]), s(1, 1)).unwrap();
        let g2 = NCSeries::zero(2, d, 5, Backend::Exact);
        let args = EndoTuple::new(vec![g1, g2]).unwrap();
        let out = f.substitute(&args).unwrap();
        for w in [&[1u8, 1][..], &[1, 2, 2], &[2, 2, 1], &[2, 2, 2, 2]] {
            assert_eq!(out.coeff_or_zero(&Word::from_letters(w)), s(1, 1), "missing {w:?}");
        }
        assert_eq!(out.term_count(), 4);
    }

    #[test]
    fn invert_identity() {
        let id = EndoTuple::identity(2, 5, 5, Backend::Exact).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        assert_eq!(id.invert(&r).unwrap(), id);
    }

    #[test]
    fn invert_one_variable_catalan_signs() {
        // psi = x + x^2 inverts to x - x^2 + 2x^3 - 5x^4 + 14x^5 (signed
        // Catalan numbers). Oracle: fixed-point iteration g <- x - g^2.
        let d = 5;
        let psi = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (2, 1, 1)])]).unwrap();
        let g = psi.invert_unchecked().unwrap();
        let expect = one_var(d, &[(1, 1, 1), (2, -1, 1), (3, 2, 1), (4, -5, 1), (5, 14, 1)]);
        assert_eq!(g.component(0), &expect);

        // Fixed-point oracle.
        let x = EndoTuple::identity(1, d, 5, Backend::Exact).unwrap();
        let mut fp = x.clone();
        for _ in 0..d {
            let sq = fp.component(0).mul(fp.component(0)).unwrap();
            fp = EndoTuple::new(vec![x.component(0).sub(&sq).unwrap()]).unwrap();
        }
        assert_eq!(fp, g);

        // Two-sided.
        let id = EndoTuple::identity(1, d, 5, Backend::Exact).unwrap();
        assert_eq!(psi.compose(&g).unwrap(), id);
        assert_eq!(g.compose(&psi).unwrap(), id);
    }

    #[test]
    fn invert_two_variable_triangular() {
        // psi = (x1 + x2 x1, x2): g1 = x1 - x2 x1 + x2^2 x1 - ..., g2 = x2.
        let d = 5;
        let mut p1 = NCSeries::zero(2, d, 5, Backend::Exact);
        p1.set(Word::from_letters(&[1]), s(1, 1)).unwrap();
        p1.set(Word::from_letters(&[2, 1]), s(1, 1)).unwrap();
        let p2 = NCSeries::variable(2, d, 5, Backend::Exact, 2).unwrap();
        let psi = EndoTuple::new(vec![p1, p2.clone()]).unwrap();
        let g = psi.invert_unchecked().unwrap();
        let g1 = g.component(0);
        assert_eq!(g1.coeff_or_zero(&Word::from_letters(&[1])), s(1, 1));
        assert_eq!(g1.coeff_or_zero(&Word::from_letters(&[2, 1])), s(-1, 1));
        assert_eq!(g1.coeff_or_zero(&Word::from_letters(&[2, 2, 1])), s(1, 1));
        assert_eq!(g1.coeff_or_zero(&Word::from_letters(&[2, 2, 2, 1])), s(-1, 1));
        assert_eq!(g.component(1), &p2);
        let id = EndoTuple::identity(2, d, 5, Backend::Exact).unwrap();
        assert_eq!(psi.compose(&g).unwrap(), id);
        assert_eq!(g.compose(&psi).unwrap(), id);
    }

    #[test]
    fn invert_norm_contract() {
        let d = 5;
        let psi = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (2, 5, 1)])]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let g = psi.invert(&r).unwrap();
        let hat_psi = psi.nonlinear_part().norm_r(&r).mag;
        let hat_g = g.nonlinear_part().norm_r(&r).mag;
        assert!(hat_g.certainly_le(&hat_psi) || hat_g == hat_psi);
    }

    #[test]
    fn invert_rejects_large_norm() {
        let d = 4;
        // psi_hat = (1/25) x^2: norm at r = 5^-1 is 5^2 * 5^-2 = 1 > r.
        let psi = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (2, 1, 25)])]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        match psi.invert(&r) {
            Err(Error::NormTooLarge) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn taylor_gap_zero_eps() {
        let d = 4;
        let f = EndoTuple::new(vec![one_var(d, &[(1, 1, 1), (2, 1, 1)])]).unwrap();
        let eps = EndoTuple::new(vec![NCSeries::zero(1, d, 5, Backend::Exact)]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let gap = f.taylor_gap(&[Scalar::one(5)], &eps, &r).unwrap();
        assert!(gap.is_zero());
    }

    #[test]
    fn taylor_gap_witness_saturates_sharp_bound() {
        // f = (x1), eps = (x1^2, 0), A = id: gap = x1^2, so
        // |gap|_r = r^2 while |f|_r |eps|_r = r * r^2 = r^3 < r^2.
        // The /r-corrected bound r^2 is attained exactly.
        let d = 4;
        let f = EndoTuple::identity(2, d, 5, Backend::Exact)
            .unwrap();
        let mut e1 = NCSeries::zero(2, d, 5, Backend::Exact);
        e1.set(Word::from_letters(&[1, 1]), s(1, 1)).unwrap();
        let e2 = NCSeries::zero(2, d, 5, Backend::Exact);
        let eps = EndoTuple::new(vec![e1, e2]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let lam = vec![Scalar::one(5), Scalar::one(5)];
        let gap = f.taylor_gap(&lam, &eps, &r).unwrap();
        let r2 = Interval::exact(rat(1, 25));
        assert_eq!(gap.mag.lo(), r2.lo());
        assert_eq!(gap.mag.hi(), r2.hi());
        let bound = f.taylor_bound(&eps, &r);
        assert_eq!(bound.lo(), r2.lo());
        // The uncorrected product bound fails here: r^3 < gap.
        let uncorrected = f.norm_r(&r).mag.mul(&eps.norm_r(&r).mag);
        assert!(uncorrected.certainly_lt(&gap.mag));
    }

    #[test]
    fn endo_json_roundtrip() {
        let d = 4;
        let mut p1 = NCSeries::zero(2, d, 5, Backend::Exact);
        p1.set(Word::from_letters(&[1]), s(6, 1)).unwrap();
        p1.set(Word::from_letters(&[2, 1]), s(-1, 3)).unwrap();
        let p2 = NCSeries::variable(2, d, 5, Backend::Exact, 2).unwrap();
        let f = EndoTuple::new(vec![p1, p2]).unwrap();
        let g = EndoTuple::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn linear_diagonal_roundtrip() {
        let lam = vec![s(6, 1), s(36, 1)];
        let a = EndoTuple::linear_diagonal(2, 4, &lam).unwrap();
        assert_eq!(a.diagonal_linear_part().unwrap(), lam);
        let _ = BigRational::from_integer(1.into());
    }
}
