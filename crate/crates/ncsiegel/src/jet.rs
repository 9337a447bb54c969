//! Finite jets of the substitution action, semisimplicity certification,
//! and resonance detection.
//!
//! The jet operator of f at degree m is the matrix of P -> P o f on
//! I/I^(m+1) in the graded-lex monomial basis. Entries are stored
//! column-major in the usual linear-algebra convention: column J lists the
//! coordinates of the image of the basis monomial x^J, so
//! jet(f o g) = jet(g) * jet(f), matching the opposite composition order of
//! the tuple monoid. A monomial of weight w maps into weight >= w, which
//! makes the matrix block-triangular for the weight grading with diagonal
//! entries lambda^I when the linear part is diagonal.

use crate::endo::EndoTuple;
use crate::error::{Error, Result};
use crate::scalar::{Backend, Scalar};
use crate::series::NCSeries;
use crate::word::Word;
use num::rational::BigRational;
use num::traits::{One, Zero};

#[derive(Clone, Debug, PartialEq)]
pub struct JetOperator {
    degree: u32,
    basis: Vec<Word>,
    /// mat[i][j] = coefficient of basis[i] in the image of basis[j].
    mat: Vec<Vec<Scalar>>,
    ell: u64,
}

impl JetOperator {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn basis(&self) -> &[Word] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Scalar {
        &self.mat[i][j]
    }

    /// Entries below the weight grading vanish: a nonzero entry requires
    /// weight(row word) >= weight(column word).
    pub fn is_weight_triangular(&self) -> bool {
        for (j, col_word) in self.basis.iter().enumerate() {
            for (i, row_word) in self.basis.iter().enumerate() {
                if row_word.weight() < col_word.weight() && !self.mat[i][j].is_zeroish() {
                    return false;
                }
            }
        }
        true
    }

    pub fn diagonal(&self) -> Vec<Scalar> {
        (0..self.dim()).map(|i| self.mat[i][i].clone()).collect()
    }

    /// Matrix product self * other (composition of the underlying linear
    /// maps, self after other).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() || self.degree != other.degree {
            return Err(Error::ShapeMismatch("jet dimensions differ".into()));
        }
        let k = self.dim();
        let mut mat = vec![vec![Scalar::zero(self.ell); k]; k];
        for (i, row) in mat.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = Scalar::zero(self.ell);
                for t in 0..k {
                    acc = acc.add(&self.mat[i][t].mul(&other.mat[t][j])?)?;
                }
                *cell = acc;
            }
        }
        Ok(JetOperator { degree: self.degree, basis: self.basis.clone(), mat, ell: self.ell })
    }

    /// All entries as exact rationals; None when the backend is capped.
    fn rational_entries(&self) -> Option<Vec<Vec<BigRational>>> {
        self.mat
            .iter()
            .map(|row| row.iter().map(|c| c.exact_value()).collect::<Option<Vec<_>>>())
            .collect()
    }
}

/// Matrix of P -> P o f on I/I^(m+1), m <= D.
pub fn jet_matrix(f: &EndoTuple, m: u32) -> Result<JetOperator> {
    if m > f.truncation_degree() {
        return Err(Error::InvalidInput(format!(
            "jet degree {m} exceeds truncation degree {}",
            f.truncation_degree()
        )));
    }
    let basis = Word::graded_basis(f.vars(), m as usize);
    let index: std::collections::BTreeMap<&Word, usize> =
        basis.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let k = basis.len();
    let ell = f.ell();
    let mut mat = vec![vec![Scalar::zero(ell); k]; k];
    for (j, word) in basis.iter().enumerate() {
        let mono = NCSeries::monomial(
            f.vars(),
            f.truncation_degree(),
            word.clone(),
            unit_scalar(f)?,
        )?;
        let image = mono.substitute(f)?.jet_part(m as usize);
        for (w, c) in image.support() {
            if let Some(&i) = index.get(w) {
                mat[i][j] = c.clone();
            }
        }
    }
    Ok(JetOperator { degree: m, basis, mat, ell })
}

fn unit_scalar(f: &EndoTuple) -> Result<Scalar> {
    let one = Scalar::one(f.ell());
    match f.backend() {
        Backend::Exact => Ok(one),
        Backend::Capped => one.to_capped(crate::DEFAULT_PRECISION),
    }
}

/// True iff the jet of f at degree m is diagonalizable over characteristic
/// zero, certified by a squarefree minimal polynomial: with p the radical
/// of the characteristic polynomial, p(A) = 0 holds exactly.
pub fn is_semisimple_jet(f: &EndoTuple, m: u32) -> Result<bool> {
    if f.backend() != Backend::Exact {
        return Err(Error::BackendUnsupported);
    }
    let jet = jet_matrix(f, m)?;
    let a = jet.rational_entries().ok_or(Error::BackendUnsupported)?;
    let chi = charpoly(&a);
    let radical = squarefree_radical(&chi);
    Ok(matrix_poly_is_zero(&a, &radical))
}

/// Characteristic polynomial (monic, ascending coefficients) by the
/// Faddeev-LeVerrier recurrence.
fn charpoly(a: &[Vec<BigRational>]) -> Vec<BigRational> {
    let k = a.len();
    let mut coeffs = vec![BigRational::zero(); k + 1];
    coeffs[k] = BigRational::one();
    let mut m_prev: Vec<Vec<BigRational>> = identity_matrix(k);
    let mut c_prev = BigRational::one();
    for step in 1..=k {
        let am = mat_mul(a, &m_prev);
        let c = -trace(&am) / BigRational::from_integer(step.into());
        coeffs[k - step] = c.clone();
        if step < k {
            m_prev = mat_add_scalar(&am, &c);
        }
        c_prev = c;
    }
    let _ = c_prev;
    coeffs
}

fn identity_matrix(k: usize) -> Vec<Vec<BigRational>> {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect()
}

fn mat_mul(a: &[Vec<BigRational>], b: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let k = a.len();
    let mut out = vec![vec![BigRational::zero(); k]; k];
    for i in 0..k {
        for t in 0..k {
            if a[i][t].is_zero() {
                continue;
            }
            for j in 0..k {
                if b[t][j].is_zero() {
                    continue;
                }
                out[i][j] += &a[i][t] * &b[t][j];
            }
        }
    }
    out
}

fn mat_add_scalar(a: &[Vec<BigRational>], c: &BigRational) -> Vec<Vec<BigRational>> {
    let mut out = a.to_vec();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += c;
    }
    out
}

fn trace(a: &[Vec<BigRational>]) -> BigRational {
    (0..a.len()).map(|i| a[i][i].clone()).sum()
}

fn poly_trim(p: &mut Vec<BigRational>) {
    while p.len() > 1 && p.last().map(|c| c.is_zero()).unwrap_or(false) {
        p.pop();
    }
}

fn poly_derivative(p: &[BigRational]) -> Vec<BigRational> {
    if p.len() <= 1 {
        return vec![BigRational::zero()];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * BigRational::from_integer(i.into()))
        .collect()
}

fn poly_divrem(num: &[BigRational], den: &[BigRational]) -> (Vec<BigRational>, Vec<BigRational>) {
    let mut rem = num.to_vec();
    poly_trim(&mut rem);
    let mut den = den.to_vec();
    poly_trim(&mut den);
    let dl = den.len();
    assert!(!den[dl - 1].is_zero(), "division by zero polynomial");
    if rem.len() < dl {
        return (vec![BigRational::zero()], rem);
    }
    let mut quot = vec![BigRational::zero(); rem.len() - dl + 1];
    for qi in (0..quot.len()).rev() {
        let c = &rem[qi + dl - 1] / &den[dl - 1];
        if c.is_zero() {
            continue;
        }
        quot[qi] = c.clone();
        for (di, dc) in den.iter().enumerate() {
            let idx = qi + di;
            let sub = dc * &c;
            rem[idx] -= sub;
        }
    }
    poly_trim(&mut rem);
    (quot, rem)
}

fn poly_gcd(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    poly_trim(&mut x);
    poly_trim(&mut y);
    while !(y.len() == 1 && y[0].is_zero()) {
        let (_, r) = poly_divrem(&x, &y);
        x = y;
        y = r;
    }
    // Monic normalization.
    let lead = x.last().unwrap().clone();
    if !lead.is_zero() && !lead.is_one() {
        for c in x.iter_mut() {
            *c /= &lead;
        }
    }
    x
}

/// p / gcd(p, p'): same roots, all simple.
fn squarefree_radical(p: &[BigRational]) -> Vec<BigRational> {
    let g = poly_gcd(p, &poly_derivative(p));
    if g.len() == 1 {
        return p.to_vec();
    }
    let (q, r) = poly_divrem(p, &g);
    debug_assert!(r.iter().all(|c| c.is_zero()));
    q
}

fn matrix_poly_is_zero(a: &[Vec<BigRational>], p: &[BigRational]) -> bool {
    let k = a.len();
    // Horner over matrices.
    let mut acc = vec![vec![BigRational::zero(); k]; k];
    for c in p.iter().rev() {
        acc = mat_mul(&acc, a);
        for (i, row) in acc.iter_mut().enumerate() {
            row[i] += c;
        }
    }
    acc.iter().all(|row| row.iter().all(|c| c.is_zero()))
}

/// A resonance violation: a word I and component j with
/// lambda^I = lambda_j but a nonzero coefficient of x^I in f_j.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ResonanceViolation {
    pub word: Vec<u8>,
    pub j: u8,
    pub coefficient: crate::scalar::ScalarWire,
}

/// lambda^I for the abelianized exponent of the word.
pub fn lambda_power(lambdas: &[Scalar], word: &Word) -> Result<Scalar> {
    let mut acc = Scalar::one(lambdas[0].ell());
    if lambdas[0].backend() == Backend::Capped {
        acc = acc.to_capped(crate::DEFAULT_PRECISION)?;
    }
    for (i, m) in word.multiplicities(lambdas.len()).into_iter().enumerate() {
        if m > 0 {
            acc = acc.mul(&lambdas[i].pow(m as i64)?)?;
        }
    }
    Ok(acc)
}

/// Decide lambda^I = lambda_j; Undecidable when the difference is a fuzzy
/// zero in the capped backend.
pub fn is_resonant(lambdas: &[Scalar], word: &Word, j: usize) -> Result<bool> {
    let d = lambda_power(lambdas, word)?.sub(&lambdas[j])?;
    if d.is_exact_zero() {
        return Ok(true);
    }
    if d.is_precision_limited() {
        return Err(Error::Undecidable(format!(
            "lambda^{:?} - lambda_{} is indistinguishable from zero",
            word.letters(),
            j + 1
        )));
    }
    Ok(false)
}

/// Every (I, j) with lambda^I = lambda_j but a nonzero coefficient of x^I
/// in f_j, up to the truncation degree. An empty list is the precondition
/// for the homological solver.
pub fn resonance_check(f: &EndoTuple) -> Result<Vec<ResonanceViolation>> {
    let lambdas = f.diagonal_linear_part()?;
    let mut out = Vec::new();
    for (jc, comp) in f.components().iter().enumerate() {
        for (word, coeff) in comp.support() {
            if word.weight() < 2 || coeff.is_zeroish() {
                continue;
            }
            if is_resonant(&lambdas, word, jc)? {
                out.push(ResonanceViolation {
                    word: word.letters().to_vec(),
                    j: (jc + 1) as u8,
                    coefficient: coeff.to_wire(),
                });
            }
        }
    }
    Ok(out)
}
