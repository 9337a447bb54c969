//! The linearization engine: homological solver, one conjugation step, the
//! full driver with its B/eta/delta/r schedule, the calculus bounds backing
//! the schedule, eigen-coordinates, and an independent degree-by-degree
//! oracle.
//!
//! Constant conventions. The small-divisor condition bounds nonzero
//! divisors from below by c (N/2)^-mu, so reciprocals are bounded by
//! C_sigma (N/2)^mu with C_sigma = 1/c, and all internal estimates use
//! C_sigma. The sharp composition estimate carries a 1/r factor, so the
//! working constant of a step at radius r is c' = C_sigma / r; the step
//! asserts, with this c', both
//!
//!   |psi - x|_{r(1-eta)} <= c' delta (1-eta) (eta/7mu)^-mu
//!   delta_next           <= c' (7mu)^mu delta^2 / (eta^mu - delta c' (7mu)^mu)
//!
//! and the driver checks delta_{n+1} <= delta_n / (B-1) and r_n > 1/B on
//! every accepted step. A violation is surfaced, never absorbed.

use crate::endo::EndoTuple;
use crate::error::{Error, Result};
use crate::interval::{rat, rat_int, Interval, ROOT_BITS, ROUND_BITS};
use crate::jet::{is_resonant, is_semisimple_jet, resonance_check};
use crate::scalar::{Backend, Scalar, Valuation};
use crate::series::{NCSeries, RNorm, Radius};
use crate::word::Word;
use num::rational::BigRational;
use num::traits::Signed;

#[derive(Clone, Debug)]
pub struct SiegelParams {
    c: BigRational,
    mu: BigRational,
}

impl SiegelParams {
    pub fn new(c: BigRational, mu: BigRational) -> Result<Self> {
        if !c.is_positive() {
            return Err(Error::InvalidInput("Siegel constant c must be positive".into()));
        }
        if mu.is_negative() {
            return Err(Error::InvalidInput("Siegel exponent mu must be nonnegative".into()));
        }
        Ok(SiegelParams { c, mu })
    }

    pub fn c(&self) -> &BigRational {
        &self.c
    }

    pub fn mu(&self) -> &BigRational {
        &self.mu
    }

    /// 1/c: the multiplicative bound on reciprocal divisors.
    pub fn c_sigma(&self) -> BigRational {
        self.c.recip()
    }

    /// The iteration needs mu > 2/7; smaller exponents are raised to 1/3,
    /// which only weakens the divisor bound and stays sound.
    pub fn effective_mu(&self) -> BigRational {
        let floor = rat(1, 3);
        if self.mu < floor {
            floor
        } else {
            self.mu.clone()
        }
    }

    /// (7 mu)^mu as an interval, with mu the effective exponent.
    fn seven_mu_pow(&self) -> Interval {
        let m = self.effective_mu();
        Interval::exact(rat_int(7) * &m).pow_rat(&m, ROOT_BITS)
    }
}

/// sup_{i >= 0} (1-eta)^i i^mu <= (eta / 7 mu)^-mu for eta in (0,1), mu > 0.
pub fn calculus_sup_bound(eta: &BigRational, mu: &BigRational) -> Interval {
    let base = Interval::exact(eta / (rat_int(7) * mu));
    base.pow_rat(&-mu.clone(), ROOT_BITS)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CalculusCheck {
    pub measured: Interval,
    pub bound: Interval,
    pub holds: bool,
    pub terms_enumerated: u64,
}

/// Enumerate (1-eta)^i i^mu past the turnover point and confirm the sup is
/// below the closed-form bound. The term ratio (1-eta)(1+1/i)^mu is
/// decreasing in i, so once it certainly drops below 1 the remaining tail
/// is monotone decreasing and the enumeration covers the sup.
pub fn verify_calculus_sup(eta: &BigRational, mu: &BigRational) -> Result<CalculusCheck> {
    if !eta.is_positive() || eta >= &BigRational::from_integer(1.into()) {
        return Err(Error::InvalidInput("eta must lie in (0,1)".into()));
    }
    if !mu.is_positive() {
        return Err(Error::InvalidInput("mu must be positive".into()));
    }
    let one_minus = Interval::exact(BigRational::from_integer(1.into()) - eta);
    let mut sup = Interval::zero();
    let mut pow = Interval::one();
    let mut i: u64 = 0;
    loop {
        i += 1;
        pow = pow.mul(&one_minus).round_out(ROUND_BITS);
        let term = pow
            .mul(&Interval::from_int(i as i64).pow_rat(mu, ROOT_BITS))
            .round_out(ROUND_BITS);
        sup = sup.max(&term);
        // Past the turnover the ratio to the next term is certainly < 1.
        let ratio = one_minus.mul(
            &Interval::exact(rat_int(i as i64 + 1) / rat_int(i as i64)).pow_rat(mu, ROOT_BITS),
        );
        if ratio.certainly_lt(&Interval::one()) {
            // One more term bounds the whole tail.
            let next = pow
                .mul(&one_minus)
                .mul(&Interval::from_int(i as i64 + 1).pow_rat(mu, ROOT_BITS));
            sup = sup.max(&next);
            break;
        }
        if i > 1_000_000 {
            return Err(Error::Verification("calculus sup enumeration did not turn over".into()));
        }
    }
    let bound = calculus_sup_bound(eta, mu);
    let holds = sup.hi() <= bound.lo();
    Ok(CalculusCheck { measured: sup, bound, holds, terms_enumerated: i + 1 })
}

/// prod_{n>=0} (1 - u / alpha^n) > e^{-alpha/(alpha-1)} for u in (0, 1/2),
/// alpha > 1.
pub fn calculus_product_bound(alpha: &BigRational) -> Interval {
    let x = Interval::exact(-alpha / (alpha - BigRational::from_integer(1.into())));
    x.exp(ROOT_BITS)
}

/// Lower bound for prod_{n>=N} (1 - u/alpha^n), valid for u < 1/2,
/// alpha > 1: exp(-2 u alpha^(1-N) alpha/(alpha - 1)) with the geometric
/// tail summed exactly.
fn product_tail_lower(u: &Interval, alpha: &Interval, from: u32) -> Interval {
    let alpha_minus_one = alpha.sub(&Interval::one());
    // sum_{n>=from} alpha^-n = alpha^(1-from) / (alpha - 1).
    let geom = alpha.pow_u(from.saturating_sub(1)).mul(&alpha_minus_one).recip();
    let x = u.mul(&Interval::from_int(-2)).mul(&geom);
    x.exp(ROOT_BITS)
}

/// The infinite product as a certified interval: partial product times the
/// tail bracket [tail lower bound, 1].
pub fn product_interval(u: &Interval, alpha: &Interval, terms: u32) -> Result<Interval> {
    if !u.certainly_positive() || !u.certainly_lt(&Interval::exact(rat(1, 2))) {
        return Err(Error::InvalidInput("product parameter u must lie in (0, 1/2)".into()));
    }
    if !alpha.certainly_gt(&Interval::one()) {
        return Err(Error::InvalidInput("product parameter alpha must exceed 1".into()));
    }
    let mut partial = Interval::one();
    let mut alpha_pow = Interval::one();
    for _ in 0..terms {
        let factor = Interval::one().sub(&u.div(&alpha_pow));
        if !factor.certainly_positive() {
            return Err(Error::InvalidInput("product factor not positive".into()));
        }
        partial = partial.mul(&factor).round_out(ROUND_BITS);
        alpha_pow = alpha_pow.mul(alpha).round_out(ROUND_BITS);
    }
    let tail = product_tail_lower(u, alpha, terms);
    let lo = partial.mul(&tail);
    Ok(Interval::new(lo.lo().clone(), partial.hi().clone()))
}

pub fn verify_calculus_product(u: &BigRational, alpha: &BigRational) -> Result<CalculusCheck> {
    let ui = Interval::exact(u.clone());
    let ai = Interval::exact(alpha.clone());
    let terms = 96u32;
    let product = product_interval(&ui, &ai, terms)?;
    let bound = calculus_product_bound(alpha);
    let holds = bound.hi() < product.lo();
    Ok(CalculusCheck { measured: product, bound, holds, terms_enumerated: terms as u64 })
}

/// The worst (smallest) divisor used in a homological solve.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DivisorWitness {
    pub word: Vec<u8>,
    pub j: u8,
    pub valuation: i64,
}

#[derive(Clone, Debug)]
pub struct HomologicalSolution {
    pub psi_hat: EndoTuple,
    pub worst_divisor: Option<DivisorWitness>,
}

/// Solve psi_hat(A x) - A psi_hat(x) = fhat(x) for diagonal A: the
/// coefficient of x^I in psi_j is a_I^j / (lambda^I - lambda_j) at
/// non-resonant slots and zero at resonant ones, which requires the
/// resonant coefficients of fhat to vanish. The functional equation is
/// re-verified on the result, and the worst small-divisor valuation is
/// reported for the precision ledger.
pub fn solve_homological(fhat: &EndoTuple, lambdas: &[Scalar]) -> Result<HomologicalSolution> {
    if lambdas.len() != fhat.len() {
        return Err(Error::ShapeMismatch("diagonal length differs from tuple arity".into()));
    }
    if let Some(w) = fhat.components().iter().filter_map(|c| c.min_weight()).min() {
        if w < 2 {
            return Err(Error::InvalidInput("homological right-hand side must lie in I^2".into()));
        }
    }
    let n = fhat.vars();
    let deg = fhat.truncation_degree();
    let ell = fhat.ell();
    let backend = fhat.backend();
    let mut worst: Option<DivisorWitness> = None;
    let mut comps = Vec::with_capacity(fhat.len());
    for (j, comp) in fhat.components().iter().enumerate() {
        let mut psi_j = NCSeries::zero(n, deg, ell, backend);
        for (word, a) in comp.support() {
            if is_resonant(lambdas, word, j)? {
                if !a.is_zeroish() {
                    return Err(Error::ResonantObstruction {
                        word: word.letters().to_vec(),
                        component: (j + 1) as u8,
                    });
                }
                continue;
            }
            let divisor = crate::jet::lambda_power(lambdas, word)?.sub(&lambdas[j])?;
            if let Valuation::Finite(v) = divisor.valuation() {
                if worst.as_ref().map(|w| v > w.valuation).unwrap_or(true) {
                    worst = Some(DivisorWitness {
                        word: word.letters().to_vec(),
                        j: (j + 1) as u8,
                        valuation: v,
                    });
                }
            }
            psi_j.set(word.clone(), a.div(&divisor)?)?;
        }
        comps.push(psi_j);
    }
    let psi_hat = EndoTuple::new(comps)?;
    // Functional equation check: psi_hat(Ax) - A psi_hat = fhat.
    let ax = EndoTuple::linear_diagonal(n, deg, lambdas)?;
    let lhs_left = psi_hat.compose(&ax)?;
    let mut scaled = Vec::with_capacity(psi_hat.len());
    for (j, c) in psi_hat.components().iter().enumerate() {
        scaled.push(c.scalar_mul(&lambdas[j])?);
    }
    let lhs = lhs_left.sub(&EndoTuple::new(scaled)?)?;
    if !lhs.sub(fhat)?.is_zeroish() {
        return Err(Error::Verification("homological functional equation failed".into()));
    }
    Ok(HomologicalSolution { psi_hat, worst_divisor: worst })
}

#[derive(Clone, Debug)]
pub struct SiegelStep {
    pub psi: EndoTuple,
    pub f_next: EndoTuple,
    pub delta_in: RNorm,
    pub delta_next: RNorm,
    pub psi_norm: RNorm,
    pub psi_bound: Interval,
    pub delta_bound: Interval,
    pub r_next: Radius,
    pub worst_divisor: Option<DivisorWitness>,
}

/// One conjugation step at radius r with shrink factor eta.
pub fn siegel_step(
    f: &EndoTuple,
    r: &Radius,
    eta: &Interval,
    params: &SiegelParams,
) -> Result<SiegelStep> {
    let lambdas = f.diagonal_linear_part()?;
    for lam in &lambdas {
        if !lam.valuation().is_nonnegative() {
            return Err(Error::InvalidInput("eigenvalues must satisfy |lambda| <= 1".into()));
        }
    }
    if !eta.certainly_positive() || !eta.certainly_lt(&Interval::one()) {
        return Err(Error::ScheduleViolation("eta must lie in (0,1)".into()));
    }
    let mu = params.effective_mu();
    let seven_mu = params.seven_mu_pow();
    let c_prime = Interval::exact(params.c_sigma()).div(r.mag());
    let fhat = f.nonlinear_part();
    let delta_in = fhat.norm_r(r);

    // Precondition: c' (7mu)^mu eta^-mu delta < r.
    let eta_neg_mu = eta.pow_rat(&-mu.clone(), ROOT_BITS);
    let lhs = c_prime.mul(&seven_mu).mul(&eta_neg_mu).mul(&delta_in.mag);
    if !lhs.certainly_lt(r.mag()) {
        return Err(Error::ScheduleViolation(format!(
            "c' (7mu)^mu eta^-mu delta = {:.3e} is not below r = {:.3e}",
            lhs.to_f64(),
            r.mag().to_f64()
        )));
    }

    let hom = solve_homological(&fhat, &lambdas)?;
    let psi = EndoTuple::identity(f.vars(), f.truncation_degree(), f.ell(), f.backend())?
        .add(&hom.psi_hat)?;

    let one_minus_eta = Interval::one().sub(eta);
    let r_next = r.shrink(&one_minus_eta)?;

    // |psi - x|_{r(1-eta)} <= c' delta (1-eta) (eta/7mu)^-mu.
    let psi_norm = hom.psi_hat.norm_r(&r_next);
    let psi_bound = c_prime
        .mul(&delta_in.mag)
        .mul(&one_minus_eta)
        .mul(&seven_mu)
        .mul(&eta_neg_mu);
    if psi_norm.mag.hi() > psi_bound.hi() {
        return Err(Error::ContractionFailure(format!(
            "|psi - x| = {:.3e} exceeds {:.3e}",
            psi_norm.mag.to_f64(),
            psi_bound.to_f64()
        )));
    }

    let psi_inv = psi.invert(&r_next)?;
    let f_next = psi_inv.compose(&f.compose(&psi)?)?;
    let delta_next = f_next.nonlinear_part().norm_r(&r_next);

    // delta_next <= c' (7mu)^mu delta^2 / (eta^mu - delta c' (7mu)^mu).
    let eta_mu = eta.pow_rat(&mu, ROOT_BITS);
    let denom = eta_mu.sub(&delta_in.mag.mul(&c_prime).mul(&seven_mu));
    if !denom.certainly_positive() {
        return Err(Error::ScheduleViolation("contraction denominator not positive".into()));
    }
    let delta_bound = c_prime
        .mul(&seven_mu)
        .mul(&delta_in.mag)
        .mul(&delta_in.mag)
        .div(&denom);
    if delta_next.mag.hi() > delta_bound.hi() {
        return Err(Error::ContractionFailure(format!(
            "delta_next = {:.3e} exceeds {:.3e}",
            delta_next.mag.to_f64(),
            delta_bound.to_f64()
        )));
    }

    Ok(SiegelStep {
        psi,
        f_next,
        delta_in,
        delta_next,
        psi_norm,
        psi_bound,
        delta_bound,
        r_next,
        worst_divisor: hom.worst_divisor,
    })
}

/// Feasibility of a candidate B for given r1, delta1: the smallness target
/// delta1 < (7mu)^-mu 2^(-mu-1) / (c' B) and the radius-floor inequality
/// B^-1 < r1 prod_{n>=0}(1 - u / alpha^n) with
/// u = (c' (7mu)^mu B delta1)^(1/(mu+1)), alpha = (B-1)^(1/(mu+1)),
/// everything outward-rounded.
pub fn b_parameter_feasible(
    b: u64,
    r1: &Radius,
    delta1: &Interval,
    params: &SiegelParams,
) -> Result<bool> {
    if b < 3 {
        return Ok(false);
    }
    let mu = params.effective_mu();
    let seven_mu = params.seven_mu_pow();
    let c_prime = Interval::exact(params.c_sigma()).div(r1.mag());
    let b_i = Interval::from_int(b as i64);

    // Smallness of delta1.
    let target = seven_mu
        .mul(&Interval::exact(rat_int(2)).pow_rat(&(mu.clone() + rat_int(1)), ROOT_BITS))
        .mul(&c_prime)
        .mul(&b_i)
        .recip();
    if !delta1.certainly_lt(&target) {
        return Ok(false);
    }

    let inv_mu1 = (mu.clone() + rat_int(1)).recip();
    let u = c_prime
        .mul(&seven_mu)
        .mul(&b_i)
        .mul(delta1)
        .pow_rat(&inv_mu1, ROOT_BITS)
        .round_out(ROUND_BITS);
    if !u.certainly_positive() || !u.certainly_lt(&Interval::exact(rat(1, 2))) {
        return Ok(false);
    }
    let alpha = Interval::from_int(b as i64 - 1).pow_rat(&inv_mu1, ROOT_BITS);
    let product = product_interval(&u, &alpha, 96)?;
    let rhs = Interval::exact(r1.mag().lo().clone()).mul(&Interval::exact(product.lo().clone()));
    Ok(Interval::exact(rat(1, b as i64)).certainly_lt(&rhs))
}

/// Smallest feasible B in a doubling search from 4.
pub fn choose_b(
    r1: &Radius,
    delta1: &Interval,
    params: &SiegelParams,
    b_cap: u64,
) -> Result<u64> {
    let mut b = 4u64;
    while b <= b_cap {
        if b_parameter_feasible(b, r1, delta1, params)? {
            return Ok(b);
        }
        b = b.saturating_mul(2);
    }
    Err(Error::NoFeasibleB { cap: b_cap })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub r: Interval,
    pub eta: Interval,
    pub delta: Interval,
    pub delta_bound: Interval,
    pub psi_norm: Interval,
    pub psi_bound: Interval,
    pub worst_divisor: Option<DivisorWitness>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub enum Termination {
    /// The nonlinear part vanished exactly at the truncation degree.
    ResidualZero { steps: usize },
    /// Capped backend: the nonlinear part is indistinguishable from zero.
    ResidualBelowPrecision { steps: usize },
    /// Linear input, no iteration was needed.
    AlreadyLinear,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SiegelSchedule {
    pub b: u64,
    pub preamble_shrinks: u32,
    pub r1: Interval,
    pub delta1: Interval,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

#[derive(Clone, Debug)]
pub struct LinearizationResult {
    pub psi: EndoTuple,
    pub psi_inv: EndoTuple,
    pub lambdas: Vec<Scalar>,
    pub r_prime: Radius,
    pub schedule: SiegelSchedule,
    pub residual: RNorm,
    pub semisimple_evidence: String,
}

#[derive(Clone, Debug)]
pub struct LinearizeOptions {
    pub b_cap: u64,
    pub max_radius_shrinks: u32,
    /// Accept semisimplicity as an external assertion instead of
    /// certifying low jets on the exact backend.
    pub assert_semisimple: bool,
    /// Jet degree for the upfront certification (exact backend only).
    pub jet_certification_degree: u32,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions {
            b_cap: 1 << 40,
            max_radius_shrinks: 200,
            assert_semisimple: false,
            jet_certification_degree: 3,
        }
    }
}

/// Conjugate f = A x + O(x^2) to its linear part: returns Psi with
/// Psi^-1 o f o Psi = A x exactly modulo I^(D+1), the final radius
/// r' >= 1/B, and the fully checked schedule.
pub fn linearize(
    f: &EndoTuple,
    r: &Radius,
    params: &SiegelParams,
    opts: &LinearizeOptions,
) -> Result<LinearizationResult> {
    let lambdas = f.diagonal_linear_part()?;
    for lam in &lambdas {
        if !lam.valuation().is_nonnegative() {
            return Err(Error::InvalidInput("eigenvalues must satisfy |lambda| <= 1".into()));
        }
    }
    let violations = resonance_check(f)?;
    if let Some(v) = violations.first() {
        return Err(Error::ResonantObstruction { word: v.word.clone(), component: v.j });
    }
    let semisimple_evidence = if opts.assert_semisimple {
        "asserted by caller".to_string()
    } else if f.backend() == Backend::Exact {
        let m = opts.jet_certification_degree.min(f.truncation_degree());
        if !is_semisimple_jet(f, m)? {
            return Err(Error::InvalidInput(format!("jet at degree {m} is not semisimple")));
        }
        format!("jet certified to degree {m}; resonance profile clean; per-step obstruction checks")
    } else {
        return Err(Error::BackendUnsupported);
    };

    let n = f.vars();
    let deg = f.truncation_degree();
    let identity = EndoTuple::identity(n, deg, f.ell(), f.backend())?;
    let fhat = f.nonlinear_part();

    if fhat.is_zero() {
        let r1 = r.shrink(&Interval::exact(rat(1, 2)))?;
        return Ok(LinearizationResult {
            psi: identity.clone(),
            psi_inv: identity,
            lambdas,
            r_prime: r1.clone(),
            schedule: SiegelSchedule {
                b: 4,
                preamble_shrinks: 0,
                r1: r1.mag().clone(),
                delta1: Interval::zero(),
                steps: Vec::new(),
                termination: Termination::AlreadyLinear,
            },
            residual: RNorm::zero(),
            semisimple_evidence,
        });
    }

    let mu = params.effective_mu();
    let seven_mu = params.seven_mu_pow();
    let c_sigma = Interval::exact(params.c_sigma());

    // Radius-shrink preamble: delta(r) < (7mu)^-mu 2^(-mu-1) / c'(r).
    let mut r_work = r.clone();
    let mut shrinks = 0u32;
    loop {
        let target = seven_mu
            .mul(&Interval::exact(rat_int(2)).pow_rat(&(mu.clone() + rat_int(1)), ROOT_BITS))
            .mul(&c_sigma.div(r_work.mag()))
            .recip();
        if fhat.norm_r(&r_work).mag.certainly_lt(&target) {
            break;
        }
        r_work = r_work.shrink_ell();
        shrinks += 1;
        if shrinks > opts.max_radius_shrinks {
            return Err(Error::NoFeasibleB { cap: opts.b_cap });
        }
    }

    // Couple the r1 = r/sqrt(B) shrink with the doubling search; retry on a
    // smaller radius when no B is feasible.
    let (b, r1, delta1) = 'outer: loop {
        let mut b = 4u64;
        while b <= opts.b_cap {
            let r1 = r_work.div_sqrt(b)?;
            let delta1 = fhat.norm_r(&r1);
            if b_parameter_feasible(b, &r1, &delta1.mag, params)? {
                break 'outer (b, r1, delta1);
            }
            b = b.saturating_mul(2);
        }
        r_work = r_work.shrink_ell();
        shrinks += 1;
        if shrinks > opts.max_radius_shrinks {
            return Err(Error::NoFeasibleB { cap: opts.b_cap });
        }
    };

    let inv_mu1 = (mu.clone() + rat_int(1)).recip();
    let b_i = Interval::from_int(b as i64);
    let b_floor = Interval::exact(rat(1, b as i64));
    let b_minus_one = rat_int(b as i64 - 1);

    let mut f_n = f.clone();
    let mut r_n = r1.clone();
    let mut psi_acc = identity.clone();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut prev_delta: Option<Interval> = None;
    let termination;
    let max_steps = deg as usize + 2;
    loop {
        let fhat_n = f_n.nonlinear_part();
        if fhat_n.is_zero() {
            termination = Termination::ResidualZero { steps: steps.len() };
            break;
        }
        if fhat_n.is_zeroish() {
            termination = Termination::ResidualBelowPrecision { steps: steps.len() };
            break;
        }
        if steps.len() >= max_steps {
            return Err(Error::ScheduleDivergence(format!(
                "no termination after {max_steps} steps"
            )));
        }
        let delta_n = fhat_n.norm_r(&r_n);
        if !delta_n.mag.certainly_positive() {
            return Err(Error::Undecidable(
                "step norm indistinguishable from zero at capped precision".into(),
            ));
        }
        // eta_n^(mu+1) = B c'_n (7mu)^mu delta_n with c'_n = C_sigma / r_n.
        let c_prime_n = c_sigma.div(r_n.mag());
        let eta = b_i
            .mul(&c_prime_n)
            .mul(&seven_mu)
            .mul(&delta_n.mag)
            .pow_rat(&inv_mu1, ROOT_BITS)
            .round_out(ROUND_BITS);
        if !eta.certainly_positive() || !eta.certainly_lt(&Interval::one()) {
            return Err(Error::ScheduleViolation(format!(
                "eta_{} = {:.3e} is not inside (0,1)",
                steps.len() + 1,
                eta.to_f64()
            )));
        }
        let step = siegel_step(&f_n, &r_n, &eta, params)?;
        // delta_{n+1} <= delta_n / (B-1) at every accepted step.
        if let Some(prev) = &prev_delta {
            let allowance = Interval::exact(prev.hi().clone()).mul_rat(&b_minus_one.recip());
            if step.delta_in.mag.hi() > allowance.hi() {
                return Err(Error::ScheduleDivergence(format!(
                    "delta_{} = {:.3e} exceeds delta/(B-1) = {:.3e}",
                    steps.len() + 1,
                    step.delta_in.mag.to_f64(),
                    allowance.to_f64()
                )));
            }
        }
        // The radius stays above the floor 1/B.
        if !step.r_next.mag().certainly_gt(&b_floor) {
            return Err(Error::ScheduleDivergence(format!(
                "radius {:.3e} fell to the floor 1/B = {:.3e}",
                step.r_next.mag().to_f64(),
                b_floor.to_f64()
            )));
        }
        steps.push(StepRecord {
            n: steps.len() + 1,
            r: r_n.mag().clone(),
            eta: eta.clone(),
            delta: step.delta_in.mag.clone(),
            delta_bound: step.delta_bound.clone(),
            psi_norm: step.psi_norm.mag.clone(),
            psi_bound: step.psi_bound.clone(),
            worst_divisor: step.worst_divisor.clone(),
        });
        prev_delta = Some(step.delta_in.mag.clone());
        psi_acc = psi_acc.compose(&step.psi)?;
        f_n = step.f_next;
        r_n = step.r_next;
    }

    let r_prime = r_n;
    let psi_inv = psi_acc.invert(&r_prime)?;
    // Independent residual verification on the accumulated conjugator.
    let conj = psi_inv.compose(&f.compose(&psi_acc)?)?;
    let ax = EndoTuple::linear_diagonal(n, deg, &lambdas)?;
    let residual_tuple = conj.sub(&ax)?;
    if !residual_tuple.is_zeroish() {
        return Err(Error::Verification(
            "conjugated output differs from the linear part".into(),
        ));
    }
    let residual = residual_tuple.norm_r(&r_prime);

    Ok(LinearizationResult {
        psi: psi_acc,
        psi_inv,
        lambdas,
        r_prime,
        schedule: SiegelSchedule {
            b,
            preamble_shrinks: shrinks,
            r1: r1.mag().clone(),
            delta1: delta1.mag.clone(),
            steps,
            termination,
        },
        residual,
        semisimple_evidence,
    })
}

impl LinearizationResult {
    /// Full run report: parameters (both divisor-constant conventions),
    /// the schedule, the divisor ledger, the final radius with its -log_l
    /// view, and whether every assertion held.
    pub fn run_report(&self, params: &SiegelParams) -> serde_json::Value {
        let worst = self
            .schedule
            .steps
            .iter()
            .filter_map(|s| s.worst_divisor.as_ref().map(|w| w.valuation))
            .max();
        let exact = self.psi.backend() == Backend::Exact;
        serde_json::json!({
            "ell": self.psi.ell(),
            "n": self.psi.vars(),
            "D": self.psi.truncation_degree(),
            "params": {
                "c": params.c().to_string(),
                "mu": params.mu().to_string(),
                "mu_effective": params.effective_mu().to_string(),
                "c_sigma": params.c_sigma().to_string(),
            },
            "schedule": self.schedule,
            "r_prime": self.r_prime.mag(),
            "n_threshold_log_ell": self.r_prime.neg_log_ell(),
            "worst_divisor_valuation": worst,
            "residual_zero": self.residual.is_zero(),
            "residual_precision_floor": self.residual.precision_floor,
            "precision_ledger": if exact { "exact backend: no precision loss" }
                                else { "capped backend: per-coefficient precision tracked" },
            "semisimple_evidence": self.semisimple_evidence,
        })
    }
}

/// Degree-by-degree normal-form conjugator: solves f(Psi) = Psi(A x) one
/// weight at a time through the divisor formula alone, with resonant slots
/// of Psi pinned to zero. Independent of the Newton driver; the two agree
/// exactly on non-resonant inputs.
pub fn formal_linearize(f: &EndoTuple) -> Result<EndoTuple> {
    let lambdas = f.diagonal_linear_part()?;
    let n = f.vars();
    let deg = f.truncation_degree();
    let ax = EndoTuple::linear_diagonal(n, deg, &lambdas)?;
    let mut psi = EndoTuple::identity(n, deg, f.ell(), f.backend())?;
    for w in 2..=deg as usize {
        let err = f.compose(&psi)?.sub(&psi.compose(&ax)?)?;
        let mut comps = Vec::with_capacity(psi.len());
        for (j, (pc, ec)) in psi.components().iter().zip(err.components().iter()).enumerate() {
            let mut layer = NCSeries::zero(n, deg, f.ell(), f.backend());
            for (word, e) in ec.support() {
                if word.weight() != w || e.is_zeroish() {
                    continue;
                }
                if is_resonant(&lambdas, word, j)? {
                    return Err(Error::ResonantObstruction {
                        word: word.letters().to_vec(),
                        component: (j + 1) as u8,
                    });
                }
                let divisor = crate::jet::lambda_power(&lambdas, word)?.sub(&lambdas[j])?;
                layer.set(word.clone(), e.div(&divisor)?)?;
            }
            comps.push(pc.add(&layer)?);
        }
        psi = EndoTuple::new(comps)?;
    }
    if !f.compose(&psi)?.sub(&psi.compose(&ax)?)?.is_zeroish() {
        return Err(Error::Verification("formal conjugacy equation failed".into()));
    }
    Ok(psi)
}

#[derive(Clone, Debug)]
pub struct EigenCoordinates {
    pub ys: Vec<NCSeries>,
    pub linearization: LinearizationResult,
    /// Weight up to which the graded change-of-basis certificate was
    /// established.
    pub expansion_certified_to: u32,
}

/// Eigen-coordinates y_i = (Psi^-1)_i with y_i o f = lambda_i y_i, plus
/// the graded change-of-basis certificate.
pub fn eigen_coordinates(
    f: &EndoTuple,
    r: &Radius,
    params: &SiegelParams,
    opts: &LinearizeOptions,
) -> Result<EigenCoordinates> {
    let lin = linearize(f, r, params, opts)?;
    let ys: Vec<NCSeries> = lin.psi_inv.components().to_vec();
    // Eigen-relation: y_i o f = lambda_i y_i exactly modulo I^(D+1).
    for (i, y) in ys.iter().enumerate() {
        let lhs = y.substitute(f)?;
        let rhs = y.scalar_mul(&lin.lambdas[i])?;
        if !lhs.sub(&rhs)?.is_zeroish() {
            return Err(Error::Verification(format!(
                "eigen-relation failed for coordinate {}",
                i + 1
            )));
        }
    }
    let deg = certify_expansion(&lin.psi)?;
    Ok(EigenCoordinates { ys, linearization: lin, expansion_certified_to: deg })
}

/// Expand every x-monomial x^J (|J| <= D) in y-monomials by substituting
/// Psi, and certify: no terms below weight |J|, and the weight-|J| block is
/// exactly x^J (unit diagonal), so the graded expansion matrix is
/// invertible at every weight.
pub fn certify_expansion(psi: &EndoTuple) -> Result<u32> {
    let deg = psi.truncation_degree();
    let one = NCSeries::one(psi.vars(), deg, psi.ell(), psi.backend());
    certify_expansion_walk(psi, &one, &Word::empty(), deg)?;
    Ok(deg)
}

fn certify_expansion_walk(
    psi: &EndoTuple,
    prefix: &NCSeries,
    word: &Word,
    deg: u32,
) -> Result<()> {
    if word.weight() > 0 {
        let m = word.weight();
        if prefix.min_weight().map(|w| w < m).unwrap_or(false) {
            return Err(Error::Verification(format!(
                "expansion of x^{:?} has terms below weight {m}",
                word.letters()
            )));
        }
        let lead = prefix.jet_part(m);
        let unit = match psi.backend() {
            Backend::Exact => Scalar::one(psi.ell()),
            Backend::Capped => Scalar::one(psi.ell()).to_capped(crate::DEFAULT_PRECISION)?,
        };
        let expect = NCSeries::monomial(psi.vars(), deg, word.clone(), unit)?;
        if !lead.sub(&expect)?.is_zeroish() {
            return Err(Error::Verification(format!(
                "leading block of x^{:?} is not the unit monomial",
                word.letters()
            )));
        }
    }
    if word.weight() == deg as usize {
        return Ok(());
    }
    for letter in 1..=psi.vars() {
        let next = prefix.mul(psi.component((letter - 1) as usize))?;
        certify_expansion_walk(psi, &next, &word.push(letter), deg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::rat;

    fn s(num: i64, den: i64) -> Scalar {
        Scalar::from_rational(5, rat(num, den))
    }

    fn one_var(deg: u32, terms: &[(usize, i64, i64)]) -> NCSeries {
        let mut f = NCSeries::zero(1, deg, 5, Backend::Exact);
        for (k, num, den) in terms {
            f.set(Word::from_letters(&vec![1u8; *k]), s(*num, *den)).unwrap();
        }
        f
    }

    #[test]
    fn calculus_sup_half_one() {
        // eta = 1/2, mu = 1: sup over integers of (1/2)^i i = 1/2 at
        // i = 1, 2; bound (eta/7mu)^-1 = 14.
        let check = verify_calculus_sup(&rat(1, 2), &rat(1, 1)).unwrap();
        assert!(check.holds);
        assert!(check.measured.certainly_gt(&Interval::exact(rat(49, 100))));
        assert!(check.measured.certainly_lt(&Interval::exact(rat(51, 100))));
        assert_eq!(check.bound.lo(), &rat(14, 1));
    }

    #[test]
    fn calculus_sup_bound_decreasing_in_eta() {
        let b1 = calculus_sup_bound(&rat(1, 10), &rat(2, 1));
        let b2 = calculus_sup_bound(&rat(2, 10), &rat(2, 1));
        assert!(b2.certainly_lt(&b1));
        // eta = 0.1, mu = 2: bound = (0.1/14)^-2 = 19600.
        assert_eq!(b1.lo(), &rat(19600, 1));
    }

    #[test]
    fn calculus_sup_enumeration_grid_point() {
        let check = verify_calculus_sup(&rat(1, 10), &rat(2, 1)).unwrap();
        assert!(check.holds);
    }

    #[test]
    fn calculus_product_quarter_two() {
        // u = 0.25, alpha = 2: product ~ 0.5888, bound e^-2 ~ 0.1353.
        let check = verify_calculus_product(&rat(1, 4), &rat(2, 1)).unwrap();
        assert!(check.holds);
        assert!(check.measured.certainly_gt(&Interval::exact(rat(58, 100))));
        assert!(check.measured.certainly_lt(&Interval::exact(rat(59, 100))));
    }

    #[test]
    fn calculus_product_small_u() {
        // u -> 0: product -> 1 > bound.
        let check = verify_calculus_product(&rat(1, 1000), &rat(2, 1)).unwrap();
        assert!(check.holds);
        assert!(check.measured.certainly_gt(&Interval::exact(rat(99, 100))));
    }

    #[test]
    fn calculus_product_near_half() {
        let check = verify_calculus_product(&rat(49, 100), &rat(3, 2)).unwrap();
        assert!(check.holds);
    }

    #[test]
    fn homological_zero_input() {
        let fhat = EndoTuple::new(vec![NCSeries::zero(1, 4, 5, Backend::Exact)]).unwrap();
        let sol = solve_homological(&fhat, &[s(6, 1)]).unwrap();
        assert!(sol.psi_hat.is_zero());
        assert!(sol.worst_divisor.is_none());
    }

    #[test]
    fn homological_lambda_five_hand_computation() {
        // lambda = 5, fhat = x^2: psi = (1/20) x^2, valuation -1;
        // check psi(5x) - 5 psi(x) = (25/20 - 5/20) x^2 = x^2.
        let fhat = EndoTuple::new(vec![one_var(3, &[(2, 1, 1)])]).unwrap();
        let sol = solve_homological(&fhat, &[s(5, 1)]).unwrap();
        let coeff = sol.psi_hat.component(0).coeff_or_zero(&Word::from_letters(&[1, 1]));
        assert_eq!(coeff, s(1, 20));
        assert_eq!(coeff.valuation(), Valuation::Finite(-1));
        let w = sol.worst_divisor.unwrap();
        assert_eq!(w.valuation, 1); // v(20) = 1
    }

    #[test]
    fn homological_two_variable_divisor_valuation() {
        // lambda = (u, u^2), u = 1 + l, fhat = x1 x2 in component 1:
        // divisor u * u^2 - u = u (u^2 - 1), valuation 1 for l = 5;
        // coefficient valuation -1.
        let mut c1 = NCSeries::zero(2, 3, 5, Backend::Exact);
        c1.set(Word::from_letters(&[1, 2]), s(1, 1)).unwrap();
        let c2 = NCSeries::zero(2, 3, 5, Backend::Exact);
        let fhat = EndoTuple::new(vec![c1, c2]).unwrap();
        let sol = solve_homological(&fhat, &[s(6, 1), s(36, 1)]).unwrap();
        let coeff = sol.psi_hat.component(0).coeff_or_zero(&Word::from_letters(&[1, 2]));
        assert_eq!(coeff.valuation(), Valuation::Finite(-1));
        assert_eq!(sol.worst_divisor.unwrap().valuation, 1);
    }

    #[test]
    fn homological_resonant_obstruction() {
        // lambda = (u, u^2): x1 x1 in component 2 is resonant.
        let c1 = NCSeries::zero(2, 3, 5, Backend::Exact);
        let mut c2 = NCSeries::zero(2, 3, 5, Backend::Exact);
        c2.set(Word::from_letters(&[1, 1]), s(1, 1)).unwrap();
        let fhat = EndoTuple::new(vec![c1, c2]).unwrap();
        match solve_homological(&fhat, &[s(6, 1), s(36, 1)]) {
            Err(Error::ResonantObstruction { word, component }) => {
                assert_eq!(word, vec![1, 1]);
                assert_eq!(component, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn lambda_x_plus(deg: u32, coeff_num: i64, coeff_den: i64, power: usize) -> EndoTuple {
        let mut f1 = NCSeries::zero(1, deg, 5, Backend::Exact);
        f1.set(Word::single(1), s(6, 1)).unwrap();
        f1.set(Word::from_letters(&vec![1u8; power]), s(coeff_num, coeff_den)).unwrap();
        EndoTuple::new(vec![f1]).unwrap()
    }

    #[test]
    fn siegel_step_already_linear() {
        let f = EndoTuple::linear_diagonal(1, 4, &[s(6, 1)]).unwrap();
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let eta = Interval::exact(rat(1, 10));
        let step = siegel_step(&f, &r, &eta, &params).unwrap();
        assert!(step.delta_next.is_zero());
        assert_eq!(step.psi, EndoTuple::identity(1, 4, 5, Backend::Exact).unwrap());
    }

    #[test]
    fn siegel_step_one_step_bounds() {
        // f = 6x + 125 x^2 at r = 5^-2, one step with eta = 1/10.
        let f = lambda_x_plus(6, 125, 1, 2);
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let eta = Interval::exact(rat(1, 10));
        let step = siegel_step(&f, &r, &eta, &params).unwrap();
        // delta measured: |125| r^2 = 5^-3 * 5^-4 = 5^-7.
        assert_eq!(step.delta_in.mag.lo(), &rat(1, 78125));
        // The measured next norm obeys the asserted bound.
        assert!(step.delta_next.mag.hi() <= step.delta_bound.hi());
        // The conjugate dropped the quadratic term.
        assert!(step.f_next.nonlinear_part().components()[0]
            .coeff(&Word::from_letters(&[1, 1]))
            .is_none());
    }

    #[test]
    fn siegel_step_resonant_error_path() {
        let mut f1 = NCSeries::zero(1, 4, 5, Backend::Exact);
        f1.set(Word::single(1), s(1, 1)).unwrap(); // lambda = 1
        f1.set(Word::from_letters(&[1, 1]), s(5, 1)).unwrap(); // resonant slot
        let f = EndoTuple::new(vec![f1]).unwrap();
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let eta = Interval::exact(rat(1, 10));
        match siegel_step(&f, &r, &eta, &params) {
            Err(Error::ResonantObstruction { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn choose_b_doubling_and_boundary() {
        // c' = C_sigma / r1 = 1 via c = 25, r1 = 5^-2; delta1 = 5^-8, mu = 1.
        let params = SiegelParams::new(rat(25, 1), rat(1, 1)).unwrap();
        let r1 = Radius::from_log(5, rat(2, 1)).unwrap();
        let delta1 = Interval::exact(rat(1, 390625));
        let b = choose_b(&r1, &delta1, &params, 1 << 40).unwrap();
        assert!(b_parameter_feasible(b, &r1, &delta1, &params).unwrap());
        assert!(!b_parameter_feasible(b / 2, &r1, &delta1, &params).unwrap());
    }

    #[test]
    fn choose_b_infeasible_cap() {
        let params = SiegelParams::new(rat(25, 1), rat(1, 1)).unwrap();
        let r1 = Radius::from_log(5, rat(2, 1)).unwrap();
        let delta1 = Interval::exact(rat(1, 390625));
        match choose_b(&r1, &delta1, &params, 8) {
            Err(Error::NoFeasibleB { cap: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linearize_linear_input() {
        let f = EndoTuple::linear_diagonal(2, 4, &[s(6, 1), s(36, 1)]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let lin = linearize(&f, &r, &params, &LinearizeOptions::default()).unwrap();
        assert!(matches!(lin.schedule.termination, Termination::AlreadyLinear));
        assert!(lin.residual.is_zero());
        assert_eq!(lin.psi, EndoTuple::identity(2, 4, 5, Backend::Exact).unwrap());
    }

    #[test]
    fn linearize_cubic_fixture_matches_formal_oracle() {
        // f = 6x + x^3 at D = 8, r = 5^-2, c = 1/10, mu = 1.
        let f = lambda_x_plus(8, 1, 1, 3);
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let lin = linearize(&f, &r, &params, &LinearizeOptions::default()).unwrap();
        assert!(lin.residual.is_zero());
        assert!(matches!(lin.schedule.termination, Termination::ResidualZero { .. }));
        for step in &lin.schedule.steps {
            assert!(step.delta.hi() <= step.delta_bound.hi());
        }
        // Non-resonant: the normal-form conjugator is unique, so the
        // degree-by-degree oracle must agree exactly.
        let formal = formal_linearize(&f).unwrap();
        assert_eq!(lin.psi, formal);
        // r' >= 1/B.
        let floor = Interval::exact(rat(1, lin.schedule.b as i64));
        assert!(lin.r_prime.mag().certainly_gt(&floor));
    }

    #[test]
    fn formal_linearize_quadratic_hand_formula() {
        // f = 6x + a x^2: Psi_hat = (a/(lambda^2 - lambda)) x^2 + O(x^3).
        let f = lambda_x_plus(4, 3, 1, 2);
        let psi = formal_linearize(&f).unwrap();
        let expect = s(3, 1).div(&s(30, 1)).unwrap();
        assert_eq!(psi.component(0).coeff_or_zero(&Word::from_letters(&[1, 1])), expect);
        // f linear -> identity.
        let lin = EndoTuple::linear_diagonal(1, 4, &[s(6, 1)]).unwrap();
        let id = formal_linearize(&lin).unwrap();
        assert_eq!(id, EndoTuple::identity(1, 4, 5, Backend::Exact).unwrap());
    }

    #[test]
    fn linearize_resonant_compliant_two_variables() {
        // lambda = (u, u^2): resonant slot (1,1) in component 2 left at
        // zero; small compliant nonlinear terms scaled by 5^5.
        let deg = 6;
        let mut c1 = NCSeries::zero(2, deg, 5, Backend::Exact);
        c1.set(Word::single(1), s(6, 1)).unwrap();
        c1.set(Word::from_letters(&[1, 2]), s(3125, 1)).unwrap();
        c1.set(Word::from_letters(&[2, 1]), s(2 * 3125, 1)).unwrap();
        let mut c2 = NCSeries::zero(2, deg, 5, Backend::Exact);
        c2.set(Word::single(2), s(36, 1)).unwrap();
        c2.set(Word::from_letters(&[1, 2]), s(3125, 1)).unwrap();
        let f = EndoTuple::new(vec![c1, c2]).unwrap();
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 20), rat(1, 1)).unwrap();
        let lin = linearize(&f, &r, &params, &LinearizeOptions::default()).unwrap();
        assert!(lin.residual.is_zero());
        // Resonant psi-coefficient stays zero.
        assert!(lin.psi.component(1).coeff(&Word::from_letters(&[1, 1])).is_none());
        // The conjugated outputs of the driver and the oracle agree.
        let formal = formal_linearize(&f).unwrap();
        let ax = EndoTuple::linear_diagonal(2, deg, &lin.lambdas).unwrap();
        let conj_formal = formal
            .invert_unchecked()
            .unwrap()
            .compose(&f.compose(&formal).unwrap())
            .unwrap();
        assert_eq!(conj_formal, ax);
    }

    #[test]
    fn eigen_coordinates_cubic() {
        let f = lambda_x_plus(6, 1, 1, 3);
        let r = Radius::from_log(5, rat(2, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let eig = eigen_coordinates(&f, &r, &params, &LinearizeOptions::default()).unwrap();
        assert_eq!(eig.expansion_certified_to, 6);
        // y o f = lambda y.
        let y = &eig.ys[0];
        let lhs = y.substitute(&f).unwrap();
        let rhs = y.scalar_mul(&s(6, 1)).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn eigen_coordinates_linear_gives_variables() {
        let f = EndoTuple::linear_diagonal(2, 4, &[s(6, 1), s(36, 1)]).unwrap();
        let r = Radius::from_log(5, rat(1, 1)).unwrap();
        let params = SiegelParams::new(rat(1, 10), rat(1, 1)).unwrap();
        let eig = eigen_coordinates(&f, &r, &params, &LinearizeOptions::default()).unwrap();
        for (i, y) in eig.ys.iter().enumerate() {
            let xi = NCSeries::variable(2, 4, 5, Backend::Exact, (i + 1) as u8).unwrap();
            assert_eq!(y, &xi);
        }
    }
}
