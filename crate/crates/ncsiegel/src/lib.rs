//! l-adic noncommutative power-series dynamics at desk scale.
//!
//! The crate implements the Banach algebra of truncated noncommutative
//! power series over Q_l with the r-norm sup_I |a_I| r^|I|, the monoid of
//! origin-fixing substitutions with compositional inversion, jets and
//! resonance analysis, a Siegel-style linearization driver with a fully
//! certified constants schedule, empirical small-divisor certificates, and
//! the extension of representations trivial mod l^N to the convergent
//! algebra together with the weight-kill unipotence bookkeeping.
//!
//! All norm and schedule comparisons go through exact rational interval
//! arithmetic with outward rounding, so every inequality the engine accepts
//! holds as stated. Precision loss in the capped backend is tracked per
//! coefficient and surfaces as explicit flags or errors, never silently.

pub mod divisors;
pub mod endo;
pub mod error;
pub mod interval;
pub mod jet;
pub mod rep;
pub mod sample;
pub mod scalar;
pub mod series;
pub mod siegel;
pub mod word;

pub use endo::EndoTuple;
pub use error::{Error, Result};
pub use interval::Interval;
pub use scalar::{Backend, Scalar, Valuation};
pub use series::{NCSeries, RNorm, Radius};
pub use word::Word;

/// Default relative precision (known unit digits) for the capped backend.
pub const DEFAULT_PRECISION: u32 = 40;
