//! Arbitrary-order Taylor-series integration of ODEs `u' = f(u, t)`.
//!
//! The right-hand side is traced into an expression graph ([`expr`]), the
//! recursion for the solution's Taylor coefficients is unrolled symbolically
//! and compiled into a flat tape ([`compile`]), and the tape drives fixed-step,
//! adaptive-step and adaptive-degree integrators ([`integrate`]). Jet
//! arithmetic ([`jet`]) is both the naive baseline and the numerical oracle
//! for compiled tapes; embedded Runge-Kutta methods ([`baselines`]) and the
//! benchmark problem registry ([`problems`]) support work-precision studies.

// Negated float comparisons are deliberate: they treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod compile;
pub mod expr;
pub mod integrate;
pub mod jet;
pub mod problems;

/// Median of a sample; the mean of the two middle values for even lengths.
///
/// Panics on an empty sample.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
