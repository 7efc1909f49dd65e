//! Taylor integration drivers.
//!
//! Three drivers share one step structure: evaluate a coefficient tape at
//! `(u_n, t_n)`, form the step by Horner evaluation of orders `0..=p`, and
//! use order `p + 1` as the local error estimate.
//!
//! * [`solve_fixed`] takes uniform steps.
//! * [`solve_adaptive`] adapts the step size at a fixed degree.
//! * [`solve_adaptive_degree`] adapts both, minimizing `p^2 / h` over the
//!   neighbouring degrees after every accepted step.

mod controller;
mod dense;
mod drivers;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::compile::{CoeffMatrix, CompileError, TapeError};

pub use controller::{Controller, ControllerKind};
pub use dense::dense_eval;
pub use drivers::{solve_adaptive, solve_adaptive_degree, solve_fixed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("integration span ({t0}, {t_end}) is empty or not finite")]
    InvalidSpan { t0: f64, t_end: f64 },
    #[error("step size {0} must be positive and finite")]
    InvalidStep(f64),
    #[error("tolerances must be finite, non-negative and not both zero")]
    InvalidTolerance,
    #[error("degree range [{p_min}, {p_max}] is invalid (need 2 <= p_min <= p_max)")]
    InvalidDegreePolicy { p_min: usize, p_max: usize },
    #[error("initial state has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("evaluation failed at t = {t}: {source}")]
    Evaluation { t: f64, source: TapeError },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("step limit of {max_steps} reached at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error(
        "{count} consecutive rejections at t = {t} (last step size {h:e}, scaled error {error:e})"
    )]
    TooManyRejections {
        t: f64,
        h: f64,
        error: f64,
        count: usize,
    },
    #[error("time {t} lies outside the step [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
}

/// Absolute and relative error tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    abstol: f64,
    reltol: f64,
}

impl Tolerances {
    pub fn new(abstol: f64, reltol: f64) -> Result<Self, SolveError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(abstol) || !ok(reltol) || (abstol == 0.0 && reltol == 0.0) {
            return Err(SolveError::InvalidTolerance);
        }
        Ok(Tolerances { abstol, reltol })
    }

    /// Equal absolute and relative tolerance.
    pub fn uniform(tol: f64) -> Result<Self, SolveError> {
        Tolerances::new(tol, tol)
    }

    pub fn abstol(&self) -> f64 {
        self.abstol
    }

    pub fn reltol(&self) -> f64 {
        self.reltol
    }

    /// Error scale of one component with magnitude `u`.
    pub fn scale(&self, u: f64) -> f64 {
        self.abstol + u.abs() * self.reltol
    }
}

/// How componentwise scaled errors combine into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    #[default]
    Rms,
    Max,
}

impl ErrorNorm {
    /// Combines scaled components; any non-finite component gives infinity.
    pub fn combine(self, scaled: impl Iterator<Item = f64>) -> f64 {
        let mut acc = 0.0f64;
        let mut n = 0usize;
        for s in scaled {
            if !s.is_finite() {
                return f64::INFINITY;
            }
            n += 1;
            acc = match self {
                ErrorNorm::Rms => acc + s * s,
                ErrorNorm::Max => acc.max(s.abs()),
            };
        }
        let e = match self {
            ErrorNorm::Rms if n > 0 => (acc / n as f64).sqrt(),
            _ => acc,
        };
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    }
}

/// Allowed degree range for [`solve_adaptive_degree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreePolicy {
    p_min: usize,
    p_max: usize,
}

impl DegreePolicy {
    pub fn new(p_min: usize, p_max: usize) -> Result<Self, SolveError> {
        if p_min < 2 || p_min > p_max {
            return Err(SolveError::InvalidDegreePolicy { p_min, p_max });
        }
        Ok(DegreePolicy { p_min, p_max })
    }

    pub fn p_min(&self) -> usize {
        self.p_min
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn midpoint(&self) -> usize {
        (self.p_min + self.p_max) / 2
    }

    pub fn contains(&self, p: usize) -> bool {
        (self.p_min..=self.p_max).contains(&p)
    }
}

/// One accepted step, kept for dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// End of the step; equal to `t + h` except on a clipped final step,
    /// where it is exactly the end of the span.
    pub t_next: f64,
    pub h: f64,
    pub degree: usize,
    /// Coefficients `c_0..=c_{p+1}` at the start of the step.
    pub coeffs: CoeffMatrix,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Coefficient-tape evaluations (Taylor) or unused for RK.
    pub tape_evals: usize,
    /// Right-hand-side evaluations: RK stages or initial-step probes.
    pub rhs_evals: usize,
    /// Sum of `p^2` over tape evaluations.
    pub work: u64,
    /// Accepted steps per degree.
    pub degree_histogram: BTreeMap<usize, usize>,
}

impl Stats {
    /// Sum of `p^2` over accepted steps, `p` being the degree of the step.
    /// Unlike [`Stats::work`] this ignores the extra coefficient evaluated
    /// for degree selection and the starting-step probe.
    pub fn step_work(&self) -> u64 {
        self.degree_histogram
            .iter()
            .map(|(&p, &n)| (p * p * n) as u64)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Accepted times, starting with `t0` and ending exactly at `t_end`.
    pub ts: Vec<f64>,
    pub us: Vec<Vec<f64>>,
    /// Degree (or method order) used for each accepted step.
    pub degrees: Vec<usize>,
    /// Per-step records when dense output was requested.
    pub records: Vec<StepRecord>,
    pub stats: Stats,
}

impl Solution {
    pub(crate) fn start(t0: f64, u0: &[f64]) -> Self {
        Solution {
            ts: vec![t0],
            us: vec![u0.to_vec()],
            degrees: Vec::new(),
            records: Vec::new(),
            stats: Stats::default(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, u: &[f64], degree: usize) {
        self.ts.push(t);
        self.us.push(u.to_vec());
        self.degrees.push(degree);
        self.stats.steps_accepted += 1;
        *self.stats.degree_histogram.entry(degree).or_insert(0) += 1;
    }

    pub fn final_time(&self) -> f64 {
        *self.ts.last().expect("solutions start with t0")
    }

    pub fn final_state(&self) -> &[f64] {
        self.us.last().expect("solutions start with u0")
    }

    /// Accepted step sizes paired with their start times.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    /// Dense output at `t`, using the stored records.
    pub fn dense(&self, t: f64) -> Result<Vec<f64>, SolveError> {
        let (first, last) = match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => (a.t, b.t_next),
            _ => {
                return Err(SolveError::OutOfRange {
                    t,
                    start: self.ts[0],
                    end: self.ts[0],
                })
            }
        };
        if !(first..=last).contains(&t) {
            return Err(SolveError::OutOfRange {
                t,
                start: first,
                end: last,
            });
        }
        let idx = self.records.partition_point(|r| r.t_next < t);
        dense_eval(&self.records[idx.min(self.records.len() - 1)], t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub norm: ErrorNorm,
    pub max_steps: usize,
    pub max_consecutive_rejections: usize,
    /// Keep per-step coefficients for dense output.
    pub dense: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            h0: None,
            norm: ErrorNorm::Rms,
            max_steps: 10_000_000,
            max_consecutive_rejections: 20,
            dense: false,
        }
    }
}

/// `u_{n+1} = sum_{k=0}^{p} c_k h^k`, by Horner's rule per component.
pub fn taylor_step(coeffs: &CoeffMatrix, degree: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.dim()];
    taylor_step_into(coeffs, degree, h, &mut out);
    out
}

pub(crate) fn taylor_step_into(coeffs: &CoeffMatrix, degree: usize, h: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &coeffs.row(i)[..=degree];
        *o = row.iter().rev().fold(0.0, |acc, &c| acc * h + c);
    }
}

/// Scaled error `|| c_{p+1} h^{p+1} / (T_a + |c_0| T_r) ||`, using
/// coefficient `order` as `c_{p+1}`.
pub fn scaled_error(
    coeffs: &CoeffMatrix,
    order: usize,
    h: f64,
    tol: &Tolerances,
    norm: ErrorNorm,
) -> f64 {
    let hp = h.powi(order as i32);
    norm.combine((0..coeffs.dim()).map(|i| {
        let c = coeffs.get(i, order);
        let num = c * hp;
        if num == 0.0 {
            0.0
        } else {
            (num / tol.scale(coeffs.get(i, 0))).abs()
        }
    }))
}

/// Classical starting step from two derivative evaluations.
///
/// `f0` is `f(u0, t0)`. `f_at` evaluates the derivative at a trial point.
/// Falls back to `1e-6 * span` when any quantity degenerates.
#[allow(clippy::too_many_arguments)]
pub(crate) fn initial_step(
    u0: &[f64],
    t0: f64,
    f0: &[f64],
    span: f64,
    order: usize,
    tol: &Tolerances,
    norm: ErrorNorm,
    mut f_at: impl FnMut(&[f64], f64) -> Option<Vec<f64>>,
) -> f64 {
    let fallback = 1e-6 * span;
    let weighted = |v: &[f64]| norm.combine(v.iter().zip(u0).map(|(x, u)| x / tol.scale(*u)));
    let d0 = weighted(u0);
    let d1 = weighted(f0);
    if !d0.is_finite() || !d1.is_finite() {
        return fallback;
    }
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let u1: Vec<f64> = u0.iter().zip(f0).map(|(u, f)| u + h0 * f).collect();
    let Some(f1) = f_at(&u1, t0 + h0) else {
        return fallback;
    };
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = weighted(&diff) / h0;
    if !d2.is_finite() {
        return fallback;
    }
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order + 1) as f64)
    };
    let h = (100.0 * h0).min(h1).min(span);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        fallback
    }
}

pub(crate) fn check_span(t0: f64, t_end: f64) -> Result<f64, SolveError> {
    let span = t_end - t0;
    if !(t0.is_finite() && t_end.is_finite() && span > 0.0) {
        return Err(SolveError::InvalidSpan { t0, t_end });
    }
    Ok(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_step() {
        let c = CoeffMatrix::from_rows(&[vec![1.0, 1.0, 0.5, 1.0 / 6.0, 99.0]]);
        let u = taylor_step(&c, 3, 1.0);
        assert!((u[0] - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(taylor_step(&c, 3, 0.0), vec![1.0]);
    }

    #[test]
    fn scaled_error_examples() {
        let tol = Tolerances::new(1.0, 0.0).unwrap();
        let zero = CoeffMatrix::from_rows(&[vec![1.0, 2.0, 0.0]]);
        assert_eq!(scaled_error(&zero, 2, 0.5, &tol, ErrorNorm::Rms), 0.0);
        let unit = CoeffMatrix::from_rows(&[vec![0.0, 0.0, 1.0]]);
        assert_eq!(scaled_error(&unit, 2, 1.0, &tol, ErrorNorm::Rms), 1.0);
        let two = CoeffMatrix::from_rows(&[vec![0.0, 0.0, 3.0], vec![0.0, 0.0, 4.0]]);
        let e = scaled_error(&two, 2, 0.5, &tol, ErrorNorm::Rms);
        assert!((e - ((0.5625f64 + 1.0) / 2.0).sqrt()).abs() < 1e-15);
        assert_eq!(scaled_error(&two, 2, 0.5, &tol, ErrorNorm::Max), 1.0);
        let bad = CoeffMatrix::from_rows(&[vec![0.0, 0.0, f64::NAN]]);
        assert_eq!(
            scaled_error(&bad, 2, 0.5, &tol, ErrorNorm::Rms),
            f64::INFINITY
        );
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerances::new(0.0, 0.0).is_err());
        assert!(Tolerances::new(-1.0, 1.0).is_err());
        assert!(Tolerances::new(f64::NAN, 1.0).is_err());
        assert!(Tolerances::new(0.0, 1e-8).is_ok());
        assert!(DegreePolicy::new(1, 4).is_err());
        assert!(DegreePolicy::new(6, 5).is_err());
        assert_eq!(DegreePolicy::new(6, 12).unwrap().midpoint(), 9);
    }
}
