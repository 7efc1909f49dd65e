use crate::compile::{CoeffMatrix, CoefficientTape, CompiledProblem};

use super::{
    check_span, initial_step, scaled_error, taylor_step_into, Controller, DegreePolicy, Solution,
    SolveError, SolveOptions, StepRecord, Tolerances,
};

/// Fixed-step Taylor integration with the degree of `tape`.
///
/// Steps end at `t0 + k h`; the last one is shortened to land exactly on
/// `t_end`.
pub fn solve_fixed(
    tape: &CoefficientTape,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    h: f64,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    let span = check_span(t0, t_end)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(SolveError::InvalidStep(h));
    }
    check_dim(tape.dim(), u0)?;
    let p = tape.degree();
    let mut scratch = tape.scratch();
    let mut coeffs = CoeffMatrix::zeros(tape.dim(), tape.width());
    let mut sol = Solution::start(t0, u0);
    let mut u = u0.to_vec();
    let mut u_next = vec![0.0; u0.len()];
    let mut t = t0;
    let mut k = 0usize;
    while t < t_end {
        if k >= opts.max_steps {
            return Err(SolveError::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        tape.eval_into(&u, t, &mut scratch, &mut coeffs)
            .map_err(|source| SolveError::Evaluation { t, source })?;
        sol.stats.tape_evals += 1;
        sol.stats.work += (p * p) as u64;
        let nominal = t0 + (k + 1) as f64 * h;
        let (t_next, step) = if nominal >= t_end || t_end - nominal <= 1e-10 * span {
            (t_end, t_end - t)
        } else {
            (nominal, h)
        };
        taylor_step_into(&coeffs, p, step, &mut u_next);
        if opts.dense {
            sol.records.push(record(&coeffs, p, t, t_next, step));
        }
        std::mem::swap(&mut u, &mut u_next);
        t = t_next;
        k += 1;
        sol.push(t, &u, p);
    }
    Ok(sol)
}

/// Adaptive step size at the fixed degree of `tape`.
///
/// A step is accepted when its scaled error is at most 1. A rejected step
/// leaves time, state and controller memory untouched and retries with a
/// smaller step, reusing the coefficients since they do not depend on `h`.
pub fn solve_adaptive(
    tape: &CoefficientTape,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    tol: &Tolerances,
    ctrl: Controller,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    let p = tape.degree();
    let ladder = Ladder {
        tapes: vec![tape],
        p_min: p,
    };
    ladder.run(u0, t0, t_end, tol, ctrl, p, opts)
}

/// Adaptive degree and step size.
///
/// After each accepted step every neighbouring degree `q` in
/// `{p-1, p, p+1}` (within the policy) gets an error estimate and a step
/// proposal `h_q`; the degree minimizing `q^2 / h_q` is used next, ties
/// going to the smaller degree. Acceptance uses the current degree's error.
///
/// While `p < p_max`, the degree-`(p+1)` tape is evaluated in place of the
/// degree-`p` tape: its leading `p + 2` coefficients are the same, and the
/// extra one provides the estimate for `p + 1`.
#[allow(clippy::too_many_arguments)]
pub fn solve_adaptive_degree(
    problem: &CompiledProblem,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    tol: &Tolerances,
    ctrl: Controller,
    policy: DegreePolicy,
    p0: Option<usize>,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    let p0 = p0.unwrap_or_else(|| policy.midpoint());
    if !policy.contains(p0) {
        return Err(SolveError::InvalidDegreePolicy {
            p_min: policy.p_min(),
            p_max: policy.p_max(),
        });
    }
    let tapes = (policy.p_min()..=policy.p_max())
        .map(|p| problem.tape(p))
        .collect::<Result<Vec<_>, _>>()?;
    let ladder = Ladder {
        tapes: tapes.iter().map(|t| t.as_ref()).collect(),
        p_min: policy.p_min(),
    };
    ladder.run(u0, t0, t_end, tol, ctrl, p0, opts)
}

/// Tapes for consecutive degrees starting at `p_min`.
struct Ladder<'a> {
    tapes: Vec<&'a CoefficientTape>,
    p_min: usize,
}

impl Ladder<'_> {
    fn p_max(&self) -> usize {
        self.p_min + self.tapes.len() - 1
    }

    fn tape(&self, p: usize) -> &CoefficientTape {
        self.tapes[p - self.p_min]
    }

    /// Degree of the tape evaluated while stepping at degree `p`.
    fn eval_degree(&self, p: usize) -> usize {
        if p < self.p_max() {
            p + 1
        } else {
            p
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        u0: &[f64],
        t0: f64,
        t_end: f64,
        tol: &Tolerances,
        mut ctrl: Controller,
        p0: usize,
        opts: &SolveOptions,
    ) -> Result<Solution, SolveError> {
        let span = check_span(t0, t_end)?;
        let dim = self.tapes[0].dim();
        check_dim(dim, u0)?;
        let (p_min, p_max) = (self.p_min, self.p_max());
        let n_slots = self.tapes.iter().map(|t| t.n_slots()).max().unwrap_or(0);
        let mut scratch = vec![0.0; n_slots];
        let mut bufs: Vec<CoeffMatrix> = self
            .tapes
            .iter()
            .map(|t| CoeffMatrix::zeros(dim, t.width()))
            .collect();
        let mut sol = Solution::start(t0, u0);

        let mut eval = |q: usize,
                        u: &[f64],
                        t: f64,
                        bufs: &mut [CoeffMatrix],
                        sol: &mut Solution|
         -> Result<(), SolveError> {
            self.tape(q)
                .eval_into(u, t, &mut scratch, &mut bufs[q - p_min])
                .map_err(|source| SolveError::Evaluation { t, source })?;
            sol.stats.tape_evals += 1;
            sol.stats.work += (q * q) as u64;
            Ok(())
        };

        let mut p = p0;
        let mut t = t0;
        let mut u = u0.to_vec();
        let mut u_next = vec![0.0; dim];
        let mut q = self.eval_degree(p);
        eval(q, &u, t, &mut bufs, &mut sol)?;

        let mut h = match opts.h0 {
            Some(h0) if h0 > 0.0 && h0.is_finite() => h0.min(span),
            Some(h0) => return Err(SolveError::InvalidStep(h0)),
            None => {
                let f0: Vec<f64> = bufs[q - p_min].order(1).collect();
                let mut probe = bufs[q - p_min].clone();
                initial_step(&u, t, &f0, span, p, tol, opts.norm, |u1, t1| {
                    self.tape(q)
                        .eval_into(u1, t1, &mut vec![0.0; n_slots], &mut probe)
                        .ok()?;
                    sol.stats.tape_evals += 1;
                    sol.stats.work += (q * q) as u64;
                    Some(probe.order(1).collect())
                })
            }
        };

        let mut consecutive = 0usize;
        while t < t_end {
            if sol.stats.steps_accepted + sol.stats.steps_rejected >= opts.max_steps {
                return Err(SolveError::TooManySteps {
                    t,
                    max_steps: opts.max_steps,
                });
            }
            let remaining = t_end - t;
            let last = h >= remaining || remaining - h <= 1e-12 * span;
            let step = if last { remaining } else { h };
            let c = &bufs[q - p_min];
            let e = scaled_error(c, p + 1, step, tol, opts.norm);

            if !(e <= 1.0) {
                sol.stats.steps_rejected += 1;
                consecutive += 1;
                h = ctrl.reject(step, e, p);
                if consecutive >= opts.max_consecutive_rejections || !(h > 0.0) {
                    return Err(SolveError::TooManyRejections {
                        t,
                        h: step,
                        error: e,
                        count: consecutive,
                    });
                }
                continue;
            }
            consecutive = 0;
            taylor_step_into(c, p, step, &mut u_next);

            let mut next = (p, ctrl.propose(step, e, p));
            let mut best = ratio(p, next.1);
            for cand in p.saturating_sub(1).max(p_min)..=(p + 1).min(p_max) {
                if cand == p {
                    continue;
                }
                let e_c = scaled_error(c, cand + 1, step, tol, opts.norm);
                let h_c = ctrl.propose(step, e_c, cand);
                let r = ratio(cand, h_c);
                if r < best || (r == best && cand < next.0) {
                    best = r;
                    next = (cand, h_c);
                }
            }
            ctrl.accept(e);

            let t_next = if last { t_end } else { t + step };
            if opts.dense {
                sol.records.push(record(c, p, t, t_next, step));
            }
            std::mem::swap(&mut u, &mut u_next);
            t = t_next;
            sol.push(t, &u, p);

            (p, h) = next;
            if t < t_end {
                q = self.eval_degree(p);
                eval(q, &u, t, &mut bufs, &mut sol)?;
            }
        }
        Ok(sol)
    }
}

fn ratio(p: usize, h: f64) -> f64 {
    (p * p) as f64 / h
}

fn record(c: &CoeffMatrix, p: usize, t: f64, t_next: f64, h: f64) -> StepRecord {
    let mut coeffs = CoeffMatrix::zeros(c.dim(), p + 2);
    for i in 0..c.dim() {
        coeffs.row_mut(i).copy_from_slice(&c.row(i)[..p + 2]);
    }
    StepRecord {
        t,
        t_next,
        h,
        degree: p,
        coeffs,
    }
}

fn check_dim(dim: usize, u0: &[f64]) -> Result<(), SolveError> {
    if u0.len() != dim {
        return Err(SolveError::StateLength {
            expected: dim,
            got: u0.len(),
        });
    }
    Ok(())
}
