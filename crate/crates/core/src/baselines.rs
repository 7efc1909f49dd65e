//! Embedded explicit Runge-Kutta methods for comparison with Taylor
//! integration. They share the Taylor drivers' error scaling, controller
//! and solution type.

use thiserror::Error;

use crate::compile::RhsTape;
use crate::expr::ExprGraph;
use crate::integrate::{Controller, Solution, SolveError, SolveOptions, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableauError {
    #[error("tableau arrays have inconsistent sizes")]
    Shape,
    #[error("weights sum to {0}, expected 1")]
    Weights(f64),
    #[error("embedded weights sum to {0}, expected 1")]
    EmbeddedWeights(f64),
    #[error("row {row} of the matrix sums to {sum}, node is {node}")]
    RowSum { row: usize, sum: f64, node: f64 },
    #[error("second-order condition gives {0}, expected 1/2")]
    SecondOrder(f64),
}

/// Explicit Butcher tableau with an embedded method. The matrix is stored
/// as its strictly lower triangle, row `i` holding `i` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub name: &'static str,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    b_hat: Vec<f64>,
    order: usize,
    embedded_order: usize,
}

const CHECK_TOL: f64 = 1e-14;

impl ButcherTableau {
    /// Validates consistency: weights and embedded weights sum to one, rows
    /// of the matrix sum to the nodes and `sum b c = 1/2`, all to 1e-14.
    pub fn new(
        name: &'static str,
        c: Vec<f64>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        b_hat: Vec<f64>,
        order: usize,
        embedded_order: usize,
    ) -> Result<Self, TableauError> {
        let s = c.len();
        if b.len() != s
            || b_hat.len() != s
            || a.len() != s
            || a.iter().enumerate().any(|(i, row)| row.len() != i)
        {
            return Err(TableauError::Shape);
        }
        let sum_b: f64 = b.iter().sum();
        if (sum_b - 1.0).abs() > CHECK_TOL {
            return Err(TableauError::Weights(sum_b));
        }
        let sum_bh: f64 = b_hat.iter().sum();
        if (sum_bh - 1.0).abs() > CHECK_TOL {
            return Err(TableauError::EmbeddedWeights(sum_bh));
        }
        for (row, (ai, &node)) in a.iter().zip(&c).enumerate() {
            let sum: f64 = ai.iter().sum();
            if (sum - node).abs() > CHECK_TOL {
                return Err(TableauError::RowSum { row, sum, node });
            }
        }
        let bc: f64 = b.iter().zip(&c).map(|(b, c)| b * c).sum();
        if (bc - 0.5).abs() > CHECK_TOL {
            return Err(TableauError::SecondOrder(bc));
        }
        Ok(ButcherTableau {
            name,
            c,
            a,
            b,
            b_hat,
            order,
            embedded_order,
        })
    }

    /// Dormand-Prince 5(4).
    pub fn dp5() -> Self {
        let a = vec![
            vec![],
            vec![1.0 / 5.0],
            vec![3.0 / 40.0, 9.0 / 40.0],
            vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
            vec![
                19372.0 / 6561.0,
                -25360.0 / 2187.0,
                64448.0 / 6561.0,
                -212.0 / 729.0,
            ],
            vec![
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
            ],
            vec![
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
            ],
        ];
        let b = vec![
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ];
        let b_hat = vec![
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let c = vec![0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
        ButcherTableau::new("dp5", c, a, b, b_hat, 5, 4).expect("valid DP5 tableau")
    }

    /// Tsitouras 5(4).
    #[allow(clippy::excessive_precision)]
    pub fn tsit5() -> Self {
        let a = vec![
            vec![],
            vec![0.161],
            vec![-0.008480655492356989, 0.335480655492357],
            vec![2.897153057105493, -6.359448489975075, 4.3622954328695815],
            vec![
                5.325864828439257,
                -11.748883564062828,
                7.4955393428898365,
                -0.09249506636175525,
            ],
            vec![
                5.86145544294642,
                -12.92096931784711,
                8.159367898576159,
                -0.071584973281401,
                -0.028269050394068383,
            ],
            vec![
                0.09646076681806523,
                0.01,
                0.4798896504144996,
                1.379008574103742,
                -3.290069515436081,
                2.324710524099774,
            ],
        ];
        let mut b = a[6].clone();
        b.push(0.0);
        let b_tilde = [
            -0.00178001105222577714,
            -0.0008164344596567469,
            0.007880878010261995,
            -0.1447110071732629,
            0.5823571654525552,
            -0.45808210592918697,
            1.0 / 66.0,
        ];
        let b_hat = b.iter().zip(b_tilde).map(|(b, d)| b - d).collect();
        let c = vec![0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0];
        ButcherTableau::new("tsit5", c, a, b, b_hat, 5, 4).expect("valid Tsit5 tableau")
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn embedded_order(&self) -> usize {
        self.embedded_order
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_hat(&self) -> &[f64] {
        &self.b_hat
    }

    /// Row `i` of the strictly lower triangular matrix.
    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i]
    }
}

/// A right-hand side `f(u, t)` for Runge-Kutta stages. Failures are
/// signalled by non-finite outputs.
pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&mut self, u: &[f64], t: f64, du: &mut [f64]);
}

/// An [`RhsTape`] with its own scratch buffer.
#[derive(Debug, Clone)]
pub struct TapeRhs<'a> {
    tape: &'a RhsTape,
    scratch: Vec<f64>,
}

impl<'a> TapeRhs<'a> {
    pub fn new(tape: &'a RhsTape) -> Self {
        TapeRhs {
            tape,
            scratch: vec![0.0; tape.n_slots()],
        }
    }
}

impl Rhs for TapeRhs<'_> {
    fn dim(&self) -> usize {
        self.tape.dim()
    }

    fn eval(&mut self, u: &[f64], t: f64, du: &mut [f64]) {
        // On failure the outputs already hold the offending non-finite values.
        let _ = self.tape.eval(u, t, &mut self.scratch, du);
    }
}

/// Direct graph interpretation; slower than [`TapeRhs`].
impl Rhs for &ExprGraph {
    fn dim(&self) -> usize {
        ExprGraph::dim(self)
    }

    fn eval(&mut self, u: &[f64], t: f64, du: &mut [f64]) {
        match ExprGraph::eval(self, u, t) {
            Ok(v) => du.copy_from_slice(&v),
            Err(_) => du.fill(f64::NAN),
        }
    }
}

/// A closure `f(u, t, du)` of known dimension.
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64], f64, &mut [f64])> FnRhs<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnRhs { dim, f }
    }
}

impl<F: FnMut(&[f64], f64, &mut [f64])> Rhs for FnRhs<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, u: &[f64], t: f64, du: &mut [f64]) {
        (self.f)(u, t, du)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("stage {stage} produced a non-finite derivative at t = {t}")]
pub struct StageError {
    pub stage: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkStep {
    pub u_next: Vec<f64>,
    /// `h * sum (b_i - b_hat_i) k_i`.
    pub error: Vec<f64>,
}

/// Reusable stage storage.
#[derive(Debug, Clone)]
struct Workspace {
    k: Vec<Vec<f64>>,
    stage_u: Vec<f64>,
}

impl Workspace {
    fn new(stages: usize, dim: usize) -> Self {
        Workspace {
            k: vec![vec![0.0; dim]; stages],
            stage_u: vec![0.0; dim],
        }
    }
}

/// One explicit Runge-Kutta step with its embedded error estimate.
pub fn rk_step(
    tab: &ButcherTableau,
    f: &mut impl Rhs,
    u: &[f64],
    t: f64,
    h: f64,
) -> Result<RkStep, StageError> {
    let mut ws = Workspace::new(tab.stages(), u.len());
    let mut out = RkStep {
        u_next: vec![0.0; u.len()],
        error: vec![0.0; u.len()],
    };
    step_into(tab, f, u, t, h, &mut ws, &mut out)?;
    Ok(out)
}

fn step_into(
    tab: &ButcherTableau,
    f: &mut impl Rhs,
    u: &[f64],
    t: f64,
    h: f64,
    ws: &mut Workspace,
    out: &mut RkStep,
) -> Result<(), StageError> {
    for s in 0..tab.stages() {
        let (done, rest) = ws.k.split_at_mut(s);
        for (i, su) in ws.stage_u.iter_mut().enumerate() {
            let acc: f64 = tab.a[s]
                .iter()
                .zip(done.iter())
                .map(|(a, k)| a * k[i])
                .sum();
            *su = u[i] + h * acc;
        }
        let ts = t + tab.c[s] * h;
        f.eval(&ws.stage_u, ts, &mut rest[0]);
        if rest[0].iter().any(|x| !x.is_finite()) {
            return Err(StageError { stage: s, t: ts });
        }
    }
    for i in 0..u.len() {
        let mut sol = 0.0;
        let mut err = 0.0;
        for (s, k) in ws.k.iter().enumerate() {
            sol += tab.b[s] * k[i];
            err += (tab.b[s] - tab.b_hat[s]) * k[i];
        }
        out.u_next[i] = u[i] + h * sol;
        out.error[i] = h * err;
    }
    Ok(())
}

/// Adaptive Runge-Kutta integration with the same acceptance test, error
/// scaling and controller as the adaptive Taylor driver. The controller
/// works with the embedded order. A step whose stages turn non-finite is
/// rejected.
#[allow(clippy::too_many_arguments)]
pub fn solve_rk_adaptive(
    tab: &ButcherTableau,
    f: &mut impl Rhs,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    tol: &Tolerances,
    mut ctrl: Controller,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    let span = t_end - t0;
    if !(t0.is_finite() && t_end.is_finite() && span > 0.0) {
        return Err(SolveError::InvalidSpan { t0, t_end });
    }
    let dim = f.dim();
    if u0.len() != dim {
        return Err(SolveError::StateLength {
            expected: dim,
            got: u0.len(),
        });
    }
    let p = tab.embedded_order().min(tab.order());
    let stages = tab.stages();
    let mut ws = Workspace::new(stages, dim);
    let mut step = RkStep {
        u_next: vec![0.0; dim],
        error: vec![0.0; dim],
    };
    let mut sol = Solution::start(t0, u0);
    let mut u = u0.to_vec();
    let mut t = t0;

    let mut h = match opts.h0 {
        Some(h0) if h0 > 0.0 && h0.is_finite() => h0.min(span),
        Some(h0) => return Err(SolveError::InvalidStep(h0)),
        None => {
            let mut f0 = vec![0.0; dim];
            f.eval(&u, t, &mut f0);
            sol.stats.rhs_evals += 1;
            crate::integrate::initial_step(&u, t, &f0, span, p, tol, opts.norm, |u1, t1| {
                let mut f1 = vec![0.0; dim];
                f.eval(u1, t1, &mut f1);
                sol.stats.rhs_evals += 1;
                Some(f1)
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
        let dt = if last { remaining } else { h };
        sol.stats.rhs_evals += stages;
        let e = match step_into(tab, f, &u, t, dt, &mut ws, &mut step) {
            Ok(()) => opts
                .norm
                .combine(step.error.iter().zip(&u).map(|(err, ui)| {
                    if *err == 0.0 {
                        0.0
                    } else {
                        err / tol.scale(*ui)
                    }
                })),
            Err(_) => f64::INFINITY,
        };
        if !(e <= 1.0) {
            sol.stats.steps_rejected += 1;
            consecutive += 1;
            h = ctrl.reject(dt, e, p);
            if consecutive >= opts.max_consecutive_rejections || !(h > 0.0) {
                return Err(SolveError::TooManyRejections {
                    t,
                    h: dt,
                    error: e,
                    count: consecutive,
                });
            }
            continue;
        }
        consecutive = 0;
        h = ctrl.propose(dt, e, p);
        ctrl.accept(e);
        std::mem::swap(&mut u, &mut step.u_next);
        t = if last { t_end } else { t + dt };
        sol.push(t, &u, tab.order());
    }
    Ok(sol)
}
