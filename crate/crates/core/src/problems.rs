//! Benchmark problems with reference solutions.
//!
//! | name              | dim | span     | reference                        |
//! |-------------------|-----|----------|----------------------------------|
//! | `lotka_volterra`  | 2   | (0, 10)  | high-order Taylor oracle         |
//! | `fitzhugh_nagumo` | 2   | (0, 10)  | high-order Taylor oracle         |
//! | `rigid_body`      | 3   | (0, 10)  | high-order Taylor oracle         |
//! | `random_linear`   | 16  | (0, 10)  | matrix exponential               |
//! | `pcr3bp`          | 4   | (0, 10)  | high-order Taylor oracle         |
//! | `tanh_logistic`   | 1   | (0, 10)  | closed form                      |
//!
//! The oracle is a degree-20 fixed-step Taylor solve with `h = span / 1e5`,
//! cached per problem and time.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use thiserror::Error;

use crate::baselines::{solve_rk_adaptive, ButcherTableau, TapeRhs};
use crate::compile::{compile, CompiledProblem, RhsTape};
use crate::expr::{trace, Expr, ExprGraph};
use crate::integrate::{
    solve_fixed, Controller, ControllerKind, SolveError, SolveOptions, Tolerances,
};

/// Registered problem names.
pub const PROBLEM_NAMES: [&str; 6] = [
    "lotka_volterra",
    "fitzhugh_nagumo",
    "rigid_body",
    "random_linear",
    "pcr3bp",
    "tanh_logistic",
];

/// Seed of the `random_linear` instance.
pub const RANDOM_LINEAR_SEED: u64 = 20_240_917;
pub const RANDOM_LINEAR_DIM: usize = 16;

const ORACLE_DEGREE: usize = 20;
const ORACLE_STEPS: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown problem '{0}'; known problems: {}", PROBLEM_NAMES.join(", "))]
    Unknown(String),
    #[error("time {t} is outside the span ({t0}, {t_end})")]
    OutOfSpan { t: f64, t0: f64, t_end: f64 },
    #[error("reference solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// How the reference solution is obtained.
#[derive(Clone)]
pub enum Reference {
    Analytic(fn(f64) -> Vec<f64>),
    /// `u(t) = exp(A (t - t0)) u0` with row-major `A`.
    LinearExp {
        a: Vec<f64>,
    },
    /// High-order fixed-step Taylor solve.
    Oracle,
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reference::Analytic(_) => "Analytic",
            Reference::LinearExp { .. } => "LinearExp",
            Reference::Oracle => "Oracle",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: &'static str,
    pub graph: ExprGraph,
    pub u0: Vec<f64>,
    pub tspan: (f64, f64),
    pub reference: Reference,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    pub fn span(&self) -> f64 {
        self.tspan.1 - self.tspan.0
    }

    /// A fresh lazily compiling tape cache for this problem.
    pub fn compiled(&self) -> CompiledProblem {
        CompiledProblem::new(self.graph.clone())
    }

    fn check_time(&self, t: f64) -> Result<(), ProblemError> {
        let (t0, t_end) = self.tspan;
        if !(t0..=t_end).contains(&t) {
            return Err(ProblemError::OutOfSpan { t, t0, t_end });
        }
        Ok(())
    }

    /// Reference state at `t`.
    pub fn reference_solution(&self, t: f64) -> Result<Vec<f64>, ProblemError> {
        self.check_time(t)?;
        match &self.reference {
            Reference::Analytic(f) => Ok(f(t)),
            Reference::LinearExp { a } => Ok(linear_exp(a, &self.u0, t - self.tspan.0)),
            Reference::Oracle => self.oracle(t),
        }
    }

    /// The high-order Taylor oracle at `t`, regardless of the registered
    /// reference kind. Results are cached process-wide.
    pub fn oracle(&self, t: f64) -> Result<Vec<f64>, ProblemError> {
        self.check_time(t)?;
        if t == self.tspan.0 {
            return Ok(self.u0.clone());
        }
        type Cache = Mutex<HashMap<(&'static str, u64), Vec<f64>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (self.name, t.to_bits());
        if let Some(u) = cache.lock().unwrap().get(&key) {
            return Ok(u.clone());
        }
        let tape = compile(&self.graph, ORACLE_DEGREE).map_err(SolveError::from)?;
        let h = self.span() / ORACLE_STEPS;
        let sol = solve_fixed(
            &tape,
            &self.u0,
            self.tspan.0,
            t,
            h,
            &SolveOptions::default(),
        )?;
        let u = sol.final_state().to_vec();
        cache.lock().unwrap().insert(key, u.clone());
        Ok(u)
    }

    /// Independent check of the oracle: Dormand-Prince 5(4) at tolerance
    /// `tol`.
    pub fn dp5_reference(&self, t: f64, tol: f64) -> Result<Vec<f64>, ProblemError> {
        self.check_time(t)?;
        if t == self.tspan.0 {
            return Ok(self.u0.clone());
        }
        let rhs = RhsTape::new(&self.graph);
        let opts = SolveOptions {
            max_steps: 100_000_000,
            ..SolveOptions::default()
        };
        let sol = solve_rk_adaptive(
            &ButcherTableau::dp5(),
            &mut TapeRhs::new(&rhs),
            &self.u0,
            self.tspan.0,
            t,
            &Tolerances::uniform(tol)?,
            Controller::new(ControllerKind::PI),
            &opts,
        )?;
        Ok(sol.final_state().to_vec())
    }
}

/// `max |u - r| / max(1, max |r|)`.
pub fn relative_error(u: &[f64], reference: &[f64]) -> f64 {
    let diff = u
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if u.iter().chain(reference).any(|x| !x.is_finite()) {
        f64::INFINITY
    } else {
        diff / scale
    }
}

pub fn make_problem(name: &str) -> Result<Problem, ProblemError> {
    let problem = match name {
        "lotka_volterra" => lotka_volterra(),
        "fitzhugh_nagumo" => fitzhugh_nagumo(),
        "rigid_body" => rigid_body(),
        "random_linear" => random_linear(),
        "pcr3bp" => pcr3bp(),
        "tanh_logistic" => tanh_logistic(),
        other => return Err(ProblemError::Unknown(other.to_string())),
    };
    Ok(problem)
}

fn traced(dim: usize, f: impl FnOnce(&[Expr], &Expr) -> Vec<Expr>) -> ExprGraph {
    trace(dim, f).expect("registered problems trace cleanly")
}

fn lotka_volterra() -> Problem {
    let (a, b, c, d) = (1.5, 1.0, 3.0, 1.0);
    let graph = traced(2, |u, _| {
        let (x, y) = (&u[0], &u[1]);
        let xy = x * y;
        vec![a * x - b * &xy, -c * y + d * &xy]
    });
    Problem {
        name: "lotka_volterra",
        graph,
        u0: vec![1.0, 1.0],
        tspan: (0.0, 10.0),
        reference: Reference::Oracle,
    }
}

fn fitzhugh_nagumo() -> Problem {
    let (a, b, tau, l) = (0.7, 0.8, 12.5, 0.5);
    let graph = traced(2, |u, _| {
        let (v, w) = (&u[0], &u[1]);
        vec![v - v.powi(3) / 3.0 - w + l, (v + a - b * w) / tau]
    });
    Problem {
        name: "fitzhugh_nagumo",
        graph,
        u0: vec![1.0, 1.0],
        tspan: (0.0, 10.0),
        reference: Reference::Oracle,
    }
}

fn rigid_body() -> Problem {
    let (i1, i2, i3) = (-2.0, 1.25, -0.5);
    let graph = traced(3, |u, t| {
        let (x, y, z) = (&u[0], &u[1], &u[2]);
        vec![
            i1 * (y * z),
            i2 * (z * x),
            i3 * (x * y) + t.sin().powi(2) / 4.0,
        ]
    });
    Problem {
        name: "rigid_body",
        graph,
        u0: vec![1.0, 0.0, 0.9],
        tspan: (0.0, 10.0),
        reference: Reference::Oracle,
    }
}

/// Standard normal samples from xoshiro256** (seeded through splitmix64)
/// by the cosine branch of Box-Muller:
/// `z = sqrt(-2 ln(1 - u1)) cos(2 pi u2)` with `u = (next >> 11) * 2^-53`.
pub fn normal_samples(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut uniform = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (0..n)
        .map(|_| {
            let u1 = 1.0 - uniform();
            let u2 = uniform();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

/// The seeded matrix (row-major) and initial state of `random_linear`.
pub fn random_linear_data() -> (Vec<f64>, Vec<f64>) {
    let d = RANDOM_LINEAR_DIM;
    let mut samples = normal_samples(RANDOM_LINEAR_SEED, d * d + d);
    let u0 = samples.split_off(d * d);
    (samples, u0)
}

fn random_linear() -> Problem {
    let d = RANDOM_LINEAR_DIM;
    let (a, u0) = random_linear_data();
    let graph = traced(d, |u, _| {
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| a[i * d + j] * &u[j])
                    .reduce(|acc, term| acc + term)
                    .expect("non-empty row")
            })
            .collect()
    });
    Problem {
        name: "random_linear",
        graph,
        u0,
        tspan: (0.0, 10.0),
        reference: Reference::LinearExp { a },
    }
}

fn linear_exp(a: &[f64], u0: &[f64], dt: f64) -> Vec<f64> {
    let d = u0.len();
    let m = DMatrix::from_row_slice(d, d, a) * dt;
    let u = m.exp() * DVector::from_column_slice(u0);
    u.iter().copied().collect()
}

/// Planar circular restricted three-body problem, `mu = 0.01`.
fn pcr3bp() -> Problem {
    let mu = 0.01;
    let graph = traced(4, |u, _| {
        let (x, y, px, py) = (&u[0], &u[1], &u[2], &u[3]);
        let y2 = y * y;
        let r1 = ((x - mu).powi(2) + &y2).powf(1.5);
        let r2 = ((x + (1.0 - mu)).powi(2) + &y2).powf(1.5);
        vec![
            px + y,
            py - x,
            -(1.0 - mu) * (x - mu) / &r1 - mu * (x + (1.0 - mu)) / &r2 + py,
            -(1.0 - mu) * y / &r1 - mu * y / &r2 - px,
        ]
    });
    Problem {
        name: "pcr3bp",
        graph,
        u0: vec![-0.80, 0.0, 0.0, -0.63],
        tspan: (0.0, 10.0),
        reference: Reference::Oracle,
    }
}

const TANH_C: f64 = 2.0;
const TANH_DELTA: f64 = 1.0;
const TANH_T0: f64 = 5.0;
const TANH_KAPPA: f64 = 10.0;

/// `phi(t) = kappa tanh((t - t0) / delta)`.
pub fn tanh_phi(t: f64) -> f64 {
    TANH_KAPPA * ((t - TANH_T0) / TANH_DELTA).tanh()
}

/// `phi'(t) = (kappa / delta) cosh^-2((t - t0) / delta)`.
pub fn tanh_phi_prime(t: f64) -> f64 {
    TANH_KAPPA / TANH_DELTA / ((t - TANH_T0) / TANH_DELTA).cosh().powi(2)
}

fn tanh_exact(t: f64) -> Vec<f64> {
    vec![1.0 / (1.0 + TANH_C * (-tanh_phi(t)).exp())]
}

/// Logistic growth `y' = phi'(t) (y - y^2)` whose rate peaks sharply at
/// `t0 = 5`. Starts from the exact solution at `t = 0`, which passes
/// through `1 / (1 + c)` at `t0`.
fn tanh_logistic() -> Problem {
    let graph = traced(1, |u, t| {
        let y = &u[0];
        let s = (t - TANH_T0) / TANH_DELTA;
        let rate = TANH_KAPPA / TANH_DELTA * s.cosh().powi(-2);
        vec![rate * (y - y * y)]
    });
    Problem {
        name: "tanh_logistic",
        graph,
        u0: tanh_exact(0.0),
        tspan: (0.0, 10.0),
        reference: Reference::Analytic(tanh_exact),
    }
}
