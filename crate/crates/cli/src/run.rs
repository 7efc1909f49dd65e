use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use taylode::baselines::{solve_rk_adaptive, ButcherTableau, TapeRhs};
use taylode::compile::{compile_stats, CompileError, CompiledProblem, RhsTape};
use taylode::integrate::{
    solve_adaptive, solve_adaptive_degree, Controller, ControllerKind, Solution, SolveError,
    SolveOptions, Tolerances,
};
use taylode::problems::{relative_error, Problem, ProblemError};

use crate::config::BenchConfig;
use crate::method::MethodSpec;

/// A problem together with its lazily compiled tapes.
pub struct Prepared {
    pub problem: Problem,
    pub compiled: CompiledProblem,
    pub rhs: RhsTape,
    pub rhs_build_time: Duration,
}

impl Prepared {
    pub fn new(problem: Problem) -> Self {
        let compiled = problem.compiled();
        let start = Instant::now();
        let rhs = RhsTape::new(&problem.graph);
        let rhs_build_time = start.elapsed();
        Prepared {
            problem,
            compiled,
            rhs,
            rhs_build_time,
        }
    }

    /// Integrates over the problem's span with `method`.
    pub fn solve(
        &self,
        method: MethodSpec,
        tol: &Tolerances,
        kind: ControllerKind,
        opts: &SolveOptions,
    ) -> Result<Solution, SolveError> {
        let p = &self.problem;
        let (t0, t_end) = p.tspan;
        let ctrl = Controller::new(kind);
        match method {
            MethodSpec::Taylor(degree) => {
                let tape = self.compiled.tape(degree)?;
                solve_adaptive(&tape, &p.u0, t0, t_end, tol, ctrl, opts)
            }
            MethodSpec::TaylorAdaptive(lo, hi) => {
                let policy = method.policy().ok_or(SolveError::InvalidDegreePolicy {
                    p_min: lo,
                    p_max: hi,
                })?;
                solve_adaptive_degree(
                    &self.compiled,
                    &p.u0,
                    t0,
                    t_end,
                    tol,
                    ctrl,
                    policy,
                    None,
                    opts,
                )
            }
            MethodSpec::Dp5 | MethodSpec::Tsit5 => {
                let tab = if method == MethodSpec::Dp5 {
                    ButcherTableau::dp5()
                } else {
                    ButcherTableau::tsit5()
                };
                let mut f = TapeRhs::new(&self.rhs);
                solve_rk_adaptive(&tab, &mut f, &p.u0, t0, t_end, tol, ctrl, opts)
            }
        }
    }

    /// Time spent building what `method` evaluates.
    pub fn setup_time(&self, method: MethodSpec) -> Duration {
        if method.is_taylor() {
            self.compiled.compile_time()
        } else {
            self.rhs_build_time
        }
    }
}

/// Evaluation count and work of a run: tape evaluations and the sum of
/// squared degrees for Taylor methods, stage evaluations for Runge-Kutta.
pub fn evals_and_work(method: MethodSpec, sol: &Solution) -> (usize, u64) {
    if method.is_taylor() {
        (sol.stats.tape_evals, sol.stats.work)
    } else {
        (sol.stats.rhs_evals, sol.stats.rhs_evals as u64)
    }
}

/// One row of a work-precision table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub problem: String,
    pub method: String,
    pub abstol: f64,
    pub reltol: f64,
    #[serde(serialize_with = "crate::report::float")]
    pub final_error: f64,
    #[serde(serialize_with = "crate::report::float")]
    pub median_wall_time_ns: f64,
    pub compile_time_ns: u64,
    pub evals: usize,
    pub work: u64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl BenchRow {
    /// Column names in output order.
    pub const COLUMNS: [&'static str; 11] = [
        "problem",
        "method",
        "abstol",
        "reltol",
        "final_error",
        "median_wall_time_ns",
        "compile_time_ns",
        "evals",
        "work",
        "steps_accepted",
        "steps_rejected",
    ];
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("cannot start worker threads: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

/// Runs every (method, tolerance) cell of `config`. A cell whose solve
/// fails yields a row with infinite error instead of aborting the sweep.
pub fn bench(config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    let problem = taylode::problems::make_problem(&config.problem)?;
    let reference = problem.reference_solution(problem.tspan.1)?;
    let cells: Vec<(MethodSpec, f64, f64)> = config
        .methods
        .iter()
        .flat_map(|&m| {
            config
                .tolerances
                .iter()
                .map(move |t| (m, t.abstol, t.reltol))
        })
        .collect();
    let run_cell = |&(method, abstol, reltol): &(MethodSpec, f64, f64)| {
        // each cell compiles its own tapes so compile time is attributable
        let prepared = Prepared::new(problem.clone());
        bench_cell(&prepared, &reference, method, abstol, reltol, config)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()?;
    Ok(pool.install(|| cells.par_iter().map(run_cell).collect()))
}

fn bench_cell(
    prepared: &Prepared,
    reference: &[f64],
    method: MethodSpec,
    abstol: f64,
    reltol: f64,
    config: &BenchConfig,
) -> BenchRow {
    let mut row = BenchRow {
        problem: prepared.problem.name.to_string(),
        method: method.to_string(),
        abstol,
        reltol,
        final_error: f64::INFINITY,
        median_wall_time_ns: f64::NAN,
        compile_time_ns: 0,
        evals: 0,
        work: 0,
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let Ok(tol) = Tolerances::new(abstol, reltol) else {
        return row;
    };
    let opts = SolveOptions::default();
    let warmup = prepared.solve(method, &tol, config.controller, &opts);
    row.compile_time_ns = prepared.setup_time(method).as_nanos() as u64;
    let Ok(sol) = warmup else {
        return row;
    };
    let mut times = Vec::with_capacity(config.repetitions);
    for _ in 0..config.repetitions {
        let start = Instant::now();
        let run = prepared.solve(method, &tol, config.controller, &opts);
        times.push(start.elapsed().as_nanos() as f64);
        if run.is_err() {
            return row;
        }
    }
    let (evals, work) = evals_and_work(method, &sol);
    row.final_error = relative_error(sol.final_state(), reference);
    row.median_wall_time_ns = taylode::median(&mut times);
    row.evals = evals;
    row.work = work;
    row.steps_accepted = sol.stats.steps_accepted;
    row.steps_rejected = sol.stats.steps_rejected;
    row
}

/// One row of a compile-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileStatsOutRow {
    pub problem: String,
    pub degree: usize,
    pub strategy: String,
    pub op_count: u64,
    pub median_eval_ns: f64,
}

impl CompileStatsOutRow {
    pub const COLUMNS: [&'static str; 5] = [
        "problem",
        "degree",
        "strategy",
        "op_count",
        "median_eval_ns",
    ];
}

pub const DEFAULT_DEGREES: [usize; 6] = [6, 8, 10, 12, 16, 20];

/// Naive versus compiled coefficient evaluation at the initial state.
pub fn compile_statistics(
    problem: &Problem,
    degrees: &[usize],
    repetitions: usize,
) -> Result<Vec<CompileStatsOutRow>, CompileError> {
    let rows = compile_stats(
        &problem.graph,
        &problem.u0,
        problem.tspan.0,
        degrees,
        repetitions,
    )?;
    Ok(rows
        .into_iter()
        .map(|r| CompileStatsOutRow {
            problem: problem.name.to_string(),
            degree: r.degree,
            strategy: r.strategy.to_string(),
            op_count: r.op_count,
            median_eval_ns: r.median_eval_ns,
        })
        .collect())
}

/// Summary printed by `solve`.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub problem: String,
    pub method: String,
    pub controller: String,
    pub abstol: f64,
    pub reltol: f64,
    pub t0: f64,
    pub t_end: f64,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub reference: Vec<f64>,
    #[serde(serialize_with = "crate::report::float")]
    pub final_error: f64,
    pub stats: StatsReport,
    pub degree_histogram: BTreeMap<usize, usize>,
    pub compile_time_ns: u64,
    pub wall_time_ns: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<DenseSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub tape_evals: usize,
    pub rhs_evals: usize,
    pub evals: usize,
    pub work: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DenseSample {
    pub t: f64,
    pub u: Vec<f64>,
}
