//! Command-line front end for `taylode`: single solves with a JSON summary,
//! work-precision sweeps and compile statistics as CSV or JSON.
//!
//! ```text
//! taylode solve lotka_volterra taylor:8 --abstol 1e-10 --reltol 1e-10
//! taylode bench --problem lotka_volterra --methods taylor:8,dp5 --tolerances 1e-6,1e-8,1e-10
//! taylode bench --config sweep.json
//! taylode compile-stats pcr3bp --degrees 6,12
//! ```
//!
//! Bench CSV columns, in order: `problem, method, abstol, reltol,
//! final_error, median_wall_time_ns, compile_time_ns, evals, work,
//! steps_accepted, steps_rejected`. `evals` counts tape evaluations for
//! Taylor methods and stage evaluations for Runge-Kutta methods; `work` is
//! the sum of squared evaluated degrees for Taylor methods and equals
//! `evals` otherwise. A failed solve leaves `final_error = inf`.
//!
//! Compile-stats CSV columns: `problem, degree, strategy, op_count,
//! median_eval_ns`.

pub mod cli;
pub mod config;
pub mod method;
pub mod report;
pub mod run;

pub use cli::run;
