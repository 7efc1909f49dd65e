use std::fmt;
use std::time::Instant;

use crate::expr::ExprGraph;
use crate::jet;

use super::{compile, naive_coefficients, CompileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Naive,
    Compiled,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Naive => "naive",
            Strategy::Compiled => "compiled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileStatsRow {
    pub degree: usize,
    pub strategy: Strategy,
    /// Scalar arithmetic operations for one evaluation of all coefficients.
    pub op_count: u64,
    pub median_eval_ns: f64,
}

/// Compares naive re-evaluation against the compiled tape at `(u, t)` for
/// each degree: operation counts and median wall time over `repetitions`
/// timed evaluations (after one untimed warmup).
pub fn compile_stats(
    f: &ExprGraph,
    u: &[f64],
    t: f64,
    degrees: &[usize],
    repetitions: usize,
) -> Result<Vec<CompileStatsRow>, CompileError> {
    let repetitions = repetitions.max(1);
    let mut rows = Vec::with_capacity(2 * degrees.len());
    for &p in degrees {
        jet::reset_op_count();
        naive_coefficients(f, u, t, p)?;
        let naive_ops = jet::op_count();
        let naive_ns = median_ns(repetitions, || {
            std::hint::black_box(naive_coefficients(f, u, t, p).map(|_| ()))
        })?;

        let tape = compile(f, p)?;
        let mut scratch = tape.scratch();
        let mut out = super::CoeffMatrix::zeros(tape.dim(), tape.width());
        tape.eval_into(u, t, &mut scratch, &mut out)?;
        let tape_ns = median_ns(repetitions, || {
            tape.eval_into(std::hint::black_box(u), t, &mut scratch, &mut out)
        })?;

        rows.push(CompileStatsRow {
            degree: p,
            strategy: Strategy::Naive,
            op_count: naive_ops,
            median_eval_ns: naive_ns,
        });
        rows.push(CompileStatsRow {
            degree: p,
            strategy: Strategy::Compiled,
            op_count: tape.stats().arithmetic as u64,
            median_eval_ns: tape_ns,
        });
    }
    Ok(rows)
}

/// Median wall time of `f` in nanoseconds. Each sample batches enough calls
/// to last at least ~20 microseconds so that timer resolution does not
/// dominate fast tapes.
fn median_ns<E>(samples: usize, mut f: impl FnMut() -> Result<(), E>) -> Result<f64, CompileError>
where
    CompileError: From<E>,
{
    f()?;
    let start = Instant::now();
    f()?;
    let single = start.elapsed().as_nanos().max(1) as f64;
    let batch = ((20_000.0 / single).ceil() as usize).clamp(1, 10_000);
    let mut times = Vec::with_capacity(samples);
    for _ in 0..samples {
        let start = Instant::now();
        for _ in 0..batch {
            f()?;
        }
        times.push(start.elapsed().as_nanos() as f64 / batch as f64);
    }
    Ok(crate::median(&mut times))
}
