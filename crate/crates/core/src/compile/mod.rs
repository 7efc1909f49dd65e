//! Symbolic compilation of Taylor-coefficient recursions into flat tapes.
//!
//! [`compile`] runs the full pipeline for one degree: [`taylor_lift`]
//! unrolls the recursion into a working graph, and [`simplify_and_emit`]
//! folds constants, removes dead nodes and schedules the rest into a
//! [`CoefficientTape`]. A tape evaluates every normalized coefficient
//! `c_0..=c_{p+1}` of every state component in one pass.

mod lift;
mod naive;
mod stats;
mod tape;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::expr::{fold_into, ExprError, ExprGraph, NodeId};
use crate::jet::JetError;

pub use lift::{taylor_lift, LiftedGraph, SymbolicJet};
pub use naive::{eval_on_jets, naive_coefficients};
pub use stats::{compile_stats, CompileStatsRow, Strategy};
pub use tape::{Instr, Tape, TapeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("Taylor degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Dense `dim x width` matrix of normalized Taylor coefficients, one row per
/// state component; entry `(i, k)` is `c_{i,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix {
    dim: usize,
    width: usize,
    data: Vec<f64>,
}

impl CoeffMatrix {
    pub fn zeros(dim: usize, width: usize) -> Self {
        CoeffMatrix {
            dim,
            width,
            data: vec![0.0; dim * width],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        CoeffMatrix {
            dim: rows.len(),
            width,
            data: rows.concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored orders, `p + 2` for a degree-`p` tape.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.width + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Column `k`: coefficient `k` of every component.
    pub fn order(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).map(move |i| self.get(i, k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TapeStats {
    /// All tape instructions, loads and stores included.
    pub instructions: usize,
    /// Arithmetic instructions only.
    pub arithmetic: usize,
    /// Node requests made during lifting, before deduplication.
    pub lifted_requests: u64,
    /// Lifting requests answered by interning or folding.
    pub cse_hits: u64,
    /// Nodes that survived simplification and dead-code removal.
    pub live_nodes: usize,
}

/// Compiled evaluator of all solution coefficients through order `p + 1`.
#[derive(Debug, Clone)]
pub struct CoefficientTape {
    tape: Tape,
    degree: usize,
    dim: usize,
    stats: TapeStats,
}

impl CoefficientTape {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficients per component, `p + 2`.
    pub fn width(&self) -> usize {
        self.degree + 2
    }

    pub fn n_slots(&self) -> usize {
        self.tape.n_slots()
    }

    pub fn stats(&self) -> TapeStats {
        self.stats
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.n_slots()]
    }

    /// Writes the coefficients at `(u, t)` into `out` without allocating.
    pub fn eval_into(
        &self,
        u: &[f64],
        t: f64,
        scratch: &mut [f64],
        out: &mut CoeffMatrix,
    ) -> Result<(), TapeError> {
        debug_assert_eq!((out.dim, out.width), (self.dim, self.width()));
        self.tape.eval(u, t, scratch, &mut out.data)
    }

    pub fn eval(&self, u: &[f64], t: f64, scratch: &mut [f64]) -> Result<CoeffMatrix, TapeError> {
        let mut out = CoeffMatrix::zeros(self.dim, self.width());
        self.eval_into(u, t, scratch, &mut out)?;
        Ok(out)
    }
}

/// Folds, prunes and schedules a lifted graph into a tape.
pub fn simplify_and_emit(lifted: &LiftedGraph) -> CoefficientTape {
    let roots: Vec<NodeId> = lifted
        .jets
        .iter()
        .flat_map(|j| j.coeffs().to_vec())
        .collect();
    let mut simplified = ExprGraph::new(lifted.graph.dim());
    let remap = fold_into(&lifted.graph, &mut simplified, roots.iter().copied());
    let outputs: Vec<NodeId> = roots.iter().map(|r| remap[r.index()].unwrap()).collect();
    let tape = Tape::emit(&simplified, &outputs);
    let live_nodes = simplified
        .reachable(outputs.iter().copied())
        .iter()
        .filter(|&&l| l)
        .count();
    CoefficientTape {
        stats: TapeStats {
            instructions: tape.instrs().len(),
            arithmetic: tape.arithmetic_count(),
            lifted_requests: lifted.requests,
            cse_hits: lifted.cse_hits,
            live_nodes,
        },
        tape,
        degree: lifted.degree,
        dim: lifted.graph.dim(),
    }
}

/// Lifts and emits the coefficient tape of `u' = f(u, t)` for one degree.
pub fn compile(f: &ExprGraph, degree: usize) -> Result<CoefficientTape, CompileError> {
    let lifted = taylor_lift(f, degree)?;
    Ok(simplify_and_emit(&lifted))
}

/// The right-hand side itself, as a tape with `dim` outputs.
#[derive(Debug, Clone)]
pub struct RhsTape {
    tape: Tape,
}

impl RhsTape {
    pub fn new(f: &ExprGraph) -> Self {
        let folded = f.constant_folded();
        RhsTape {
            tape: Tape::emit(&folded, folded.outputs()),
        }
    }

    pub fn dim(&self) -> usize {
        self.tape.dim()
    }

    pub fn n_slots(&self) -> usize {
        self.tape.n_slots()
    }

    pub fn eval(
        &self,
        u: &[f64],
        t: f64,
        scratch: &mut [f64],
        du: &mut [f64],
    ) -> Result<(), TapeError> {
        self.tape.eval(u, t, scratch, du)
    }
}

/// A traced right-hand side with lazily compiled tapes, one per degree.
#[derive(Debug)]
pub struct CompiledProblem {
    graph: ExprGraph,
    tapes: Mutex<BTreeMap<usize, (Arc<CoefficientTape>, Duration)>>,
}

impl CompiledProblem {
    pub fn new(graph: ExprGraph) -> Self {
        CompiledProblem {
            graph,
            tapes: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn graph(&self) -> &ExprGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    /// The tape for `degree`, compiling it on first use.
    pub fn tape(&self, degree: usize) -> Result<Arc<CoefficientTape>, CompileError> {
        if let Some((tape, _)) = self.tapes.lock().unwrap().get(&degree) {
            return Ok(Arc::clone(tape));
        }
        let start = Instant::now();
        let tape = Arc::new(compile(&self.graph, degree)?);
        let elapsed = start.elapsed();
        let mut tapes = self.tapes.lock().unwrap();
        let entry = tapes.entry(degree).or_insert((tape, elapsed));
        Ok(Arc::clone(&entry.0))
    }

    /// Degrees compiled so far.
    pub fn compiled_degrees(&self) -> Vec<usize> {
        self.tapes.lock().unwrap().keys().copied().collect()
    }

    /// Total wall time spent compiling tapes so far.
    pub fn compile_time(&self) -> Duration {
        self.tapes.lock().unwrap().values().map(|(_, d)| *d).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::trace;

    #[test]
    fn exponential_tape() {
        let g = trace(1, |u, _| vec![u[0].clone()]).unwrap();
        let tape = compile(&g, 3).unwrap();
        let mut scratch = tape.scratch();
        let c = tape.eval(&[1.0], 0.0, &mut scratch).unwrap();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (got, want) in c.row(0).iter().zip(want) {
            assert!((got - want).abs() < 1e-16);
        }
    }

    #[test]
    fn evaluation_is_bitwise_repeatable_and_ignores_scratch() {
        let g = trace(2, |u, t| {
            let (x, y) = (&u[0], &u[1]);
            vec![x * y + t.sin(), (x - y).exp() / (1.0 + x * x)]
        })
        .unwrap();
        let tape = compile(&g, 7).unwrap();
        let mut scratch = tape.scratch();
        let a = tape.eval(&[0.3, -0.2], 0.4, &mut scratch).unwrap();
        let b = tape.eval(&[0.3, -0.2], 0.4, &mut scratch).unwrap();
        scratch.iter_mut().for_each(|s| *s = f64::NAN);
        let c = tape.eval(&[0.3, -0.2], 0.4, &mut scratch).unwrap();
        for ((x, y), z) in a.as_slice().iter().zip(b.as_slice()).zip(c.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }

    #[test]
    fn cache_compiles_once_per_degree() {
        let g = trace(1, |u, _| vec![-&u[0]]).unwrap();
        let problem = CompiledProblem::new(g);
        let a = problem.tape(4).unwrap();
        let b = problem.tape(4).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        problem.tape(5).unwrap();
        assert_eq!(problem.compiled_degrees(), vec![4, 5]);
    }

    #[test]
    fn rhs_tape_matches_graph() {
        let g = trace(3, |u, t| {
            vec![
                -2.0 * &u[1] * &u[2],
                1.25 * &u[2] * &u[0],
                -0.5 * &u[0] * &u[1] + t.sin().powi(2) / 4.0,
            ]
        })
        .unwrap();
        let rhs = RhsTape::new(&g);
        let mut scratch = vec![0.0; rhs.n_slots()];
        let mut du = [0.0; 3];
        rhs.eval(&[1.0, 0.0, 0.9], 0.0, &mut scratch, &mut du)
            .unwrap();
        assert_eq!(du.to_vec(), g.eval(&[1.0, 0.0, 0.9], 0.0).unwrap());
        assert_eq!(du, [0.0, 1.125, 0.0]);
    }
}
