//! Flat instruction tapes and their interpreter.

use thiserror::Error;

use crate::expr::{ExprGraph, NodeId, Op};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TapeError {
    #[error("tape instruction {index} produced a non-finite value")]
    NonFinite { index: usize },
    #[error("scratch buffer has {got} slots, tape needs {needed}")]
    ScratchTooSmall { needed: usize, got: usize },
    #[error("output buffer has {got} entries, tape writes {needed}")]
    OutputTooSmall { needed: usize, got: usize },
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
}

type Slot = u32;

/// One tape instruction. Operands and destinations are scratch slots;
/// `Store` copies a slot into the output buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instr {
    LoadState { dst: Slot, index: u32 },
    LoadTime { dst: Slot },
    LoadConst { dst: Slot, value: f64 },
    Add { dst: Slot, a: Slot, b: Slot },
    Sub { dst: Slot, a: Slot, b: Slot },
    Mul { dst: Slot, a: Slot, b: Slot },
    Div { dst: Slot, a: Slot, b: Slot },
    Neg { dst: Slot, a: Slot },
    Pow { dst: Slot, a: Slot, exponent: f64 },
    Exp { dst: Slot, a: Slot },
    Log { dst: Slot, a: Slot },
    Sqrt { dst: Slot, a: Slot },
    Sin { dst: Slot, a: Slot },
    Cos { dst: Slot, a: Slot },
    Tanh { dst: Slot, a: Slot },
    Sinh { dst: Slot, a: Slot },
    Cosh { dst: Slot, a: Slot },
    Store { src: Slot, out: u32 },
}

impl Instr {
    /// True for instructions that perform floating-point arithmetic, as
    /// opposed to loads and stores.
    pub fn is_arithmetic(&self) -> bool {
        !matches!(
            self,
            Instr::LoadState { .. }
                | Instr::LoadTime { .. }
                | Instr::LoadConst { .. }
                | Instr::Store { .. }
        )
    }

    fn dst(&self) -> Option<Slot> {
        match *self {
            Instr::Store { .. } => None,
            Instr::LoadState { dst, .. }
            | Instr::LoadTime { dst }
            | Instr::LoadConst { dst, .. }
            | Instr::Add { dst, .. }
            | Instr::Sub { dst, .. }
            | Instr::Mul { dst, .. }
            | Instr::Div { dst, .. }
            | Instr::Neg { dst, .. }
            | Instr::Pow { dst, .. }
            | Instr::Exp { dst, .. }
            | Instr::Log { dst, .. }
            | Instr::Sqrt { dst, .. }
            | Instr::Sin { dst, .. }
            | Instr::Cos { dst, .. }
            | Instr::Tanh { dst, .. }
            | Instr::Sinh { dst, .. }
            | Instr::Cosh { dst, .. } => Some(dst),
        }
    }
}

/// A straight-line program computing a fixed list of outputs from a state
/// vector and a time.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    n_slots: usize,
    n_outputs: usize,
    dim: usize,
}

impl Tape {
    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arithmetic_count(&self) -> usize {
        self.instrs.iter().filter(|i| i.is_arithmetic()).count()
    }

    /// Schedules the nodes of `graph` reachable from `outputs` into a tape.
    /// Output `j` of the tape is the value of node `outputs[j]`.
    ///
    /// Nodes are emitted in table order, which is topological. Scratch
    /// slots are assigned by a linear scan and recycled after their last
    /// read.
    pub fn emit(graph: &ExprGraph, outputs: &[NodeId]) -> Tape {
        let n = graph.len();
        let live = graph.reachable(outputs.iter().copied());

        let mut stores: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (j, id) in outputs.iter().enumerate() {
            stores[id.index()].push(j as u32);
        }
        // last node (by table index) reading each node as an operand
        let mut last_read: Vec<Option<usize>> = vec![None; n];
        for (i, op) in graph.nodes().iter().enumerate() {
            if live[i] {
                for c in op.children() {
                    last_read[c.index()] = Some(i);
                }
            }
        }
        let mut expiring: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, last) in last_read.iter().enumerate() {
            if let Some(reader) = last {
                expiring[*reader].push(i);
            }
        }

        let mut slot_of: Vec<Slot> = vec![Slot::MAX; n];
        let mut free: Vec<Slot> = Vec::new();
        let mut n_slots: Slot = 0;
        let mut instrs = Vec::new();

        for (i, op) in graph.nodes().iter().enumerate() {
            if !live[i] {
                continue;
            }
            let s = |c: NodeId| slot_of[c.index()];
            let mut ch = op.children();
            let a = ch.next().map(s).unwrap_or(0);
            let b = ch.next().map(s).unwrap_or(0);
            // operands are read before the destination is written, so a
            // slot freed here may be reused as this node's destination
            for &dead in &expiring[i] {
                free.push(slot_of[dead]);
            }
            let dst = free.pop().unwrap_or_else(|| {
                n_slots += 1;
                n_slots - 1
            });
            slot_of[i] = dst;
            instrs.push(match *op {
                Op::Const(value) => Instr::LoadConst { dst, value },
                Op::State(index) => Instr::LoadState {
                    dst,
                    index: index as u32,
                },
                Op::Time => Instr::LoadTime { dst },
                Op::Add(..) => Instr::Add { dst, a, b },
                Op::Sub(..) => Instr::Sub { dst, a, b },
                Op::Mul(..) => Instr::Mul { dst, a, b },
                Op::Div(..) => Instr::Div { dst, a, b },
                Op::Neg(_) => Instr::Neg { dst, a },
                Op::Pow(_, exponent) => Instr::Pow { dst, a, exponent },
                Op::Exp(_) => Instr::Exp { dst, a },
                Op::Log(_) => Instr::Log { dst, a },
                Op::Sqrt(_) => Instr::Sqrt { dst, a },
                Op::Sin(_) => Instr::Sin { dst, a },
                Op::Cos(_) => Instr::Cos { dst, a },
                Op::Tanh(_) => Instr::Tanh { dst, a },
                Op::Sinh(_) => Instr::Sinh { dst, a },
                Op::Cosh(_) => Instr::Cosh { dst, a },
            });
            for &out in &stores[i] {
                instrs.push(Instr::Store { src: dst, out });
            }
            if last_read[i].is_none() {
                free.push(dst);
            }
        }

        Tape {
            instrs,
            n_slots: n_slots as usize,
            n_outputs: outputs.len(),
            dim: graph.dim(),
        }
    }

    /// Runs the tape. Only `scratch` and `out` are written.
    pub fn eval(
        &self,
        u: &[f64],
        t: f64,
        scratch: &mut [f64],
        out: &mut [f64],
    ) -> Result<(), TapeError> {
        if u.len() != self.dim {
            return Err(TapeError::StateLength {
                expected: self.dim,
                got: u.len(),
            });
        }
        if scratch.len() < self.n_slots {
            return Err(TapeError::ScratchTooSmall {
                needed: self.n_slots,
                got: scratch.len(),
            });
        }
        if out.len() < self.n_outputs {
            return Err(TapeError::OutputTooSmall {
                needed: self.n_outputs,
                got: out.len(),
            });
        }
        run(&self.instrs, u, t, scratch, out);
        if out[..self.n_outputs].iter().all(|v| v.is_finite()) {
            return Ok(());
        }
        // slow path: replay to locate the first offending instruction
        let index = self
            .instrs
            .iter()
            .position(|instr| {
                run(std::slice::from_ref(instr), u, t, scratch, out);
                instr
                    .dst()
                    .is_some_and(|d| !scratch[d as usize].is_finite())
            })
            .unwrap_or(self.instrs.len());
        Err(TapeError::NonFinite { index })
    }
}

#[inline]
fn run(instrs: &[Instr], u: &[f64], t: f64, s: &mut [f64], out: &mut [f64]) {
    for instr in instrs {
        match *instr {
            Instr::LoadState { dst, index } => s[dst as usize] = u[index as usize],
            Instr::LoadTime { dst } => s[dst as usize] = t,
            Instr::LoadConst { dst, value } => s[dst as usize] = value,
            Instr::Add { dst, a, b } => s[dst as usize] = s[a as usize] + s[b as usize],
            Instr::Sub { dst, a, b } => s[dst as usize] = s[a as usize] - s[b as usize],
            Instr::Mul { dst, a, b } => s[dst as usize] = s[a as usize] * s[b as usize],
            Instr::Div { dst, a, b } => s[dst as usize] = s[a as usize] / s[b as usize],
            Instr::Neg { dst, a } => s[dst as usize] = -s[a as usize],
            Instr::Pow { dst, a, exponent } => s[dst as usize] = s[a as usize].powf(exponent),
            Instr::Exp { dst, a } => s[dst as usize] = s[a as usize].exp(),
            Instr::Log { dst, a } => s[dst as usize] = s[a as usize].ln(),
            Instr::Sqrt { dst, a } => s[dst as usize] = s[a as usize].sqrt(),
            Instr::Sin { dst, a } => s[dst as usize] = s[a as usize].sin(),
            Instr::Cos { dst, a } => s[dst as usize] = s[a as usize].cos(),
            Instr::Tanh { dst, a } => s[dst as usize] = s[a as usize].tanh(),
            Instr::Sinh { dst, a } => s[dst as usize] = s[a as usize].sinh(),
            Instr::Cosh { dst, a } => s[dst as usize] = s[a as usize].cosh(),
            Instr::Store { src, out: j } => out[j as usize] = s[src as usize],
        }
    }
}
