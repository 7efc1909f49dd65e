//! Scalar expression graphs for ODE right-hand sides.
//!
//! A right-hand side `f(u, t)` is captured by [`trace`]: the builder closure
//! receives symbolic [`Expr`] handles for the state components and time and
//! returns one expression per component. Every node is interned, so
//! structurally identical subexpressions share a single [`NodeId`].

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("right-hand side returned {got} components, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("state dimension must be at least 1")]
    EmptyState,
    #[error("non-finite constant {0} in expression")]
    NonFiniteConstant(f64),
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("{func} is not defined at {value}")]
    Domain { func: &'static str, value: f64 },
}

/// Handle to a node of one [`ExprGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One scalar operation. Children always precede their parent in the node
/// table.
#[derive(Debug, Clone, Copy)]
pub enum Op {
    Const(f64),
    State(usize),
    Time,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Pow(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Tanh(NodeId),
    Sinh(NodeId),
    Cosh(NodeId),
}

impl Op {
    fn tag(&self) -> u8 {
        match self {
            Op::Const(_) => 0,
            Op::State(_) => 1,
            Op::Time => 2,
            Op::Add(..) => 3,
            Op::Sub(..) => 4,
            Op::Mul(..) => 5,
            Op::Div(..) => 6,
            Op::Neg(_) => 7,
            Op::Pow(..) => 8,
            Op::Exp(_) => 9,
            Op::Log(_) => 10,
            Op::Sqrt(_) => 11,
            Op::Sin(_) => 12,
            Op::Cos(_) => 13,
            Op::Tanh(_) => 14,
            Op::Sinh(_) => 15,
            Op::Cosh(_) => 16,
        }
    }

    /// Operands of the node, in order.
    pub fn children(&self) -> impl Iterator<Item = NodeId> {
        let (a, b) = match *self {
            Op::Const(_) | Op::State(_) | Op::Time => (None, None),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => (Some(a), Some(b)),
            Op::Neg(a)
            | Op::Pow(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Tanh(a)
            | Op::Sinh(a)
            | Op::Cosh(a) => (Some(a), None),
        };
        a.into_iter().chain(b)
    }

    fn map_children(self, mut f: impl FnMut(NodeId) -> NodeId) -> Op {
        match self {
            Op::Const(_) | Op::State(_) | Op::Time => self,
            Op::Add(a, b) => Op::Add(f(a), f(b)),
            Op::Sub(a, b) => Op::Sub(f(a), f(b)),
            Op::Mul(a, b) => Op::Mul(f(a), f(b)),
            Op::Div(a, b) => Op::Div(f(a), f(b)),
            Op::Neg(a) => Op::Neg(f(a)),
            Op::Pow(a, r) => Op::Pow(f(a), r),
            Op::Exp(a) => Op::Exp(f(a)),
            Op::Log(a) => Op::Log(f(a)),
            Op::Sqrt(a) => Op::Sqrt(f(a)),
            Op::Sin(a) => Op::Sin(f(a)),
            Op::Cos(a) => Op::Cos(f(a)),
            Op::Tanh(a) => Op::Tanh(f(a)),
            Op::Sinh(a) => Op::Sinh(f(a)),
            Op::Cosh(a) => Op::Cosh(f(a)),
        }
    }

    fn payload_bits(&self) -> u64 {
        match *self {
            Op::Const(c) | Op::Pow(_, c) => c.to_bits(),
            Op::State(i) => i as u64,
            _ => 0,
        }
    }
}

// Constants compare by bit pattern so that interning is exact.
impl PartialEq for Op {
    fn eq(&self, other: &Op) -> bool {
        self.tag() == other.tag()
            && self.payload_bits() == other.payload_bits()
            && self.children().eq(other.children())
    }
}

impl Eq for Op {}

impl Hash for Op {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        self.payload_bits().hash(state);
        for c in self.children() {
            c.hash(state);
        }
    }
}

/// Applies a scalar operation to already-computed operand values.
pub(crate) fn apply_scalar(op: &Op, a: f64, b: f64) -> Result<f64, ExprError> {
    Ok(match *op {
        Op::Add(..) => a + b,
        Op::Sub(..) => a - b,
        Op::Mul(..) => a * b,
        Op::Div(..) => a / b,
        Op::Neg(_) => -a,
        Op::Pow(_, r) => {
            if a < 0.0 && r.fract() != 0.0 || a == 0.0 && r < 0.0 {
                return Err(ExprError::Domain {
                    func: "pow",
                    value: a,
                });
            }
            a.powf(r)
        }
        Op::Exp(_) => a.exp(),
        Op::Log(_) => {
            if !(a > 0.0) {
                return Err(ExprError::Domain {
                    func: "log",
                    value: a,
                });
            }
            a.ln()
        }
        Op::Sqrt(_) => {
            if a < 0.0 {
                return Err(ExprError::Domain {
                    func: "sqrt",
                    value: a,
                });
            }
            a.sqrt()
        }
        Op::Sin(_) => a.sin(),
        Op::Cos(_) => a.cos(),
        Op::Tanh(_) => a.tanh(),
        Op::Sinh(_) => a.sinh(),
        Op::Cosh(_) => a.cosh(),
        Op::Const(c) => c,
        Op::State(_) | Op::Time => unreachable!("leaf nodes have no operands"),
    })
}

/// Hash-consed DAG of scalar operations with `dim` designated outputs.
#[derive(Clone)]
pub struct ExprGraph {
    nodes: Vec<Op>,
    interner: HashMap<Op, NodeId>,
    dim: usize,
    outputs: Vec<NodeId>,
}

impl fmt::Debug for ExprGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExprGraph")
            .field("dim", &self.dim)
            .field("nodes", &self.nodes)
            .field("outputs", &self.outputs)
            .finish()
    }
}

impl ExprGraph {
    pub fn new(dim: usize) -> Self {
        ExprGraph {
            nodes: Vec::new(),
            interner: HashMap::new(),
            dim,
            outputs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Op] {
        &self.nodes
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.index()]
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn set_outputs(&mut self, outputs: Vec<NodeId>) {
        self.outputs = outputs;
    }

    pub fn const_value(&self, id: NodeId) -> Option<f64> {
        match self.nodes[id.index()] {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Interns `op`, returning the existing node if an identical one is
    /// already present. Operands of `Add` and `Mul` are put in id order
    /// first so that commuted forms share a node.
    pub fn intern(&mut self, op: Op) -> NodeId {
        self.intern_counted(op).0
    }

    /// Like [`ExprGraph::intern`], also reporting whether the node already
    /// existed.
    pub fn intern_counted(&mut self, op: Op) -> (NodeId, bool) {
        let op = match op {
            Op::Add(a, b) if b < a => Op::Add(b, a),
            Op::Mul(a, b) if b < a => Op::Mul(b, a),
            other => other,
        };
        debug_assert!(op.children().all(|c| c.index() < self.nodes.len()));
        if let Some(&id) = self.interner.get(&op) {
            return (id, true);
        }
        let id = NodeId(u32::try_from(self.nodes.len()).expect("graph exceeds u32 nodes"));
        self.nodes.push(op);
        self.interner.insert(op, id);
        (id, false)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.intern(Op::Const(value))
    }

    pub fn state(&mut self, index: usize) -> NodeId {
        self.intern(Op::State(index))
    }

    pub fn time(&mut self) -> NodeId {
        self.intern(Op::Time)
    }

    /// Marks every node reachable from `roots`.
    pub fn reachable(&self, roots: impl IntoIterator<Item = NodeId>) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.into_iter().collect();
        while let Some(id) = stack.pop() {
            if !live[id.index()] {
                live[id.index()] = true;
                stack.extend(self.nodes[id.index()].children());
            }
        }
        live
    }

    /// Evaluates every node reachable from `roots`; unreachable entries are
    /// left as NaN.
    pub fn eval_nodes(&self, u: &[f64], t: f64, roots: &[NodeId]) -> Result<Vec<f64>, ExprError> {
        if u.len() != self.dim {
            return Err(ExprError::StateLength {
                expected: self.dim,
                got: u.len(),
            });
        }
        let live = self.reachable(roots.iter().copied());
        let mut values = vec![f64::NAN; self.nodes.len()];
        for (i, op) in self.nodes.iter().enumerate() {
            if !live[i] {
                continue;
            }
            values[i] = match *op {
                Op::Const(c) => c,
                Op::State(k) => u[k],
                Op::Time => t,
                _ => {
                    let mut ch = op.children().map(|c| values[c.index()]);
                    let a = ch.next().unwrap_or(f64::NAN);
                    let b = ch.next().unwrap_or(f64::NAN);
                    apply_scalar(op, a, b)?
                }
            };
        }
        Ok(values)
    }

    /// Numerical value of `f(u, t)`.
    pub fn eval(&self, u: &[f64], t: f64) -> Result<Vec<f64>, ExprError> {
        let values = self.eval_nodes(u, t, &self.outputs)?;
        Ok(self.outputs.iter().map(|o| values[o.index()]).collect())
    }

    /// Rebuilds the graph with constant folding and algebraic identities
    /// applied. Nodes unreachable from the outputs are dropped.
    pub fn constant_folded(&self) -> ExprGraph {
        let mut folded = ExprGraph::new(self.dim);
        let remap = fold_into(self, &mut folded, self.outputs.iter().copied());
        folded.outputs = self
            .outputs
            .iter()
            .map(|o| remap[o.index()].unwrap())
            .collect();
        // folding leaves intermediate constants behind; a second pass over
        // an already-folded graph only copies what is reachable
        let mut out = ExprGraph::new(self.dim);
        let remap = fold_into(&folded, &mut out, folded.outputs.iter().copied());
        out.outputs = folded
            .outputs
            .iter()
            .map(|o| remap[o.index()].unwrap())
            .collect();
        out
    }
}

/// Copies the part of `src` reachable from `roots` into `dst` through
/// [`fold_op`]. Returns the mapping from `src` ids to `dst` ids.
pub(crate) fn fold_into(
    src: &ExprGraph,
    dst: &mut ExprGraph,
    roots: impl IntoIterator<Item = NodeId>,
) -> Vec<Option<NodeId>> {
    let live = src.reachable(roots);
    let mut remap: Vec<Option<NodeId>> = vec![None; src.len()];
    for (i, op) in src.nodes.iter().enumerate() {
        if live[i] {
            let mapped = op.map_children(|c| remap[c.index()].expect("children precede parents"));
            remap[i] = Some(fold_op(dst, mapped).0);
        }
    }
    remap
}

/// Interns `op` after simplifying it against the operands already in `g`.
///
/// Rules: operations on constants are evaluated when the result is finite;
/// `x+0`, `x-0`, `x*1`, `x/1`, `x^1` reduce to `x`; `x*0` and `0/x` reduce
/// to `0`; `0-x` and `x*-1` become negations; `x^0` is `1`; double negation
/// cancels. The flag reports a hash-consing hit.
pub fn fold_op(g: &mut ExprGraph, op: Op) -> (NodeId, bool) {
    let c = |id: NodeId, g: &ExprGraph| g.const_value(id);
    let is = |id: NodeId, v: f64, g: &ExprGraph| g.const_value(id) == Some(v);

    let all_const = op.children().next().is_some() && op.children().all(|ch| c(ch, g).is_some());
    if all_const {
        let mut vals = op.children().map(|ch| c(ch, g).unwrap());
        let a = vals.next().unwrap();
        let b = vals.next().unwrap_or(f64::NAN);
        if let Ok(v) = apply_scalar(&op, a, b) {
            if v.is_finite() {
                return g.intern_counted(Op::Const(v));
            }
        }
        return g.intern_counted(op);
    }

    match op {
        Op::Add(a, b) if is(b, 0.0, g) => (a, true),
        Op::Add(a, b) if is(a, 0.0, g) => (b, true),
        Op::Sub(a, b) if is(b, 0.0, g) => (a, true),
        Op::Sub(a, b) if is(a, 0.0, g) => fold_op(g, Op::Neg(b)),
        Op::Mul(a, b) if is(a, 0.0, g) || is(b, 0.0, g) => g.intern_counted(Op::Const(0.0)),
        Op::Mul(a, b) if is(a, 1.0, g) => (b, true),
        Op::Mul(a, b) if is(b, 1.0, g) => (a, true),
        Op::Mul(a, b) if is(a, -1.0, g) => fold_op(g, Op::Neg(b)),
        Op::Mul(a, b) if is(b, -1.0, g) => fold_op(g, Op::Neg(a)),
        Op::Div(a, b) if is(b, 1.0, g) => (a, true),
        Op::Div(a, b) if is(a, 0.0, g) && c(b, g).is_none() => g.intern_counted(Op::Const(0.0)),
        Op::Pow(a, 1.0) => (a, true),
        Op::Pow(_, 0.0) => g.intern_counted(Op::Const(1.0)),
        Op::Neg(a) => match *g.op(a) {
            Op::Neg(inner) => (inner, true),
            _ => g.intern_counted(op),
        },
        _ => g.intern_counted(op),
    }
}

struct Tracer {
    graph: ExprGraph,
    error: Option<ExprError>,
}

/// Symbolic scalar used while tracing a right-hand side.
#[derive(Clone)]
pub struct Expr {
    tracer: Rc<RefCell<Tracer>>,
    id: NodeId,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Expr").field(&self.id).finish()
    }
}

impl Expr {
    pub fn id(&self) -> NodeId {
        self.id
    }

    fn push(&self, op: Op) -> Expr {
        let id = self.tracer.borrow_mut().graph.intern(op);
        Expr {
            tracer: Rc::clone(&self.tracer),
            id,
        }
    }

    /// A constant in the same trace.
    pub fn constant(&self, value: f64) -> Expr {
        if !value.is_finite() {
            let mut tracer = self.tracer.borrow_mut();
            tracer
                .error
                .get_or_insert(ExprError::NonFiniteConstant(value));
        }
        self.push(Op::Const(value))
    }

    pub fn powf(&self, r: f64) -> Expr {
        if !r.is_finite() {
            let mut tracer = self.tracer.borrow_mut();
            tracer.error.get_or_insert(ExprError::NonFiniteConstant(r));
        }
        self.push(Op::Pow(self.id, r))
    }

    pub fn powi(&self, n: i32) -> Expr {
        self.powf(n as f64)
    }

    pub fn exp(&self) -> Expr {
        self.push(Op::Exp(self.id))
    }

    pub fn ln(&self) -> Expr {
        self.push(Op::Log(self.id))
    }

    pub fn sqrt(&self) -> Expr {
        self.push(Op::Sqrt(self.id))
    }

    pub fn sin(&self) -> Expr {
        self.push(Op::Sin(self.id))
    }

    pub fn cos(&self) -> Expr {
        self.push(Op::Cos(self.id))
    }

    pub fn tanh(&self) -> Expr {
        self.push(Op::Tanh(self.id))
    }

    pub fn sinh(&self) -> Expr {
        self.push(Op::Sinh(self.id))
    }

    pub fn cosh(&self) -> Expr {
        self.push(Op::Cosh(self.id))
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                debug_assert!(Rc::ptr_eq(&self.tracer, &rhs.tracer), "mixing traces");
                self.push(Op::$variant(self.id, rhs.id))
            }
        }
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let c = self.constant(rhs);
                self.$method(&c)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let c = rhs.constant(self);
                (&c).$method(rhs)
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.push(Op::Neg(self.id))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

/// Captures `f(u, t)` as an [`ExprGraph`].
///
/// ```
/// use taylode::expr::trace;
///
/// let g = trace(2, |u, _t| {
///     let (x, y) = (&u[0], &u[1]);
///     vec![1.5 * x - x * y, -3.0 * y + x * y]
/// })
/// .unwrap();
/// assert_eq!(g.eval(&[1.0, 1.0], 0.0).unwrap(), vec![0.5, -2.0]);
/// ```
pub fn trace<F>(dim: usize, builder: F) -> Result<ExprGraph, ExprError>
where
    F: FnOnce(&[Expr], &Expr) -> Vec<Expr>,
{
    if dim == 0 {
        return Err(ExprError::EmptyState);
    }
    let tracer = Rc::new(RefCell::new(Tracer {
        graph: ExprGraph::new(dim),
        error: None,
    }));
    let leaf = |op: Op| Expr {
        id: tracer.borrow_mut().graph.intern(op),
        tracer: Rc::clone(&tracer),
    };
    let state: Vec<Expr> = (0..dim).map(|i| leaf(Op::State(i))).collect();
    let time = leaf(Op::Time);
    let outputs = builder(&state, &time);
    if outputs.len() != dim {
        return Err(ExprError::Arity {
            expected: dim,
            got: outputs.len(),
        });
    }
    let ids: Vec<NodeId> = outputs.iter().map(Expr::id).collect();
    let tracer = tracer.borrow();
    if let Some(err) = &tracer.error {
        return Err(err.clone());
    }
    let mut graph = tracer.graph.clone();
    graph.outputs = ids;
    Ok(graph)
}
