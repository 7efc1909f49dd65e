//! Symbolic unrolling of the solution's Taylor-coefficient recursion.
//!
//! Writing `u(t_n + s) = sum_k c_k s^k`, the ODE gives
//! `c_{k+1} = [f(u, t)]_k / (k + 1)`, where `[.]_k` is the `k`-th Taylor
//! coefficient. Coefficient `k` of `f` depends only on `c_0..=c_k`, so the
//! whole recursion can be unrolled order by order: at order `k` every node
//! of the right-hand side gets exactly one new coefficient expression, built
//! from the coefficients already emitted for its operands. Each of those
//! expressions is created once, which keeps the total work quadratic in the
//! degree.

use crate::expr::{fold_op, ExprGraph, NodeId, Op};

use super::CompileError;

/// Symbolic Taylor coefficients `c_0..=c_{p+1}` of one quantity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicJet {
    coeffs: Vec<NodeId>,
}

impl SymbolicJet {
    pub fn coeffs(&self) -> &[NodeId] {
        &self.coeffs
    }
}

/// Output of [`taylor_lift`]: the working graph holding every coefficient
/// expression, and one jet per state component.
#[derive(Debug, Clone)]
pub struct LiftedGraph {
    pub graph: ExprGraph,
    pub jets: Vec<SymbolicJet>,
    pub degree: usize,
    /// Node construction requests made while lifting, before interning and
    /// folding collapsed them.
    pub requests: u64,
    /// Requests answered by an existing node.
    pub cse_hits: u64,
}

struct Builder {
    graph: ExprGraph,
    requests: u64,
    cse_hits: u64,
}

impl Builder {
    fn node(&mut self, op: Op) -> NodeId {
        self.requests += 1;
        let (id, hit) = fold_op(&mut self.graph, op);
        if hit {
            self.cse_hits += 1;
        }
        id
    }

    fn c(&mut self, v: f64) -> NodeId {
        self.node(Op::Const(v))
    }

    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.node(Op::Add(a, b))
    }

    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.node(Op::Sub(a, b))
    }

    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.node(Op::Mul(a, b))
    }

    fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.node(Op::Div(a, b))
    }

    fn neg(&mut self, a: NodeId) -> NodeId {
        self.node(Op::Neg(a))
    }

    fn scale(&mut self, s: f64, a: NodeId) -> NodeId {
        let s = self.c(s);
        self.mul(s, a)
    }

    /// Left-to-right sum; zero when empty.
    fn sum(&mut self, terms: impl IntoIterator<Item = NodeId>) -> NodeId {
        let mut terms = terms.into_iter();
        match terms.next() {
            None => self.c(0.0),
            Some(first) => terms.fold(first, |acc, t| self.add(acc, t)),
        }
    }

    /// `sum_{j=lo..=hi} x_j * y_{k-j}`
    fn convolve(&mut self, x: &[NodeId], y: &[NodeId], k: usize, lo: usize, hi: usize) -> NodeId {
        let terms: Vec<NodeId> = (lo..=hi).map(|j| self.mul(x[j], y[k - j])).collect();
        self.sum(terms)
    }

    /// `[0, 1 x_1, 2 x_2, ...]` for the first `n` entries.
    fn weighted(&mut self, x: &[NodeId], n: usize) -> Vec<NodeId> {
        (0..n).map(|j| self.scale(j as f64, x[j])).collect()
    }
}

/// Rewrites small integer powers into products, mirroring how
/// [`crate::jet::Jet::powf`] evaluates them.
fn lower_small_powers(src: &ExprGraph) -> ExprGraph {
    let mut out = ExprGraph::new(src.dim());
    let live = src.reachable(src.outputs().iter().copied());
    let mut remap: Vec<Option<NodeId>> = vec![None; src.len()];
    for (i, op) in src.nodes().iter().enumerate() {
        if !live[i] {
            continue;
        }
        let m = |id: NodeId| remap[id.index()].expect("children precede parents");
        let id = match *op {
            Op::Pow(a, r) if r.fract() == 0.0 && r.abs() <= 4.0 && r != 0.0 => {
                let a = m(a);
                let n = r.abs() as u32;
                let positive = match n {
                    1 => a,
                    2 => out.intern(Op::Mul(a, a)),
                    3 => {
                        let sq = out.intern(Op::Mul(a, a));
                        out.intern(Op::Mul(sq, a))
                    }
                    _ => {
                        let sq = out.intern(Op::Mul(a, a));
                        out.intern(Op::Mul(sq, sq))
                    }
                };
                if r < 0.0 {
                    let one = out.constant(1.0);
                    out.intern(Op::Div(one, positive))
                } else {
                    positive
                }
            }
            other => {
                let mapped = match other {
                    Op::Add(a, b) => Op::Add(m(a), m(b)),
                    Op::Sub(a, b) => Op::Sub(m(a), m(b)),
                    Op::Mul(a, b) => Op::Mul(m(a), m(b)),
                    Op::Div(a, b) => Op::Div(m(a), m(b)),
                    Op::Neg(a) => Op::Neg(m(a)),
                    Op::Pow(a, r) => Op::Pow(m(a), r),
                    Op::Exp(a) => Op::Exp(m(a)),
                    Op::Log(a) => Op::Log(m(a)),
                    Op::Sqrt(a) => Op::Sqrt(m(a)),
                    Op::Sin(a) => Op::Sin(m(a)),
                    Op::Cos(a) => Op::Cos(m(a)),
                    Op::Tanh(a) => Op::Tanh(m(a)),
                    Op::Sinh(a) => Op::Sinh(m(a)),
                    Op::Cosh(a) => Op::Cosh(m(a)),
                    leaf => leaf,
                };
                out.intern(mapped)
            }
        };
        remap[i] = Some(id);
    }
    let outputs = src
        .outputs()
        .iter()
        .map(|o| remap[o.index()].unwrap())
        .collect();
    out.set_outputs(outputs);
    out.constant_folded()
}

/// Unrolls the coefficient recursion of `u' = f(u, t)` through degree
/// `degree + 1`.
///
/// The returned jets have `degree + 2` entries; the last one is the extra
/// order consumed by the local error estimate.
pub fn taylor_lift(src: &ExprGraph, degree: usize) -> Result<LiftedGraph, CompileError> {
    if degree < 1 {
        return Err(CompileError::InvalidDegree(degree));
    }
    let f = lower_small_powers(src);
    let dim = f.dim();
    let mut b = Builder {
        graph: ExprGraph::new(dim),
        requests: 0,
        cse_hits: 0,
    };

    let mut state: Vec<Vec<NodeId>> = (0..dim).map(|i| vec![b.node(Op::State(i))]).collect();
    let live = f.reachable(f.outputs().iter().copied());
    let n = f.len();
    // per-node coefficient lists, plus the companion series of the coupled
    // recurrences (cos for sin, sin for cos, cosh/sinh, 1 - tanh^2)
    let mut coef: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut aux: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    // j * a_j for operands of exp/sin/cos/sinh/cosh/tanh
    let mut weighted: Vec<Vec<NodeId>> = vec![Vec::new(); n];

    for k in 0..=degree {
        let inv_k = 1.0 / k as f64;
        for i in 0..n {
            if !live[i] {
                continue;
            }
            let op = f.nodes()[i];
            let child = |c: NodeId| c.index();
            let (primary, companion) = match op {
                Op::Const(v) => (b.c(if k == 0 { v } else { 0.0 }), None),
                Op::State(s) => (state[s][k], None),
                Op::Time => match k {
                    0 => (b.node(Op::Time), None),
                    1 => (b.c(1.0), None),
                    _ => (b.c(0.0), None),
                },
                Op::Add(x, y) => (b.add(coef[child(x)][k], coef[child(y)][k]), None),
                Op::Sub(x, y) => (b.sub(coef[child(x)][k], coef[child(y)][k]), None),
                Op::Neg(x) => (b.neg(coef[child(x)][k]), None),
                Op::Mul(x, y) => {
                    let (x, y) = (coef[child(x)].clone(), coef[child(y)].clone());
                    (b.convolve(&x, &y, k, 0, k), None)
                }
                Op::Div(x, y) => {
                    let (a, d) = (&coef[child(x)], &coef[child(y)]);
                    let q = &coef[i];
                    let (a, d, q) = (a.clone(), d.clone(), q.clone());
                    let v = if k == 0 {
                        b.div(a[0], d[0])
                    } else {
                        let acc = b.convolve(&q, &d, k, 0, k - 1);
                        let num = b.sub(a[k], acc);
                        b.div(num, d[0])
                    };
                    (v, None)
                }
                Op::Exp(x) => {
                    let a = coef[child(x)].clone();
                    let v = if k == 0 {
                        b.node(Op::Exp(a[0]))
                    } else {
                        let ja = extend_weighted(&mut b, &mut weighted[i], &a, k);
                        let g = coef[i].clone();
                        let acc = b.convolve(&ja, &g, k, 1, k);
                        b.scale(inv_k, acc)
                    };
                    (v, None)
                }
                Op::Log(x) => {
                    let a = coef[child(x)].clone();
                    let v = if k == 0 {
                        b.node(Op::Log(a[0]))
                    } else {
                        let jg = b.weighted(&coef[i], k);
                        let acc = b.convolve(&jg, &a, k, 1, k - 1);
                        let acc = b.scale(inv_k, acc);
                        let num = b.sub(a[k], acc);
                        b.div(num, a[0])
                    };
                    (v, None)
                }
                Op::Sqrt(x) => {
                    let a = coef[child(x)].clone();
                    let v = if k == 0 {
                        b.node(Op::Sqrt(a[0]))
                    } else {
                        let g = coef[i].clone();
                        let acc = b.convolve(&g, &g, k, 1, k - 1);
                        let num = b.sub(a[k], acc);
                        let two_g0 = b.scale(2.0, g[0]);
                        b.div(num, two_g0)
                    };
                    (v, None)
                }
                Op::Pow(x, r) => {
                    let a = coef[child(x)].clone();
                    let v = if k == 0 {
                        b.node(Op::Pow(a[0], r))
                    } else {
                        let g = coef[i].clone();
                        let terms: Vec<NodeId> = (1..=k)
                            .map(|j| {
                                let w = r * j as f64 - (k - j) as f64;
                                let prod = b.mul(a[j], g[k - j]);
                                b.scale(w, prod)
                            })
                            .collect();
                        let acc = b.sum(terms);
                        let acc = b.scale(inv_k, acc);
                        b.div(acc, a[0])
                    };
                    (v, None)
                }
                Op::Sin(x) | Op::Cos(x) | Op::Sinh(x) | Op::Cosh(x) => {
                    let a = coef[child(x)].clone();
                    let trig = matches!(op, Op::Sin(_) | Op::Cos(_));
                    // (s, c) with s' = c a' and c' = -s a' (trig) or s a'
                    let (s, c) = if matches!(op, Op::Sin(_) | Op::Sinh(_)) {
                        (coef[i].clone(), aux[i].clone())
                    } else {
                        (aux[i].clone(), coef[i].clone())
                    };
                    let (sk, ck) = if k == 0 {
                        if trig {
                            (b.node(Op::Sin(a[0])), b.node(Op::Cos(a[0])))
                        } else {
                            (b.node(Op::Sinh(a[0])), b.node(Op::Cosh(a[0])))
                        }
                    } else {
                        let ja = extend_weighted(&mut b, &mut weighted[i], &a, k);
                        let acc_s = b.convolve(&ja, &c, k, 1, k);
                        let acc_c = b.convolve(&ja, &s, k, 1, k);
                        let sk = b.scale(inv_k, acc_s);
                        let ck = b.scale(inv_k, acc_c);
                        let ck = if trig { b.neg(ck) } else { ck };
                        (sk, ck)
                    };
                    if matches!(op, Op::Sin(_) | Op::Sinh(_)) {
                        (sk, Some(ck))
                    } else {
                        (ck, Some(sk))
                    }
                }
                Op::Tanh(x) => {
                    let a = coef[child(x)].clone();
                    // companion series is 1 - tanh^2
                    let tk = if k == 0 {
                        b.node(Op::Tanh(a[0]))
                    } else {
                        let ja = extend_weighted(&mut b, &mut weighted[i], &a, k);
                        let s = aux[i].clone();
                        let acc = b.convolve(&ja, &s, k, 1, k);
                        b.scale(inv_k, acc)
                    };
                    let mut t = coef[i].clone();
                    t.push(tk);
                    let sq = b.convolve(&t, &t, k, 0, k);
                    let sk = if k == 0 {
                        let one = b.c(1.0);
                        b.sub(one, sq)
                    } else {
                        b.neg(sq)
                    };
                    (tk, Some(sk))
                }
            };
            coef[i].push(primary);
            if let Some(c) = companion {
                aux[i].push(c);
            }
        }
        for (s, out) in state.iter_mut().zip(f.outputs()) {
            let fk = coef[out.index()][k];
            let next = b.scale(1.0 / (k + 1) as f64, fk);
            s.push(next);
        }
    }

    let mut graph = b.graph;
    let roots: Vec<NodeId> = state.iter().flatten().copied().collect();
    graph.set_outputs(roots);
    Ok(LiftedGraph {
        graph,
        jets: state
            .into_iter()
            .map(|coeffs| SymbolicJet { coeffs })
            .collect(),
        degree,
        requests: b.requests,
        cse_hits: b.cse_hits,
    })
}

fn extend_weighted(
    b: &mut Builder,
    cache: &mut Vec<NodeId>,
    a: &[NodeId],
    k: usize,
) -> Vec<NodeId> {
    while cache.len() <= k {
        let j = cache.len();
        let v = b.scale(j as f64, a[j]);
        cache.push(v);
    }
    cache.clone()
}
