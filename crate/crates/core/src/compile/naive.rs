//! Coefficients by repeated whole-jet re-evaluation.
//!
//! This is the strategy the compiler replaces: to obtain `c_{k+1}` the
//! right-hand side is pushed through jet arithmetic at degree `k`, which
//! recomputes every lower-order coefficient again. The total cost is cubic
//! in the degree. It is kept as the numerical reference for compiled tapes
//! and as the baseline in [`super::compile_stats`].

use crate::expr::{ExprGraph, Op};
use crate::jet::Jet;

use super::{CoeffMatrix, CompileError};

/// Evaluates `f` on jet arguments. Constant operands of products and sums
/// are applied as scalars, as operator-overloading AD would do.
pub fn eval_on_jets(g: &ExprGraph, u: &[Jet], t: &Jet) -> Result<Vec<Jet>, CompileError> {
    let degree = t.degree();
    let live = g.reachable(g.outputs().iter().copied());
    let mut vals: Vec<Option<Jet>> = vec![None; g.len()];
    for (i, op) in g.nodes().iter().enumerate() {
        if !live[i] {
            continue;
        }
        let v = |id: crate::expr::NodeId| vals[id.index()].as_ref().expect("topological order");
        let konst = |id: crate::expr::NodeId| g.const_value(id);
        let jet = match *op {
            Op::Const(c) => Jet::constant(c, degree),
            Op::State(s) => u[s].clone(),
            Op::Time => t.clone(),
            Op::Add(a, b) => match (konst(a), konst(b)) {
                (Some(c), _) => v(b).add_scalar(c),
                (_, Some(c)) => v(a).add_scalar(c),
                _ => v(a).checked_add(v(b))?,
            },
            Op::Sub(a, b) => match konst(b) {
                Some(c) => v(a).add_scalar(-c),
                None => v(a).checked_sub(v(b))?,
            },
            Op::Mul(a, b) => match (konst(a), konst(b)) {
                (Some(c), _) => v(b).scale(c),
                (_, Some(c)) => v(a).scale(c),
                _ => v(a).checked_mul(v(b))?,
            },
            Op::Div(a, b) => match konst(b) {
                Some(c) if c != 0.0 => v(a).scale(1.0 / c),
                _ => v(a).checked_div(v(b))?,
            },
            Op::Neg(a) => -v(a),
            Op::Pow(a, r) => v(a).powf(r)?,
            Op::Exp(a) => v(a).exp(),
            Op::Log(a) => v(a).ln()?,
            Op::Sqrt(a) => v(a).sqrt()?,
            Op::Sin(a) => v(a).sin(),
            Op::Cos(a) => v(a).cos(),
            Op::Tanh(a) => v(a).tanh(),
            Op::Sinh(a) => v(a).sinh(),
            Op::Cosh(a) => v(a).cosh(),
        };
        vals[i] = Some(jet);
    }
    Ok(g.outputs()
        .iter()
        .map(|o| vals[o.index()].clone().expect("outputs are live"))
        .collect())
}

/// Normalized coefficients `c_0..=c_{degree+1}` of the solution through
/// `(u, t)`, computed by re-evaluating `f` once per order.
pub fn naive_coefficients(
    g: &ExprGraph,
    u: &[f64],
    t: f64,
    degree: usize,
) -> Result<CoeffMatrix, CompileError> {
    let dim = g.dim();
    if u.len() != dim {
        return Err(CompileError::StateLength {
            expected: dim,
            got: u.len(),
        });
    }
    let width = degree + 2;
    let mut c: Vec<Vec<f64>> = u.iter().map(|&x| vec![x]).collect();
    for k in 0..=degree {
        let jets: Vec<Jet> = c.iter().map(|ci| Jet::new(ci.clone())).collect();
        let f = eval_on_jets(g, &jets, &Jet::variable(t, k))?;
        for (ci, fi) in c.iter_mut().zip(&f) {
            ci.push(fi.coeffs()[k] / (k + 1) as f64);
        }
    }
    let mut m = CoeffMatrix::zeros(dim, width);
    for (i, ci) in c.iter().enumerate() {
        m.row_mut(i).copy_from_slice(ci);
    }
    Ok(m)
}
