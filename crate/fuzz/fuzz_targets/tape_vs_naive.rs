#![no_main]

//! Differential check of compiled coefficient tapes against jet
//! re-evaluation on right-hand sides decoded from bytes.

use libfuzzer_sys::fuzz_target;
use taylode::compile::{compile, naive_coefficients};
use taylode::expr::{trace, Expr};

const DIM: usize = 2;

/// Stack-machine decoding: every byte is an instruction, some take the next
/// byte as operand. Partial operations are wrapped so that the result is
/// analytic everywhere.
fn decode(code: &[u8], u: &[Expr], t: &Expr) -> Vec<Expr> {
    let mut stack: Vec<Expr> = Vec::new();
    let mut bytes = code.iter().copied();
    while let Some(b) = bytes.next() {
        let positive = |x: &Expr| 1.0 + x * x;
        match b % 14 {
            0 => stack.push(u[bytes.next().unwrap_or(0) as usize % DIM].clone()),
            1 => stack.push(t.clone()),
            2 => stack.push(t.constant(bytes.next().unwrap_or(0) as i8 as f64 / 16.0)),
            op @ 3..=6 if stack.len() >= 2 => {
                let y = stack.pop().unwrap();
                let x = stack.pop().unwrap();
                stack.push(match op {
                    3 => x + y,
                    4 => x - y,
                    5 => x * y,
                    _ => x / positive(&y),
                });
            }
            op @ 7..=13 if !stack.is_empty() => {
                let x = stack.pop().unwrap();
                stack.push(match op {
                    7 => -x,
                    8 => x.sin(),
                    9 => x.cos(),
                    10 => x.tanh(),
                    11 => x.sin().exp(),
                    12 => positive(&x).ln(),
                    _ => positive(&x).powf((bytes.next().unwrap_or(2) % 7) as f64 / 2.0 - 1.5),
                });
            }
            _ => {}
        }
    }
    let mut outputs: Vec<Expr> = stack.into_iter().rev().take(DIM).collect();
    while outputs.len() < DIM {
        outputs.push(u[outputs.len()].clone());
    }
    outputs
}

fuzz_target!(|data: &[u8]| {
    let Some((&head, code)) = data.split_first() else {
        return;
    };
    if code.len() > 256 {
        return;
    }
    let degree = 1 + head as usize % 8;
    let graph = trace(DIM, |u, t| decode(code, u, t)).unwrap();
    let u = [0.25, -0.5];
    let t = 0.125;
    // Huge intermediates make both routes lose accuracy in different ways,
    // and after overflow they legitimately differ (folding x^0 to 1 against
    // the power recurrence on an infinite base).
    let Ok(values) = graph.eval_nodes(&u, t, graph.outputs()) else {
        return;
    };
    if values.iter().any(|v| v.abs() > 1e6) {
        return;
    }
    let tape = compile(&graph, degree).unwrap();
    let slow = naive_coefficients(&graph, &u, t, degree);
    let fast = match tape.eval(&u, t, &mut tape.scratch()) {
        Ok(fast) => fast,
        Err(e) => {
            // overflow must show up on both routes
            let overflowed = slow.map_or(true, |c| c.as_slice().iter().any(|x| !x.is_finite() || x.abs() > 1e300));
            assert!(overflowed, "tape failed with {e} but jets are finite");
            return;
        }
    };
    let slow = slow.unwrap();
    for k in 0..tape.width() {
        let scale = slow.order(k).fold(1.0f64, |m, x| m.max(x.abs()));
        if scale > 1e6 {
            return;
        }
        for i in 0..DIM {
            let (a, b) = (fast.get(i, k), slow.get(i, k));
            assert!((a - b).abs() <= 1e-9 * scale, "c[{i}][{k}]: {a} vs {b}");
        }
    }
});
