//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! The process exits successfully even when a criterion fails so that the
//! report is part of a normal test run; set `TAYLODE_ACCEPTANCE_STRICT=1` to
//! turn any failure into a nonzero exit status.

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use taylode::baselines::{rk_step, solve_rk_adaptive, ButcherTableau, FnRhs, TapeRhs};
use taylode::compile::{
    compile, compile_stats, naive_coefficients, CoefficientTape, RhsTape, Strategy,
};
use taylode::expr::trace;
use taylode::integrate::*;
use taylode::jet::Jet;
use taylode::problems::*;

const LOTKA_VOLTERRA_T10: [f64; 2] = [1.0263447675750914, 0.9096910781360287];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (usize, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, jet_oracles, Some(Duration::from_secs(10))),
        (2, tape_equivalence, Some(Duration::from_secs(60))),
        (3, redundancy_removal, None),
        (4, convergence_order, Some(Duration::from_secs(5))),
        (5, tolerance_tracking, Some(Duration::from_secs(30))),
        (6, high_precision_advantage, None),
        (7, adaptive_degree, Some(Duration::from_secs(30))),
        (8, convergence_radius, None),
        (9, runge_kutta_sanity, None),
        (10, dense_output, None),
    ];
    let mut failed = 0;
    for (n, check, budget) in criteria {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                outcome.pass = false;
                outcome
                    .detail
                    .push_str(&format!("; over the {limit:?} budget"));
            }
        }
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n}: {} [{:.2?}]", outcome.detail, elapsed);
        failed += usize::from(!outcome.pass);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 && std::env::var_os("TAYLODE_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn rel_close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

fn random_jet(rng: &mut StdRng, p: usize) -> Jet {
    Jet::new((0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn brute_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate().take(a.len() - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn jet_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let tol = 1e-12;
    let mut failures = Vec::new();
    let mut checked = 0;
    for p in [4, 8, 16] {
        for _ in 0..200 {
            let a = random_jet(&mut rng, p);
            let b = random_jet(&mut rng, p);
            let mut d = random_jet(&mut rng, p).scale(0.25).coeffs().to_vec();
            d[0] = rng.gen_range(1.0..2.0) * if rng.gen() { 1.0 } else { -1.0 };
            let d = Jet::new(d);

            let prod = a.checked_mul(&b).unwrap();
            let quot = a.checked_div(&d).unwrap().checked_mul(&d).unwrap();
            let (s, c) = a.sin_cos();
            let one = s
                .checked_mul(&s)
                .unwrap()
                .checked_add(&c.checked_mul(&c).unwrap())
                .unwrap();
            let unit = Jet::constant(1.0, p);
            let log_exp = a.exp().ln().unwrap();

            let checks = [
                (
                    "cauchy",
                    rel_close(prod.coeffs(), &brute_product(a.coeffs(), b.coeffs()), tol),
                ),
                ("div/mul", rel_close(quot.coeffs(), a.coeffs(), tol)),
                ("sin^2+cos^2", rel_close(one.coeffs(), unit.coeffs(), tol)),
                ("log(exp)", rel_close(log_exp.coeffs(), a.coeffs(), tol)),
            ];
            for (name, ok) in checks {
                checked += 1;
                if !ok {
                    failures.push(format!("{name} at degree {p}"));
                }
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{checked} identity checks on 200 jets per degree, {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(", first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn jittered_state(rng: &mut StdRng, u0: &[f64]) -> Vec<f64> {
    u0.iter()
        .map(|x| x * (1.0 + rng.gen_range(-0.1..0.1)) + rng.gen_range(-0.01..0.01))
        .collect()
}

fn tape_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for name in PROBLEM_NAMES {
        let prob = make_problem(name).unwrap();
        for p in [2, 4, 6, 8] {
            let tape = compile(&prob.graph, p).unwrap();
            let mut scratch = tape.scratch();
            for _ in 0..20 {
                let u = jittered_state(&mut rng, &prob.u0);
                let t = rng.gen_range(prob.tspan.0..prob.tspan.1);
                let fast = tape.eval(&u, t, &mut scratch).unwrap();
                let slow = naive_coefficients(&prob.graph, &u, t, p).unwrap();
                for k in 0..tape.width() {
                    let scale = slow.order(k).fold(1.0f64, |m, x| m.max(x.abs()));
                    for i in 0..tape.dim() {
                        let d = (fast.get(i, k) - slow.get(i, k)).abs() / scale;
                        worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
                    }
                }
                cases += 1;
            }
        }
    }
    Outcome::new(
        worst <= 1e-12,
        format!("{cases} states, worst relative deviation {worst:.2e} (limit 1e-12)"),
    )
}

fn redundancy_removal() -> Outcome {
    let prob = make_problem("pcr3bp").unwrap();
    let rows = compile_stats(&prob.graph, &prob.u0, 0.0, &[6, 12], 15).unwrap();
    let pick = |p: usize, s: Strategy| {
        rows.iter()
            .find(|r| r.degree == p && r.strategy == s)
            .unwrap()
    };
    let naive_ratio =
        pick(12, Strategy::Naive).op_count as f64 / pick(6, Strategy::Naive).op_count as f64;
    let compiled_ratio =
        pick(12, Strategy::Compiled).op_count as f64 / pick(6, Strategy::Compiled).op_count as f64;
    let speedup =
        pick(12, Strategy::Naive).median_eval_ns / pick(12, Strategy::Compiled).median_eval_ns;
    let checks = [compiled_ratio <= 5.0, naive_ratio >= 6.0, speedup >= 3.0];
    Outcome::new(
        checks.iter().all(|&c| c),
        format!(
            "compiled op ratio 12/6 = {compiled_ratio:.2} (<= 5: {}), naive op ratio = {naive_ratio:.2} (>= 6: {}), \
             speedup at p = 12 = {speedup:.1}x (>= 3: {})",
            checks[0], checks[1], checks[2]
        ),
    )
}

fn exp_tape(p: usize) -> CoefficientTape {
    compile(&trace(1, |u, _| vec![u[0].clone()]).unwrap(), p).unwrap()
}

fn convergence_order() -> Outcome {
    let mut orders = Vec::new();
    for (p, h) in [(4, 0.125), (6, 0.25), (8, 0.5)] {
        let tape = exp_tape(p);
        let err = |h: f64| {
            let sol = solve_fixed(&tape, &[1.0], 0.0, 1.0, h, &SolveOptions::default()).unwrap();
            (sol.final_state()[0] - 1f64.exp()).abs()
        };
        orders.push((p, (err(h) / err(h / 2.0)).log2()));
    }
    let pass = orders.iter().all(|&(p, q)| q >= p as f64 - 0.5);
    let text: Vec<String> = orders
        .iter()
        .map(|(p, q)| format!("p = {p}: {q:.2}"))
        .collect();
    Outcome::new(pass, format!("empirical orders {}", text.join(", ")))
}

fn lotka_volterra_taylor(p: usize, tol: f64) -> Solution {
    let lv = make_problem("lotka_volterra").unwrap();
    let tape = compile(&lv.graph, p).unwrap();
    let tol = Tolerances::uniform(tol).unwrap();
    solve_adaptive(
        &tape,
        &lv.u0,
        0.0,
        10.0,
        &tol,
        Controller::default(),
        &SolveOptions::default(),
    )
    .unwrap()
}

fn tolerance_tracking() -> Outcome {
    let oracle = make_problem("lotka_volterra")
        .unwrap()
        .reference_solution(10.0)
        .unwrap();
    let fixture_ok = relative_error(&oracle, &LOTKA_VOLTERRA_T10) <= 1e-13;
    let mut errors = Vec::new();
    let mut bounded = true;
    for tol in [1e-6, 1e-8, 1e-10, 1e-12] {
        let err = relative_error(
            lotka_volterra_taylor(8, tol).final_state(),
            &LOTKA_VOLTERRA_T10,
        );
        bounded &= err <= 1e3 * tol;
        errors.push(err);
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let text: Vec<String> = errors.iter().map(|e| format!("{e:.1e}")).collect();
    Outcome::new(
        fixture_ok && bounded && monotone,
        format!(
            "taylor:8 errors [{}] (each <= 1e3 reltol: {bounded}, decreasing: {monotone}, fixture agrees: {fixture_ok})",
            text.join(", ")
        ),
    )
}

fn high_precision_advantage() -> Outcome {
    let lv = make_problem("lotka_volterra").unwrap();
    let sweep: Vec<f64> = (20..=30).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect();
    let target = 1e-12;

    let taylor = sweep
        .iter()
        .map(|&tol| lotka_volterra_taylor(12, tol))
        .filter(|s| relative_error(s.final_state(), &LOTKA_VOLTERRA_T10) <= target)
        .map(|s| s.stats.tape_evals)
        .min();

    let rhs = RhsTape::new(&lv.graph);
    let dp5 = sweep
        .iter()
        .filter_map(|&tol| {
            let tol = Tolerances::uniform(tol).unwrap();
            let mut f = TapeRhs::new(&rhs);
            let opts = SolveOptions::default();
            solve_rk_adaptive(
                &ButcherTableau::dp5(),
                &mut f,
                &lv.u0,
                0.0,
                10.0,
                &tol,
                Controller::default(),
                &opts,
            )
            .ok()
        })
        .filter(|s| relative_error(s.final_state(), &LOTKA_VOLTERRA_T10) <= target)
        .map(|s| 7 * (s.stats.steps_accepted + s.stats.steps_rejected))
        .min();

    match (taylor, dp5) {
        (Some(t), Some(d)) => Outcome::new(
            t < d,
            format!(
                "error <= 1e-12 costs taylor:12 {t} tape evaluations vs DP5 {d} stage evaluations"
            ),
        ),
        (t, d) => Outcome::new(
            false,
            format!("target error not reached (taylor {t:?}, dp5 {d:?})"),
        ),
    }
}

fn mean_degree(sol: &Solution, region: impl Fn(f64) -> bool) -> f64 {
    let picked: Vec<f64> = sol
        .ts
        .iter()
        .zip(&sol.degrees)
        .filter(|(t, _)| region(**t))
        .map(|(_, &p)| p as f64)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

/// Work of `runs` at `error`, interpolated log-log between the two runs whose
/// errors bracket it. Only runs within half a decade of `error` qualify.
fn work_at_error(runs: &[(f64, f64)], error: f64) -> Option<f64> {
    let near: Vec<(f64, f64)> = runs
        .iter()
        .filter(|(e, _)| (e.log10() - error.log10()).abs() <= 0.5)
        .map(|&(e, w)| (e.log10(), w.log10()))
        .collect();
    let x = error.log10();
    let below = near
        .iter()
        .filter(|(e, _)| *e <= x)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let above = near
        .iter()
        .filter(|(e, _)| *e >= x)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match (below, above) {
        (Some(&(e0, w0)), Some(&(e1, w1))) if e1 > e0 => {
            Some(10f64.powf(w0 + (w1 - w0) * (x - e0) / (e1 - e0)))
        }
        (Some(&(_, w)), _) | (_, Some(&(_, w))) => Some(10f64.powf(w)),
        _ => None,
    }
}

fn adaptive_degree() -> Outcome {
    let th = make_problem("tanh_logistic").unwrap();
    let problem = th.compiled();
    let reference = th.reference_solution(10.0).unwrap();
    let policy = DegreePolicy::new(6, 12).unwrap();
    let opts = SolveOptions::default();

    let tol = Tolerances::uniform(1e-10).unwrap();
    let adaptive = solve_adaptive_degree(
        &problem,
        &th.u0,
        0.0,
        10.0,
        &tol,
        Controller::default(),
        policy,
        None,
        &opts,
    )
    .unwrap();
    let hard = mean_degree(&adaptive, |t| t > 4.0 && t < 6.0);
    let easy = mean_degree(&adaptive, |t| !(2.0..=8.0).contains(&t));
    let part_a = hard < easy;

    let adaptive_err = relative_error(adaptive.final_state(), &reference);
    let tape12 = problem.tape(12).unwrap();
    let fixed: Vec<(f64, f64, f64)> = (14..=26)
        .map(|k| {
            let tol = Tolerances::uniform(10f64.powf(-(k as f64) / 2.0)).unwrap();
            let sol = solve_adaptive(
                &tape12,
                &th.u0,
                0.0,
                10.0,
                &tol,
                Controller::default(),
                &opts,
            )
            .unwrap();
            let err = relative_error(sol.final_state(), &reference);
            (err, sol.stats.step_work() as f64, sol.stats.work as f64)
        })
        .collect();
    let by_steps: Vec<(f64, f64)> = fixed.iter().map(|&(e, w, _)| (e, w)).collect();
    let by_evals: Vec<(f64, f64)> = fixed.iter().map(|&(e, _, w)| (e, w)).collect();
    let matched = work_at_error(&by_steps, adaptive_err);
    let matched_evals = work_at_error(&by_evals, adaptive_err);
    let part_b = matched.is_some_and(|w| adaptive.stats.step_work() as f64 <= w);

    Outcome::new(
        part_a && part_b,
        format!(
            "(a) mean degree on (4,6) {hard:.2} vs outside {easy:.2}: {part_a}; \
             (b) at error {adaptive_err:.2e} sum of p^2 per step {} vs fixed taylor:12 {}: {part_b} \
             (all evaluations: {} vs {})",
            adaptive.stats.step_work(),
            matched.map_or("n/a".into(), |w| format!("{w:.0}")),
            adaptive.stats.work,
            matched_evals.map_or("n/a".into(), |w| format!("{w:.0}")),
        ),
    )
}

fn convergence_radius() -> Outcome {
    let th = make_problem("tanh_logistic").unwrap();
    let bound = 1.5 * std::f64::consts::PI / tanh_phi_prime(5.0);
    let tol = Tolerances::uniform(1e-10).unwrap();
    let mut largest = 0.0f64;
    let mut pass = true;
    for p in 6..=12 {
        let tape = compile(&th.graph, p).unwrap();
        let sol = solve_adaptive(
            &tape,
            &th.u0,
            0.0,
            10.0,
            &tol,
            Controller::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        let h_max = sol
            .steps()
            .filter(|(t, _)| *t > 4.5 && *t < 5.5)
            .map(|(_, h)| h)
            .fold(0.0, f64::max);
        pass &= h_max > 0.0 && h_max < bound;
        largest = largest.max(h_max);
    }
    Outcome::new(pass, format!("largest accepted step on (4.5, 5.5) over degrees 6..12 is {largest:.3} (bound {bound:.3})"))
}

fn runge_kutta_sanity() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for tab in [ButcherTableau::dp5(), ButcherTableau::tsit5()] {
        let s = tab.stages();
        let sum_b: f64 = tab.b().iter().sum();
        let sum_bh: f64 = tab.b_hat().iter().sum();
        let rows = (0..s).all(|i| (tab.a_row(i).iter().sum::<f64>() - tab.c()[i]).abs() <= 1e-14);
        let consistent = (sum_b - 1.0).abs() <= 1e-14 && (sum_bh - 1.0).abs() <= 1e-14 && rows;

        let mut f = FnRhs::new(1, |u: &[f64], _, du: &mut [f64]| du[0] = u[0]);
        let mut err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut u = vec![1.0];
            for k in 0..n {
                u = rk_step(&tab, &mut f, &u, k as f64 * h, h).unwrap().u_next;
            }
            (u[0] - 1f64.exp()).abs()
        };
        let order = (err(20) / err(40)).log2();
        pass &= consistent && order >= 4.5;
        notes.push(format!(
            "{} invariants {consistent}, order {order:.2}",
            tab.name
        ));
    }

    let rl = make_problem("random_linear").unwrap();
    let reference = rl.reference_solution(10.0).unwrap();
    let rhs = RhsTape::new(&rl.graph);
    for reltol in [1e-6, 1e-8] {
        let tol = Tolerances::uniform(reltol).unwrap();
        let mut f = TapeRhs::new(&rhs);
        let opts = SolveOptions::default();
        let sol = solve_rk_adaptive(
            &ButcherTableau::tsit5(),
            &mut f,
            &rl.u0,
            0.0,
            10.0,
            &tol,
            Controller::default(),
            &opts,
        )
        .unwrap();
        let err = relative_error(sol.final_state(), &reference);
        pass &= err <= 1e3 * reltol;
        notes.push(format!("Tsit5 random_linear at {reltol:.0e}: {err:.1e}"));
    }
    Outcome::new(pass, notes.join("; "))
}

fn dense_output() -> Outcome {
    let lv = make_problem("lotka_volterra").unwrap();
    let p = 8;
    let tape = compile(&lv.graph, p).unwrap();
    let truth_tape = compile(&lv.graph, 20).unwrap();
    let tol = Tolerances::uniform(1e-8).unwrap();
    let opts = SolveOptions {
        dense: true,
        ..SolveOptions::default()
    };
    let sol = solve_adaptive(&tape, &lv.u0, 0.0, 10.0, &tol, Controller::default(), &opts).unwrap();

    let endpoints = sol.ts.iter().zip(&sol.us).all(|(&t, u)| {
        let d = sol.dense(t).unwrap();
        d.iter().zip(u).all(|(a, b)| a.to_bits() == b.to_bits())
    });

    let mut rng = StdRng::seed_from_u64(10);
    let mut worst_ratio = 0.0f64;
    let mut floored = 0;
    for _ in 0..100 {
        let n = rng.gen_range(0..sol.records.len());
        let rec = &sol.records[n];
        let t = rec.t + rng.gen_range(0.01..0.99) * (rec.t_next - rec.t);
        let start: Vec<f64> = rec.coeffs.order(0).collect();
        let fine = (t - rec.t) / 8.0;
        let truth = solve_fixed(
            &truth_tape,
            &start,
            rec.t,
            t,
            fine,
            &SolveOptions::default(),
        )
        .unwrap();
        let dense = sol.dense(t).unwrap();
        let deviation = dense
            .iter()
            .zip(truth.final_state())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let estimate =
            rec.coeffs.order(p + 1).map(f64::abs).fold(0.0, f64::max) * rec.h.powi(p as i32 + 1);
        // Neither side can be closer than rounding, which matters on the
        // short clipped final step.
        let rounding = 8.0 * f64::EPSILON * start.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if estimate < rounding {
            floored += 1;
        }
        worst_ratio = worst_ratio.max(deviation / estimate.max(rounding));
    }
    Outcome::new(
        endpoints && worst_ratio <= 10.0,
        format!(
            "endpoints bitwise {endpoints}; worst interior deviation is {worst_ratio:.3} times the step's error estimate \
             (limit 10; {floored} of 100 samples on steps whose estimate is below rounding)"
        ),
    )
}
