use proptest::prelude::*;
use taylode::compile::{compile, CompiledProblem};
use taylode::integrate::*;
use taylode::problems::make_problem;

fn controller() -> impl Strategy<Value = Controller> {
    prop_oneof![
        Just(ControllerKind::I),
        Just(ControllerKind::PI),
        Just(ControllerKind::PID)
    ]
    .prop_map(Controller::new)
}

fn check_trajectory(sol: &Solution, t0: f64, t_end: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(sol.ts.len(), sol.us.len());
    prop_assert_eq!(sol.ts[0], t0);
    prop_assert_eq!(*sol.ts.last().unwrap(), t_end);
    prop_assert!(sol.ts.windows(2).all(|w| w[0] < w[1]));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn adaptive_runs_land_exactly_on_the_end(
        t_end in 0.01..7.0f64,
        log_tol in -12.0..-4.0f64,
        p in 3usize..12,
        ctrl in controller(),
    ) {
        let lv = make_problem("lotka_volterra").unwrap();
        let tape = compile(&lv.graph, p).unwrap();
        let tol = Tolerances::uniform(10f64.powf(log_tol)).unwrap();
        let sol = solve_adaptive(&tape, &lv.u0, 0.0, t_end, &tol, ctrl, &SolveOptions::default()).unwrap();
        check_trajectory(&sol, 0.0, t_end)?;
    }

    #[test]
    fn fixed_runs_land_exactly_on_the_end(t_end in 0.01..5.0f64, steps in 1usize..200) {
        let lv = make_problem("lotka_volterra").unwrap();
        let tape = compile(&lv.graph, 6).unwrap();
        let h = t_end / steps as f64;
        let sol = solve_fixed(&tape, &lv.u0, 0.0, t_end, h, &SolveOptions::default()).unwrap();
        check_trajectory(&sol, 0.0, t_end)?;
        prop_assert!(sol.stats.steps_accepted <= steps + 1);
    }

    #[test]
    fn degree_changes_are_bounded(
        p_min in 2usize..8,
        extra in 0usize..6,
        log_tol in -12.0..-5.0f64,
        ctrl in controller(),
    ) {
        let th = make_problem("tanh_logistic").unwrap();
        let problem = CompiledProblem::new(th.graph.clone());
        let policy = DegreePolicy::new(p_min, p_min + extra).unwrap();
        let tol = Tolerances::uniform(10f64.powf(log_tol)).unwrap();
        let sol = solve_adaptive_degree(&problem, &th.u0, 0.0, 10.0, &tol, ctrl, policy, None, &SolveOptions::default())
            .unwrap();
        check_trajectory(&sol, 0.0, 10.0)?;
        prop_assert!(sol.degrees.iter().all(|&p| policy.contains(p)));
        prop_assert!(sol.degrees.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
        let from_histogram: usize = sol.stats.degree_histogram.values().sum();
        prop_assert_eq!(from_histogram, sol.stats.steps_accepted);
    }

    #[test]
    fn dense_output_reproduces_step_endpoints(log_tol in -12.0..-6.0f64, p in 4usize..10) {
        let lv = make_problem("lotka_volterra").unwrap();
        let tape = compile(&lv.graph, p).unwrap();
        let tol = Tolerances::uniform(10f64.powf(log_tol)).unwrap();
        let opts = SolveOptions { dense: true, ..SolveOptions::default() };
        let sol = solve_adaptive(&tape, &lv.u0, 0.0, 3.0, &tol, Controller::default(), &opts).unwrap();
        for (n, &t) in sol.ts.iter().enumerate() {
            let u = sol.dense(t).unwrap();
            let same = u.iter().zip(&sol.us[n]).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same, "step {} at t = {}", n, t);
        }
    }

    #[test]
    fn controller_factor_stays_in_limits(e in 0.0..1e6f64, p in 1usize..25, kind in 0usize..3) {
        let kind = [ControllerKind::I, ControllerKind::PI, ControllerKind::PID][kind];
        let mut ctrl = Controller::new(kind);
        for _ in 0..3 {
            let f = ctrl.factor(e, p);
            prop_assert!(ctrl.q_min <= f && f <= ctrl.q_max, "factor {}", f);
            let r = ctrl.reject(1.0, 1.0 + e, p);
            prop_assert!(ctrl.q_min <= r && r < 1.0, "rejection factor {}", r);
            ctrl.accept(e);
        }
    }
}
