mod common;

use common::{random_instance, tiger_template, tiger_trace};
use pomcp_shield::rulelearn::{
    brute_force_oracle, encode, learn, learn_problem, solve_maxsmt, EnumerativeBackend, LearnError,
    SmtLibBackend, TightenMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OPEN_R: &str = "r_OR: select OpenR when p_right >= x;\nwhere x > 0.9;\n";

fn threshold(steps: &[(f64, &str)], template: &str) -> (usize, f64) {
    let learned = learn(
        &tiger_trace(steps),
        &tiger_template(template),
        &EnumerativeBackend,
        TightenMode::Restrictive,
    )
    .unwrap();
    (learned.objective_value, learned.rule.assignment["x"])
}

#[test]
fn single_threshold_is_tightened_to_the_highest_opening_belief() {
    let steps = [(0.97, "OpenR"), (0.85, "Listen"), (0.50, "Listen")];
    let problem = encode(&tiger_trace(&steps), &tiger_template(OPEN_R)).unwrap();
    let solved = solve_maxsmt(&problem, &EnumerativeBackend).unwrap();
    assert_eq!(solved.objective_value, 0);
    let x = solved.rule.assignment["x"];
    assert!(x > 0.9 && x <= 0.97, "{x}");

    assert_eq!(threshold(&steps, OPEN_R), (0, 0.97));
}

#[test]
fn later_steps_narrow_the_feasible_interval() {
    let mut steps = vec![(0.97, "OpenR"), (0.85, "Listen"), (0.50, "Listen"), (0.92, "Listen")];
    let problem = encode(&tiger_trace(&steps), &tiger_template(OPEN_R)).unwrap();
    let solved = solve_maxsmt(&problem, &EnumerativeBackend).unwrap();
    assert_eq!(solved.objective_value, 0);
    let x = solved.rule.assignment["x"];
    assert!(x > 0.92 && x <= 0.97, "{x}");

    steps.push((0.95, "OpenR"));
    let (cost, x) = threshold(&steps, OPEN_R);
    assert_eq!(cost, 0);
    assert!(x > 0.92 && x <= 0.95, "{x}");
    assert_eq!(x, 0.95);
}

#[test]
fn contradictory_requirements_are_unsat() {
    let template = "r_OR: select OpenR when p_right >= x;\nwhere x >= 0.9 and x <= 0.1;\n";
    let problem = encode(&tiger_trace(&[(0.5, "Listen")]), &tiger_template(template)).unwrap();
    assert!(matches!(
        solve_maxsmt(&problem, &EnumerativeBackend),
        Err(LearnError::Unsat)
    ));
}

#[test]
fn listen_thresholds_move_down_together() {
    let template = "r_L: select Listen when p_right <= x1 and p_left <= x2;\nwhere x1 = x2;\n";
    let steps = [
        (0.5, "Listen"),
        (0.85, "Listen"),
        (0.15, "Listen"),
        (0.6, "Listen"),
        (0.97, "OpenR"),
        (0.03, "OpenL"),
    ];
    let learned = learn(
        &tiger_trace(&steps),
        &tiger_template(template),
        &EnumerativeBackend,
        TightenMode::Restrictive,
    )
    .unwrap();
    assert_eq!(learned.objective_value, 0);
    assert_eq!(learned.rule.assignment["x1"], 0.85);
    assert_eq!(learned.rule.assignment["x2"], 0.85);
}

#[test]
fn permissive_mode_moves_the_other_way() {
    let steps = [(0.97, "OpenR"), (0.85, "Listen"), (0.50, "Listen")];
    let learned = learn(
        &tiger_trace(&steps),
        &tiger_template(OPEN_R),
        &EnumerativeBackend,
        TightenMode::Permissive,
    )
    .unwrap();
    let x = learned.rule.assignment["x"];
    // just above the largest listening belief
    assert!(x > 0.9 && x < 0.9 + 2e-6, "{x}");
}

#[test]
fn degenerate_costs() {
    let all_ok = [(0.97, "OpenR"), (0.2, "Listen")];
    let p = encode(&tiger_trace(&all_ok), &tiger_template(OPEN_R)).unwrap();
    assert_eq!(brute_force_oracle(&p, TightenMode::Restrictive).unwrap().objective_value, 0);

    // a constant body that never holds while the action is always taken
    let never = "r_OR: select OpenR when p_right > 1.0 and p_right >= x;\n";
    let steps = [(0.97, "OpenR"), (0.5, "OpenR"), (0.1, "OpenR")];
    let p = encode(&tiger_trace(&steps), &tiger_template(never)).unwrap();
    assert_eq!(brute_force_oracle(&p, TightenMode::Restrictive).unwrap().objective_value, 3);
    assert_eq!(solve_maxsmt(&p, &EnumerativeBackend).unwrap().objective_value, 3);
}

#[test]
fn oracle_refuses_large_problems() {
    let template = "r_L: select Listen when p_right <= a and p_left <= b;\n\
                    r_OR: select OpenR when p_right >= c or p_left <= d;\n";
    let p = encode(&tiger_trace(&[(0.5, "Listen")]), &tiger_template(template)).unwrap();
    assert!(matches!(
        brute_force_oracle(&p, TightenMode::Restrictive),
        Err(LearnError::TooManyVariables { found: 4, max: 3 })
    ));
}

#[test]
fn enumerative_solver_matches_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let (_, _, problem) = random_instance(&mut rng);
        let oracle = brute_force_oracle(&problem, TightenMode::Restrictive);
        let solved = learn_problem(&problem, &EnumerativeBackend, TightenMode::Restrictive);
        match (oracle, solved) {
            (Err(LearnError::Unsat), Err(LearnError::Unsat)) => {}
            (Ok(o), Ok(s)) => {
                assert_eq!(o.objective_value, s.objective_value, "case {case}: {problem:?}");
                for (a, b) in o.values(&problem).iter().zip(s.values(&problem)) {
                    assert!((a - b).abs() <= 1e-6, "case {case}: {a} vs {b}");
                }
            }
            (o, s) => panic!("case {case}: oracle {o:?}, solver {s:?}"),
        }
    }
}

#[test]
fn smtlib_backend_agrees_when_available() {
    let backend = SmtLibBackend::default();
    if !backend.available() {
        eprintln!("no SMT solver on PATH; skipping");
        return;
    }
    let listen = "r_L: select Listen when (p_right <= x1 and p_left <= x2);\n\
                  r_OR: select OpenR when p_right >= x3;\n\
                  r_OL: select OpenL when p_left >= x4;\n\
                  where x1 = x2 and x3 = x4 and x3 > 0.9;\n";
    // posteriors reached by consistent and inconsistent listens
    let tiger = [
        (0.5, "Listen"),
        (0.85, "Listen"),
        (0.9698, "OpenR"),
        (0.5, "Listen"),
        (0.15, "Listen"),
        (0.5, "Listen"),
        (0.15, "Listen"),
        (0.0302, "OpenL"),
        (0.5, "Listen"),
        (0.85, "OpenR"),
    ];
    let cases: Vec<(&[(f64, &str)], &str)> = vec![
        (&[(0.97, "OpenR"), (0.85, "Listen"), (0.50, "Listen")], OPEN_R),
        (&[(0.97, "OpenR"), (0.92, "Listen"), (0.95, "OpenR"), (0.93, "OpenR")], OPEN_R),
        (&tiger, listen),
    ];
    for (i, (steps, template)) in cases.into_iter().enumerate() {
        let problem = encode(&tiger_trace(steps), &tiger_template(template)).unwrap();
        let reference = solve_maxsmt(&problem, &EnumerativeBackend).unwrap();
        let external = solve_maxsmt(&problem, &backend).unwrap();
        assert_eq!(reference.objective_value, external.objective_value, "case {i}");
        let a = learn_problem(&problem, &EnumerativeBackend, TightenMode::Restrictive).unwrap();
        let b = learn_problem(&problem, &backend, TightenMode::Restrictive).unwrap();
        assert_eq!(a.objective_value, b.objective_value, "case {i}");
    }

    let unsat = "r_OR: select OpenR when p_right >= x;\nwhere x >= 0.9 and x <= 0.1;\n";
    let problem = encode(&tiger_trace(&[(0.5, "Listen")]), &tiger_template(unsat)).unwrap();
    assert!(matches!(solve_maxsmt(&problem, &backend), Err(LearnError::Unsat)));
}
