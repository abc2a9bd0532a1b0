#![allow(dead_code)]

use pomcp_shield::belief::{BeliefSummary, ProbVector};
use pomcp_shield::domains::DomainKind;
use pomcp_shield::model::{ActionId, ObservationId};
use pomcp_shield::rulelang::{parse_template, RuleTemplate};
use pomcp_shield::rulelearn::{encode, MaxSmtProblem};
use pomcp_shield::tracelog::{Run, Step, Trace, TraceMeta};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TIGER_ACTIONS: [&str; 3] = ["Listen", "OpenL", "OpenR"];

/// One-run Tiger trace; each step is `(p_right, action label)`.
pub fn tiger_trace(steps: &[(f64, &str)]) -> Trace {
    let steps = steps
        .iter()
        .enumerate()
        .map(|(i, &(p, label))| Step {
            run_index: 0,
            step_index: i,
            summary: BeliefSummary::single(ProbVector::new(vec![p, 1.0 - p]).unwrap()),
            action: ActionId(TIGER_ACTIONS.iter().position(|a| *a == label).unwrap()),
            action_label: label.to_string(),
            observation: ObservationId(0),
            particles: None,
        })
        .collect();
    Trace {
        meta: TraceMeta {
            domain: "tiger".into(),
            particles: 0,
            c: 110.0,
            seed: 0,
        },
        runs: vec![Run { steps }],
    }
}

pub fn tiger_template(text: &str) -> RuleTemplate {
    parse_template(text, &DomainKind::Tiger.vocabulary()).unwrap()
}

fn random_atom<R: Rng>(rng: &mut R, vars: &[String]) -> String {
    let sel = ["p_right", "p_left"].choose(rng).unwrap();
    let cmp = ["<=", ">=", "<", ">"].choose(rng).unwrap();
    let rhs = if rng.gen_bool(0.15) {
        format!("{:.2}", rng.gen_range(0..=20) as f64 / 20.0)
    } else {
        vars.choose(rng).unwrap().clone()
    };
    format!("{sel} {cmp} {rhs}")
}

/// A random Tiger template with at most three merged variables, together
/// with a random trace of at most 50 steps on a coarse probability grid.
///
/// Templates whose requirements mention a variable no rule uses are
/// rejected by the parser; those draws are simply repeated.
pub fn random_instance<R: Rng>(rng: &mut R) -> (RuleTemplate, Trace, MaxSmtProblem) {
    loop {
        if let Some(t) = random_template(rng) {
            let steps: Vec<(f64, &str)> = (0..rng.gen_range(1..=50))
                .map(|_| {
                    (
                        rng.gen_range(0..=20) as f64 / 20.0,
                        *TIGER_ACTIONS.choose(rng).unwrap(),
                    )
                })
                .collect();
            let trace = tiger_trace(&steps);
            let problem = encode(&trace, &t).unwrap();
            return (t, trace, problem);
        }
    }
}

fn random_template<R: Rng>(rng: &mut R) -> Option<RuleTemplate> {
    let classes = rng.gen_range(1..=3);
    let mut vars: Vec<String> = (1..=classes).map(|i| format!("x{i}")).collect();
    let mut where_parts = Vec::new();
    // optional alias merged into an existing class
    if rng.gen_bool(0.4) {
        let target = vars.choose(rng).unwrap().clone();
        vars.push("y".into());
        where_parts.push(format!("y = {target}"));
    }
    if rng.gen_bool(0.4) {
        let v = vars.choose(rng).unwrap();
        let cmp = ["<=", ">=", "<", ">"].choose(rng).unwrap();
        where_parts.push(format!("{v} {cmp} {:.2}", rng.gen_range(1..=19) as f64 / 20.0));
    }

    let mut text = String::new();
    let mut actions = TIGER_ACTIONS.to_vec();
    actions.shuffle(rng);
    let n_rules = rng.gen_range(1..=3);
    for (i, action) in actions.iter().take(n_rules).enumerate() {
        let disjuncts: Vec<String> = (0..rng.gen_range(1..=2))
            .map(|_| {
                let atoms: Vec<String> = (0..rng.gen_range(1..=2))
                    .map(|_| random_atom(rng, &vars))
                    .collect();
                format!("({})", atoms.join(" and "))
            })
            .collect();
        text.push_str(&format!("r{i}: select {action} when {};\n", disjuncts.join(" or ")));
    }
    if !where_parts.is_empty() {
        text.push_str(&format!("where {};\n", where_parts.join(" and ")));
    }
    parse_template(&text, &DomainKind::Tiger.vocabulary()).ok()
}
