//! Threshold synthesis for rule templates.
//!
//! A trace and a template are encoded as a MAX-SMT problem: for every action
//! rule `r_a` and every step `t` the rule body is grounded with the step's
//! belief probabilities (and negated when the step did not take `a`), then
//! guarded by a fresh dummy literal `l_{a,t}`. Hard constraints keep every
//! free variable in `[0, 1]` and enforce the template's `where` clause. The
//! solver minimises the number of true dummies; [`tighten`] then moves each
//! threshold as close to the observed data as the dummy valuation allows.
//!
//! Two backends are provided: [`EnumerativeBackend`] solves the problem
//! exactly by branch and bound over the finite grid of observed values, and
//! [`SmtLibBackend`] hands the problem to an external SMT solver.

mod encode;
mod enumerative;
mod grid;
mod oracle;
mod smtlib;
mod tighten;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::ActionId;
use crate::rulelang::{Cmp, ParseError, ReqCmp, Rule, RuleTemplate};

pub use encode::encode;
pub use enumerative::EnumerativeBackend;
pub use oracle::{brute_force_oracle, MAX_ORACLE_CLASSES};
pub use smtlib::{parse_model, to_smtlib2, SmtLibBackend};
pub use tighten::tighten;

/// Width used to report thresholds that sit on an open interval boundary.
pub const OPEN_INTERVAL_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("trace has no steps")]
    EmptyTrace,
    #[error("trace has no value for selector {0}")]
    MissingSelector(String),
    #[error("hard constraints are unsatisfiable")]
    Unsat,
    #[error("solver timed out")]
    Timeout,
    #[error("solver backend failed: {0}")]
    Backend(String),
    #[error("{found} independent variables exceed the oracle limit of {max}")]
    TooManyVariables { found: usize, max: usize },
    #[error("learned assignment is not a valid rule: {0}")]
    InvalidRule(#[from] ParseError),
}

/// Right-hand side of a grounded atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundRhs {
    Var(usize),
    Const(f64),
}

/// `value cmp rhs` where `value` is a belief probability read from a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundAtom {
    pub value: f64,
    pub cmp: Cmp,
    pub rhs: GroundRhs,
}

impl GroundAtom {
    pub fn eval(&self, values: &[f64]) -> bool {
        let x = match self.rhs {
            GroundRhs::Var(v) => values[v],
            GroundRhs::Const(c) => c,
        };
        self.cmp.holds(self.value, x)
    }
}

/// A grounded action-rule body, possibly negated.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundFormula {
    pub disjuncts: Vec<Vec<GroundAtom>>,
    pub negated: bool,
}

impl GroundFormula {
    pub fn eval(&self, values: &[f64]) -> bool {
        let body = self
            .disjuncts
            .iter()
            .any(|conj| conj.iter().all(|a| a.eval(values)));
        body != self.negated
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.disjuncts.iter().flatten().filter_map(|a| match a.rhs {
            GroundRhs::Var(v) => Some(v),
            GroundRhs::Const(_) => None,
        })
    }
}

/// Position of a step in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StepRef {
    pub run: usize,
    pub step: usize,
}

/// Soft clause `l_{a,t} ∨ r_{a,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundClause {
    pub dummy: usize,
    pub action: ActionId,
    pub rule_index: usize,
    pub step: StepRef,
    pub formula: GroundFormula,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HardTerm {
    Var(usize),
    Const(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardConstraint {
    pub lhs: HardTerm,
    pub cmp: ReqCmp,
    pub rhs: HardTerm,
}

impl HardConstraint {
    pub fn holds(&self, values: &[f64]) -> bool {
        let v = |t: HardTerm| match t {
            HardTerm::Var(i) => values[i],
            HardTerm::Const(c) => c,
        };
        self.cmp.holds(v(self.lhs), v(self.rhs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxSmtProblem {
    pub template: RuleTemplate,
    pub variables: Vec<String>,
    pub hard: Vec<HardConstraint>,
    pub clauses: Vec<GroundClause>,
}

impl MaxSmtProblem {
    /// Indices of the clauses whose formula is false under `values`.
    pub fn violated(&self, values: &[f64]) -> Vec<usize> {
        self.clauses
            .iter()
            .filter(|c| !c.formula.eval(values))
            .map(|c| c.dummy)
            .collect()
    }

    pub fn hard_holds(&self, values: &[f64]) -> bool {
        self.hard.iter().all(|h| h.holds(values))
    }
}

/// Which end of its feasible interval each threshold is moved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TightenMode {
    /// Lower-bound thresholds go up, upper-bound thresholds go down.
    #[default]
    Restrictive,
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViolatedStep {
    pub action: ActionId,
    pub step: StepRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedRule {
    pub rule: Rule,
    pub violated_steps: Vec<ViolatedStep>,
    pub objective_value: usize,
}

impl LearnedRule {
    fn from_values(problem: &MaxSmtProblem, values: &[f64]) -> Result<Self, LearnError> {
        let violated = problem.violated(values);
        let assignment: BTreeMap<String, f64> = problem
            .variables
            .iter()
            .cloned()
            .zip(values.iter().copied())
            .collect();
        let rule = Rule::new(problem.template.clone(), assignment)?;
        Ok(Self {
            rule,
            objective_value: violated.len(),
            violated_steps: violated
                .into_iter()
                .map(|d| ViolatedStep {
                    action: problem.clauses[d].action,
                    step: problem.clauses[d].step,
                })
                .collect(),
        })
    }

    /// Threshold values in the order of `MaxSmtProblem::variables`.
    pub fn values(&self, problem: &MaxSmtProblem) -> Vec<f64> {
        problem
            .variables
            .iter()
            .map(|v| self.rule.assignment[v])
            .collect()
    }
}

/// Solver for the cost-minimisation phase.
pub trait MaxSmtBackend {
    /// Values for `problem.variables` that satisfy every hard constraint and
    /// minimise the number of violated clauses.
    fn minimize(&self, problem: &MaxSmtProblem) -> Result<Vec<f64>, LearnError>;
}

/// Cost phase only: an optimal assignment and its violated steps.
pub fn solve_maxsmt<B: MaxSmtBackend + ?Sized>(
    problem: &MaxSmtProblem,
    backend: &B,
) -> Result<LearnedRule, LearnError> {
    let values = backend.minimize(problem)?;
    if !problem.hard_holds(&values) {
        return Err(LearnError::Backend(
            "backend returned an assignment violating hard constraints".into(),
        ));
    }
    LearnedRule::from_values(problem, &values)
}

/// Full rule generation: encode, minimise violations, tighten thresholds.
pub fn learn<B: MaxSmtBackend + ?Sized>(
    trace: &crate::tracelog::Trace,
    template: &RuleTemplate,
    backend: &B,
    mode: TightenMode,
) -> Result<LearnedRule, LearnError> {
    let problem = encode(trace, template)?;
    learn_problem(&problem, backend, mode)
}

pub fn learn_problem<B: MaxSmtBackend + ?Sized>(
    problem: &MaxSmtProblem,
    backend: &B,
    mode: TightenMode,
) -> Result<LearnedRule, LearnError> {
    let optimum = solve_maxsmt(problem, backend)?;
    let values = optimum.values(problem);
    let fixed: Vec<bool> = problem
        .clauses
        .iter()
        .map(|c| !c.formula.eval(&values))
        .collect();
    let tightened = tighten(problem, &fixed, &values, mode);
    LearnedRule::from_values(problem, &tightened)
}
