use crate::rulelang::{ReqCmp, RuleTemplate, Term, Threshold};
use crate::tracelog::Trace;

use super::{
    GroundAtom, GroundClause, GroundFormula, GroundRhs, HardConstraint, HardTerm, LearnError,
    MaxSmtProblem, StepRef,
};

/// Builds one guarded clause per (action rule, step) pair, rules outermost.
pub fn encode(trace: &Trace, template: &RuleTemplate) -> Result<MaxSmtProblem, LearnError> {
    let steps: Vec<_> = trace.steps().collect();
    if steps.is_empty() {
        return Err(LearnError::EmptyTrace);
    }
    let variables = template.variables();
    let var_index = |name: &str| {
        variables
            .iter()
            .position(|v| v == name)
            .expect("template variables are collected from atoms and requirements are validated")
    };

    let mut hard = Vec::new();
    for v in 0..variables.len() {
        hard.push(HardConstraint {
            lhs: HardTerm::Var(v),
            cmp: ReqCmp::Ge,
            rhs: HardTerm::Const(0.0),
        });
        hard.push(HardConstraint {
            lhs: HardTerm::Var(v),
            cmp: ReqCmp::Le,
            rhs: HardTerm::Const(1.0),
        });
    }
    let term = |t: &Term| match t {
        Term::Var(v) => HardTerm::Var(var_index(v)),
        Term::Const(c) => HardTerm::Const(*c),
    };
    for req in &template.requirements {
        hard.push(HardConstraint {
            lhs: term(&req.lhs),
            cmp: req.cmp,
            rhs: term(&req.rhs),
        });
    }

    let mut clauses = Vec::with_capacity(template.rules.len() * steps.len());
    for (rule_index, rule) in template.rules.iter().enumerate() {
        for (run, step) in &steps {
            let probs = step.summary.focused();
            let mut disjuncts = Vec::with_capacity(rule.body.len());
            for conj in &rule.body {
                let mut atoms = Vec::with_capacity(conj.len());
                for atom in conj {
                    let value = probs
                        .get(atom.selector.category())
                        .ok_or_else(|| LearnError::MissingSelector(atom.selector.to_string()))?;
                    let rhs = match &atom.rhs {
                        Threshold::Var(v) => GroundRhs::Var(var_index(v)),
                        Threshold::Const(c) => GroundRhs::Const(*c),
                    };
                    atoms.push(GroundAtom {
                        value,
                        cmp: atom.cmp,
                        rhs,
                    });
                }
                disjuncts.push(atoms);
            }
            clauses.push(GroundClause {
                dummy: clauses.len(),
                action: rule.action,
                rule_index,
                step: StepRef {
                    run: *run,
                    step: step.step_index,
                },
                formula: GroundFormula {
                    disjuncts,
                    negated: step.action != rule.action,
                },
            });
        }
    }

    Ok(MaxSmtProblem {
        template: template.clone(),
        variables,
        hard,
        clauses,
    })
}
