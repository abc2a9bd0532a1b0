use super::grid::{breakpoints, cells, merge_classes};
use super::{tighten, LearnError, LearnedRule, MaxSmtProblem, TightenMode};

/// The oracle refuses problems with more merged variables than this.
pub const MAX_ORACLE_CLASSES: usize = 3;

/// Reference solver: enumerates every grid point in lexicographic order,
/// evaluates every clause and hard constraint directly and keeps the first
/// point of minimum cost, then tightens it. Exponential; meant for tests.
pub fn brute_force_oracle(
    problem: &MaxSmtProblem,
    mode: TightenMode,
) -> Result<LearnedRule, LearnError> {
    let classes = merge_classes(problem);
    if classes.len() > MAX_ORACLE_CLASSES {
        return Err(LearnError::TooManyVariables {
            found: classes.len(),
            max: MAX_ORACLE_CLASSES,
        });
    }
    let grids: Vec<Vec<f64>> = breakpoints(problem, &classes)
        .iter()
        .map(|p| cells(p).into_iter().map(|c| c.value()).collect())
        .collect();

    let mut best: Option<(usize, Vec<f64>)> = None;
    let mut index = vec![0usize; classes.len()];
    let mut values = vec![0.0; problem.variables.len()];
    loop {
        for (c, members) in classes.members.iter().enumerate() {
            for &v in members {
                values[v] = grids[c][index[c]];
            }
        }
        if problem.hard_holds(&values) {
            let cost = problem
                .clauses
                .iter()
                .filter(|cl| !cl.formula.eval(&values))
                .count();
            if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                best = Some((cost, values.clone()));
            }
        }
        // odometer with the last class varying fastest
        let mut k = classes.len();
        loop {
            if k == 0 {
                let (_, values) = best.ok_or(LearnError::Unsat)?;
                let violated: Vec<bool> = problem
                    .clauses
                    .iter()
                    .map(|cl| !cl.formula.eval(&values))
                    .collect();
                let tightened = tighten(problem, &violated, &values, mode);
                return LearnedRule::from_values(problem, &tightened);
            }
            k -= 1;
            index[k] += 1;
            if index[k] < grids[k].len() {
                break;
            }
            index[k] = 0;
        }
    }
}
