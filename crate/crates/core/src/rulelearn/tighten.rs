use super::grid::{Cell, Compiled};
use super::{GroundRhs, MaxSmtProblem, TightenMode, OPEN_INTERVAL_EPSILON};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

/// Moves every threshold as far as possible in its tightening direction
/// without changing the truth value of any clause.
///
/// `violated[d]` is the dummy valuation fixed by the cost phase and `values`
/// an assignment realising it. Thresholds that only appear as lower bounds
/// (`p >= x`) are raised and those that only appear as upper bounds lowered
/// (the reverse in [`TightenMode::Permissive`]); thresholds used both ways
/// are left where they are. Classes of equal variables move together and are
/// processed in variable order.
pub fn tighten(
    problem: &MaxSmtProblem,
    violated: &[bool],
    values: &[f64],
    mode: TightenMode,
) -> Vec<f64> {
    let mut values = values.to_vec();
    let Ok(compiled) = Compiled::new(problem) else {
        return values;
    };
    let classes = &compiled.classes;

    let mut lower = vec![false; classes.len()];
    let mut upper = vec![false; classes.len()];
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, clause) in problem.clauses.iter().enumerate() {
        for atom in clause.formula.disjuncts.iter().flatten() {
            if let GroundRhs::Var(v) = atom.rhs {
                let c = classes.class_of[v];
                if atom.cmp.is_lower_bound() {
                    lower[c] = true;
                } else {
                    upper[c] = true;
                }
                if touching[c].last() != Some(&i) {
                    touching[c].push(i);
                }
            }
        }
    }

    for c in 0..classes.len() {
        let dir = match (lower[c], upper[c], mode) {
            (true, false, TightenMode::Restrictive) | (false, true, TightenMode::Permissive) => {
                Direction::Up
            }
            (false, true, TightenMode::Restrictive) | (true, false, TightenMode::Permissive) => {
                Direction::Down
            }
            _ => continue,
        };
        let cells = &compiled.cells[c];
        let current = values[classes.members[c][0]];
        let Some(start) = cells.iter().position(|cell| cell.contains(current)) else {
            continue;
        };

        let keeps = |vals: &[f64]| {
            touching[c]
                .iter()
                .all(|&i| problem.clauses[i].formula.eval(vals) != violated[i])
                && problem.hard_holds(vals)
        };
        let mut trial = values.clone();
        let set = |vals: &mut Vec<f64>, x: f64| {
            for &v in &classes.members[c] {
                vals[v] = x;
            }
        };

        let mut last = start;
        loop {
            let next = match dir {
                Direction::Up if last + 1 < cells.len() => last + 1,
                Direction::Down if last > 0 => last - 1,
                _ => break,
            };
            set(&mut trial, cells[next].value());
            if !keeps(&trial) {
                break;
            }
            last = next;
        }

        let x = match (cells[last], dir) {
            (Cell::Point(p), _) => p,
            (Cell::Open(lo, hi), Direction::Up) => hi - OPEN_INTERVAL_EPSILON.min((hi - lo) / 2.0),
            (Cell::Open(lo, hi), Direction::Down) => lo + OPEN_INTERVAL_EPSILON.min((hi - lo) / 2.0),
        };
        set(&mut values, x);
    }
    values
}
