//! Finite abstraction of the threshold space.
//!
//! Variables tied by `x = y` requirements are merged into classes. Every atom
//! compares a class against a fixed probability, so between two consecutive
//! breakpoints (observed probabilities, requirement constants, 0 and 1) the
//! truth of every atom is constant. A class therefore only has to range over
//! the breakpoints themselves and one representative of each open interval
//! between them.

use crate::rulelang::ReqCmp;

use super::{GroundRhs, HardTerm, LearnError, MaxSmtProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Cell {
    Point(f64),
    Open(f64, f64),
}

impl Cell {
    pub fn value(self) -> f64 {
        match self {
            Cell::Point(p) => p,
            Cell::Open(lo, hi) => lo + (hi - lo) / 2.0,
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Cell::Point(p) => x == p,
            Cell::Open(lo, hi) => lo < x && x < hi,
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        // keep the smaller index as root so class order follows variable order
        if a < b {
            self.0[b] = a;
        } else {
            self.0[a] = b;
        }
    }

    /// Dense labels in order of first occurrence.
    fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.0.len();
        let mut label = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut next = 0;
        for i in 0..n {
            let r = self.find(i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[i] = label[r];
        }
        (out, next)
    }
}

/// Constraint `class_a cmp class_b` between two distinct classes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Link {
    pub a: usize,
    pub cmp: ReqCmp,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Classes {
    pub class_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl Classes {
    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// Merges variables related by equality requirements.
pub(crate) fn merge_classes(problem: &MaxSmtProblem) -> Classes {
    let mut uf = UnionFind::new(problem.variables.len());
    for h in &problem.hard {
        if let (HardTerm::Var(a), ReqCmp::Eq, HardTerm::Var(b)) = (h.lhs, h.cmp, h.rhs) {
            uf.union(a, b);
        }
    }
    let (class_of, n) = uf.labels();
    let mut members = vec![Vec::new(); n];
    for (v, &c) in class_of.iter().enumerate() {
        members[c].push(v);
    }
    Classes { class_of, members }
}

/// Sorted, deduplicated breakpoints per class. Classes linked by an
/// inequality share their breakpoints so that both sides use the same cells.
pub(crate) fn breakpoints(problem: &MaxSmtProblem, classes: &Classes) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0, 1.0]; classes.len()];
    for clause in &problem.clauses {
        for atom in clause.formula.disjuncts.iter().flatten() {
            if let GroundRhs::Var(v) = atom.rhs {
                points[classes.class_of[v]].push(atom.value);
            }
        }
    }
    let mut uf = UnionFind::new(classes.len());
    for h in &problem.hard {
        match (h.lhs, h.rhs) {
            (HardTerm::Var(v), HardTerm::Const(c)) | (HardTerm::Const(c), HardTerm::Var(v)) => {
                points[classes.class_of[v]].push(c)
            }
            (HardTerm::Var(a), HardTerm::Var(b)) => {
                uf.union(classes.class_of[a], classes.class_of[b])
            }
            (HardTerm::Const(_), HardTerm::Const(_)) => {}
        }
    }
    let (group, n) = uf.labels();
    let mut shared = vec![Vec::new(); n];
    for (c, p) in points.iter().enumerate() {
        shared[group[c]].extend_from_slice(p);
    }
    for s in &mut shared {
        s.retain(|x| x.is_finite());
        s.sort_by(f64::total_cmp);
        s.dedup();
    }
    (0..classes.len()).map(|c| shared[group[c]].clone()).collect()
}

/// Points and open intervals between consecutive breakpoints, ascending.
pub(crate) fn cells(points: &[f64]) -> Vec<Cell> {
    let mut out = Vec::with_capacity(points.len() * 2);
    for (i, &p) in points.iter().enumerate() {
        if i > 0 {
            out.push(Cell::Open(points[i - 1], p));
        }
        out.push(Cell::Point(p));
    }
    out
}

/// Classes, their feasible cells and the cross-class inequalities.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub classes: Classes,
    pub cells: Vec<Vec<Cell>>,
    pub links: Vec<Link>,
}

impl Compiled {
    pub fn new(problem: &MaxSmtProblem) -> Result<Self, LearnError> {
        let classes = merge_classes(problem);
        let points = breakpoints(problem, &classes);
        let mut cells: Vec<Vec<Cell>> = points.iter().map(|p| cells(p)).collect();
        let mut links = Vec::new();
        for h in &problem.hard {
            match (h.lhs, h.rhs) {
                (HardTerm::Var(v), HardTerm::Const(c)) => {
                    cells[classes.class_of[v]].retain(|cell| h.cmp.holds(cell.value(), c))
                }
                (HardTerm::Const(c), HardTerm::Var(v)) => {
                    cells[classes.class_of[v]].retain(|cell| h.cmp.holds(c, cell.value()))
                }
                (HardTerm::Const(a), HardTerm::Const(b)) => {
                    if !h.cmp.holds(a, b) {
                        return Err(LearnError::Unsat);
                    }
                }
                (HardTerm::Var(a), HardTerm::Var(b)) => {
                    let (a, b) = (classes.class_of[a], classes.class_of[b]);
                    if a == b {
                        // x < x or x > x can never hold; the rest are tautologies
                        if !h.cmp.holds(0.0, 0.0) {
                            return Err(LearnError::Unsat);
                        }
                    } else {
                        links.push(Link { a, cmp: h.cmp, b });
                    }
                }
            }
        }
        if cells.iter().any(Vec::is_empty) {
            return Err(LearnError::Unsat);
        }
        Ok(Self {
            classes,
            cells,
            links,
        })
    }

    pub fn values(&self, choice: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes.class_of.len()];
        for (c, members) in self.classes.members.iter().enumerate() {
            for &v in members {
                out[v] = self.cells[c][choice[c]].value();
            }
        }
        out
    }
}
