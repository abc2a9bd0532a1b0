use std::collections::HashMap;

use crate::rulelang::{Cmp, ReqCmp};

use super::grid::{Compiled, Link};
use super::{GroundRhs, LearnError, MaxSmtBackend, MaxSmtProblem};

/// Exact MAX-SMT by branch and bound over the threshold grid.
///
/// A box of cells is bounded by the clauses it already violates plus, for
/// every class, the minimum over its cells of the clauses that only that
/// class still decides. Boxes in which no undecided clause couples two
/// classes are solved directly from those per-class profiles.
///
/// Among all optimal assignments the one whose cell indices are
/// lexicographically smallest (in variable order) is returned, so results
/// are deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnumerativeBackend;

impl MaxSmtBackend for EnumerativeBackend {
    fn minimize(&self, problem: &MaxSmtProblem) -> Result<Vec<f64>, LearnError> {
        let compiled = Compiled::new(problem)?;
        let n = compiled.classes.len();

        // Fold constant atoms and merge identical clauses into weights;
        // clauses without variables add the same cost to every assignment.
        let mut merged: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut clauses: Vec<(CFormula, usize)> = Vec::new();
        for clause in &problem.clauses {
            let mut body_true = false;
            let mut disjuncts = Vec::new();
            for conj in &clause.formula.disjuncts {
                let mut atoms = Vec::new();
                let mut dead = false;
                for atom in conj {
                    match atom.rhs {
                        GroundRhs::Const(c) => dead |= !atom.cmp.holds(atom.value, c),
                        GroundRhs::Var(v) => atoms.push(CAtom {
                            class: compiled.classes.class_of[v],
                            value: atom.value,
                            cmp: atom.cmp,
                        }),
                    }
                }
                if dead {
                    continue;
                }
                if atoms.is_empty() {
                    body_true = true;
                    break;
                }
                disjuncts.push(atoms);
            }
            let negated = clause.formula.negated;
            if body_true || disjuncts.is_empty() {
                continue;
            }
            let f = CFormula { disjuncts, negated };
            let key = f.key();
            match merged.get(&key) {
                Some(&i) => clauses[i].1 += 1,
                None => {
                    merged.insert(key, clauses.len());
                    clauses.push((f, 1));
                }
            }
        }

        // Independent groups of classes.
        let mut group: Vec<usize> = (0..n).collect();
        fn find(g: &mut [usize], mut i: usize) -> usize {
            while g[i] != i {
                g[i] = g[g[i]];
                i = g[i];
            }
            i
        }
        let join = |g: &mut Vec<usize>, a: usize, b: usize| {
            let (a, b) = (find(g, a), find(g, b));
            g[a.max(b)] = a.min(b);
        };
        for (f, _) in &clauses {
            let mut it = f.classes();
            if let Some(first) = it.next() {
                for c in it {
                    join(&mut group, first, c);
                }
            }
        }
        for l in &compiled.links {
            join(&mut group, l.a, l.b);
        }
        let roots: Vec<usize> = (0..n).map(|c| find(&mut group, c)).collect();

        let mut choice = vec![0usize; n];
        let mut done = vec![false; n];
        for start in 0..n {
            if done[start] {
                continue;
            }
            let root = roots[start];
            let members: Vec<usize> = (0..n).filter(|&c| roots[c] == root).collect();
            for &c in &members {
                done[c] = true;
            }
            let group_clauses: Vec<(CFormula, usize)> = clauses
                .iter()
                .filter(|(f, _)| f.classes().next().map(|c| roots[c]) == Some(root))
                .cloned()
                .collect();
            let group_links: Vec<Link> = compiled
                .links
                .iter()
                .filter(|l| roots[l.a] == root)
                .copied()
                .collect();
            let mut search = Search {
                compiled: &compiled,
                order: &members,
                clauses: &group_clauses,
                links: &group_links,
                ranges: (0..n).map(|c| (0, compiled.cells[c].len() - 1)).collect(),
                best_cost: usize::MAX,
                best: None,
            };
            let all: Vec<u32> = (0..group_clauses.len() as u32).collect();
            let all_links: Vec<u32> = (0..group_links.len() as u32).collect();
            search.dfs(&all, &all_links, 0);
            let best = search.best.ok_or(LearnError::Unsat)?;
            for &c in &members {
                choice[c] = best[c];
            }
        }
        Ok(compiled.values(&choice))
    }
}

#[derive(Debug, Clone)]
struct CAtom {
    class: usize,
    value: f64,
    cmp: Cmp,
}

#[derive(Debug, Clone)]
struct CFormula {
    disjuncts: Vec<Vec<CAtom>>,
    negated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    False,
    True,
    Unknown,
}

impl CFormula {
    fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.disjuncts.iter().flatten().map(|a| a.class)
    }

    fn key(&self) -> Vec<u64> {
        let mut k = vec![self.negated as u64];
        for conj in &self.disjuncts {
            k.push(u64::MAX);
            for a in conj {
                k.push(a.class as u64);
                k.push(a.cmp as u64);
                k.push(a.value.to_bits());
            }
        }
        k
    }

    fn eval3(&self, lo: impl Fn(usize) -> f64, hi: impl Fn(usize) -> f64) -> Tri {
        let mut body = Tri::False;
        for conj in &self.disjuncts {
            let mut c = Tri::True;
            for a in conj {
                let t = atom3(a.value, a.cmp, lo(a.class), hi(a.class));
                match t {
                    Tri::False => {
                        c = Tri::False;
                        break;
                    }
                    Tri::Unknown => c = Tri::Unknown,
                    Tri::True => {}
                }
            }
            match c {
                Tri::True => {
                    body = Tri::True;
                    break;
                }
                Tri::Unknown => body = Tri::Unknown,
                Tri::False => {}
            }
        }
        match (body, self.negated) {
            (Tri::Unknown, _) => Tri::Unknown,
            (Tri::True, false) | (Tri::False, true) => Tri::True,
            _ => Tri::False,
        }
    }
}

/// Truth of `p cmp x` for every `x` in `[xlo, xhi]`.
fn atom3(p: f64, cmp: Cmp, xlo: f64, xhi: f64) -> Tri {
    let (all, none) = match cmp {
        Cmp::Ge => (p >= xhi, p < xlo),
        Cmp::Gt => (p > xhi, p <= xlo),
        Cmp::Le => (p <= xlo, p > xhi),
        Cmp::Lt => (p < xlo, p >= xhi),
    };
    if all {
        Tri::True
    } else if none {
        Tri::False
    } else {
        Tri::Unknown
    }
}

/// Truth of `x cmp y` for every `x` in `[alo, ahi]`, `y` in `[blo, bhi]`.
fn link3(cmp: ReqCmp, (alo, ahi): (f64, f64), (blo, bhi): (f64, f64)) -> Tri {
    let (all, none) = match cmp {
        ReqCmp::Lt => (ahi < blo, alo >= bhi),
        ReqCmp::Le => (ahi <= blo, alo > bhi),
        ReqCmp::Gt => (alo > bhi, ahi <= blo),
        ReqCmp::Ge => (alo >= bhi, ahi < blo),
        ReqCmp::Eq => (alo == ahi && blo == bhi && alo == blo, ahi < blo || alo > bhi),
    };
    if all {
        Tri::True
    } else if none {
        Tri::False
    } else {
        Tri::Unknown
    }
}

/// Cost contributed by the clauses that depend on one class only, per
/// cell of that class's current range.
struct Profile {
    lo: usize,
    cost: Vec<usize>,
}

impl Profile {
    /// Lowest cost and the first cell reaching it.
    fn min(&self) -> (usize, usize) {
        let (i, &m) = self
            .cost
            .iter()
            .enumerate()
            .min_by_key(|&(i, &c)| (c, i))
            .expect("ranges are never empty");
        (m, self.lo + i)
    }
}

struct Search<'a> {
    compiled: &'a Compiled,
    order: &'a [usize],
    clauses: &'a [(CFormula, usize)],
    links: &'a [Link],
    ranges: Vec<(usize, usize)>,
    best_cost: usize,
    best: Option<Vec<usize>>,
}

impl Search<'_> {
    fn bounds(&self, c: usize) -> (f64, f64) {
        let (lo, hi) = self.ranges[c];
        (
            self.compiled.cells[c][lo].value(),
            self.compiled.cells[c][hi].value(),
        )
    }

    /// Classes whose atoms are still undecided in an undecided clause.
    fn open_classes(&self, f: &CFormula, out: &mut Vec<usize>) {
        out.clear();
        for conj in &f.disjuncts {
            let mut local = Vec::new();
            let mut dead = false;
            for a in conj {
                let (lo, hi) = self.bounds(a.class);
                match atom3(a.value, a.cmp, lo, hi) {
                    Tri::False => {
                        dead = true;
                        break;
                    }
                    Tri::Unknown => local.push(a.class),
                    Tri::True => {}
                }
            }
            if !dead {
                out.extend(local);
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Adds the weight of a single-class clause to every cell of `class`
    /// where it is false.
    fn add_to_profile(&self, f: &CFormula, w: usize, class: usize, profile: &mut Profile, diff: &mut [isize]) {
        let (lo, hi) = self.ranges[class];
        let cells = &self.compiled.cells[class];
        // the clause can only change value where one of its atoms on `class` does
        let mut cuts = vec![lo];
        for a in f.disjuncts.iter().flatten().filter(|a| a.class == class) {
            let cut = match a.cmp {
                // p >= x holds on a prefix of the cells, p <= x on a suffix
                Cmp::Ge | Cmp::Gt => lo + cells[lo..=hi].partition_point(|c| a.cmp.holds(a.value, c.value())),
                Cmp::Le | Cmp::Lt => lo + cells[lo..=hi].partition_point(|c| !a.cmp.holds(a.value, c.value())),
            };
            if cut > lo && cut <= hi {
                cuts.push(cut);
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        cuts.push(hi + 1);
        for seg in cuts.windows(2) {
            let x = cells[seg[0]].value();
            let t = f.eval3(
                |c| if c == class { x } else { self.bounds(c).0 },
                |c| if c == class { x } else { self.bounds(c).1 },
            );
            if t == Tri::False {
                diff[seg[0] - profile.lo] += w as isize;
                diff[seg[1] - profile.lo] -= w as isize;
            }
        }
    }

    fn corner(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.0).collect()
    }

    /// Keeps `point` if it beats the incumbent (lower cost, then lexicographically smaller).
    fn offer(&mut self, cost: usize, point: Vec<usize>) {
        let better = match &self.best {
            None => true,
            Some(b) => cost < self.best_cost || (cost == self.best_cost && point < *b),
        };
        if better {
            self.best_cost = cost;
            self.best = Some(point);
        }
    }

    fn pruned(&self, bound: usize) -> bool {
        match &self.best {
            None => false,
            Some(b) => bound > self.best_cost || (bound == self.best_cost && self.corner() >= *b),
        }
    }

    fn dfs(&mut self, undetermined: &[u32], links: &[u32], mut cost: usize) {
        let mut open = Vec::with_capacity(undetermined.len());
        for &i in undetermined {
            let (f, w) = &self.clauses[i as usize];
            match f.eval3(|c| self.bounds(c).0, |c| self.bounds(c).1) {
                Tri::True => {}
                Tri::False => cost += w,
                Tri::Unknown => open.push(i),
            }
        }
        if self.pruned(cost) {
            return;
        }
        let mut open_links = Vec::new();
        for &i in links {
            let l = self.links[i as usize];
            match link3(l.cmp, self.bounds(l.a), self.bounds(l.b)) {
                Tri::True => {}
                Tri::False => return,
                Tri::Unknown => open_links.push(i),
            }
        }

        // Split the undecided clauses into single-class ones, which give an
        // exact cost profile per class, and coupled ones.
        let n = self.ranges.len();
        let mut single: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut coupled_weight = vec![0usize; n];
        let mut coupled = false;
        let mut classes = Vec::new();
        for &i in &open {
            let (f, w) = &self.clauses[i as usize];
            self.open_classes(f, &mut classes);
            match classes.as_slice() {
                [c] => single[*c].push(i),
                cs => {
                    coupled = true;
                    for &c in cs {
                        coupled_weight[c] += w;
                    }
                }
            }
        }
        for &i in &open_links {
            let l = self.links[i as usize];
            coupled = true;
            coupled_weight[l.a] += 1;
            coupled_weight[l.b] += 1;
        }

        let mut bound = cost;
        let mut argmin = self.corner();
        for c in 0..n {
            if single[c].is_empty() {
                continue;
            }
            let (lo, hi) = self.ranges[c];
            let mut profile = Profile { lo, cost: Vec::new() };
            let mut diff = vec![0isize; hi - lo + 2];
            for &i in &single[c] {
                let (f, w) = &self.clauses[i as usize];
                self.add_to_profile(f, *w, c, &mut profile, &mut diff);
            }
            let mut acc = 0isize;
            profile.cost = diff[..hi - lo + 1]
                .iter()
                .map(|d| {
                    acc += d;
                    acc as usize
                })
                .collect();
            let (m, at) = profile.min();
            bound += m;
            argmin[c] = at;
        }
        if self.pruned(bound) {
            return;
        }
        if !coupled {
            // classes are independent inside this box: the profile minima
            // are attained together, first cells first
            self.offer(bound, argmin);
            return;
        }

        let k = self
            .order
            .iter()
            .copied()
            .filter(|&c| self.ranges[c].0 < self.ranges[c].1 && coupled_weight[c] > 0)
            .max_by_key(|&c| (coupled_weight[c], std::cmp::Reverse(c)))
            .expect("a coupled clause has a class with more than one cell");
        let (lo, hi) = self.ranges[k];
        let mid = lo + (hi - lo) / 2;
        self.ranges[k] = (lo, mid);
        self.dfs(&open, &open_links, cost);
        self.ranges[k] = (mid + 1, hi);
        self.dfs(&open, &open_links, cost);
        self.ranges[k] = (lo, hi);
    }
}
