//! POMCP: UCT search over action/observation histories, rooted at a particle
//! belief.
//!
//! The tree is stored in flat arenas. Every history node owns one action node
//! per action (allocated contiguously) and every action node owns one edge slot
//! per observation. A shield restricts the actions considered at the root only;
//! deeper nodes always see every action, since simulated particles stand for a
//! single hypothetical state rather than a belief.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::ParticleBelief;
use crate::model::{ActionId, ObservationId, Simulator};

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("legal action set is empty")]
    EmptyLegalSet,
    #[error("num_simulations must be at least 1")]
    NoSimulations,
    #[error("action {0} is not an action of the model")]
    UnknownAction(ActionId),
    #[error("cannot search from an empty belief")]
    EmptyBelief,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub num_simulations: usize,
    /// UCT exploration constant, set to the reward range.
    pub exploration: f64,
    pub gamma: f64,
    pub max_depth: usize,
}

impl PlannerConfig {
    pub fn for_model<M: Simulator>(model: &M, num_simulations: usize) -> Self {
        Self {
            num_simulations,
            exploration: model.reward_range(),
            gamma: 0.95,
            max_depth: model.horizon(),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.num_simulations == 0 {
            return Err(PlanError::NoSimulations);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct HistoryNode {
    visits: u32,
    value: f64,
    first_action: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct ActionNode {
    visits: u32,
    value: f64,
}

/// Visit count and mean return of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub visits: u32,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    histories: Vec<HistoryNode>,
    actions: Vec<ActionNode>,
    edges: Vec<u32>,
    root: u32,
    num_actions: usize,
    num_observations: usize,
}

impl SearchTree {
    pub fn new(num_actions: usize, num_observations: usize) -> Self {
        let mut tree = Self {
            histories: Vec::new(),
            actions: Vec::new(),
            edges: Vec::new(),
            root: 0,
            num_actions,
            num_observations,
        };
        tree.root = tree.add_history();
        tree
    }

    pub fn for_model<M: Simulator>(model: &M) -> Self {
        Self::new(model.num_actions(), model.num_observations())
    }

    fn add_history(&mut self) -> u32 {
        let first_action = self.actions.len() as u32;
        self.actions
            .extend(std::iter::repeat(ActionNode::default()).take(self.num_actions));
        self.edges
            .extend(std::iter::repeat(NONE).take(self.num_actions * self.num_observations));
        self.histories.push(HistoryNode {
            visits: 0,
            value: 0.0,
            first_action,
        });
        (self.histories.len() - 1) as u32
    }

    fn child(&self, history: u32, action: usize, observation: usize) -> u32 {
        let q = self.histories[history as usize].first_action as usize + action;
        self.edges[q * self.num_observations + observation]
    }

    pub fn num_nodes(&self) -> usize {
        self.histories.len()
    }

    pub fn root_stats(&self) -> NodeStats {
        let h = &self.histories[self.root as usize];
        NodeStats {
            visits: h.visits,
            value: h.value,
        }
    }

    pub fn action_stats(&self, action: ActionId) -> NodeStats {
        let q = &self.actions[self.histories[self.root as usize].first_action as usize + action.0];
        NodeStats {
            visits: q.visits,
            value: q.value,
        }
    }

    /// Statistics of the history node reached by `path` from the root.
    pub fn stats_at(&self, path: &[(ActionId, ObservationId)]) -> Option<NodeStats> {
        let mut node = self.root;
        for &(a, o) in path {
            node = self.child(node, a.0, o.0);
            if node == NONE {
                return None;
            }
        }
        let h = &self.histories[node as usize];
        Some(NodeStats {
            visits: h.visits,
            value: h.value,
        })
    }

    /// Visited action with the highest mean return among `legal`; ties go to
    /// the lowest id, and an unexplored tree yields the first legal action.
    pub fn best_action(&self, legal: &[ActionId]) -> Option<ActionId> {
        let mut best: Option<(ActionId, f64)> = None;
        for &a in legal {
            let s = self.action_stats(a);
            if s.visits == 0 {
                continue;
            }
            if best.map_or(true, |(_, v)| s.value > v) {
                best = Some((a, s.value));
            }
        }
        best.map(|(a, _)| a).or_else(|| legal.first().copied())
    }

    /// Re-roots the tree at the history reached by `(action, observation)`,
    /// dropping every other branch. A missing child yields an empty root.
    pub fn advance(&mut self, action: ActionId, observation: ObservationId) {
        let child = self.child(self.root, action.0, observation.0);
        let mut fresh = SearchTree::new(self.num_actions, self.num_observations);
        if child != NONE {
            fresh.histories.clear();
            fresh.actions.clear();
            fresh.edges.clear();
            fresh.root = fresh.copy_subtree(self, child);
        }
        *self = fresh;
    }

    fn copy_subtree(&mut self, from: &SearchTree, node: u32) -> u32 {
        let id = self.add_history();
        let src = from.histories[node as usize];
        self.histories[id as usize].visits = src.visits;
        self.histories[id as usize].value = src.value;
        let dst_first = self.histories[id as usize].first_action as usize;
        for a in 0..self.num_actions {
            let sq = src.first_action as usize + a;
            self.actions[dst_first + a] = from.actions[sq];
            for o in 0..self.num_observations {
                let grandchild = from.edges[sq * self.num_observations + o];
                if grandchild != NONE {
                    let copied = self.copy_subtree(from, grandchild);
                    self.edges[(dst_first + a) * self.num_observations + o] = copied;
                }
            }
        }
        id
    }
}

pub struct Planner<'m, M: Simulator> {
    model: &'m M,
    config: PlannerConfig,
}

impl<'m, M: Simulator> Planner<'m, M> {
    pub fn new(model: &'m M, config: PlannerConfig) -> Result<Self, PlanError> {
        config.validate()?;
        Ok(Self { model, config })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// Runs `num_simulations` simulations from particles of `belief` and
    /// returns the best legal root action.
    pub fn search<R: Rng + ?Sized>(
        &self,
        tree: &mut SearchTree,
        belief: &ParticleBelief<M::State>,
        legal: &[ActionId],
        rng: &mut R,
    ) -> Result<ActionId, PlanError> {
        if legal.is_empty() {
            return Err(PlanError::EmptyLegalSet);
        }
        if belief.is_empty() {
            return Err(PlanError::EmptyBelief);
        }
        if let Some(&bad) = legal.iter().find(|a| a.0 >= self.model.num_actions()) {
            return Err(PlanError::UnknownAction(bad));
        }
        let mut legal: Vec<usize> = legal.iter().map(|a| a.0).collect();
        legal.sort_unstable();
        legal.dedup();
        let all: Vec<usize> = (0..self.model.num_actions()).collect();
        let mut sim = Simulation {
            model: self.model,
            config: &self.config,
            tree,
            rng,
            root_actions: &legal,
            all_actions: &all,
        };
        for _ in 0..self.config.num_simulations {
            let state = belief.sample(sim.rng).clone();
            let root = sim.tree.root;
            sim.simulate_history(root, &state, 0);
        }
        let legal_ids: Vec<ActionId> = legal.into_iter().map(ActionId).collect();
        Ok(tree.best_action(&legal_ids).expect("legal set is non-empty"))
    }
}

/// Convenience wrapper: search from a fresh tree.
pub fn search<M, R>(
    model: &M,
    belief: &ParticleBelief<M::State>,
    config: &PlannerConfig,
    legal: &[ActionId],
    rng: &mut R,
) -> Result<ActionId, PlanError>
where
    M: Simulator,
    R: Rng + ?Sized,
{
    let planner = Planner::new(model, config.clone())?;
    let mut tree = SearchTree::for_model(model);
    planner.search(&mut tree, belief, legal, rng)
}

struct Simulation<'a, M: Simulator, R: ?Sized> {
    model: &'a M,
    config: &'a PlannerConfig,
    tree: &'a mut SearchTree,
    rng: &'a mut R,
    root_actions: &'a [usize],
    all_actions: &'a [usize],
}

impl<M: Simulator, R: Rng + ?Sized> Simulation<'_, M, R> {
    fn simulate_history(&mut self, node: u32, state: &M::State, depth: usize) -> f64 {
        if depth >= self.config.max_depth {
            return 0.0;
        }
        let action = self.select(node, depth);
        let total = self.simulate_action(node, state, action, depth);
        let h = &mut self.tree.histories[node as usize];
        h.visits += 1;
        h.value += (total - h.value) / h.visits as f64;
        total
    }

    fn select(&self, node: u32, depth: usize) -> usize {
        let candidates = if depth == 0 {
            self.root_actions
        } else {
            self.all_actions
        };
        let h = &self.tree.histories[node as usize];
        let first = h.first_action as usize;
        let log_n = (h.visits as f64).ln();
        let mut best = candidates[0];
        let mut best_score = f64::NEG_INFINITY;
        for &a in candidates {
            let q = &self.tree.actions[first + a];
            if q.visits == 0 {
                return a;
            }
            let score =
                q.value + self.config.exploration * (log_n.max(0.0) / q.visits as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        best
    }

    fn simulate_action(&mut self, node: u32, state: &M::State, action: usize, depth: usize) -> f64 {
        let outcome = self.model.step(state, ActionId(action), self.rng);
        let q = self.tree.histories[node as usize].first_action as usize + action;
        let delayed = if outcome.terminal {
            0.0
        } else {
            let edge = q * self.tree.num_observations + outcome.observation.0;
            let mut child = self.tree.edges[edge];
            if child == NONE && self.tree.actions[q].visits >= 1 {
                child = self.tree.add_history();
                self.tree.edges[edge] = child;
            }
            if child == NONE {
                self.rollout(outcome.next_state, depth + 1)
            } else {
                self.simulate_history(child, &outcome.next_state, depth + 1)
            }
        };
        let total = outcome.reward + self.config.gamma * delayed;
        let a = &mut self.tree.actions[q];
        a.visits += 1;
        a.value += (total - a.value) / a.visits as f64;
        total
    }

    fn rollout(&mut self, mut state: M::State, depth: usize) -> f64 {
        let mut total = 0.0;
        let mut discount = 1.0;
        for _ in depth..self.config.max_depth {
            let action = ActionId(self.rng.gen_range(0..self.model.num_actions()));
            let outcome = self.model.step(&state, action, self.rng);
            total += discount * outcome.reward;
            if outcome.terminal {
                break;
            }
            discount *= self.config.gamma;
            state = outcome.next_state;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::tiger::{self, TigerModel, TigerState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiger_belief(p_left: f64, n: usize) -> ParticleBelief<TigerState> {
        let left = (p_left * n as f64).round() as usize;
        let particles = (0..n)
            .map(|i| {
                if i < left {
                    TigerState::TigerLeft
                } else {
                    TigerState::TigerRight
                }
            })
            .collect();
        ParticleBelief::new(particles, n).unwrap()
    }

    fn config(sims: usize) -> PlannerConfig {
        PlannerConfig::for_model(&TigerModel::default(), sims)
    }

    #[test]
    fn rejects_empty_legal_set_and_zero_simulations() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(search(&m, &b, &config(10), &[], &mut rng), Err(PlanError::EmptyLegalSet));
        assert_eq!(
            search(&m, &b, &config(0), &m.all_actions(), &mut rng),
            Err(PlanError::NoSimulations)
        );
    }

    #[test]
    fn singleton_legal_set_is_returned() {
        let m = TigerModel::default();
        let b = tiger_belief(1.0, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(search(&m, &b, &config(500), &[tiger::LISTEN], &mut rng), Ok(tiger::LISTEN));
    }

    #[test]
    fn certain_belief_opens_treasure_door() {
        let m = TigerModel::default();
        let b = tiger_belief(1.0, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = search(&m, &b, &config(1 << 12), &m.all_actions(), &mut rng).unwrap();
        assert_eq!(a, tiger::OPEN_RIGHT);
    }

    #[test]
    fn uniform_belief_listens() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = search(&m, &b, &config(1 << 13), &m.all_actions(), &mut rng).unwrap();
        assert_eq!(a, tiger::LISTEN);
    }

    #[test]
    fn identical_seeds_give_identical_decisions() {
        let m = TigerModel::default();
        let b = tiger_belief(0.7, 512);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tree = SearchTree::for_model(&m);
            let planner = Planner::new(&m, config(2000)).unwrap();
            let a = planner.search(&mut tree, &b, &m.all_actions(), &mut rng).unwrap();
            (a, tree.root_stats())
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn root_restriction_does_not_reach_deeper_nodes() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = SearchTree::for_model(&m);
        let planner = Planner::new(&m, config(3000)).unwrap();
        planner.search(&mut tree, &b, &[tiger::LISTEN], &mut rng).unwrap();
        assert_eq!(tree.action_stats(tiger::OPEN_LEFT).visits, 0);
        assert_eq!(tree.action_stats(tiger::OPEN_RIGHT).visits, 0);
        tree.advance(tiger::LISTEN, tiger::HEAR_LEFT);
        assert!(tree.action_stats(tiger::OPEN_LEFT).visits > 0);
        assert!(tree.action_stats(tiger::OPEN_RIGHT).visits > 0);
    }

    #[test]
    fn visit_counts_are_consistent() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tree = SearchTree::for_model(&m);
        Planner::new(&m, config(1000))
            .unwrap()
            .search(&mut tree, &b, &m.all_actions(), &mut rng)
            .unwrap();
        let total: u32 = m.all_actions().iter().map(|&a| tree.action_stats(a).visits).sum();
        assert_eq!(tree.root_stats().visits, 1000);
        assert_eq!(total, 1000);
    }

    #[test]
    fn advance_keeps_statistics_and_handles_missing_children() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tree = SearchTree::for_model(&m);
        Planner::new(&m, config(4000))
            .unwrap()
            .search(&mut tree, &b, &m.all_actions(), &mut rng)
            .unwrap();
        let root = tree.root_stats().visits;
        let expected = tree
            .stats_at(&[(tiger::LISTEN, tiger::HEAR_LEFT)])
            .unwrap();
        let grandchild = tree
            .stats_at(&[(tiger::LISTEN, tiger::HEAR_LEFT), (tiger::LISTEN, tiger::HEAR_LEFT)])
            .unwrap();
        let mut advanced = tree.clone();
        advanced.advance(tiger::LISTEN, tiger::HEAR_LEFT);
        assert_eq!(advanced.root_stats(), expected);
        assert!(expected.visits <= root);
        advanced.advance(tiger::LISTEN, tiger::HEAR_LEFT);
        assert_eq!(advanced.root_stats(), grandchild);
        assert!(grandchild.visits <= expected.visits);

        // Opening ends the episode, so there is never a child below it.
        tree.advance(tiger::OPEN_LEFT, tiger::HEAR_LEFT);
        assert_eq!(tree.root_stats().visits, 0);
        assert_eq!(tree.num_nodes(), 1);
    }

    #[test]
    fn backed_up_values_stay_within_return_bounds() {
        let m = TigerModel::default();
        let b = tiger_belief(0.5, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tree = SearchTree::for_model(&m);
        Planner::new(&m, config(5000))
            .unwrap()
            .search(&mut tree, &b, &m.all_actions(), &mut rng)
            .unwrap();
        // Worst case: listen for 9 steps, then meet the tiger; best: open the
        // treasure door immediately.
        let g: f64 = 0.95;
        let worst = -(0..9).map(|t| g.powi(t)).sum::<f64>() - 100.0 * g.powi(9);
        let worst = worst.min(-100.0);
        for a in m.all_actions() {
            let v = tree.action_stats(a).value;
            assert!((worst..=10.0).contains(&v), "{a}: {v}");
        }
    }
}
