//! The Tiger problem: two doors, one tiger, one treasure.

use rand::Rng;

use crate::belief::{marginal, BeliefError, BeliefSummary};
use crate::model::{ActionId, ObservationId, Simulator, StepOutcome};

pub const LISTEN: ActionId = ActionId(0);
pub const OPEN_LEFT: ActionId = ActionId(1);
pub const OPEN_RIGHT: ActionId = ActionId(2);

pub const HEAR_LEFT: ObservationId = ObservationId(0);
pub const HEAR_RIGHT: ObservationId = ObservationId(1);

/// Hidden position of the tiger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TigerState {
    TigerLeft,
    TigerRight,
}

impl TigerState {
    pub fn index(self) -> usize {
        match self {
            TigerState::TigerLeft => 0,
            TigerState::TigerRight => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TigerModel {
    pub listen_accuracy: f64,
    pub treasure_reward: f64,
    pub tiger_penalty: f64,
    pub listen_cost: f64,
    /// Opening a door resets the problem instead of ending the episode.
    pub reset_on_open: bool,
    pub max_steps: usize,
    actions: Vec<String>,
    categories: Vec<String>,
}

impl Default for TigerModel {
    fn default() -> Self {
        Self {
            listen_accuracy: 0.85,
            treasure_reward: 10.0,
            tiger_penalty: -100.0,
            listen_cost: -1.0,
            reset_on_open: false,
            max_steps: 10,
            actions: vec!["Listen".into(), "OpenL".into(), "OpenR".into()],
            // Selectors name the treasure side: category 0 (tiger left) is
            // `p_right`, category 1 (tiger right) is `p_left`.
            categories: vec!["right".into(), "left".into()],
        }
    }
}

impl TigerModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reset_on_open(mut self, reset: bool) -> Self {
        self.reset_on_open = reset;
        self
    }
}

impl Simulator for TigerModel {
    type State = TigerState;

    fn name(&self) -> &str {
        "tiger"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn num_observations(&self) -> usize {
        2
    }

    fn action_labels(&self) -> &[String] {
        &self.actions
    }

    fn category_labels(&self) -> &[String] {
        &self.categories
    }

    fn num_categories(&self) -> usize {
        2
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> TigerState {
        if rng.gen_bool(0.5) {
            TigerState::TigerLeft
        } else {
            TigerState::TigerRight
        }
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &TigerState,
        action: ActionId,
        rng: &mut R,
    ) -> StepOutcome<TigerState> {
        // Two draws per step regardless of the action keep the environment
        // streams of paired evaluations aligned.
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let open = |tiger_side: TigerState| {
            let reward = if *state == tiger_side {
                self.tiger_penalty
            } else {
                self.treasure_reward
            };
            if self.reset_on_open {
                let next = if u < 0.5 {
                    TigerState::TigerLeft
                } else {
                    TigerState::TigerRight
                };
                let observation = if v < 0.5 { HEAR_LEFT } else { HEAR_RIGHT };
                StepOutcome {
                    next_state: next,
                    observation,
                    reward,
                    terminal: false,
                }
            } else {
                StepOutcome {
                    next_state: *state,
                    observation: HEAR_LEFT,
                    reward,
                    terminal: true,
                }
            }
        };
        match action {
            OPEN_LEFT => open(TigerState::TigerLeft),
            OPEN_RIGHT => open(TigerState::TigerRight),
            _ => {
                let correct = u < self.listen_accuracy;
                let heard_left = (*state == TigerState::TigerLeft) == correct;
                StepOutcome {
                    next_state: *state,
                    observation: if heard_left { HEAR_LEFT } else { HEAR_RIGHT },
                    reward: self.listen_cost,
                    terminal: false,
                }
            }
        }
    }

    fn summarize(&self, particles: &[TigerState]) -> Result<BeliefSummary, BeliefError> {
        marginal(particles, 2, |s| s.index()).map(BeliefSummary::single)
    }

    fn state_code(&self, state: &TigerState) -> u64 {
        state.index() as u64
    }

    fn reward_range(&self) -> f64 {
        self.treasure_reward.max(self.listen_cost) - self.tiger_penalty.min(self.listen_cost)
    }

    fn horizon(&self) -> usize {
        self.max_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn opening_doors() {
        let m = TigerModel::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = m.step(&TigerState::TigerLeft, OPEN_LEFT, &mut rng);
        assert_eq!(out.reward, -100.0);
        assert!(out.terminal);
        let out = m.step(&TigerState::TigerLeft, OPEN_RIGHT, &mut rng);
        assert_eq!(out.reward, 10.0);
        assert!(out.terminal);
    }

    #[test]
    fn listening_is_noisy() {
        let m = TigerModel::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            let out = m.step(&TigerState::TigerLeft, LISTEN, &mut rng);
            assert_eq!(out.reward, -1.0);
            assert!(!out.terminal);
            assert_eq!(out.next_state, TigerState::TigerLeft);
            if out.observation == HEAR_LEFT {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let se = (0.85f64 * 0.15 / n as f64).sqrt();
        assert!((freq - 0.85).abs() < 3.0 * se, "{freq}");
    }

    #[test]
    fn reset_semantics_keep_episode_alive() {
        let m = TigerModel::new().with_reset_on_open(true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = m.step(&TigerState::TigerRight, OPEN_LEFT, &mut rng);
        assert_eq!(out.reward, 10.0);
        assert!(!out.terminal);
    }

    #[test]
    fn reward_range_is_110() {
        assert_eq!(TigerModel::new().reward_range(), 110.0);
    }
}
