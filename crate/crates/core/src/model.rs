//! Black-box simulator contract shared by the planner, the particle filter and
//! the experiment harness.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefError, BeliefSummary};

/// Index of an action, `< Simulator::num_actions()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// Index of an observation, `< Simulator::num_observations()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObservationId(pub usize);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ObservationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Result of one simulated transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<S> {
    pub next_state: S,
    pub observation: ObservationId,
    pub reward: f64,
    pub terminal: bool,
}

/// A generative POMDP model.
///
/// Transition, observation and reward models are never exposed directly:
/// POMCP only needs to sample successor states.
pub trait Simulator {
    type State: Clone + fmt::Debug;

    /// Short domain name, also used as the XES `shield:domain` value.
    fn name(&self) -> &str;

    fn num_actions(&self) -> usize;

    fn num_observations(&self) -> usize;

    /// Labels used for actions in rule files and logs.
    fn action_labels(&self) -> &[String];

    /// Labels of the categories of the focus marginal, usable as `p_<label>`
    /// selectors in rule templates.
    fn category_labels(&self) -> &[String];

    /// Number of categories of the focus marginal.
    fn num_categories(&self) -> usize;

    /// Draws a state from the initial belief.
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Draws the true initial state of an episode. Defaults to the prior.
    fn sample_environment_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State {
        self.sample_initial(rng)
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: ActionId,
        rng: &mut R,
    ) -> StepOutcome<Self::State>;

    /// Local perturbation applied to resampled particles when the filter has
    /// to be refilled.
    fn reinvigorate<R: Rng + ?Sized>(&self, state: &Self::State, _rng: &mut R) -> Self::State {
        state.clone()
    }

    /// Marginal probability vectors of a particle set.
    fn summarize(&self, particles: &[Self::State]) -> Result<BeliefSummary, BeliefError>;

    /// Integer code of a state, used when logging raw particles.
    fn state_code(&self, state: &Self::State) -> u64;

    /// Spread between the lowest and the highest immediate reward.
    fn reward_range(&self) -> f64;

    /// Default episode length and search depth.
    fn horizon(&self) -> usize;

    fn all_actions(&self) -> Vec<ActionId> {
        (0..self.num_actions()).map(ActionId).collect()
    }

    fn action_by_label(&self, label: &str) -> Option<ActionId> {
        self.action_labels()
            .iter()
            .position(|l| l == label)
            .map(ActionId)
    }
}
