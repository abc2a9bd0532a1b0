//! A planning session: belief, search tree and optional shield for one
//! episode.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{belief_update, BeliefSummary, ParticleBelief};
use crate::model::{ActionId, ObservationId, Simulator};
use crate::planner::{Planner, PlannerConfig, SearchTree};
use crate::shield::Shield;
use crate::Error;

/// How shield interventions are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionCount {
    /// Runs an unshielded search on a copy of the tree and counts a step when
    /// its choice is not legal.
    #[default]
    Shadow,
    /// Counts every step on which the shield removed at least one action.
    Pruned,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: ActionId,
    pub legal: Vec<ActionId>,
    pub fallback_used: bool,
    pub intervened: bool,
    /// Belief marginals the decision was based on.
    pub summary: BeliefSummary,
}

pub struct Agent<M: Simulator> {
    model: M,
    config: PlannerConfig,
    tree: SearchTree,
    belief: ParticleBelief<M::State>,
    shield: Option<Arc<Shield>>,
    counting: InterventionCount,
    rng: ChaCha8Rng,
    busy: Duration,
}

impl<M: Simulator> Agent<M> {
    /// `seed` drives both the initial particles and the search.
    pub fn new(
        model: M,
        config: PlannerConfig,
        particles: usize,
        shield: Option<Arc<Shield>>,
        seed: u64,
    ) -> Result<Self, Error> {
        config.validate()?;
        if particles == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let belief = ParticleBelief::from_prior(&model, particles, &mut rng)?;
        let tree = SearchTree::for_model(&model);
        Ok(Self {
            model,
            config,
            tree,
            belief,
            shield,
            counting: InterventionCount::default(),
            rng,
            busy: Duration::ZERO,
        })
    }

    pub fn with_intervention_count(mut self, counting: InterventionCount) -> Self {
        self.counting = counting;
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn belief(&self) -> &ParticleBelief<M::State> {
        &self.belief
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn summary(&self) -> Result<BeliefSummary, Error> {
        Ok(self.model.summarize(self.belief.particles())?)
    }

    /// Time spent deciding and updating, excluding shadow searches.
    pub fn busy_time(&self) -> Duration {
        self.busy
    }

    pub fn decide(&mut self) -> Result<Decision, Error> {
        let started = Instant::now();
        let summary = self.summary()?;
        let all = self.model.all_actions();
        let (legal, fallback_used) = match &self.shield {
            Some(shield) => {
                let set = shield.legal_actions(summary.focused())?;
                (set.actions, set.fallback_used)
            }
            None => (all.clone(), false),
        };
        let planner = Planner::new(&self.model, self.config.clone())?;

        let shadow_needed =
            self.shield.is_some() && self.counting == InterventionCount::Shadow && legal.len() < all.len();
        let mut shadow_time = Duration::ZERO;
        let shadow = if shadow_needed {
            let t = Instant::now();
            let mut tree = self.tree.clone();
            let mut rng = self.rng.clone();
            let a = planner.search(&mut tree, &self.belief, &all, &mut rng)?;
            shadow_time = t.elapsed();
            Some(a)
        } else {
            None
        };

        let action = planner.search(&mut self.tree, &self.belief, &legal, &mut self.rng)?;
        let intervened = match self.counting {
            _ if self.shield.is_none() => false,
            InterventionCount::Shadow => shadow.is_some_and(|a| !legal.contains(&a)),
            InterventionCount::Pruned => legal.len() < all.len(),
            InterventionCount::Off => false,
        };
        self.busy += started.elapsed() - shadow_time;
        Ok(Decision {
            action,
            legal,
            fallback_used,
            intervened,
            summary,
        })
    }

    /// Filters the belief with the real observation and re-roots the tree.
    pub fn observe(&mut self, action: ActionId, observation: ObservationId) -> Result<(), Error> {
        let started = Instant::now();
        self.belief = belief_update(&self.belief, &self.model, action, observation, &mut self.rng)?;
        self.tree.advance(action, observation);
        self.busy += started.elapsed();
        Ok(())
    }
}
