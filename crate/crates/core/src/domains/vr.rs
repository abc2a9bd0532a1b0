//! Velocity Regulation: a robot picks a speed for every subsegment of a fixed
//! path whose per-segment difficulty is hidden.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, BeliefSummary, ProbVector};
use crate::model::{ActionId, ObservationId, Simulator, StepOutcome};

/// `p(o = 1 | f)` indexed by difficulty.
pub const OCCUPANCY: [f64; 3] = [0.44, 0.79, 0.86];

/// `p(c = 1 | f, a)` indexed by difficulty then speed.
pub const COLLISION: [[f64; 3]; 3] = [[0.0, 0.0, 0.028], [0.0, 0.056, 0.11], [0.0, 0.14, 0.25]];

pub const NUM_DIFFICULTIES: usize = 3;
pub const NUM_SPEEDS: usize = 3;
const MAX_SEGMENTS: usize = 20;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("reading map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing map: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid map: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsegmentSpec {
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub subsegments: Vec<SubsegmentSpec>,
}

/// Path layout, collision penalty and optional fixed true difficulties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrMap {
    pub segments: Vec<SegmentSpec>,
    pub collision_penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulties: Option<Vec<u8>>,
}

impl Default for VrMap {
    /// Eight segments of two subsegments with lengths between 2 m and 14 m
    /// and a collision penalty of 63, giving a reward range of 103.
    fn default() -> Self {
        let layout: [[f64; 2]; 8] = [
            [2.0, 6.0],
            [5.0, 8.0],
            [3.0, 4.0],
            [7.0, 14.0],
            [4.0, 5.0],
            [6.0, 3.0],
            [8.0, 7.0],
            [14.0, 2.0],
        ];
        Self {
            segments: layout
                .iter()
                .map(|lens| SegmentSpec {
                    subsegments: lens.iter().map(|&length| SubsegmentSpec { length }).collect(),
                })
                .collect(),
            collision_penalty: 63.0,
            difficulties: None,
        }
    }
}

impl VrMap {
    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let map: VrMap = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.segments.is_empty() || self.segments.len() > MAX_SEGMENTS {
            return Err(MapError::Invalid(format!(
                "expected 1..={MAX_SEGMENTS} segments, got {}",
                self.segments.len()
            )));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.subsegments.is_empty() {
                return Err(MapError::Invalid(format!("segment {i} has no subsegments")));
            }
            if let Some(s) = seg.subsegments.iter().find(|s| !(s.length > 0.0) || !s.length.is_finite()) {
                return Err(MapError::Invalid(format!(
                    "segment {i} has non-positive length {}",
                    s.length
                )));
            }
        }
        if !self.collision_penalty.is_finite() || self.collision_penalty < 0.0 {
            return Err(MapError::Invalid("collision_penalty must be >= 0".into()));
        }
        if let Some(d) = &self.difficulties {
            if d.len() != self.segments.len() || d.iter().any(|&f| f as usize >= NUM_DIFFICULTIES) {
                return Err(MapError::Invalid(
                    "difficulties must give one value in {0,1,2} per segment".into(),
                ));
            }
        }
        Ok(())
    }

    fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .flat_map(|s| s.subsegments.iter().map(|x| x.length))
    }
}

/// Hidden difficulty tuple (base-3 code) plus the observable position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrState {
    pub difficulty_code: u32,
    pub segment: u16,
    pub subsegment: u16,
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct VelocityRegulationModel {
    map: VrMap,
    powers: Vec<u32>,
    num_tuples: u32,
    actions: Vec<String>,
    categories: Vec<String>,
}

impl Default for VelocityRegulationModel {
    fn default() -> Self {
        Self::new(VrMap::default()).expect("default map is valid")
    }
}

impl VelocityRegulationModel {
    pub fn new(map: VrMap) -> Result<Self, MapError> {
        map.validate()?;
        let powers: Vec<u32> = (0..map.segments.len())
            .map(|i| (NUM_DIFFICULTIES as u32).pow(i as u32))
            .collect();
        let num_tuples = (NUM_DIFFICULTIES as u32).pow(map.segments.len() as u32);
        Ok(Self {
            map,
            powers,
            num_tuples,
            actions: vec!["S0".into(), "S1".into(), "S2".into()],
            categories: vec!["clear".into(), "light".into(), "heavy".into()],
        })
    }

    pub fn map(&self) -> &VrMap {
        &self.map
    }

    pub fn num_segments(&self) -> usize {
        self.map.segments.len()
    }

    pub fn total_subsegments(&self) -> usize {
        self.map.segments.iter().map(|s| s.subsegments.len()).sum()
    }

    pub fn difficulty(&self, state: &VrState, segment: usize) -> usize {
        ((state.difficulty_code / self.powers[segment]) % NUM_DIFFICULTIES as u32) as usize
    }

    pub fn encode(&self, difficulties: &[u8]) -> u32 {
        difficulties
            .iter()
            .zip(&self.powers)
            .map(|(&f, &p)| f as u32 * p)
            .sum()
    }

    pub fn start_state(&self, difficulty_code: u32) -> VrState {
        VrState {
            difficulty_code,
            segment: 0,
            subsegment: 0,
            elapsed: 0.0,
        }
    }

    pub fn collision_probability(difficulty: usize, speed: usize) -> f64 {
        COLLISION[difficulty][speed]
    }

    pub fn occupancy_probability(difficulty: usize) -> f64 {
        OCCUPANCY[difficulty]
    }

    fn subsegment_length(&self, state: &VrState) -> f64 {
        self.map.segments[state.segment as usize].subsegments[state.subsegment as usize].length
    }

    pub fn is_finished(&self, state: &VrState) -> bool {
        state.segment as usize >= self.map.segments.len()
    }
}

impl Simulator for VelocityRegulationModel {
    type State = VrState;

    fn name(&self) -> &str {
        "vr"
    }

    fn num_actions(&self) -> usize {
        NUM_SPEEDS
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
        NUM_DIFFICULTIES
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> VrState {
        self.start_state(rng.gen_range(0..self.num_tuples))
    }

    fn sample_environment_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> VrState {
        match &self.map.difficulties {
            Some(d) => self.start_state(self.encode(d)),
            None => self.sample_initial(rng),
        }
    }

    fn step<R: Rng + ?Sized>(&self, state: &VrState, action: ActionId, rng: &mut R) -> StepOutcome<VrState> {
        let collide_draw: f64 = rng.gen();
        let observe_draw: f64 = rng.gen();
        let speed = action.0.min(NUM_SPEEDS - 1);
        let f = self.difficulty(state, state.segment as usize);
        let length = self.subsegment_length(state);
        let mut reward = length * (1.0 + speed as f64);
        if collide_draw < COLLISION[f][speed] {
            reward -= self.map.collision_penalty;
        }
        let observation = ObservationId(usize::from(observe_draw < OCCUPANCY[f]));
        let mut next = *state;
        next.elapsed += length / (1.0 + speed as f64);
        next.subsegment += 1;
        if next.subsegment as usize >= self.map.segments[state.segment as usize].subsegments.len() {
            next.subsegment = 0;
            next.segment += 1;
        }
        StepOutcome {
            terminal: self.is_finished(&next),
            next_state: next,
            observation,
            reward,
        }
    }

    /// Re-rolls the difficulty of one uniformly chosen segment.
    fn reinvigorate<R: Rng + ?Sized>(&self, state: &VrState, rng: &mut R) -> VrState {
        let segment = rng.gen_range(0..self.num_segments());
        let new = rng.gen_range(0..NUM_DIFFICULTIES as u32);
        let old = self.difficulty(state, segment) as u32;
        let mut next = *state;
        next.difficulty_code = next.difficulty_code - old * self.powers[segment] + new * self.powers[segment];
        next
    }

    fn summarize(&self, particles: &[VrState]) -> Result<BeliefSummary, BeliefError> {
        let first = particles.first().ok_or(BeliefError::Empty)?;
        let n = self.num_segments();
        let mut counts = vec![[0usize; NUM_DIFFICULTIES]; n];
        for p in particles {
            let mut code = p.difficulty_code;
            for seg_counts in counts.iter_mut() {
                seg_counts[(code % NUM_DIFFICULTIES as u32) as usize] += 1;
                code /= NUM_DIFFICULTIES as u32;
            }
        }
        let marginals = counts
            .iter()
            .map(|c| ProbVector::from_counts(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BeliefSummary {
            marginals,
            focus: (first.segment as usize).min(n - 1),
        })
    }

    fn state_code(&self, state: &VrState) -> u64 {
        state.difficulty_code as u64
    }

    /// Fast traversal of the longest subsegment minus a slow collision on the
    /// shortest one.
    fn reward_range(&self) -> f64 {
        let max = self.map.lengths().fold(f64::MIN, f64::max);
        let min = self.map.lengths().fold(f64::MAX, f64::min);
        NUM_SPEEDS as f64 * max - (min - self.map.collision_penalty)
    }

    fn horizon(&self) -> usize {
        self.total_subsegments()
    }
}
