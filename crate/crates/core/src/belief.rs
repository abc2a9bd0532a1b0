//! Particle-filter beliefs and the distribution math used by rules and shields.

use rand::Rng;
use thiserror::Error;

use crate::model::{ActionId, ObservationId, Simulator};
use crate::PROB_TOLERANCE;

/// Number of simulator calls per target particle before the rejection filter
/// gives up and reinvigorates.
pub const REJECTION_ATTEMPTS_PER_PARTICLE: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("empty belief")]
    Empty,
    #[error("belief holds {len} particles but capacity is {capacity}")]
    OverCapacity { len: usize, capacity: usize },
    #[error("particle deprivation: no particle is consistent with observation {0}")]
    ParticleDeprivation(ObservationId),
    #[error("particle maps to category {category} but only {k} categories exist")]
    CategoryOutOfRange { category: usize, k: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// A discrete probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates entries (finite, non-negative) and the unit sum.
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        if probs.is_empty() {
            return Err(BeliefError::InvalidProbabilities("no categories".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(BeliefError::InvalidProbabilities(format!(
                "entry {bad} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(BeliefError::InvalidProbabilities(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self, BeliefError> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(BeliefError::Empty);
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Squared-root based Hellinger distance, bounded in `[0, 1]`:
/// `(1/√2)·√(Σ(√p_i − √q_i)²)`.
pub fn hellinger2(p: &ProbVector, q: &ProbVector) -> Result<f64, BeliefError> {
    if p.len() != q.len() {
        return Err(BeliefError::LengthMismatch(p.len(), q.len()));
    }
    Ok(hellinger2_unchecked(p.as_slice(), q.as_slice()))
}

pub(crate) fn hellinger2_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let sum: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    (sum.sqrt() / std::f64::consts::SQRT_2).min(1.0)
}

/// Per-selector marginals of a belief, as consumed by rules and logged in
/// traces.
///
/// `focus` designates the marginal that rule selectors refer to: the only
/// marginal for Tiger, the current segment for Velocity Regulation.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSummary {
    pub marginals: Vec<ProbVector>,
    pub focus: usize,
}

impl BeliefSummary {
    pub fn single(marginal: ProbVector) -> Self {
        Self {
            marginals: vec![marginal],
            focus: 0,
        }
    }

    pub fn focused(&self) -> &ProbVector {
        &self.marginals[self.focus]
    }
}

/// Unweighted particle approximation of a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief<S> {
    particles: Vec<S>,
    capacity: usize,
}

impl<S: Clone> ParticleBelief<S> {
    pub fn new(particles: Vec<S>, capacity: usize) -> Result<Self, BeliefError> {
        if particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        if particles.len() > capacity {
            return Err(BeliefError::OverCapacity {
                len: particles.len(),
                capacity,
            });
        }
        Ok(Self {
            particles,
            capacity,
        })
    }

    /// Fills a belief with `capacity` draws from the model prior.
    pub fn from_prior<M, R>(model: &M, capacity: usize, rng: &mut R) -> Result<Self, BeliefError>
    where
        M: Simulator<State = S>,
        R: Rng + ?Sized,
    {
        let particles = (0..capacity).map(|_| model.sample_initial(rng)).collect();
        Self::new(particles, capacity)
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &S {
        &self.particles[rng.gen_range(0..self.particles.len())]
    }
}

/// Category frequencies of a belief under `projector`.
pub fn marginal<S, F>(belief: &[S], k: usize, projector: F) -> Result<ProbVector, BeliefError>
where
    F: Fn(&S) -> usize,
{
    if belief.is_empty() {
        return Err(BeliefError::Empty);
    }
    let mut counts = vec![0usize; k];
    for particle in belief {
        let category = projector(particle);
        if category >= k {
            return Err(BeliefError::CategoryOutOfRange { category, k });
        }
        counts[category] += 1;
    }
    ProbVector::from_counts(&counts)
}

/// Rejection-filter update after executing `action` and receiving `observed`.
///
/// Particles are drawn from the prior belief and pushed through the
/// simulator; successors that reproduce the observation are kept. If the
/// attempt budget runs out before the filter is full, the accepted particles
/// are resampled through [`Simulator::reinvigorate`].
pub fn belief_update<M, R>(
    belief: &ParticleBelief<M::State>,
    model: &M,
    action: ActionId,
    observed: ObservationId,
    rng: &mut R,
) -> Result<ParticleBelief<M::State>, BeliefError>
where
    M: Simulator,
    R: Rng + ?Sized,
{
    if belief.is_empty() {
        return Err(BeliefError::Empty);
    }
    let capacity = belief.capacity();
    let budget = capacity.saturating_mul(REJECTION_ATTEMPTS_PER_PARTICLE);
    let mut accepted = Vec::with_capacity(capacity);
    for _ in 0..budget {
        if accepted.len() == capacity {
            break;
        }
        let outcome = model.step(belief.sample(rng), action, rng);
        if outcome.observation == observed {
            accepted.push(outcome.next_state);
        }
    }
    if accepted.is_empty() {
        return Err(BeliefError::ParticleDeprivation(observed));
    }
    let survivors = accepted.len();
    while accepted.len() < capacity {
        let source = &accepted[rng.gen_range(0..survivors)];
        let fresh = model.reinvigorate(source, rng);
        accepted.push(fresh);
    }
    ParticleBelief::new(accepted, capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn marginal_counts_categories() {
        let belief = [0usize, 0, 0, 1];
        let m = marginal(&belief, 2, |s| *s).unwrap();
        assert_eq!(m.as_slice(), &[0.75, 0.25]);
        let m = marginal(&[0usize, 0, 0], 3, |s| *s).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn marginal_rejects_empty_and_out_of_range() {
        let empty: [usize; 0] = [];
        assert_eq!(marginal(&empty, 2, |s| *s), Err(BeliefError::Empty));
        assert!(matches!(
            marginal(&[3usize], 2, |s| *s),
            Err(BeliefError::CategoryOutOfRange { category: 3, k: 2 })
        ));
    }

    #[test]
    fn hellinger_reference_values() {
        assert_eq!(hellinger2(&pv(&[0.5, 0.5]), &pv(&[0.5, 0.5])).unwrap(), 0.0);
        assert!((hellinger2(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-12);
        let h = hellinger2(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0])).unwrap();
        assert!((h - 0.541196).abs() < 1e-6, "{h}");
    }

    #[test]
    fn hellinger_length_mismatch() {
        assert!(matches!(
            hellinger2(&pv(&[1.0]), &pv(&[0.5, 0.5])),
            Err(BeliefError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.3, 0.7 + 5e-10]).is_ok());
    }

    fn simplex(k: usize) -> impl Strategy<Value = ProbVector> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| {
                let mut v: Vec<f64> = w.iter().map(|x| x / s).collect();
                let head: f64 = v[..v.len() - 1].iter().sum();
                let last = v.len() - 1;
                v[last] = (1.0 - head).max(0.0);
                ProbVector::new(v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn hellinger_is_a_bounded_symmetric_distance(
            (p, q) in (2usize..6).prop_flat_map(|k| (simplex(k), simplex(k)))
        ) {
            let pq = hellinger2(&p, &q).unwrap();
            let qp = hellinger2(&q, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!((pq - qp).abs() < 1e-12);
            prop_assert!(hellinger2(&p, &p).unwrap() < 1e-12);
        }

        #[test]
        fn marginal_is_a_prob_vector(cats in prop::collection::vec(0usize..4, 1..200)) {
            let m = marginal(&cats, 4, |c| *c).unwrap();
            let sum: f64 = m.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
