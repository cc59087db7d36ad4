use serde::{Deserialize, Serialize};

use super::action::{ActionId, NUM_ACTIONS};
use super::{AgentError, Result};
use crate::ltlf::BoltRuntime;
use crate::metrics::StateVector;
use crate::scalar::Scalar;

/// Encoded network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T>(Vec<T>);

impl<T: Scalar> Observation<T> {
    pub fn new(values: Vec<T>) -> Self {
        Observation(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Online per-component mean and variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm<T> {
    pub count: u64,
    pub mean: [T; 4],
    pub m2: [T; 4],
}

impl<T: Scalar> Default for RunningNorm<T> {
    fn default() -> Self {
        RunningNorm { count: 0, mean: [T::zero(); 4], m2: [T::zero(); 4] }
    }
}

const NORM_CLIP: f64 = 5.0;

impl<T: Scalar> RunningNorm<T> {
    pub fn update(&mut self, x: &[T; 4]) {
        self.count += 1;
        let n = T::lit(self.count as f64);
        for ((&v, mean), m2) in x.iter().zip(self.mean.iter_mut()).zip(self.m2.iter_mut()) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
    }

    pub fn variance(&self, i: usize) -> T {
        if self.count < 2 {
            T::one()
        } else {
            self.m2[i] / T::lit(self.count as f64)
        }
    }

    /// Standardizes `x`, clipped to ±5.
    pub fn normalize(&self, x: &[T; 4]) -> [T; 4] {
        let clip = T::lit(NORM_CLIP);
        std::array::from_fn(|i| {
            let z = (x[i] - self.mean[i]) / (self.variance(i) + T::lit(1e-8)).sqrt();
            z.max(-clip).min(clip)
        })
    }
}

/// Builds network inputs: normalized state vector, one-hot automaton state
/// per bolt, one-hot previous action (all zeros at episode start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEncoder<T> {
    pub bolt_state_counts: Vec<usize>,
    pub norm: RunningNorm<T>,
    /// When false, `observe_state` leaves the statistics alone.
    pub update_norm: bool,
}

impl<T: Scalar> ObservationEncoder<T> {
    pub fn new(bolt_state_counts: Vec<usize>) -> Self {
        ObservationEncoder { bolt_state_counts, norm: RunningNorm::default(), update_norm: true }
    }

    pub fn dim(&self) -> usize {
        4 + self.bolt_state_counts.iter().sum::<usize>() + NUM_ACTIONS
    }

    /// Feeds a raw state vector into the running statistics.
    pub fn observe_state(&mut self, state: &StateVector<T>) {
        if self.update_norm {
            self.norm.update(&state.to_array());
        }
    }

    pub fn encode(
        &self,
        state: &StateVector<T>,
        bolts: &BoltRuntime,
        last_action: Option<ActionId>,
    ) -> Result<Observation<T>> {
        if bolts.states.len() != self.bolt_state_counts.len() {
            return Err(AgentError::Shape {
                expected: self.bolt_state_counts.len(),
                got: bolts.states.len(),
            });
        }
        let mut v = Vec::with_capacity(self.dim());
        v.extend(self.norm.normalize(&state.to_array()));
        for (&s, &count) in bolts.states.iter().zip(&self.bolt_state_counts) {
            if s >= count {
                return Err(AgentError::InvalidInput(format!("bolt state {s} out of range {count}")));
            }
            v.extend((0..count).map(|k| if k == s { T::one() } else { T::zero() }));
        }
        v.extend(ActionId::ALL.map(|a| if Some(a) == last_action { T::one() } else { T::zero() }));
        if v.iter().any(|x| !x.is_finite()) {
            return Err(AgentError::Numeric("observation is not finite".into()));
        }
        Ok(Observation(v))
    }
}
