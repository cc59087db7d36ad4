//! Two-layer actor-critic network with hand-derived gradients.
//!
//! `h = tanh(W1·x + b1)`, action logits `z = Wa·h + ba`, `π = softmax(z)`,
//! value `V = wv·h + bv`. All parameters live in one flat vector so updates
//! and finite-difference checks can address them uniformly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::{ActionId, NUM_ACTIONS};
use super::{AgentError, Observation, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T> {
    input_dim: usize,
    hidden: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    wa: usize,
    ba: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub hidden: Vec<T>,
    pub probs: [T; NUM_ACTIONS],
    pub value: T,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn entropy(&self) -> T {
        entropy(&self.probs)
    }

    pub fn log_prob(&self, a: ActionId) -> T {
        self.probs[a.index()].ln()
    }

    /// Most probable action; ties go to the lowest encoding.
    pub fn greedy(&self) -> ActionId {
        let mut best = 0;
        for i in 1..NUM_ACTIONS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        ActionId::from_index(best).expect("index < NUM_ACTIONS")
    }
}

pub fn entropy<T: Scalar>(probs: &[T]) -> T {
    probs
        .iter()
        .filter(|p| **p > T::zero())
        .fold(T::zero(), |h, &p| h - p * p.ln())
}

impl<T: Scalar> PolicyParams<T> {
    fn layout_for(input_dim: usize, hidden: usize) -> Layout {
        let w1 = 0;
        let b1 = w1 + hidden * input_dim;
        let wa = b1 + hidden;
        let ba = wa + NUM_ACTIONS * hidden;
        let wv = ba + NUM_ACTIONS;
        let bv = wv + hidden;
        Layout { w1, b1, wa, ba, wv, bv, len: bv + 1 }
    }

    fn layout(&self) -> Layout {
        Self::layout_for(self.input_dim, self.hidden)
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let len = Self::layout_for(input_dim, hidden).len;
        PolicyParams { input_dim, hidden, data: vec![T::zero(); len] }
    }

    /// Hidden layer uniform in ±1/√input_dim; both heads start at zero, so
    /// the initial policy is uniform and the initial value is 0.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let l = p.layout();
        let scale = 1.0 / (input_dim.max(1) as f64).sqrt();
        for w in &mut p.data[l.w1..l.b1] {
            *w = T::lit(rng.random_range(-scale..scale));
        }
        p
    }

    /// Every parameter drawn uniformly from ±`scale`.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        for w in &mut p.data {
            *w = T::lit(rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn from_flat(input_dim: usize, hidden: usize, data: Vec<T>) -> Result<Self> {
        let len = Self::layout_for(input_dim, hidden).len;
        if data.len() != len {
            return Err(AgentError::Shape { expected: len, got: data.len() });
        }
        Ok(PolicyParams { input_dim, hidden, data })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Zeroes the action head, making the policy uniform.
    pub fn zero_action_head(&mut self) {
        let l = self.layout();
        self.data[l.wa..l.wv].iter_mut().for_each(|w| *w = T::zero());
    }

    /// Zeroes the value head.
    pub fn zero_value_head(&mut self) {
        let l = self.layout();
        self.data[l.wv..l.len].iter_mut().for_each(|w| *w = T::zero());
    }

    pub fn forward(&self, obs: &Observation<T>) -> Result<ForwardPass<T>> {
        let x = obs.as_slice();
        if x.len() != self.input_dim {
            return Err(AgentError::Shape { expected: self.input_dim, got: x.len() });
        }
        let l = self.layout();
        let d = &self.data;
        let hidden: Vec<T> = (0..self.hidden)
            .map(|k| {
                let row = &d[l.w1 + k * self.input_dim..l.w1 + (k + 1) * self.input_dim];
                let pre = row.iter().zip(x).fold(d[l.b1 + k], |acc, (w, xi)| acc + *w * *xi);
                pre.tanh()
            })
            .collect();
        let mut logits = [T::zero(); NUM_ACTIONS];
        for (j, z) in logits.iter_mut().enumerate() {
            let row = &d[l.wa + j * self.hidden..l.wa + (j + 1) * self.hidden];
            *z = row.iter().zip(&hidden).fold(d[l.ba + j], |acc, (w, h)| acc + *w * *h);
        }
        let value = d[l.wv..l.bv]
            .iter()
            .zip(&hidden)
            .fold(d[l.bv], |acc, (w, h)| acc + *w * *h);
        Ok(ForwardPass { hidden, probs: softmax(&logits), value })
    }

    /// Backpropagates upstream gradients on the logits and the value into a
    /// flat parameter gradient.
    fn backprop(
        &self,
        x: &[T],
        pass: &ForwardPass<T>,
        d_logits: &[T; NUM_ACTIONS],
        d_value: T,
        grad: &mut [T],
    ) {
        let l = self.layout();
        let d = &self.data;
        let mut d_hidden = vec![T::zero(); self.hidden];
        for (j, gz) in d_logits.iter().enumerate() {
            grad[l.ba + j] += *gz;
            for k in 0..self.hidden {
                grad[l.wa + j * self.hidden + k] += *gz * pass.hidden[k];
                d_hidden[k] += *gz * d[l.wa + j * self.hidden + k];
            }
        }
        grad[l.bv] += d_value;
        for k in 0..self.hidden {
            grad[l.wv + k] += d_value * pass.hidden[k];
            d_hidden[k] += d_value * d[l.wv + k];
        }
        for k in 0..self.hidden {
            let h = pass.hidden[k];
            let d_pre = d_hidden[k] * (T::one() - h * h);
            grad[l.b1 + k] += d_pre;
            for (i, xi) in x.iter().enumerate() {
                grad[l.w1 + k * self.input_dim + i] += d_pre * *xi;
            }
        }
    }

    /// Actor objective `A·log π(a|x) + β·H(π(·|x))`.
    pub fn actor_objective(&self, obs: &Observation<T>, action: ActionId, advantage: T, entropy_coef: T) -> Result<T> {
        let pass = self.forward(obs)?;
        Ok(advantage * pass.log_prob(action) + entropy_coef * pass.entropy())
    }

    /// Gradient of [`Self::actor_objective`] with the advantage held fixed.
    pub fn actor_gradient(
        &self,
        obs: &Observation<T>,
        action: ActionId,
        advantage: T,
        entropy_coef: T,
    ) -> Result<Vec<T>> {
        let pass = self.forward(obs)?;
        let h = pass.entropy();
        let mut d_logits = [T::zero(); NUM_ACTIONS];
        for (j, g) in d_logits.iter_mut().enumerate() {
            let p = pass.probs[j];
            let indicator = if j == action.index() { T::one() } else { T::zero() };
            let log_p = if p > T::zero() { p.ln() } else { T::zero() };
            *g = advantage * (indicator - p) - entropy_coef * p * (log_p + h);
        }
        let mut grad = vec![T::zero(); self.len()];
        self.backprop(obs.as_slice(), &pass, &d_logits, T::zero(), &mut grad);
        Ok(grad)
    }

    /// Half squared error `½(target − V(x))²`.
    pub fn critic_loss(&self, obs: &Observation<T>, target: T) -> Result<T> {
        let v = self.forward(obs)?.value;
        Ok(T::lit(0.5) * (target - v) * (target - v))
    }

    /// Gradient of [`Self::critic_loss`] with the target held fixed.
    pub fn critic_gradient(&self, obs: &Observation<T>, target: T) -> Result<Vec<T>> {
        let pass = self.forward(obs)?;
        let mut grad = vec![T::zero(); self.len()];
        self.backprop(obs.as_slice(), &pass, &[T::zero(); NUM_ACTIONS], pass.value - target, &mut grad);
        Ok(grad)
    }

    /// Mean cross-entropy of the teacher labels under the policy.
    pub fn imitation_loss(&self, batch: &[(Observation<T>, ActionId)]) -> Result<T> {
        if batch.is_empty() {
            return Err(AgentError::InvalidInput("empty imitation batch".into()));
        }
        let mut total = T::zero();
        for (obs, label) in batch {
            total -= self.forward(obs)?.log_prob(*label);
        }
        Ok(total / T::from_count(batch.len()))
    }

    /// Gradient of [`Self::imitation_loss`]. Touches only the shared layer
    /// and the action head.
    pub fn imitation_gradient(&self, batch: &[(Observation<T>, ActionId)]) -> Result<Vec<T>> {
        if batch.is_empty() {
            return Err(AgentError::InvalidInput("empty imitation batch".into()));
        }
        let n = T::from_count(batch.len());
        let mut grad = vec![T::zero(); self.len()];
        for (obs, label) in batch {
            let pass = self.forward(obs)?;
            let mut d_logits = [T::zero(); NUM_ACTIONS];
            for (j, g) in d_logits.iter_mut().enumerate() {
                let indicator = if j == label.index() { T::one() } else { T::zero() };
                *g = (pass.probs[j] - indicator) / n;
            }
            self.backprop(obs.as_slice(), &pass, &d_logits, T::zero(), &mut grad);
        }
        Ok(grad)
    }

    /// `self + scale·grad`, rejected if any result is non-finite.
    pub fn stepped(&self, steps: &[(T, &[T])]) -> Result<Self> {
        let mut next = self.clone();
        for (scale, grad) in steps {
            for (w, g) in next.data.iter_mut().zip(grad.iter()) {
                *w += *scale * *g;
            }
        }
        if !next.is_finite() {
            return Err(AgentError::Numeric("update produced non-finite parameters".into()));
        }
        Ok(next)
    }
}

pub fn softmax<T: Scalar>(logits: &[T; NUM_ACTIONS]) -> [T; NUM_ACTIONS] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum = exps.iter().fold(T::zero(), |a, b| a + *b);
    exps.map(|e| e / sum)
}
