//! Actor-critic policy over segment states, aware of restraining-bolt state,
//! with one-step TD updates and wizard-of-oz imitation pre-training.

mod action;
mod network;
mod observation;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use action::{ActionId, NUM_ACTIONS};
pub use network::{entropy, softmax, ForwardPass, PolicyParams};
pub use observation::{Observation, ObservationEncoder, RunningNorm};

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("shape mismatch: expected {expected} inputs, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct Hyper<T> {
    pub gamma: T,
    pub lr_actor: T,
    pub lr_critic: T,
    pub entropy_coef: T,
}

impl<T: Scalar> Default for Hyper<T> {
    fn default() -> Self {
        Hyper {
            gamma: T::lit(0.95),
            lr_actor: T::lit(3e-3),
            lr_critic: T::lit(1e-2),
            entropy_coef: T::lit(0.01),
        }
    }
}

impl<T: Scalar> Hyper<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            return Err(AgentError::InvalidInput(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.lr_actor >= T::zero() && self.lr_critic >= T::zero()) {
            return Err(AgentError::InvalidInput("learning rates must be nonnegative".into()));
        }
        if !(self.entropy_coef >= T::zero()) {
            return Err(AgentError::InvalidInput("entropy_coef must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub obs: Observation<T>,
    pub action: ActionId,
    pub reward: T,
    pub next_obs: Observation<T>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdDiagnostics<T> {
    pub advantage: T,
    pub actor_loss: T,
    pub critic_loss: T,
}

pub fn forward<T: Scalar>(p: &PolicyParams<T>, obs: &Observation<T>) -> Result<ForwardPass<T>> {
    p.forward(obs)
}

/// Picks an action: a draw from π in sample mode, the argmax in greedy mode.
/// Returns the action with its log-probability.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    p: &PolicyParams<T>,
    obs: &Observation<T>,
    mode: SelectMode,
    rng: &mut R,
) -> Result<(ActionId, T)> {
    let pass = p.forward(obs)?;
    let action = match mode {
        SelectMode::Greedy => pass.greedy(),
        SelectMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, pr) in pass.probs.iter().enumerate() {
                acc += pr.to_f64_lossy();
                if u < acc {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave u just above the cumulative sum
            let i = chosen.unwrap_or_else(|| {
                (0..NUM_ACTIONS).rev().find(|&i| pass.probs[i] > T::zero()).unwrap_or(0)
            });
            ActionId::from_index(i).expect("index < NUM_ACTIONS")
        }
    };
    Ok((action, pass.log_prob(action)))
}

/// One-step advantage actor-critic update.
///
/// `A = r + γ·V(x') − V(x)` (no bootstrap on terminal steps). The actor
/// ascends `A·log π(a|x) + β·H`, the critic descends `½A²` with the target
/// held fixed. Non-finite results leave the parameters untouched.
pub fn td_update<T: Scalar>(
    p: &PolicyParams<T>,
    t: &Transition<T>,
    hyper: &Hyper<T>,
) -> Result<(PolicyParams<T>, TdDiagnostics<T>)> {
    hyper.validate()?;
    if !t.reward.is_finite() {
        return Err(AgentError::Numeric("reward is not finite".into()));
    }
    let pass = p.forward(&t.obs)?;
    let bootstrap = if t.terminal { T::zero() } else { hyper.gamma * p.forward(&t.next_obs)?.value };
    let target = t.reward + bootstrap;
    let advantage = target - pass.value;

    let actor = p.actor_gradient(&t.obs, t.action, advantage, hyper.entropy_coef)?;
    let critic = p.critic_gradient(&t.obs, target)?;
    if actor.iter().chain(&critic).any(|g| !g.is_finite()) {
        return Err(AgentError::Numeric("non-finite gradient".into()));
    }
    let next = p.stepped(&[(hyper.lr_actor, &actor), (-hyper.lr_critic, &critic)])?;
    let diagnostics = TdDiagnostics {
        advantage,
        actor_loss: -(advantage * pass.log_prob(t.action) + hyper.entropy_coef * pass.entropy()),
        critic_loss: T::lit(0.5) * advantage * advantage,
    };
    Ok((next, diagnostics))
}

/// One gradient step on the mean cross-entropy between π and teacher labels.
/// Returns the updated parameters and the loss before the step.
pub fn imitation_update<T: Scalar>(
    p: &PolicyParams<T>,
    batch: &[(Observation<T>, ActionId)],
    lr: T,
) -> Result<(PolicyParams<T>, T)> {
    let loss = p.imitation_loss(batch)?;
    let grad = p.imitation_gradient(batch)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(AgentError::Numeric("non-finite gradient".into()));
    }
    Ok((p.stepped(&[(-lr, &grad)])?, loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct AgentConfig<T> {
    pub hidden: usize,
    #[serde(flatten)]
    pub hyper: Hyper<T>,
    pub imitation_lr: T,
    /// Seed for the initial hidden-layer weights.
    pub init_seed: u64,
}

impl<T: Scalar> Default for AgentConfig<T> {
    fn default() -> Self {
        AgentConfig {
            hidden: 32,
            hyper: Hyper::default(),
            imitation_lr: T::lit(0.1),
            init_seed: 0,
        }
    }
}

/// Policy parameters together with the observation encoder they were
/// trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Agent<T> {
    pub config: AgentConfig<T>,
    pub encoder: ObservationEncoder<T>,
    pub params: PolicyParams<T>,
}

impl<T: Scalar> Agent<T> {
    pub fn new(config: AgentConfig<T>, encoder: ObservationEncoder<T>) -> Result<Self> {
        config.hyper.validate()?;
        if config.hidden == 0 {
            return Err(AgentError::InvalidInput("hidden width must be > 0".into()));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.init_seed);
        let params = PolicyParams::init(encoder.dim(), config.hidden, &mut rng);
        Ok(Agent { config, encoder, params })
    }

    pub fn td_update(&mut self, t: &Transition<T>) -> Result<TdDiagnostics<T>> {
        let (next, diag) = td_update(&self.params, t, &self.config.hyper)?;
        self.params = next;
        Ok(diag)
    }

    pub fn imitation_update(&mut self, batch: &[(Observation<T>, ActionId)]) -> Result<T> {
        let (next, loss) = imitation_update(&self.params, batch, self.config.imitation_lr)?;
        self.params = next;
        Ok(loss)
    }

    pub fn select<R: Rng + ?Sized>(&self, obs: &Observation<T>, mode: SelectMode, rng: &mut R) -> Result<(ActionId, T)> {
        select_action(&self.params, obs, mode, rng)
    }
}
