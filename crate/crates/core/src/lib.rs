//! Decision stack for a storytelling robot: engagement metrics, LTLf
//! restraining bolts, an actor-critic learner, a simulated audience, the
//! session loop and an in-process event bus.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod audience;
pub mod bus;
pub mod ltlf;
pub mod metrics;
pub mod scalar;
pub mod session;

pub use scalar::Scalar;

/// Scalar used by the concrete aliases below and by the session layer.
pub type Real = f64;

pub type GazeVector = metrics::GazeVector<Real>;
pub type FacePosition = metrics::FacePosition<Real>;
pub type FrameObservation = metrics::FrameObservation<Real>;
pub type FrameMetrics = metrics::FrameMetrics<Real>;
pub type StateVector = metrics::StateVector<Real>;
pub type RewardWeights = metrics::RewardWeights<Real>;
pub type MetricsConfig = metrics::MetricsConfig<Real>;
pub type MetricsTracker = metrics::MetricsTracker<Real>;
pub type PolicyParams = agent::PolicyParams<Real>;
pub type Observation = agent::Observation<Real>;
pub type Agent = agent::Agent<Real>;
pub type AgentConfig = agent::AgentConfig<Real>;
pub type Hyper = agent::Hyper<Real>;
