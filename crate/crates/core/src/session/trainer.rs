use serde::{Deserialize, Serialize};

use super::episode::{build_agent, run_episode, EpisodeContext, EpisodeOptions, FrameSource};
use super::story::StoryManifest;
use super::{Mode, Result, SessionConfig};
use crate::agent::{ActionId, Agent, SelectMode};
use crate::audience::init_audience;
use crate::ltlf::BoltSet;

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub agent: Agent<f64>,
    pub returns: Vec<f64>,
    pub compliant: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub episodes: usize,
    pub mean_return: f64,
    /// Share of episodes ending with no violated bolt and every bolt accepting.
    pub compliance_rate: f64,
    pub returns: Vec<f64>,
}

/// Per-episode seed; training and evaluation draw from disjoint families.
fn episode_seed(seed: u64, family: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(family.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(episode as u64)
}

fn bolts_for(config: &SessionConfig) -> Result<BoltSet> {
    Ok(config.bolts.compile(&ActionId::alphabet())?)
}

/// Trains a fresh agent for `episodes` autonomous episodes on the simulated
/// audience, sampling actions and applying one TD update per decision.
pub fn train(story: &StoryManifest, config: &SessionConfig, episodes: usize, seed: u64) -> Result<TrainReport> {
    let bolts = bolts_for(config)?;
    let mut agent_config = config.agent.clone();
    agent_config.init_seed = seed;
    let agent = build_agent(&agent_config, &bolts)?;
    continue_training(story, config, &bolts, agent, episodes, seed)
}

/// Continues training an existing agent (for example one pre-trained by
/// imitation).
pub fn continue_training(
    story: &StoryManifest,
    config: &SessionConfig,
    bolts: &BoltSet,
    mut agent: Agent<f64>,
    episodes: usize,
    seed: u64,
) -> Result<TrainReport> {
    let mut returns = Vec::with_capacity(episodes);
    let mut compliant = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let s = episode_seed(seed, 0, e);
        let mut source = FrameSource::Simulated(init_audience(config.n_children, s, config.audience.clone())?);
        let opts = EpisodeOptions {
            learn: true,
            select: SelectMode::Sample,
            ..EpisodeOptions::new(Mode::Autonomous, s)
        };
        let log = run_episode(story, config, bolts, &mut agent, &mut source, &opts, &EpisodeContext::default())
            .map_err(|a| a.error)?;
        let footer = log.footer.expect("finished episodes have a footer");
        returns.push(footer.final_return);
        compliant.push(footer.compliant);
    }
    agent.encoder.update_norm = false;
    Ok(TrainReport { agent, returns, compliant })
}

/// Runs `episodes` episodes without learning. Autonomous mode acts greedily.
pub fn evaluate(
    story: &StoryManifest,
    config: &SessionConfig,
    agent: &Agent<f64>,
    mode: Mode,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let bolts = bolts_for(config)?;
    let mut agent = agent.clone();
    let mut returns = Vec::with_capacity(episodes);
    let mut compliant = 0usize;
    for e in 0..episodes {
        let s = episode_seed(seed, 1, e);
        let mut source = FrameSource::Simulated(init_audience(config.n_children, s, config.audience.clone())?);
        let opts = EpisodeOptions { select: SelectMode::Greedy, ..EpisodeOptions::new(mode, s) };
        let log = run_episode(story, config, &bolts, &mut agent, &mut source, &opts, &EpisodeContext::default())
            .map_err(|a| a.error)?;
        let footer = log.footer.expect("finished episodes have a footer");
        returns.push(footer.final_return);
        compliant += footer.compliant as usize;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalReport {
        mode,
        episodes,
        mean_return: returns.iter().sum::<f64>() / n,
        compliance_rate: compliant as f64 / n,
        returns,
    })
}
