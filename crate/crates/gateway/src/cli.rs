//! Command line entry points. Exit codes: 0 success, 1 runtime error, 2
//! usage error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use storybolt_core::agent::{ActionId, Agent};
use storybolt_core::audience::init_audience;
use storybolt_core::bus::Bus;
use storybolt_core::ltlf::{parse, BoltAutomaton};
use storybolt_core::metrics::{aggregate_segment, read_tracks, segment_frames_by_time, MetricsTracker};
use storybolt_core::session::{
    build_agent, evaluate, load_story, run_episode, train, Checkpoint, EpisodeContext, EpisodeLog, EpisodeOptions,
    FrameSource, Mode, ReplaySource, SessionConfig, StoryManifest,
};

use crate::service::{serve, AppState};
use crate::sessions::{Registry, StartRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "storybolt", version, about = "Storytelling robot decision stack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play one story episode.
    Run(RunArgs),
    /// Train a policy on the simulated audience and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint: mean return and bolt compliance.
    Eval(EvalArgs),
    /// Run a bolt formula over an action trace.
    CheckBolt(CheckBoltArgs),
    /// Run the metrics pipeline over recorded tracks, one state vector per segment.
    ReplayMetrics(ReplayMetricsArgs),
    /// Serve the HTTP/WebSocket API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub story: PathBuf,
    /// auto, wizard, random or scripted.
    #[arg(long)]
    pub mode: Mode,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pace playback to wall-clock time.
    #[arg(long)]
    pub realtime: bool,
    /// Expose the session over HTTP/WebSocket on this address (required for wizard mode).
    #[arg(long)]
    pub serve: Option<SocketAddr>,
    /// Recorded tracks (JSON Lines) instead of the simulated audience.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Trained policy for autonomous mode and wizard fallback.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Episode log destination; stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also write every bus event to this JSON Lines file.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub story: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also evaluate the uniform random policy on the same seeds.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct CheckBoltArgs {
    #[arg(long)]
    pub formula: String,
    /// Comma separated actions, e.g. `q,c,w,c`. Empty for the empty trace.
    #[arg(long, default_value = "")]
    pub trace: String,
}

#[derive(Debug, Args)]
pub struct ReplayMetricsArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    /// Take segment durations from this story instead of fixed windows.
    #[arg(long)]
    pub story: Option<PathBuf>,
    #[arg(long, default_value_t = 8.0)]
    pub segment_s: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "STORYBOLT_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory of story manifests (*.json).
    #[arg(long)]
    pub stories: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Where episode and event logs are written.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::CheckBolt(a) => cmd_check_bolt(a),
        Command::ReplayMetrics(a) => cmd_replay_metrics(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SessionConfig> {
    match path {
        Some(p) => Ok(SessionConfig::load(p)?),
        None => Ok(SessionConfig::default()),
    }
}

/// Config and agent for a run: an explicit config wins over the one stored
/// in the checkpoint.
fn config_and_agent(config: Option<&Path>, ckpt: Option<&Path>) -> anyhow::Result<(SessionConfig, Option<Agent<f64>>)> {
    match ckpt {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let config = match config {
                Some(c) => SessionConfig::load(c)?,
                None => ck.config,
            };
            Ok((config, Some(ck.agent)))
        }
        None => Ok((load_config(config)?, None)),
    }
}

fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_log(log: &EpisodeLog, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => Ok(log.write_jsonl(p)?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(log.to_jsonl().as_bytes()).context("writing the episode log to stdout")?;
            Ok(())
        }
    }
}

fn summarize(log: &EpisodeLog) {
    match &log.footer {
        Some(f) => eprintln!(
            "{:?}: {} decisions, final return {:.3}, violations {}, compliant {}",
            f.status, f.decisions, f.final_return, f.violations, f.compliant
        ),
        None => eprintln!("no footer: episode did not finish"),
    }
}

fn cmd_run(a: RunArgs) -> CliResult {
    if a.mode == Mode::Wizard && a.serve.is_none() {
        return Err(CliError::Usage("wizard mode needs --serve <addr> so an operator can answer".into()));
    }
    let story = load_story(&a.story).map_err(anyhow::Error::from)?;
    let (config, agent) = config_and_agent(a.config.as_deref(), a.ckpt.as_deref())?;
    let source = match &a.replay {
        Some(p) => Some(FrameSource::Replay(ReplaySource::new(read_tracks(p).map_err(anyhow::Error::from)?))),
        None => None,
    };
    let log = match a.serve {
        Some(addr) => run_served(&a, story, config, agent, source, addr)?,
        None => run_local(&a, &story, &config, agent, source)?,
    };
    write_log(&log, a.log.as_deref())?;
    summarize(&log);
    match &log.footer {
        Some(f) if f.error.is_none() && log.is_finished() => Ok(()),
        Some(f) => Err(anyhow!("episode aborted: {}", f.error.as_deref().unwrap_or("unknown error")).into()),
        None => Err(anyhow!("episode aborted").into()),
    }
}

fn run_local(
    a: &RunArgs,
    story: &StoryManifest,
    config: &SessionConfig,
    agent: Option<Agent<f64>>,
    source: Option<FrameSource>,
) -> anyhow::Result<EpisodeLog> {
    let bolts = config.bolts.compile(&ActionId::alphabet())?;
    let mut agent = match agent {
        Some(a) => a,
        None => build_agent(&config.agent, &bolts)?,
    };
    let mut source = match source {
        Some(s) => s,
        None => FrameSource::Simulated(init_audience(config.n_children, a.seed, config.audience.clone())?),
    };
    let bus = match &a.events {
        Some(p) => Some(Bus::with_log_file(p)?),
        None => None,
    };
    let ctx = EpisodeContext { bus: bus.as_ref(), ..Default::default() };
    let opts = EpisodeOptions { realtime: a.realtime, started_at: Some(now_unix()), ..EpisodeOptions::new(a.mode, a.seed) };
    let log = match run_episode(story, config, &bolts, &mut agent, &mut source, &opts, &ctx) {
        Ok(log) => log,
        Err(aborted) => *aborted.partial,
    };
    if let Some(bus) = bus {
        bus.close();
    }
    Ok(log)
}

fn run_served(
    a: &RunArgs,
    story: StoryManifest,
    config: SessionConfig,
    agent: Option<Agent<f64>>,
    source: Option<FrameSource>,
    addr: SocketAddr,
) -> anyhow::Result<EpisodeLog> {
    let story_id = story.id.clone();
    let registry = Arc::new(Registry::new(config, agent, vec![story], None)?);
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let server = tokio::spawn(serve(listener, AppState::new(Arc::clone(&registry))));
        let session = registry
            .start(StartRequest { story_id, mode: a.mode, seed: a.seed, realtime: a.realtime, source })
            .map_err(|e| anyhow!(e))?;
        eprintln!("session {} started", session.id);
        let done = Arc::clone(&session);
        let log = tokio::task::spawn_blocking(move || done.wait()).await?;
        // give stream clients a moment to receive the final status
        tokio::time::sleep(std::time::Duration::from_millis(200)).await;
        server.abort();
        Ok(log)
    })
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let story = load_story(&a.story).map_err(anyhow::Error::from)?;
    let config = load_config(a.config.as_deref())?;
    let episodes = a.episodes as usize;
    let report = train(&story, &config, episodes, a.seed).map_err(anyhow::Error::from)?;
    let tail = report.returns.len().min(50);
    let recent = &report.returns[report.returns.len() - tail..];
    let recent_compliant = report.compliant[report.compliant.len() - tail..].iter().filter(|c| **c).count();
    Checkpoint::new(story, config, report.agent, episodes, a.seed).save(&a.out).map_err(anyhow::Error::from)?;
    println!(
        "trained {episodes} episodes; last {tail}: mean return {:.3}, compliance {:.3}; checkpoint {}",
        recent.iter().sum::<f64>() / tail as f64,
        recent_compliant as f64 / tail as f64,
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let ck = Checkpoint::load(&a.ckpt).map_err(anyhow::Error::from)?;
    let mut modes = vec![Mode::Autonomous];
    if a.baseline {
        modes.push(Mode::Random);
    }
    for mode in modes {
        let r = evaluate(&ck.story, &ck.config, &ck.agent, mode, a.episodes as usize, a.seed)
            .map_err(anyhow::Error::from)?;
        println!(
            "{}",
            json!({
                "mode": r.mode,
                "episodes": r.episodes,
                "mean_return": r.mean_return,
                "compliance_rate": r.compliance_rate,
            })
        );
    }
    Ok(())
}

fn cmd_check_bolt(a: CheckBoltArgs) -> CliResult {
    let alphabet = ActionId::alphabet();
    let formula = parse(&a.formula, &alphabet).map_err(|e| anyhow!("formula {:?}: {e}", a.formula))?;
    let automaton = BoltAutomaton::compile(&formula, &alphabet).map_err(anyhow::Error::from)?;
    let trace: Vec<&str> = a.trace.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let path = automaton.run(&trace).map_err(anyhow::Error::from)?;
    let last = *path.last().expect("path holds the initial state");
    println!("{}", if automaton.is_accepting(last) { "ACCEPT" } else { "REJECT" });
    let states: Vec<String> = path.iter().map(|s| format!("s{s}")).collect();
    println!("path: {}", states.join(" -> "));
    let mut seen = Vec::new();
    for &s in &path {
        if seen.contains(&s) {
            continue;
        }
        seen.push(s);
        let tag = if automaton.is_dead(s) {
            " (dead)"
        } else if automaton.is_accepting(s) {
            " (accepting)"
        } else {
            ""
        };
        println!("  s{s}: {}{tag}", automaton.state_formula(s));
    }
    Ok(())
}

fn cmd_replay_metrics(a: ReplayMetricsArgs) -> CliResult {
    if a.segment_s.is_nan() || a.segment_s <= 0.0 {
        return Err(CliError::Usage("--segment-s must be > 0".into()));
    }
    let config = load_config(a.config.as_deref())?;
    let frames = read_tracks::<f64>(&a.tracks).map_err(anyhow::Error::from)?;
    let durations = match &a.story {
        Some(p) => load_story(p).map_err(anyhow::Error::from)?.durations(),
        None => {
            let span = match (frames.first(), frames.last()) {
                (Some(f), Some(l)) => l.timestamp - f.timestamp,
                _ => 0.0,
            };
            let n = (span / a.segment_s).floor() as usize + 1;
            vec![a.segment_s; n]
        }
    };
    let mut tracker = MetricsTracker::new(config.metrics.clone()).map_err(anyhow::Error::from)?;
    let metrics = frames
        .iter()
        .map(|f| tracker.observe(f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::from)?;
    let mut out = std::io::stdout().lock();
    let mut offset = 0;
    for (i, seg) in segment_frames_by_time(&frames, &durations).into_iter().enumerate() {
        let slice = &metrics[offset..offset + seg.len()];
        offset += seg.len();
        let state = aggregate_segment(slice).ok();
        writeln!(out, "{}", json!({ "segment": i, "frames": slice.len(), "state": state }))
            .context("writing to stdout")?;
    }
    Ok(())
}

fn load_stories(dir: &Path) -> anyhow::Result<Vec<StoryManifest>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading story directory {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let stories = paths.iter().map(|p| load_story(p)).collect::<Result<Vec<_>, _>>()?;
    if stories.is_empty() {
        anyhow::bail!("no story manifests (*.json) in {}", dir.display());
    }
    Ok(stories)
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let stories = load_stories(&a.stories)?;
    let (config, agent) = config_and_agent(a.config.as_deref(), a.ckpt.as_deref())?;
    if let Some(dir) = &a.log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let registry = Arc::new(Registry::new(config, agent, stories, a.log_dir.clone())?);
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await.with_context(|| format!("binding {}", a.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, AppState::new(registry)).await.context("serving")?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}
