//! Trials and episodes.
//!
//! A trial is a fixed number of episodes. It starts with one goal end state
//! and switches goals at stochastically drawn change points. Plastic weights
//! are reset to the genome at trial start and persist across the episodes of
//! the trial; neuron activations reset at every episode start. The scalar
//! reward is never shown to the controller; after reaching an end state the
//! controller processes the end-state image once (no action is taken), which
//! is how it can see the reward cue.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ctgraph::{self, CtGraphConfig, ObsKind, Phase};
use crate::error::{Error, Result};
use crate::features::InputTable;
use crate::neuromod::{discretize_action, Genome, Network, NetworkState};
use crate::seed;

/// Relative jitter of segment boundaries when a trial has more than two tasks.
pub const SEGMENT_JITTER: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    pub episodes_per_trial: usize,
    pub num_tasks: usize,
    /// Inclusive episode window for the change point of a two-task trial.
    pub change_window: (usize, usize),
    pub trials_per_eval: usize,
    /// Defaults to the environment's episode length + 2.
    pub max_steps_per_episode: Option<usize>,
    pub record_activations: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            episodes_per_trial: 100,
            num_tasks: 2,
            change_window: (35, 65),
            trials_per_eval: 4,
            max_steps_per_episode: None,
            record_activations: false,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.change_window;
        if self.num_tasks < 1 {
            return Err(Error::Config("num_tasks must be >= 1".into()));
        }
        if self.episodes_per_trial < 1 {
            return Err(Error::Config("episodes_per_trial must be >= 1".into()));
        }
        if self.num_tasks == 2 && !(1 <= lo && lo <= hi && hi < self.episodes_per_trial) {
            return Err(Error::Config(format!(
                "change_window ({lo}, {hi}) must satisfy 1 <= lo <= hi < episodes_per_trial"
            )));
        }
        if self.num_tasks > self.episodes_per_trial {
            return Err(Error::Config(format!(
                "{} episodes are too few for {} tasks",
                self.episodes_per_trial, self.num_tasks
            )));
        }
        if self.trials_per_eval < 1 {
            return Err(Error::Config("trials_per_eval must be >= 1".into()));
        }
        if self.max_steps_per_episode == Some(0) {
            return Err(Error::Config("max_steps_per_episode must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_steps(&self, env: &CtGraphConfig) -> usize {
        self.max_steps_per_episode.unwrap_or(env.episode_len() + 2)
    }
}

/// Environment plus trial structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub env: CtGraphConfig,
    pub trial: TrialConfig,
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.trial.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub goals: Vec<usize>,
    /// First episode of each task after the first.
    pub change_points: Vec<usize>,
}

impl TaskSchedule {
    pub fn goal_at(&self, episode: usize) -> usize {
        let task = self.change_points.iter().filter(|&&cp| cp <= episode).count();
        self.goals[task]
    }
}

/// Draw the goals and change points of one trial.
pub fn schedule_tasks(config: &TrialConfig, num_end_states: usize, rng: &mut seed::Rng) -> Result<TaskSchedule> {
    config.validate()?;
    if config.num_tasks > 1 && num_end_states < 2 {
        return Err(Error::Config("goal changes need at least two end states".into()));
    }
    let mut goals = Vec::with_capacity(config.num_tasks);
    goals.push(rng.random_range(0..num_end_states));
    for _ in 1..config.num_tasks {
        let prev = *goals.last().unwrap();
        let mut g = rng.random_range(0..num_end_states - 1);
        if g >= prev {
            g += 1;
        }
        goals.push(g);
    }

    let n = config.episodes_per_trial;
    let change_points = match config.num_tasks {
        1 => Vec::new(),
        2 => {
            let (lo, hi) = config.change_window;
            vec![rng.random_range(lo..=hi)]
        }
        k => {
            let seg = n as f64 / k as f64;
            let jitter = (SEGMENT_JITTER * seg).floor() as i64;
            let mut cps = Vec::with_capacity(k - 1);
            for i in 1..k {
                let center = (i as f64 * seg).round() as i64;
                let cp = center + rng.random_range(-jitter..=jitter);
                let floor = cps.last().map_or(1, |&p: &usize| p as i64 + 1);
                if cp < floor || cp >= n as i64 {
                    return Err(Error::Config(format!(
                        "{n} episodes leave no room for {} task changes",
                        k - 1
                    )));
                }
                cps.push(cp as usize);
            }
            cps
        }
    };
    Ok(TaskSchedule {
        goals,
        change_points,
    })
}

/// What a controller may know about the upcoming episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub env: &'a CtGraphConfig,
    /// Only the oracle test double reads this.
    pub goal: usize,
}

/// Something that picks actions from controller inputs.
pub trait Controller {
    fn num_neurons(&self) -> usize;
    /// Called once at trial start.
    fn begin_trial(&mut self);
    fn begin_episode(&mut self, ctx: &EpisodeContext<'_>);
    /// Returns `(action, output_activation)`.
    fn act(&mut self, input: &[f64]) -> Result<(usize, f64)>;
    /// Process a terminal observation without acting; returns the output
    /// activation.
    fn observe(&mut self, input: &[f64]) -> Result<f64>;
    /// Standard and modulatory activations of every neuron, if any.
    fn activations(&self) -> Option<(&[f64], &[f64])>;
}

/// An evolved network driven by its plasticity rule.
#[derive(Debug, Clone)]
pub struct PlasticController {
    net: Network,
    state: NetworkState,
}

impl PlasticController {
    pub fn new(genome: &Genome) -> Result<Self> {
        let net = Network::new(genome)?;
        let state = net.init_state();
        Ok(Self { net, state })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
}

impl Controller for PlasticController {
    fn num_neurons(&self) -> usize {
        self.net.num_neurons()
    }

    fn begin_trial(&mut self) {
        self.state = self.net.init_state();
    }

    fn begin_episode(&mut self, _ctx: &EpisodeContext<'_>) {
        self.state.reset_activations();
    }

    fn act(&mut self, input: &[f64]) -> Result<(usize, f64)> {
        let out = self.net.propagate(&mut self.state, input)?;
        self.net.hebbian_update(&mut self.state);
        Ok((discretize_action(out), out))
    }

    fn observe(&mut self, input: &[f64]) -> Result<f64> {
        let out = self.net.propagate(&mut self.state, input)?;
        self.net.hebbian_update(&mut self.state);
        Ok(out)
    }

    fn activations(&self) -> Option<(&[f64], &[f64])> {
        Some((&self.state.a_std, &self.state.a_mod))
    }
}

/// Test double with perfect task knowledge: replays the optimal path to the
/// current goal.
#[derive(Debug, Clone, Default)]
pub struct OracleController {
    plan: Vec<usize>,
    pos: usize,
}

impl OracleController {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Controller for OracleController {
    fn num_neurons(&self) -> usize {
        0
    }

    fn begin_trial(&mut self) {}

    fn begin_episode(&mut self, ctx: &EpisodeContext<'_>) {
        self.plan = ctgraph::oracle_actions(ctx.goal, ctx.env);
        self.pos = 0;
    }

    fn act(&mut self, _input: &[f64]) -> Result<(usize, f64)> {
        let action = self.plan.get(self.pos).copied().unwrap_or(ctgraph::WAIT);
        self.pos += 1;
        // an activation that discretizes to the same action
        let out = match action {
            0 => -0.66,
            1 => 0.0,
            _ => 0.66,
        };
        Ok((action, out))
    }

    fn observe(&mut self, _input: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn activations(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based position in the episode.
    pub timestep: usize,
    pub observation: ObsKind,
    /// `None` for the terminal end-state observation.
    pub action: Option<usize>,
    pub reward: f64,
    pub output: f64,
    pub a_std: Option<Vec<f64>>,
    pub a_mod: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub goal: usize,
    /// One record per action.
    pub steps: Vec<StepRecord>,
    /// The end-state observation processed after the last action.
    pub terminal: Option<StepRecord>,
    pub total_reward: f64,
    pub goal_found: bool,
    pub crashed: bool,
    /// Cut off by the step limit.
    pub truncated: bool,
}

impl EpisodeTrace {
    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Action steps followed by the terminal record, if any.
    pub fn records(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().chain(self.terminal.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub episodes: Vec<EpisodeTrace>,
    pub change_points: Vec<usize>,
    pub goals: Vec<usize>,
    pub trial_reward: f64,
}

impl TrialResult {
    pub fn mean_episode_reward(&self) -> f64 {
        self.trial_reward / self.episodes.len() as f64
    }
}

/// Mean episode reward just after task changes and at the end of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationProfile {
    /// Over the `window` episodes starting at each change point.
    pub after_change: f64,
    /// Over the last `window` episodes of each trial.
    pub final_window: f64,
    pub overall: f64,
}

/// `None` when there are no trials, no change points or `window` is 0.
pub fn adaptation_profile(trials: &[TrialResult], window: usize) -> Option<AdaptationProfile> {
    let mean = |eps: &[EpisodeTrace]| eps.iter().map(|e| e.total_reward).sum::<f64>() / eps.len() as f64;
    let mut after = Vec::new();
    let mut last = Vec::new();
    for t in trials {
        let n = t.episodes.len();
        if n == 0 || window == 0 {
            continue;
        }
        for &cp in &t.change_points {
            after.push(mean(&t.episodes[cp..(cp + window).min(n)]));
        }
        last.push(mean(&t.episodes[n.saturating_sub(window)..]));
    }
    if after.is_empty() {
        return None;
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(AdaptationProfile {
        after_change: avg(&after),
        final_window: avg(&last),
        overall: avg(&trials.iter().map(TrialResult::mean_episode_reward).collect::<Vec<_>>()),
    })
}

fn snapshot(c: &dyn Controller, record: bool) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    match (record, c.activations()) {
        (true, Some((s, m))) => (Some(s.to_vec()), Some(m.to_vec())),
        _ => (None, None),
    }
}

/// Run one episode from the start state.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env: &CtGraphConfig,
    goal: usize,
    episode: usize,
    controller: &mut dyn Controller,
    inputs: &InputTable,
    max_steps: usize,
    record: bool,
) -> Result<EpisodeTrace> {
    controller.begin_episode(&EpisodeContext { env, goal });
    let (mut state, mut obs) = ctgraph::reset(env, goal)?;
    let mut steps = Vec::with_capacity(env.episode_len());
    let mut terminal = None;
    let mut total = 0.0;
    let mut finished = false;

    while steps.len() < max_steps {
        let (action, output) = controller.act(inputs.get(obs.kind))?;
        let (a_std, a_mod) = snapshot(controller, record);
        let (next, result) = ctgraph::step(&state, action, env)?;
        total += result.reward;
        steps.push(StepRecord {
            timestep: steps.len() + 1,
            observation: obs.kind,
            action: Some(action),
            reward: result.reward,
            output,
            a_std,
            a_mod,
        });
        state = next;
        obs = result.observation;
        if result.done {
            if state.phase == Phase::End {
                let output = controller.observe(inputs.get(obs.kind))?;
                let (a_std, a_mod) = snapshot(controller, record);
                terminal = Some(StepRecord {
                    timestep: steps.len() + 1,
                    observation: obs.kind,
                    action: None,
                    reward: 0.0,
                    output,
                    a_std,
                    a_mod,
                });
            }
            finished = true;
            break;
        }
    }
    Ok(EpisodeTrace {
        episode,
        goal,
        steps,
        terminal,
        total_reward: total,
        goal_found: state.goal_found(),
        crashed: state.phase == Phase::Crash,
        truncated: !finished,
    })
}

/// Run a full trial: draw the task schedule, reset plastic weights once, then
/// run every episode in order.
pub fn run_trial(config: &HarnessConfig, controller: &mut dyn Controller, inputs: &InputTable, rng: &mut seed::Rng) -> Result<TrialResult> {
    let env = &config.env;
    let trial = &config.trial;
    let schedule = schedule_tasks(trial, env.num_end_states(), rng)?;
    let max_steps = trial.max_steps(env);
    controller.begin_trial();
    let mut episodes = Vec::with_capacity(trial.episodes_per_trial);
    let mut trial_reward = 0.0;
    for e in 0..trial.episodes_per_trial {
        let goal = schedule.goal_at(e);
        let ep = run_episode(env, goal, e, controller, inputs, max_steps, trial.record_activations)?;
        trial_reward += ep.total_reward;
        episodes.push(ep);
    }
    Ok(TrialResult {
        episodes,
        change_points: schedule.change_points,
        goals: schedule.goals,
        trial_reward,
    })
}

/// Run one trial per seed; returns the results in seed order.
pub fn run_trials(config: &HarnessConfig, controller: &mut dyn Controller, inputs: &InputTable, seeds: &[u64]) -> Result<Vec<TrialResult>> {
    seeds
        .iter()
        .map(|s| run_trial(config, controller, inputs, &mut seed::rng_from(*s)))
        .collect()
}

/// One row per action step.
pub fn write_step_csv(trials: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["trial", "episode", "goal", "timestep", "observation", "action", "reward", "output"])?;
    for (t, trial) in trials.iter().enumerate() {
        for ep in &trial.episodes {
            for s in &ep.steps {
                w.write_record([
                    t.to_string(),
                    ep.episode.to_string(),
                    ep.goal.to_string(),
                    s.timestep.to_string(),
                    s.observation.to_string(),
                    s.action.map_or(String::new(), |a| a.to_string()),
                    s.reward.to_string(),
                    s.output.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per episode.
pub fn write_episode_csv(trials: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["trial", "episode", "goal", "reward", "length", "goal_found", "crashed"])?;
    for (t, trial) in trials.iter().enumerate() {
        for ep in &trial.episodes {
            w.write_record([
                t.to_string(),
                ep.episode.to_string(),
                ep.goal.to_string(),
                ep.total_reward.to_string(),
                ep.len().to_string(),
                ep.goal_found.to_string(),
                ep.crashed.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}
