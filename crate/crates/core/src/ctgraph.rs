//! Configurable tree-graph environment.
//!
//! An episode starts in a start state and walks down a tree of depth `depth`:
//! each level is a run of wait states followed by a decision state with
//! `branching_factor` choices. A final run of wait states leads to one of the
//! `branching_factor^depth` end states. Only the wait action is correct in
//! start and wait states; only a choice is correct in decision states. Any
//! other action crashes the episode.
//!
//! Observability is partial: all wait states share one image and all
//! decision states share another. The end state image carries a bright
//! square (the reward cue) only when the end state is the current goal.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Action index of the wait action. Choice `c` (0-based) is action `c + 1`.
pub const WAIT: usize = 0;

/// Side length in pixels of the square reward cue.
pub const CUE_SIDE: usize = 4;

/// Upper bound of base image intensities; the cue is drawn at 1.0.
const BASE_MAX: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtGraphConfig {
    pub branching_factor: usize,
    pub depth: usize,
    /// Observation side length in pixels.
    pub obs_side: usize,
    pub goal_reward: f64,
    pub crash_reward: f64,
    pub step_reward: f64,
    /// Consecutive wait steps per wait state.
    pub wait_delay: usize,
    pub obs_seed: u64,
}

impl Default for CtGraphConfig {
    fn default() -> Self {
        Self {
            branching_factor: 2,
            depth: 2,
            obs_side: 12,
            goal_reward: 1.0,
            crash_reward: 0.0,
            step_reward: 0.0,
            wait_delay: 1,
            obs_seed: 0,
        }
    }
}

impl CtGraphConfig {
    pub fn new(branching_factor: usize, depth: usize) -> Self {
        Self {
            branching_factor,
            depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branching_factor < 2 {
            return Err(Error::Config("branching_factor must be >= 2".into()));
        }
        if self.depth < 1 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if self.obs_side < CUE_SIDE {
            return Err(Error::Config(format!("obs_side must be >= {CUE_SIDE}")));
        }
        if self
            .branching_factor
            .checked_pow(self.depth as u32)
            .is_none()
        {
            return Err(Error::Config("branching_factor^depth overflows".into()));
        }
        for (name, v) in [
            ("goal_reward", self.goal_reward),
            ("crash_reward", self.crash_reward),
            ("step_reward", self.step_reward),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Number of end states, `branching_factor^depth`.
    pub fn num_end_states(&self) -> usize {
        self.branching_factor.pow(self.depth as u32)
    }

    /// Number of actions: wait plus one per branch.
    pub fn num_actions(&self) -> usize {
        self.branching_factor + 1
    }

    /// Length of every non-crashing episode, in actions.
    pub fn episode_len(&self) -> usize {
        1 + self.depth * (self.wait_delay + 1) + self.wait_delay
    }

    pub fn num_pixels(&self) -> usize {
        self.obs_side * self.obs_side
    }
}

/// Number of end states of the graph.
pub fn num_end_states(config: &CtGraphConfig) -> usize {
    config.num_end_states()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Wait,
    Decision,
    End,
    Crash,
    /// Episode cut short by the caller (step limit).
    Done,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::End | Phase::Crash | Phase::Done)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Start => "start",
            Phase::Wait => "wait",
            Phase::Decision => "decision",
            Phase::End => "end",
            Phase::Crash => "crash",
            Phase::Done => "done",
        };
        f.write_str(s)
    }
}

/// The distinct images the environment can show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Start,
    Wait,
    Decision,
    EndGoal,
    EndNoGoal,
    Crash,
}

impl ObsKind {
    pub const ALL: [ObsKind; 6] = [
        ObsKind::Start,
        ObsKind::Wait,
        ObsKind::Decision,
        ObsKind::EndGoal,
        ObsKind::EndNoGoal,
        ObsKind::Crash,
    ];

    pub fn from_phase(phase: Phase, goal_found: bool) -> Self {
        match phase {
            Phase::Start => ObsKind::Start,
            Phase::Wait => ObsKind::Wait,
            Phase::Decision => ObsKind::Decision,
            Phase::End if goal_found => ObsKind::EndGoal,
            Phase::End => ObsKind::EndNoGoal,
            Phase::Crash | Phase::Done => ObsKind::Crash,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn label(self) -> &'static str {
        match self {
            ObsKind::Start => "start",
            ObsKind::Wait => "wait",
            ObsKind::Decision => "decision",
            ObsKind::EndGoal | ObsKind::EndNoGoal => "end",
            ObsKind::Crash => "crash",
        }
    }
}

impl fmt::Display for ObsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObsKind::EndGoal => f.write_str("end_goal"),
            ObsKind::EndNoGoal => f.write_str("end_no_goal"),
            k => f.write_str(k.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub kind: ObsKind,
    /// Row-major grayscale pixels in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl Observation {
    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Write the image as an `obs_side x obs_side` CSV matrix without header.
    pub fn write_csv(&self, side: usize, path: &Path) -> Result<()> {
        let mut out = String::new();
        for row in self.pixels.chunks(side) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub phase: Phase,
    /// Decision states already passed.
    pub level: usize,
    /// Choices taken so far, each in `0..branching_factor`.
    pub path: Vec<usize>,
    pub goal_index: usize,
    /// Remaining wait steps while in a wait state.
    pub wait_left: usize,
    pub branching_factor: usize,
}

impl EnvState {
    pub fn goal_found(&self) -> bool {
        self.phase == Phase::End && self.reached_index() == Some(self.goal_index)
    }

    /// End state index encoded by the path (first choice most significant),
    /// once the path is complete.
    pub fn reached_index(&self) -> Option<usize> {
        (self.phase == Phase::End).then(|| path_index(&self.path, self.branching_factor))
    }
}

fn path_index(path: &[usize], base: usize) -> usize {
    path.iter().fold(0, |acc, &c| acc * base + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Generate the image for a phase. Deterministic in `(phase, goal_found,
/// obs_seed, obs_side)`; `goal_found` only matters for the end phase.
pub fn observation_for(phase: Phase, goal_found: bool, config: &CtGraphConfig) -> Observation {
    let kind = ObsKind::from_phase(phase, goal_found);
    let side = config.obs_side;
    let mut rng = seed::rng_from(seed::derive(config.obs_seed, &["observation", kind.label()]));
    let noise: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>()).collect();

    // 3x3 box blur with clamped borders
    let mut smooth = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut sum = 0.0;
            let mut n = 0.0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let rr = r as i64 + dr;
                    let cc = c as i64 + dc;
                    if rr >= 0 && cc >= 0 && (rr as usize) < side && (cc as usize) < side {
                        sum += noise[rr as usize * side + cc as usize];
                        n += 1.0;
                    }
                }
            }
            smooth[r * side + c] = sum / n;
        }
    }
    let lo = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels: Vec<f64> = smooth.iter().map(|v| (v - lo) / span * BASE_MAX).collect();

    if kind == ObsKind::EndGoal {
        for r in 0..CUE_SIDE {
            for c in 0..CUE_SIDE {
                pixels[r * side + c] = 1.0;
            }
        }
    }
    Observation { kind, pixels }
}

/// Every image the environment can emit, in [`ObsKind::ALL`] order.
pub fn all_observations(config: &CtGraphConfig) -> Vec<Observation> {
    ObsKind::ALL
        .iter()
        .map(|k| {
            let (phase, found) = match k {
                ObsKind::Start => (Phase::Start, false),
                ObsKind::Wait => (Phase::Wait, false),
                ObsKind::Decision => (Phase::Decision, false),
                ObsKind::EndGoal => (Phase::End, true),
                ObsKind::EndNoGoal => (Phase::End, false),
                ObsKind::Crash => (Phase::Crash, false),
            };
            observation_for(phase, found, config)
        })
        .collect()
}

/// Start an episode with the given goal end state.
pub fn reset(config: &CtGraphConfig, goal_index: usize) -> Result<(EnvState, Observation)> {
    config.validate()?;
    let n = config.num_end_states();
    if goal_index >= n {
        return Err(Error::Config(format!(
            "goal_index {goal_index} out of range (graph has {n} end states)"
        )));
    }
    let state = EnvState {
        phase: Phase::Start,
        level: 0,
        path: Vec::with_capacity(config.depth),
        goal_index,
        wait_left: 0,
        branching_factor: config.branching_factor,
    };
    Ok((state, observation_for(Phase::Start, false, config)))
}

/// Advance the episode by one action.
pub fn step(state: &EnvState, action: usize, config: &CtGraphConfig) -> Result<(EnvState, StepResult)> {
    if state.phase.is_terminal() {
        return Err(Error::Usage(format!(
            "cannot step an episode that has ended (phase {})",
            state.phase
        )));
    }
    if action >= config.num_actions() {
        return Err(Error::Usage(format!(
            "action {action} out of range (0..{})",
            config.num_actions()
        )));
    }
    let mut next = state.clone();

    let correct = match state.phase {
        Phase::Start | Phase::Wait => action == WAIT,
        Phase::Decision => action != WAIT,
        _ => unreachable!(),
    };
    if !correct {
        next.phase = Phase::Crash;
        return Ok((
            next,
            StepResult {
                observation: observation_for(Phase::Crash, false, config),
                reward: config.crash_reward,
                done: true,
            },
        ));
    }

    match state.phase {
        Phase::Start => enter_wait_or_advance(&mut next, config),
        Phase::Wait => {
            next.wait_left -= 1;
            if next.wait_left == 0 {
                advance(&mut next, config);
            }
        }
        Phase::Decision => {
            next.path.push(action - 1);
            next.level += 1;
            enter_wait_or_advance(&mut next, config);
        }
        _ => unreachable!(),
    }

    let found = next.goal_found();
    let (reward, done) = if next.phase == Phase::End {
        let r = if found {
            config.goal_reward
        } else {
            config.step_reward
        };
        (r, true)
    } else {
        (config.step_reward, false)
    };
    Ok((
        next.clone(),
        StepResult {
            observation: observation_for(next.phase, found, config),
            reward,
            done,
        },
    ))
}

fn enter_wait_or_advance(state: &mut EnvState, config: &CtGraphConfig) {
    if config.wait_delay > 0 {
        state.phase = Phase::Wait;
        state.wait_left = config.wait_delay;
    } else {
        advance(state, config);
    }
}

fn advance(state: &mut EnvState, config: &CtGraphConfig) {
    state.wait_left = 0;
    state.phase = if state.level < config.depth {
        Phase::Decision
    } else {
        Phase::End
    };
}

/// The unique non-crashing action sequence that ends in `goal_index`.
pub fn oracle_actions(goal_index: usize, config: &CtGraphConfig) -> Vec<usize> {
    let b = config.branching_factor;
    let mut digits = vec![0; config.depth];
    let mut g = goal_index;
    for d in digits.iter_mut().rev() {
        *d = g % b;
        g /= b;
    }
    let waits = std::iter::repeat_n(WAIT, config.wait_delay);
    let mut actions = vec![WAIT];
    for d in digits {
        actions.extend(waits.clone());
        actions.push(d + 1);
    }
    actions.extend(waits);
    actions
}
