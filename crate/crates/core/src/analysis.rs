//! Activation statistics of a trained controller.
//!
//! Two views: per-timestep distributions of `|a_std|` for every neuron (which
//! exposes neurons tied to positions in the graph, e.g. decision or wait
//! states), and distributions of `a_std` at the end-state step split by
//! whether the goal was found (which exposes neurons reacting to the reward
//! cue).

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::InputTable;
use crate::harness::{self, EpisodeTrace, HarnessConfig, PlasticController};
use crate::neuromod::{Genome, NeuronId};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEpisode {
    pub trial: usize,
    pub trace: EpisodeTrace,
}

/// Activation traces of one genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationDataset {
    pub neuron_ids: Vec<NeuronId>,
    pub episodes: Vec<DatasetEpisode>,
}

impl ActivationDataset {
    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Run `n_trials` trials with activation recording on.
pub fn collect_dataset(
    genome: &Genome,
    harness_config: &HarnessConfig,
    inputs: &InputTable,
    n_trials: usize,
    rng: &mut seed::Rng,
) -> Result<ActivationDataset> {
    let mut config = harness_config.clone();
    config.trial.record_activations = true;
    let mut controller = PlasticController::new(genome)?;
    let mut episodes = Vec::new();
    for trial in 0..n_trials {
        let mut trial_rng = seed::rng_from(rng.next_u64());
        let result = harness::run_trial(&config, &mut controller, inputs, &mut trial_rng)?;
        episodes.extend(
            result
                .episodes
                .into_iter()
                .map(|trace| DatasetEpisode { trial, trace }),
        );
    }
    Ok(ActivationDataset {
        neuron_ids: genome.neurons.iter().map(|n| n.id).collect(),
        episodes,
    })
}

/// Distribution summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            count: sorted.len(),
            mean,
            std: var.sqrt(),
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationCell {
    pub neuron: NeuronId,
    /// 1-based step within the episode.
    pub timestep: usize,
    /// Statistics of `|a_std|`.
    pub abs: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueNeuron {
    pub neuron: NeuronId,
    pub found: Summary,
    pub not_found: Summary,
    /// `mean(found) - mean(not found)`.
    pub mean_diff: f64,
    /// `|mean_diff|` over the pooled standard deviation.
    pub separation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuronStats {
    pub neuron_ids: Vec<NeuronId>,
    pub location: Vec<LocationCell>,
    pub reward_cue: Vec<CueNeuron>,
}

fn records_with_activations(ep: &EpisodeTrace) -> Result<impl Iterator<Item = (usize, &[f64])>> {
    if ep.records().any(|r| r.a_std.is_none()) {
        return Err(Error::Analysis(format!(
            "episode {} has no recorded activations",
            ep.episode
        )));
    }
    Ok(ep
        .records()
        .map(|r| (r.timestep, r.a_std.as_deref().unwrap())))
}

/// Per-neuron, per-timestep statistics of `|a_std|`, pooled over every
/// episode that reached the timestep. Crashed episodes contribute up to
/// their crash.
pub fn location_stats(dataset: &ActivationDataset) -> Result<Vec<LocationCell>> {
    if dataset.is_empty() {
        return Err(Error::Analysis("dataset is empty".into()));
    }
    let n = dataset.neuron_ids.len();
    let mut pooled: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for ep in &dataset.episodes {
        for (t, acts) in records_with_activations(&ep.trace)? {
            if acts.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: acts.len(),
                });
            }
            let cell = pooled.entry(t).or_insert_with(|| vec![Vec::new(); n]);
            for (k, a) in acts.iter().enumerate() {
                cell[k].push(a.abs());
            }
        }
    }
    let mut cells = Vec::with_capacity(n * pooled.len());
    for (k, id) in dataset.neuron_ids.iter().enumerate() {
        for (t, per_neuron) in &pooled {
            cells.push(LocationCell {
                neuron: *id,
                timestep: *t,
                abs: Summary::of(&per_neuron[k]).unwrap(),
            });
        }
    }
    Ok(cells)
}

fn separation(found: &Summary, not_found: &Summary) -> f64 {
    let diff = (found.mean - not_found.mean).abs();
    let pooled = ((found.std.powi(2) + not_found.std.powi(2)) / 2.0).sqrt();
    if pooled > 0.0 {
        diff / pooled
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Distribution of `a_std` at the end-state step, split by whether the goal
/// was found. Episodes without an end-state step (crashes) are skipped.
pub fn reward_cue_stats(dataset: &ActivationDataset) -> Result<Vec<CueNeuron>> {
    let n = dataset.neuron_ids.len();
    let mut found: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut missed: Vec<Vec<f64>> = vec![Vec::new(); n];
    for ep in &dataset.episodes {
        let Some(term) = &ep.trace.terminal else {
            continue;
        };
        let acts = term.a_std.as_deref().ok_or_else(|| {
            Error::Analysis(format!("episode {} has no recorded activations", ep.trace.episode))
        })?;
        let bucket = if ep.trace.goal_found {
            &mut found
        } else {
            &mut missed
        };
        for (k, a) in acts.iter().enumerate() {
            bucket[k].push(*a);
        }
    }
    let have_found = found.first().is_some_and(|v| !v.is_empty());
    let have_missed = missed.first().is_some_and(|v| !v.is_empty());
    match (have_found, have_missed) {
        (false, false) => {
            return Err(Error::Analysis(
                "no episode reached an end state (both goal-found and goal-not-found classes are missing)".into(),
            ))
        }
        (false, true) => return Err(Error::Analysis("goal-found class is missing".into())),
        (true, false) => return Err(Error::Analysis("goal-not-found class is missing".into())),
        (true, true) => {}
    }
    Ok(dataset
        .neuron_ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let f = Summary::of(&found[k]).unwrap();
            let m = Summary::of(&missed[k]).unwrap();
            CueNeuron {
                neuron: *id,
                found: f,
                not_found: m,
                mean_diff: f.mean - m.mean,
                separation: separation(&f, &m),
            }
        })
        .collect())
}

/// Both statistic families. Reward-cue statistics are left empty when the
/// dataset lacks one of the classes.
pub fn neuron_stats(dataset: &ActivationDataset) -> Result<NeuronStats> {
    let location = location_stats(dataset)?;
    let reward_cue = match reward_cue_stats(dataset) {
        Ok(c) => c,
        Err(Error::Analysis(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(NeuronStats {
        neuron_ids: dataset.neuron_ids.clone(),
        location,
        reward_cue,
    })
}

pub const LOCATION_FILE: &str = "location_stats.csv";
pub const LOCATION_WIDE_FILE: &str = "location_mean_abs.csv";
pub const LOCATION_LONG_FILE: &str = "location_long.csv";
pub const CUE_FILE: &str = "reward_cue_stats.csv";
pub const SEPARATION_FILE: &str = "reward_cue_separation.csv";

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| harness::csv_io(path, e))
}

fn summary_fields(s: &Summary) -> [String; 6] {
    [
        s.count.to_string(),
        s.mean.to_string(),
        s.std.to_string(),
        s.q1.to_string(),
        s.median.to_string(),
        s.q3.to_string(),
    ]
}

/// Write the report tables into `dir` (created if missing).
pub fn export_report(stats: &NeuronStats, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(LOCATION_FILE);
    let mut w = writer(&path)?;
    w.write_record(["neuron", "timestep", "count", "mean_abs", "std_abs", "q1_abs", "median_abs", "q3_abs"])?;
    for c in &stats.location {
        let mut row = vec![c.neuron.to_string(), c.timestep.to_string()];
        row.extend(summary_fields(&c.abs));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(LOCATION_WIDE_FILE);
    let mut w = writer(&path)?;
    let mut header = vec!["timestep".to_string()];
    header.extend(stats.neuron_ids.iter().map(|id| format!("neuron_{id}")));
    w.write_record(&header)?;
    let mut by_t: BTreeMap<usize, BTreeMap<NeuronId, f64>> = BTreeMap::new();
    for c in &stats.location {
        by_t.entry(c.timestep).or_default().insert(c.neuron, c.abs.mean);
    }
    for (t, row) in &by_t {
        let mut rec = vec![t.to_string()];
        rec.extend(
            stats
                .neuron_ids
                .iter()
                .map(|id| row.get(id).map_or(String::new(), f64::to_string)),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(LOCATION_LONG_FILE);
    let mut w = writer(&path)?;
    w.write_record(["neuron", "timestep", "statistic", "value"])?;
    for c in &stats.location {
        let names = ["count", "mean_abs", "std_abs", "q1_abs", "median_abs", "q3_abs"];
        for (name, value) in names.iter().zip(summary_fields(&c.abs)) {
            w.write_record([c.neuron.to_string(), c.timestep.to_string(), name.to_string(), value])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(CUE_FILE);
    let mut w = writer(&path)?;
    w.write_record(["neuron", "goal_found", "count", "mean", "std", "q1", "median", "q3"])?;
    for c in &stats.reward_cue {
        for (flag, s) in [(true, &c.found), (false, &c.not_found)] {
            let mut row = vec![c.neuron.to_string(), flag.to_string()];
            row.extend(summary_fields(s));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(SEPARATION_FILE);
    let mut w = writer(&path)?;
    w.write_record(["neuron", "mean_diff", "separation"])?;
    for c in &stats.reward_cue {
        w.write_record([c.neuron.to_string(), c.mean_diff.to_string(), c.separation.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
