//! Subcommands of the `plasticlab` binary.
//!
//! Every command resolves the run configuration, creates the output
//! directory and writes `<command>.meta.toml` with the resolved config before
//! doing any work.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use plasticlab_core::analysis;
use plasticlab_core::config::RunConfig;
use plasticlab_core::evolve::{self, EvolutionState, GenerationStats};
use plasticlab_core::features::{self, Features, InputTable, LATENT_DIM};
use plasticlab_core::harness::{self, AdaptationProfile, Controller, OracleController, PlasticController, TrialResult};
use plasticlab_core::neuromod::Genome;
use plasticlab_core::seed;
use serde::Serialize;

pub const FEATURES_FILE: &str = "autoencoder.json";
pub const PRETRAIN_LOSS_FILE: &str = "pretrain_loss.csv";
pub const LOG_FILE: &str = "evolution_log.csv";
pub const BEST_GENOME_FILE: &str = "best_genome.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EPISODES_FILE: &str = "evaluation_episodes.csv";
pub const STEPS_FILE: &str = "evaluation_steps.csv";
pub const ANALYSIS_DIR: &str = "analysis";

/// Episodes averaged after a task change and at the end of a trial.
pub const ADAPTATION_WINDOW: usize = 5;

/// Bad input: exits with status 1 rather than 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UserError(pub String);

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

/// 1 for usage and configuration errors, 2 for failures while running.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<plasticlab_core::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
    }
    2
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub struct Context {
    pub config: RunConfig,
    pub workers: usize,
}

impl Context {
    pub fn new(o: &Overrides) -> Result<Self> {
        let mut config = match &o.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(user(format!("config file {} not found", p.display())));
                }
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = o.seed {
            config.seed = s;
        }
        if let Some(out) = &o.out {
            config.output_dir = out.clone();
        }
        let workers = match o.workers {
            Some(0) => return Err(user("--workers must be at least 1")),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(Self {
            config: config.resolve()?,
            workers,
        })
    }

    pub fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out().join(file)
    }

    fn features_path(&self) -> PathBuf {
        self.config
            .features
            .load_path
            .clone()
            .unwrap_or_else(|| self.path(FEATURES_FILE))
    }

    /// Create the output directory and record the resolved config.
    fn start(&self, command: &str) -> Result<()> {
        std::fs::create_dir_all(self.out())
            .with_context(|| format!("cannot create output directory {}", self.out().display()))?;
        let meta = Metadata {
            command,
            workers: self.workers,
            package_version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
        };
        let path = self.path(&format!("{command}.meta.toml"));
        std::fs::write(&path, toml::to_string(&meta)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn load_features(&self) -> Result<Features> {
        let path = self.features_path();
        if !path.is_file() {
            return Err(user(format!(
                "feature artifact {} not found; run `plasticlab pretrain` first or set features.load_path",
                path.display()
            )));
        }
        let feats = Features::load(&path)?;
        if feats.autoencoder.input_dim() != self.config.environment.num_pixels() {
            return Err(user(format!(
                "artifact {} expects {} pixels, environment has {}",
                path.display(),
                feats.autoencoder.input_dim(),
                self.config.environment.num_pixels()
            )));
        }
        Ok(feats)
    }

    fn inputs(&self) -> Result<InputTable> {
        Ok(self.load_features()?.input_table(&self.config.environment)?)
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    workers: usize,
    package_version: &'a str,
    config: &'a RunConfig,
}

fn load_genome(path: &Path) -> Result<Genome> {
    if !path.is_file() {
        return Err(user(format!("genome file {} not found", path.display())));
    }
    Genome::load(path).with_context(|| format!("reading genome {}", path.display()))
}

pub struct PretrainSummary {
    pub final_mse: f64,
    pub artifact: PathBuf,
}

pub fn cmd_pretrain(ctx: &Context) -> Result<PretrainSummary> {
    ctx.start("pretrain")?;
    let c = &ctx.config;
    let (feats, report) = features::pretrain(&c.environment, c.features.replicas, &ctx.config.train_config())?;

    let loss_path = ctx.path(PRETRAIN_LOSS_FILE);
    let mut w = csv::Writer::from_path(&loss_path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in report.epoch_loss.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;

    if report.final_mse.is_nan() || report.final_mse > c.features.mse_ceiling {
        bail!(
            "autoencoder did not converge: final MSE {} above ceiling {}",
            report.final_mse,
            c.features.mse_ceiling
        );
    }
    let artifact = ctx.path(FEATURES_FILE);
    feats.save(&artifact, Some(&report))?;
    Ok(PretrainSummary {
        final_mse: report.final_mse,
        artifact,
    })
}

pub struct EvolveSummary {
    pub best_fitness: f64,
    pub best_id: u64,
    pub log: Vec<GenerationStats>,
}

/// Evolve from scratch, or from `<out>/checkpoint.json` when `resume` is set.
pub fn cmd_evolve(ctx: &Context, resume: bool, mut progress: impl FnMut(&GenerationStats)) -> Result<EvolveSummary> {
    ctx.start("evolve")?;
    let c = &ctx.config;
    let inputs = ctx.inputs()?;
    let checkpoint = ctx.path(CHECKPOINT_FILE);
    let state = if resume {
        if !checkpoint.is_file() {
            return Err(user(format!("no checkpoint at {}", checkpoint.display())));
        }
        let s = EvolutionState::load(&checkpoint)?;
        if s.generation > c.evolution.generations {
            return Err(user(format!(
                "checkpoint is at generation {}, beyond evolution.generations = {}",
                s.generation, c.evolution.generations
            )));
        }
        s
    } else {
        EvolutionState::new(&c.evolution, inputs.dim())
    };

    let every = c.checkpoint.every;
    let total = c.evolution.generations;
    let save = |s: &EvolutionState| -> plasticlab_core::Result<()> {
        s.save(&checkpoint)?;
        if let Some(b) = &s.best {
            b.genome.save(&ctx.path(BEST_GENOME_FILE))?;
        }
        evolve::write_log_csv(&s.log, &ctx.path(LOG_FILE))
    };
    let outcome = evolve::resume_evolution(state, &c.evolution, &ctx.config.harness_config(), &inputs, ctx.workers, |s, stats| {
        progress(stats);
        if s.generation == total || (every > 0 && s.generation % every == 0) {
            save(s)?;
        }
        Ok(())
    })?;
    // a resumed run that had nothing left to do still leaves complete outputs
    outcome.best.genome.save(&ctx.path(BEST_GENOME_FILE))?;
    evolve::write_log_csv(&outcome.log, &ctx.path(LOG_FILE))?;
    Ok(EvolveSummary {
        best_fitness: outcome.best.fitness.unwrap_or(f64::NAN),
        best_id: outcome.best.id,
        log: outcome.log,
    })
}

pub struct EvaluateSummary {
    pub mean_episode_reward: f64,
    pub trial_means: Vec<f64>,
    pub adaptation: Option<AdaptationProfile>,
    pub trials: Vec<TrialResult>,
}

/// Run `harness.trials_per_eval` trials on the evaluation seeds. With
/// `oracle` the genome is ignored and the perfect-knowledge controller runs.
pub fn cmd_evaluate(ctx: &Context, genome: Option<&Path>, oracle: bool) -> Result<EvaluateSummary> {
    ctx.start("evaluate")?;
    let c = &ctx.config;
    let (mut controller, inputs): (Box<dyn Controller>, InputTable) = if oracle {
        // the oracle ignores its inputs
        let rows = vec![vec![0.0; LATENT_DIM]; 6];
        (Box::new(OracleController::new()), InputTable::from_rows(rows)?)
    } else {
        let path = genome.ok_or_else(|| user("evaluate needs a genome file or --oracle"))?;
        let g = load_genome(path)?;
        let inputs = ctx.inputs()?;
        if g.num_inputs != inputs.dim() {
            return Err(user(format!("genome has {} inputs, features give {}", g.num_inputs, inputs.dim())));
        }
        (Box::new(PlasticController::new(&g)?), inputs)
    };
    let seeds = c.eval_seeds(c.harness.trials_per_eval);
    let trials = harness::run_trials(&c.harness_config(), controller.as_mut(), &inputs, &seeds)?;
    harness::write_episode_csv(&trials, &ctx.path(EPISODES_FILE))?;
    harness::write_step_csv(&trials, &ctx.path(STEPS_FILE))?;
    let trial_means: Vec<f64> = trials.iter().map(TrialResult::mean_episode_reward).collect();
    Ok(EvaluateSummary {
        mean_episode_reward: trial_means.iter().sum::<f64>() / trial_means.len().max(1) as f64,
        trial_means,
        adaptation: harness::adaptation_profile(&trials, ADAPTATION_WINDOW),
        trials,
    })
}

pub fn cmd_analyze(ctx: &Context, genome: &Path) -> Result<analysis::NeuronStats> {
    ctx.start("analyze")?;
    let c = &ctx.config;
    let g = load_genome(genome)?;
    let inputs = ctx.inputs()?;
    let mut rng = seed::rng_from(c.analysis_seed());
    let data = analysis::collect_dataset(&g, &c.harness_config(), &inputs, c.analysis.trials, &mut rng)?;
    let stats = analysis::neuron_stats(&data)?;
    analysis::export_report(&stats, &ctx.path(ANALYSIS_DIR))?;
    Ok(stats)
}
