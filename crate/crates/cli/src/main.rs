use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plasticlab::{Context, Overrides};

#[derive(Parser)]
#[command(name = "plasticlab", version, about = "Evolve neuromodulated plastic controllers on the CT-graph")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for fitness evaluation; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder and fit the latent scaler.
    Pretrain,
    /// Run the genetic algorithm.
    Evolve {
        /// Continue from <out>/checkpoint.json.
        #[arg(long)]
        resume: bool,
        /// Feature artifact to load instead of <out>/autoencoder.json.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Print one line per generation.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Run evaluation trials and report the mean per-episode reward.
    Evaluate {
        genome: Option<PathBuf>,
        /// Replay the optimal path to the current goal instead of a genome.
        #[arg(long, conflicts_with = "genome")]
        oracle: bool,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Record activations and export location and reward-cue statistics.
    Analyze {
        genome: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    let overrides = Overrides {
        config: g.config,
        seed: g.seed,
        out: g.out,
        workers: g.workers,
    };
    let mut ctx = Context::new(&overrides)?;
    match cli.command {
        Command::Pretrain => {
            let s = plasticlab::cmd_pretrain(&ctx)?;
            println!("final MSE {:.6}", s.final_mse);
            println!("wrote {}", s.artifact.display());
        }
        Command::Evolve {
            resume,
            features,
            verbose,
        } => {
            if features.is_some() {
                ctx.config.features.load_path = features;
            }
            let s = plasticlab::cmd_evolve(&ctx, resume, |st| {
                if verbose {
                    println!(
                        "generation {:4}  best {:8.3}  mean {:8.3}  std {:7.3}",
                        st.generation, st.best_fitness, st.mean_fitness, st.std_fitness
                    );
                }
            })?;
            println!("best fitness {:.3} (genome {})", s.best_fitness, s.best_id);
            println!("wrote {}", ctx.path(plasticlab::LOG_FILE).display());
        }
        Command::Evaluate {
            genome,
            oracle,
            features,
        } => {
            if features.is_some() {
                ctx.config.features.load_path = features;
            }
            let s = plasticlab::cmd_evaluate(&ctx, genome.as_deref(), oracle)?;
            for (t, m) in s.trial_means.iter().enumerate() {
                println!("trial {t}: mean reward {m:.4}");
            }
            if let Some(a) = s.adaptation {
                println!(
                    "after change {:.4}  final {} episodes {:.4}",
                    a.after_change,
                    plasticlab::ADAPTATION_WINDOW,
                    a.final_window
                );
            }
            println!("mean per-episode reward {:.4}", s.mean_episode_reward);
        }
        Command::Analyze { genome, features } => {
            if features.is_some() {
                ctx.config.features.load_path = features;
            }
            let stats = plasticlab::cmd_analyze(&ctx, &genome)?;
            for c in &stats.reward_cue {
                println!("neuron {:3}  mean diff {:+.4}  separation {:.3}", c.neuron, c.mean_diff, c.separation);
            }
            println!("wrote {}", ctx.path(plasticlab::ANALYSIS_DIR).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(plasticlab::exit_code(&e) as u8)
        }
    }
}
