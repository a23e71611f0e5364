use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
[features]
epochs = 400
mse_ceiling = 1.0
[evolution]
population_size = 12
generations = 3
[harness]
episodes_per_trial = 20
change_window = [6, 14]
trials_per_eval = 2
[checkpoint]
every = 1
[analysis]
trials = 2
"#;

fn plasticlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plasticlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Run {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, config).unwrap();
        let out = dir.path().join("out");
        Self {
            config: path,
            out,
            _dir: dir,
        }
    }

    fn cmd(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", self.config.to_str().unwrap(), "--out", self.out.to_str().unwrap()];
        all.extend_from_slice(args);
        plasticlab(&all)
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.cmd(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        stdout(&o)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn final_mean(out: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with("mean per-episode reward")).unwrap();
    line.rsplit(' ').next().unwrap().parse().unwrap()
}

#[test]
fn pretrain_is_reproducible_and_creates_output_dir() {
    let run = Run::new(SMALL);
    let nested = run.out.join("a/b");
    let o = plasticlab(&["--config", run.config.to_str().unwrap(), "--out", nested.to_str().unwrap(), "pretrain"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final MSE"));
    let first = std::fs::read(nested.join("autoencoder.json")).unwrap();
    let again = plasticlab(&["--config", run.config.to_str().unwrap(), "--out", nested.to_str().unwrap(), "pretrain"]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(nested.join("autoencoder.json")).unwrap(), first);
    let (header, rows) = csv_rows(&nested.join("pretrain_loss.csv"));
    assert_eq!(header, ["epoch", "loss"]);
    assert_eq!(rows.len(), 400);
    let meta = std::fs::read_to_string(nested.join("pretrain.meta.toml")).unwrap();
    assert!(meta.contains("command = \"pretrain\"") && meta.contains("obs_seed") && meta.contains("weight_sigma"));
}

#[test]
fn default_pretraining_meets_the_mse_target() {
    let run = Run::new("seed = 2\n");
    let out = run.ok(&["pretrain"]);
    let mse: f64 = out.lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(mse < 0.01, "{out}");
}

#[test]
fn pretrain_above_ceiling_is_a_runtime_failure() {
    let run = Run::new("[features]\nepochs = 5\nmse_ceiling = 1e-9\n");
    let o = run.cmd(&["pretrain"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did not converge"));
    assert!(!run.file("autoencoder.json").exists());
}

#[test]
fn evolve_writes_log_genome_and_checkpoint() {
    let run = Run::new(SMALL);
    run.ok(&["pretrain"]);
    run.ok(&["evolve", "--workers", "2"]);
    let (header, rows) = csv_rows(&run.file("evolution_log.csv"));
    assert_eq!(header, ["generation", "best_fitness", "mean_fitness", "std_fitness", "best_genome_id"]);
    assert_eq!(rows.len(), 3);
    assert!(run.file("best_genome.json").is_file());
    assert!(run.file("checkpoint.json").is_file());

    let one = Run::new(&SMALL.replace("generations = 3", "generations = 1"));
    one.ok(&["pretrain"]);
    one.ok(&["evolve"]);
    assert_eq!(csv_rows(&one.file("evolution_log.csv")).1.len(), 1);
}

#[test]
fn evolve_log_does_not_depend_on_workers() {
    let run = Run::new(SMALL);
    run.ok(&["pretrain"]);
    run.ok(&["evolve", "--workers", "1"]);
    let single = std::fs::read(run.file("evolution_log.csv")).unwrap();
    let best = std::fs::read(run.file("best_genome.json")).unwrap();
    run.ok(&["evolve", "--workers", "8"]);
    assert_eq!(std::fs::read(run.file("evolution_log.csv")).unwrap(), single);
    assert_eq!(std::fs::read(run.file("best_genome.json")).unwrap(), best);
}

#[test]
fn resume_reproduces_the_remaining_generations() {
    let six = SMALL.replace("generations = 3", "generations = 6");
    let full = Run::new(&six);
    full.ok(&["pretrain"]);
    full.ok(&["evolve"]);

    let part = Run::new(SMALL);
    part.ok(&["pretrain"]);
    part.ok(&["evolve"]);
    std::fs::write(&part.config, &six).unwrap();
    part.ok(&["evolve", "--resume"]);
    assert_eq!(
        std::fs::read(part.file("evolution_log.csv")).unwrap(),
        std::fs::read(full.file("evolution_log.csv")).unwrap()
    );

    let fresh = Run::new(SMALL);
    fresh.ok(&["pretrain"]);
    assert_eq!(fresh.cmd(&["evolve", "--resume"]).status.code(), Some(1));
}

#[test]
fn oracle_evaluation_collects_every_reward() {
    let run = Run::new(SMALL);
    let out = run.ok(&["evaluate", "--oracle"]);
    assert_eq!(final_mean(&out), 1.0);
    assert_eq!(csv_rows(&run.file("evaluation_episodes.csv")).1.len(), 2 * 20);
    assert_eq!(csv_rows(&run.file("evaluation_steps.csv")).1.len(), 2 * 20 * 6);
}

#[test]
fn genome_evaluation_and_analysis_are_deterministic() {
    let run = Run::new(SMALL);
    run.ok(&["pretrain"]);
    run.ok(&["evolve"]);
    let genome = run.file("best_genome.json");
    let g = genome.to_str().unwrap();
    let a = run.ok(&["evaluate", g]);
    let episodes = std::fs::read(run.file("evaluation_episodes.csv")).unwrap();
    assert_eq!(run.ok(&["evaluate", g]), a);
    assert_eq!(std::fs::read(run.file("evaluation_episodes.csv")).unwrap(), episodes);
    assert!((0.0..=1.0).contains(&final_mean(&a)));
    assert_eq!(csv_rows(&run.file("evaluation_episodes.csv")).1.len(), 40);

    run.ok(&["analyze", g]);
    let dir = run.file("analysis");
    let reports = ["location_stats.csv", "location_mean_abs.csv", "location_long.csv", "reward_cue_stats.csv", "reward_cue_separation.csv"];
    let before: Vec<Vec<u8>> = reports.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect();
    run.ok(&["analyze", g]);
    for (f, b) in reports.iter().zip(&before) {
        assert_eq!(&std::fs::read(dir.join(f)).unwrap(), b, "{f}");
    }
    let neurons = std::fs::read_to_string(&genome).unwrap().matches("\"kind\"").count();
    let (header, _) = csv_rows(&dir.join("location_mean_abs.csv"));
    assert_eq!(header.len(), 1 + neurons);
}

#[test]
fn usage_and_input_errors_exit_with_one() {
    let run = Run::new(SMALL);
    assert_eq!(plasticlab(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(plasticlab(&[]).status.code(), Some(1));
    assert_eq!(plasticlab(&["--help"]).status.code(), Some(0));
    assert_eq!(plasticlab(&["--config", "/nonexistent.toml", "pretrain"]).status.code(), Some(1));
    // no artifact yet
    let o = run.cmd(&["evolve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pretrain"));
    assert_eq!(run.cmd(&["evaluate", "missing.json", "--oracle"]).status.code(), Some(1));
    assert_eq!(run.cmd(&["evaluate"]).status.code(), Some(1));

    run.ok(&["pretrain"]);
    let bad = run.file("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run.cmd(&["evaluate", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run.cmd(&["analyze", bad.to_str().unwrap()]).status.code(), Some(1));

    std::fs::write(&run.config, "[environment]\ndepth = 0\n").unwrap();
    assert_eq!(run.cmd(&["pretrain"]).status.code(), Some(1));
    std::fs::write(&run.config, "[evolution]\nrng_seed = 4\n").unwrap();
    assert_eq!(run.cmd(&["pretrain"]).status.code(), Some(1));
    assert_eq!(run.cmd(&["--workers", "0", "pretrain"]).status.code(), Some(1));
}
