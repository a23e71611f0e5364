//! Pretrain, evolve and evaluate at desk scale, printing progress.
//!
//! `cargo run --release -p plasticlab-core --example desk_run -- [seed] [generations] [population]`
//!
//! Mutation rates can be overridden with `MUT_<FIELD>` environment variables,
//! e.g. `MUT_WEIGHT_SIGMA=0.2`. Set `CHAMPION_OUT=<dir>` to save the validated
//! champion as `<dir>/champion_<seed>.json`.

use std::time::Instant;

use plasticlab_core::ctgraph::CtGraphConfig;
use plasticlab_core::evolve::{self, EvolutionConfig, EvolutionState, MutationRates};
use plasticlab_core::features::{self, TrainConfig};
use plasticlab_core::harness::{self, HarnessConfig, PlasticController, TrialConfig};
use plasticlab_core::neuromod::Genome;
use plasticlab_core::seed;

fn rates() -> MutationRates {
    let mut r = MutationRates::default();
    let get = |name: &str, v: &mut f64| {
        if let Ok(s) = std::env::var(format!("MUT_{name}")) {
            *v = s.parse().unwrap();
        }
    };
    get("WEIGHT_PERTURB_PROB", &mut r.weight_perturb_prob);
    get("WEIGHT_SIGMA", &mut r.weight_sigma);
    get("ADD_CONNECTION_PROB", &mut r.add_connection_prob);
    get("DEL_CONNECTION_PROB", &mut r.del_connection_prob);
    get("ADD_NEURON_PROB", &mut r.add_neuron_prob);
    get("DEL_NEURON_PROB", &mut r.del_neuron_prob);
    get("FLIP_KIND_PROB", &mut r.flip_kind_prob);
    get("RULE_PERTURB_PROB", &mut r.rule_perturb_prob);
    get("RULE_SIGMA", &mut r.rule_sigma);
    r
}

fn score(genome: &Genome, hc: &HarnessConfig, inputs: &features::InputTable, seeds: &[u64]) -> f64 {
    let mut c = PlasticController::new(genome).unwrap();
    let trials = harness::run_trials(hc, &mut c, inputs, seeds).unwrap();
    trials.iter().map(|t| t.mean_episode_reward()).sum::<f64>() / trials.len() as f64
}

fn main() -> plasticlab_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let run_seed = args.first().copied().unwrap_or(1);
    let generations = args.get(1).copied().unwrap_or(150) as usize;
    let population = args.get(2).copied().unwrap_or(150) as usize;

    let env = CtGraphConfig {
        obs_seed: seed::derive(run_seed, &[seed::ENV_GEN]),
        ..CtGraphConfig::new(2, 2)
    };
    let t = Instant::now();
    let train = TrainConfig {
        seed: seed::derive(run_seed, &[seed::FEATURES]),
        ..TrainConfig::default()
    };
    let (feats, report) = features::pretrain(&env, 1, &train)?;
    println!("pretrain: mse {:.5} in {:?}", report.final_mse, t.elapsed());
    let inputs = feats.input_table(&env)?;

    let hc = HarnessConfig {
        env,
        trial: TrialConfig::default(),
    };
    let ec = EvolutionConfig {
        population_size: population,
        generations,
        rng_seed: seed::derive(run_seed, &[seed::EVOLUTION]),
        mutation: rates(),
        ..EvolutionConfig::default()
    };
    let t = Instant::now();
    let state = EvolutionState::new(&ec, inputs.dim());
    let mut champions = Vec::new();
    let outcome = evolve::resume_evolution(state, &ec, &hc, &inputs, 1, |s, st| {
        champions.push(s.population[0].genome.clone());
        if st.generation % 10 == 0 {
            println!(
                "gen {:4} best {:6.2} mean {:6.2} std {:5.2} ({:.0?})",
                st.generation,
                st.best_fitness,
                st.mean_fitness,
                st.std_fitness,
                t.elapsed()
            );
        }
        Ok(())
    })?;
    let seeds = |label: &str| -> Vec<u64> { (0..20).map(|i| seed::derive_index(seed::derive(run_seed, &[label]), i)).collect() };
    let (validation, holdout) = (seeds("validation"), seeds("holdout"));
    let (gen, picked, v) = champions
        .iter()
        .enumerate()
        .map(|(g, c)| (g, c, score(c, &hc, &inputs, &validation)))
        .fold(None, |acc: Option<(usize, &Genome, f64)>, x| match acc {
            Some(a) if a.2 >= x.2 => Some(a),
            _ => Some(x),
        })
        .unwrap();
    println!(
        "best-ever id {} fitness {:?}: holdout {:.3}",
        outcome.best.id,
        outcome.best.fitness,
        score(&outcome.best.genome, &hc, &inputs, &holdout)
    );
    println!(
        "validated champion gen {gen}: validation {v:.3} holdout {:.3}; neurons {} conns {}",
        score(picked, &hc, &inputs, &holdout),
        picked.neurons.len(),
        picked.connections.len()
    );
    if let Ok(dir) = std::env::var("CHAMPION_OUT") {
        picked.save(&std::path::Path::new(&dir).join(format!("champion_{run_seed}.json")))?;
    }
    Ok(())
}
