//! Mutation-only genetic algorithm over controller genomes.
//!
//! Each generation is evaluated on a shared set of trial seeds (common random
//! numbers), the top `elite_fraction` is copied unchanged and the rest is
//! filled by tournament selection followed by mutation. Every random draw
//! comes from a stream derived from `(rng_seed, purpose, generation, slot)`,
//! so the result does not depend on how many worker threads evaluate fitness.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::InputTable;
use crate::harness::{self, HarnessConfig, PlasticController};
use crate::neuromod::{Connection, Genome, Neuron, NeuronKind, Node, PlasticityRule, WEIGHT_LIMIT};
use crate::seed;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MutationRates {
    /// Probability that every connection weight gets Gaussian noise.
    pub weight_perturb_prob: f64,
    pub weight_sigma: f64,
    pub add_connection_prob: f64,
    pub del_connection_prob: f64,
    pub add_neuron_prob: f64,
    pub del_neuron_prob: f64,
    pub flip_kind_prob: f64,
    pub rule_perturb_prob: f64,
    pub rule_sigma: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        Self {
            weight_perturb_prob: 0.8,
            weight_sigma: 0.1,
            add_connection_prob: 0.1,
            del_connection_prob: 0.05,
            add_neuron_prob: 0.03,
            del_neuron_prob: 0.01,
            flip_kind_prob: 0.02,
            rule_perturb_prob: 0.2,
            rule_sigma: 0.1,
        }
    }
}

impl MutationRates {
    pub const NONE: MutationRates = MutationRates {
        weight_perturb_prob: 0.0,
        weight_sigma: 0.0,
        add_connection_prob: 0.0,
        del_connection_prob: 0.0,
        add_neuron_prob: 0.0,
        del_neuron_prob: 0.0,
        flip_kind_prob: 0.0,
        rule_perturb_prob: 0.0,
        rule_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("weight_perturb_prob", self.weight_perturb_prob),
            ("add_connection_prob", self.add_connection_prob),
            ("del_connection_prob", self.del_connection_prob),
            ("add_neuron_prob", self.add_neuron_prob),
            ("del_neuron_prob", self.del_neuron_prob),
            ("flip_kind_prob", self.flip_kind_prob),
            ("rule_perturb_prob", self.rule_perturb_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, s) in [("weight_sigma", self.weight_sigma), ("rule_sigma", self.rule_sigma)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// How trial seeds are chosen for fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSeedMode {
    /// New seeds every generation, shared by the whole population.
    PerGeneration,
    /// The same seeds in every generation.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_segment: usize,
    pub elite_fraction: f64,
    pub mutation: MutationRates,
    pub eval_seed_mode: EvalSeedMode,
    pub rng_seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 150,
            generations: 100,
            tournament_segment: 5,
            elite_fraction: 0.05,
            mutation: MutationRates::default(),
            eval_seed_mode: EvalSeedMode::PerGeneration,
            rng_seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tournament_segment < 1 {
            return Err(Error::Config("tournament_segment must be >= 1".into()));
        }
        if self.population_size < self.tournament_segment {
            return Err(Error::Config(format!(
                "population_size {} is smaller than tournament_segment {}",
                self.population_size, self.tournament_segment
            )));
        }
        if !(0.0..=1.0).contains(&self.elite_fraction) {
            return Err(Error::Config("elite_fraction must be in [0, 1]".into()));
        }
        self.mutation.validate()
    }

    pub fn num_elites(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).ceil() as usize).min(self.population_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Creation index, unique within a run.
    pub id: u64,
    pub genome: Genome,
    pub fitness: Option<f64>,
}

impl Individual {
    fn fitness_or_err(&self) -> Result<f64> {
        self.fitness
            .ok_or_else(|| Error::Usage(format!("individual {} has not been evaluated", self.id)))
    }
}

/// Higher fitness first, then lower id.
fn rank_order(a: &Individual, b: &Individual) -> Ordering {
    let fa = a.fitness.unwrap_or(f64::NEG_INFINITY);
    let fb = b.fitness.unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa).then(a.id.cmp(&b.id))
}

/// Seed topology: `num_inputs` inputs fully connected to one standard and one
/// modulatory hidden neuron, both feeding a standard output neuron, plus
/// direct input -> output connections. Weights and rule coefficients are
/// uniform over their ranges.
pub fn seed_genome(num_inputs: usize, rng: &mut seed::Rng) -> Genome {
    let output = 0;
    let hidden = [(1, NeuronKind::Standard), (2, NeuronKind::Modulatory)];
    let mut neurons = vec![Neuron {
        id: output,
        kind: NeuronKind::Standard,
    }];
    let mut connections = Vec::new();
    let w = |rng: &mut seed::Rng| rng.random_range(-WEIGHT_LIMIT..=WEIGHT_LIMIT);
    for (id, kind) in hidden {
        neurons.push(Neuron { id, kind });
        for k in 0..num_inputs {
            connections.push(Connection {
                pre: Node::Input(k),
                post: id,
                weight: w(rng),
            });
        }
        connections.push(Connection {
            pre: Node::Neuron(id),
            post: output,
            weight: w(rng),
        });
    }
    for k in 0..num_inputs {
        connections.push(Connection {
            pre: Node::Input(k),
            post: output,
            weight: w(rng),
        });
    }
    let rule = PlasticityRule {
        alpha: rng.random_range(0.0..=1.0),
        a: rng.random_range(-1.0..=1.0),
        b: rng.random_range(-1.0..=1.0),
        c: rng.random_range(-1.0..=1.0),
        d: rng.random_range(-1.0..=1.0),
    };
    Genome {
        num_inputs,
        neurons,
        connections,
        rule,
        output_id: output,
    }
}

pub fn initial_population(config: &EvolutionConfig, num_inputs: usize) -> Vec<Individual> {
    let base = seed::derive(config.rng_seed, &["init"]);
    (0..config.population_size)
        .map(|i| {
            let mut rng = seed::rng_from(seed::derive_index(base, i as u64));
            Individual {
                id: i as u64,
                genome: seed_genome(num_inputs, &mut rng),
                fitness: None,
            }
        })
        .collect()
}

/// Trial seeds used to evaluate `generation`.
pub fn eval_seeds(config: &EvolutionConfig, trials: usize, generation: usize) -> Vec<u64> {
    let g = match config.eval_seed_mode {
        EvalSeedMode::PerGeneration => generation as u64,
        EvalSeedMode::Fixed => 0,
    };
    let base = seed::derive_index(seed::derive(config.rng_seed, &[seed::EVAL]), g);
    (0..trials as u64).map(|t| seed::derive_index(base, t)).collect()
}

/// Mean trial reward of a genome over one trial per seed.
pub fn evaluate_fitness(genome: &Genome, harness_config: &HarnessConfig, inputs: &InputTable, eval_seeds: &[u64]) -> Result<f64> {
    if eval_seeds.is_empty() {
        return Err(Error::Usage("no evaluation seeds".into()));
    }
    let mut controller = PlasticController::new(genome)?;
    let trials = harness::run_trials(harness_config, &mut controller, inputs, eval_seeds)?;
    Ok(trials.iter().map(|t| t.trial_reward).sum::<f64>() / trials.len() as f64)
}

/// Fill in the fitness of every individual, in parallel on `pool`.
pub fn evaluate_population(
    population: &mut [Individual],
    harness_config: &HarnessConfig,
    inputs: &InputTable,
    eval_seeds: &[u64],
    pool: &rayon::ThreadPool,
) -> Result<()> {
    let fitness: Vec<f64> = pool.install(|| {
        population
            .par_iter()
            .map(|ind| evaluate_fitness(&ind.genome, harness_config, inputs, eval_seeds))
            .collect::<Result<Vec<_>>>()
    })?;
    for (ind, f) in population.iter_mut().zip(fitness) {
        ind.fitness = Some(f);
    }
    Ok(())
}

/// Best of `segment_size` individuals drawn without replacement.
pub fn tournament_select<'a>(population: &'a [Individual], segment_size: usize, rng: &mut seed::Rng) -> Result<&'a Individual> {
    if segment_size == 0 || population.len() < segment_size {
        return Err(Error::Config(format!(
            "cannot draw a tournament of {segment_size} from {} individuals",
            population.len()
        )));
    }
    let mut best: Option<&Individual> = None;
    for i in sample(rng, population.len(), segment_size) {
        let cand = &population[i];
        cand.fitness_or_err()?;
        if best.is_none_or(|b| rank_order(cand, b) == Ordering::Less) {
            best = Some(cand);
        }
    }
    Ok(best.unwrap())
}

fn gaussian(rng: &mut seed::Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

fn random_source(genome: &Genome, rng: &mut seed::Rng) -> Node {
    let n = genome.num_inputs + genome.neurons.len();
    let k = rng.random_range(0..n);
    if k < genome.num_inputs {
        Node::Input(k)
    } else {
        Node::Neuron(genome.neurons[k - genome.num_inputs].id)
    }
}

fn random_neuron(genome: &Genome, rng: &mut seed::Rng) -> u32 {
    genome.neurons[rng.random_range(0..genome.neurons.len())].id
}

/// Index of a random neuron other than the output, if there is one.
fn random_hidden(genome: &Genome, rng: &mut seed::Rng) -> Option<usize> {
    let hidden: Vec<usize> = (0..genome.neurons.len())
        .filter(|&i| genome.neurons[i].id != genome.output_id)
        .collect();
    (!hidden.is_empty()).then(|| hidden[rng.random_range(0..hidden.len())])
}

const ADD_CONNECTION_ATTEMPTS: usize = 20;

/// Apply each mutation operator independently with its probability.
pub fn mutate(genome: &Genome, rates: &MutationRates, rng: &mut seed::Rng) -> Genome {
    let mut g = genome.clone();

    if rng.random_bool(rates.weight_perturb_prob) {
        for c in &mut g.connections {
            c.weight = (c.weight + gaussian(rng, rates.weight_sigma)).clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT);
        }
    }

    if rng.random_bool(rates.add_connection_prob) {
        for _ in 0..ADD_CONNECTION_ATTEMPTS {
            let pre = random_source(&g, rng);
            let post = random_neuron(&g, rng);
            if !g.has_connection(pre, post) {
                g.connections.push(Connection {
                    pre,
                    post,
                    weight: rng.random_range(-WEIGHT_LIMIT..=WEIGHT_LIMIT),
                });
                break;
            }
        }
    }

    if rng.random_bool(rates.del_connection_prob) && !g.connections.is_empty() {
        let i = rng.random_range(0..g.connections.len());
        g.connections.remove(i);
    }

    if rng.random_bool(rates.add_neuron_prob) {
        let id = g.next_neuron_id();
        let kind = if rng.random_bool(0.5) {
            NeuronKind::Standard
        } else {
            NeuronKind::Modulatory
        };
        let pre = random_source(&g, rng);
        let post = random_neuron(&g, rng);
        g.neurons.push(Neuron { id, kind });
        g.connections.push(Connection {
            pre,
            post: id,
            weight: rng.random_range(-WEIGHT_LIMIT..=WEIGHT_LIMIT),
        });
        g.connections.push(Connection {
            pre: Node::Neuron(id),
            post,
            weight: rng.random_range(-WEIGHT_LIMIT..=WEIGHT_LIMIT),
        });
    }

    if rng.random_bool(rates.del_neuron_prob) {
        if let Some(i) = random_hidden(&g, rng) {
            let id = g.neurons.remove(i).id;
            g.connections
                .retain(|c| c.post != id && c.pre != Node::Neuron(id));
        }
    }

    if rng.random_bool(rates.flip_kind_prob) {
        if let Some(i) = random_hidden(&g, rng) {
            g.neurons[i].kind = g.neurons[i].kind.flipped();
        }
    }

    if rng.random_bool(rates.rule_perturb_prob) {
        let s = rates.rule_sigma;
        let r = &mut g.rule;
        r.alpha = (r.alpha + gaussian(rng, s)).clamp(0.0, 1.0);
        for coef in [&mut r.a, &mut r.b, &mut r.c, &mut r.d] {
            *coef = (*coef + gaussian(rng, s)).clamp(-1.0, 1.0);
        }
    }
    g
}

/// Elites plus tournament-selected, mutated offspring. Population size is
/// preserved; `next_id` advances by the number of offspring.
pub fn next_generation(population: &[Individual], config: &EvolutionConfig, generation: usize, next_id: &mut u64) -> Result<Vec<Individual>> {
    for ind in population {
        ind.fitness_or_err()?;
    }
    let mut ranked: Vec<&Individual> = population.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let elites = config.num_elites().min(population.len());
    let mut next: Vec<Individual> = ranked[..elites]
        .iter()
        .map(|ind| Individual {
            fitness: None,
            ..(*ind).clone()
        })
        .collect();

    let base = seed::derive_index(seed::derive(config.rng_seed, &["reproduce"]), generation as u64);
    for slot in elites..population.len() {
        let mut rng = seed::rng_from(seed::derive_index(base, slot as u64));
        let parent = tournament_select(population, config.tournament_segment, &mut rng)?;
        next.push(Individual {
            id: *next_id,
            genome: mutate(&parent.genome, &config.mutation, &mut rng),
            fitness: None,
        });
        *next_id += 1;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub std_fitness: f64,
    pub best_genome_id: u64,
}

fn generation_stats(generation: usize, population: &[Individual]) -> GenerationStats {
    let f: Vec<f64> = population.iter().map(|i| i.fitness.unwrap_or(f64::NAN)).collect();
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let best = population.iter().min_by(|a, b| rank_order(a, b)).unwrap();
    GenerationStats {
        generation,
        best_fitness: best.fitness.unwrap_or(f64::NAN),
        mean_fitness: mean,
        std_fitness: var.sqrt(),
        best_genome_id: best.id,
    }
}

/// Everything needed to continue a run: the population about to be
/// evaluated at `generation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub version: u32,
    pub generation: usize,
    pub population: Vec<Individual>,
    pub next_id: u64,
    pub best: Option<Individual>,
    pub log: Vec<GenerationStats>,
}

impl EvolutionState {
    pub fn new(config: &EvolutionConfig, num_inputs: usize) -> Self {
        let population = initial_population(config, num_inputs);
        Self {
            version: CHECKPOINT_VERSION,
            generation: 0,
            next_id: population.len() as u64,
            population,
            best: None,
            log: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let state: Self = serde_json::from_str(&text)?;
        if state.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: state.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        for ind in &state.population {
            ind.genome.validate()?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    /// Highest fitness seen in any generation (ties: earliest).
    pub best: Individual,
    pub log: Vec<GenerationStats>,
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Evaluate the current population, log it and breed the next one.
pub fn step_generation(
    state: &mut EvolutionState,
    config: &EvolutionConfig,
    harness_config: &HarnessConfig,
    inputs: &InputTable,
    pool: &rayon::ThreadPool,
) -> Result<GenerationStats> {
    let seeds = eval_seeds(config, harness_config.trial.trials_per_eval, state.generation);
    evaluate_population(&mut state.population, harness_config, inputs, &seeds, pool)?;
    let stats = generation_stats(state.generation, &state.population);
    let gen_best = state.population.iter().min_by(|a, b| rank_order(a, b)).unwrap();
    if state
        .best
        .as_ref()
        .is_none_or(|b| gen_best.fitness.unwrap() > b.fitness.unwrap())
    {
        state.best = Some(gen_best.clone());
    }
    state.log.push(stats.clone());
    state.population = next_generation(&state.population, config, state.generation, &mut state.next_id)?;
    state.generation += 1;
    Ok(stats)
}

/// Run until `config.generations` generations have been evaluated, calling
/// `on_generation` after each one.
pub fn resume_evolution(
    mut state: EvolutionState,
    config: &EvolutionConfig,
    harness_config: &HarnessConfig,
    inputs: &InputTable,
    workers: usize,
    mut on_generation: impl FnMut(&EvolutionState, &GenerationStats) -> Result<()>,
) -> Result<EvolutionOutcome> {
    config.validate()?;
    harness_config.validate()?;
    if inputs.dim() != state.population.first().map_or(inputs.dim(), |i| i.genome.num_inputs) {
        return Err(Error::Shape {
            expected: state.population[0].genome.num_inputs,
            got: inputs.dim(),
        });
    }
    let pool = thread_pool(workers)?;
    while state.generation < config.generations {
        let stats = step_generation(&mut state, config, harness_config, inputs, &pool)?;
        on_generation(&state, &stats)?;
    }
    let best = state
        .best
        .ok_or_else(|| Error::Usage("no generation was evaluated".into()))?;
    Ok(EvolutionOutcome {
        best,
        log: state.log,
    })
}

pub fn run_evolution(config: &EvolutionConfig, harness_config: &HarnessConfig, inputs: &InputTable, workers: usize) -> Result<EvolutionOutcome> {
    let state = EvolutionState::new(config, inputs.dim());
    resume_evolution(state, config, harness_config, inputs, workers, |_, _| Ok(()))
}

pub fn write_log_csv(log: &[GenerationStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| harness::csv_io(path, e))?;
    for row in log {
        w.serialize(row)?;
    }
    if log.is_empty() {
        w.write_record(["generation", "best_fitness", "mean_fitness", "std_fitness", "best_genome_id"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log_csv(path: &Path) -> Result<Vec<GenerationStats>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| harness::csv_io(path, e))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
