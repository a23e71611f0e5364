//! Neuromodulated plastic network: genome, runtime state and dynamics.
//!
//! Every neuron carries a standard activation (its output signal) and a
//! modulatory activation. Standard activations sum the incoming connections
//! from inputs and standard neurons; modulatory activations sum the incoming
//! connections from modulatory neurons:
//!
//! ```text
//! a_std[i] = tanh( 1/2 * sum_{j standard} w[j->i] * a_std[j] )
//! a_mod[i] = tanh( 1/2 * sum_{j modulatory} w[j->i] * a_std[j] )
//! ```
//!
//! Updates are synchronous: neuron sources read the previous step's
//! activations, inputs are read directly. After each update every connection
//! from an input or a standard neuron changes by
//!
//! ```text
//! dw = a_mod[post] * alpha * (A * pre * post + B * pre + C * post + D)
//! ```
//!
//! and is clamped to `[-1, 1]`. Connections out of modulatory neurons keep
//! their genome weight.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEIGHT_LIMIT: f64 = 1.0;

/// Discretization thresholds on the output activation.
pub const ACTION_THRESHOLD: f64 = 0.33;

const GENOME_VERSION: u32 = 1;

pub type NeuronId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    Standard,
    Modulatory,
}

impl NeuronKind {
    pub fn flipped(self) -> Self {
        match self {
            NeuronKind::Standard => NeuronKind::Modulatory,
            NeuronKind::Modulatory => NeuronKind::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neuron {
    pub id: NeuronId,
    pub kind: NeuronKind,
}

/// Source of a connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Input(usize),
    Neuron(NeuronId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub pre: Node,
    pub post: NeuronId,
    pub weight: f64,
}

/// Coefficients of the plasticity rule shared by every connection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticityRule {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

impl PlasticityRule {
    pub const ZERO: PlasticityRule = PlasticityRule {
        alpha: 0.0,
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    /// Weight change before modulation.
    pub fn delta(&self, pre: f64, post: f64) -> f64 {
        self.alpha * (self.a * pre * post + self.b * pre + self.c * post + self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub num_inputs: usize,
    pub neurons: Vec<Neuron>,
    pub connections: Vec<Connection>,
    pub rule: PlasticityRule,
    pub output_id: NeuronId,
}

#[derive(Serialize, Deserialize)]
struct GenomeDoc {
    version: u32,
    genome: Genome,
}

impl Genome {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGenome(m));
        let mut kinds = HashMap::with_capacity(self.neurons.len());
        for n in &self.neurons {
            if kinds.insert(n.id, n.kind).is_some() {
                return bad(format!("duplicate neuron id {}", n.id));
            }
        }
        match kinds.get(&self.output_id) {
            None => return bad(format!("output neuron {} does not exist", self.output_id)),
            Some(NeuronKind::Modulatory) => return bad("output neuron must be standard".into()),
            Some(NeuronKind::Standard) => {}
        }
        let mut seen = HashSet::with_capacity(self.connections.len());
        for c in &self.connections {
            match c.pre {
                Node::Input(k) if k >= self.num_inputs => {
                    return bad(format!("connection from unknown input {k}"))
                }
                Node::Neuron(id) if !kinds.contains_key(&id) => {
                    return bad(format!("connection from unknown neuron {id}"))
                }
                _ => {}
            }
            if !kinds.contains_key(&c.post) {
                return bad(format!("connection to unknown neuron {}", c.post));
            }
            if !seen.insert((c.pre, c.post)) {
                return bad(format!("duplicate connection {:?} -> {}", c.pre, c.post));
            }
            if !c.weight.is_finite() || c.weight.abs() > WEIGHT_LIMIT {
                return bad(format!("weight {} outside [-1, 1]", c.weight));
            }
        }
        let r = &self.rule;
        if !(0.0..=1.0).contains(&r.alpha) {
            return bad(format!("alpha {} outside [0, 1]", r.alpha));
        }
        for (name, v) in [("A", r.a), ("B", r.b), ("C", r.c), ("D", r.d)] {
            if !v.is_finite() || v.abs() > 1.0 {
                return bad(format!("{name} = {v} outside [-1, 1]"));
            }
        }
        Ok(())
    }

    pub fn neuron(&self, id: NeuronId) -> Option<&Neuron> {
        self.neurons.iter().find(|n| n.id == id)
    }

    pub fn num_modulatory(&self) -> usize {
        self.neurons
            .iter()
            .filter(|n| n.kind == NeuronKind::Modulatory)
            .count()
    }

    pub fn has_connection(&self, pre: Node, post: NeuronId) -> bool {
        self.connections.iter().any(|c| c.pre == pre && c.post == post)
    }

    pub fn next_neuron_id(&self) -> NeuronId {
        self.neurons.iter().map(|n| n.id + 1).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GenomeDoc {
            version: GENOME_VERSION,
            genome: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GenomeDoc = serde_json::from_str(text)?;
        if doc.version != GENOME_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: GENOME_VERSION,
            });
        }
        doc.genome.validate()?;
        Ok(doc.genome)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Runtime state, aligned with the genome's `neurons` and `connections`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub live_weights: Vec<f64>,
    pub a_std: Vec<f64>,
    pub a_mod: Vec<f64>,
    /// Input seen by the most recent propagation.
    pub input: Vec<f64>,
}

impl NetworkState {
    pub fn reset_activations(&mut self) {
        self.a_std.iter_mut().for_each(|a| *a = 0.0);
        self.a_mod.iter_mut().for_each(|a| *a = 0.0);
        self.input.iter_mut().for_each(|a| *a = 0.0);
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Input(usize),
    Neuron(usize),
}

#[derive(Debug, Clone, Copy)]
struct Link {
    source: Source,
    post: usize,
    /// Source is a modulatory neuron: feeds `a_mod` and is not plastic.
    modulatory: bool,
}

/// A genome compiled to index form for fast stepping.
#[derive(Debug, Clone)]
pub struct Network {
    links: Vec<Link>,
    genome_weights: Vec<f64>,
    rule: PlasticityRule,
    num_inputs: usize,
    num_neurons: usize,
    output: usize,
}

impl Network {
    pub fn new(genome: &Genome) -> Result<Self> {
        genome.validate()?;
        let index: HashMap<NeuronId, usize> = genome
            .neurons
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect();
        let links = genome
            .connections
            .iter()
            .map(|c| {
                let (source, modulatory) = match c.pre {
                    Node::Input(k) => (Source::Input(k), false),
                    Node::Neuron(id) => {
                        let j = index[&id];
                        (
                            Source::Neuron(j),
                            genome.neurons[j].kind == NeuronKind::Modulatory,
                        )
                    }
                };
                Link {
                    source,
                    post: index[&c.post],
                    modulatory,
                }
            })
            .collect();
        Ok(Self {
            links,
            genome_weights: genome.connections.iter().map(|c| c.weight).collect(),
            rule: genome.rule,
            num_inputs: genome.num_inputs,
            num_neurons: genome.neurons.len(),
            output: index[&genome.output_id],
        })
    }

    pub fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Index of the output neuron in the genome's neuron list.
    pub fn output_index(&self) -> usize {
        self.output
    }

    /// Fresh state: genome weights, zero activations.
    pub fn init_state(&self) -> NetworkState {
        NetworkState {
            live_weights: self.genome_weights.clone(),
            a_std: vec![0.0; self.num_neurons],
            a_mod: vec![0.0; self.num_neurons],
            input: vec![0.0; self.num_inputs],
        }
    }

    /// Restore genome weights without touching activations.
    pub fn reset_weights(&self, state: &mut NetworkState) {
        state.live_weights.copy_from_slice(&self.genome_weights);
    }

    /// One synchronous update. Returns the output neuron's standard activation.
    pub fn propagate(&self, state: &mut NetworkState, input: &[f64]) -> Result<f64> {
        if input.len() != self.num_inputs {
            return Err(Error::Shape {
                expected: self.num_inputs,
                got: input.len(),
            });
        }
        let mut std_sum = vec![0.0; self.num_neurons];
        let mut mod_sum = vec![0.0; self.num_neurons];
        for (link, w) in self.links.iter().zip(&state.live_weights) {
            let value = match link.source {
                Source::Input(k) => input[k],
                Source::Neuron(j) => state.a_std[j],
            };
            if link.modulatory {
                mod_sum[link.post] += w * value;
            } else {
                std_sum[link.post] += w * value;
            }
        }
        for i in 0..self.num_neurons {
            state.a_std[i] = (std_sum[i] / 2.0).tanh();
            state.a_mod[i] = (mod_sum[i] / 2.0).tanh();
        }
        state.input.copy_from_slice(input);
        Ok(state.a_std[self.output])
    }

    /// Modulated Hebbian update of every plastic connection, using the
    /// activations from the latest [`propagate`](Self::propagate).
    pub fn hebbian_update(&self, state: &mut NetworkState) {
        for (link, w) in self.links.iter().zip(state.live_weights.iter_mut()) {
            if link.modulatory {
                continue;
            }
            let pre = match link.source {
                Source::Input(k) => state.input[k],
                Source::Neuron(j) => state.a_std[j],
            };
            let post = state.a_std[link.post];
            let dw = state.a_mod[link.post] * self.rule.delta(pre, post);
            *w = (*w + dw).clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT);
        }
    }
}

pub fn init_state(genome: &Genome) -> Result<NetworkState> {
    Ok(Network::new(genome)?.init_state())
}

pub fn propagate(state: &mut NetworkState, input: &[f64], genome: &Genome) -> Result<f64> {
    Network::new(genome)?.propagate(state, input)
}

pub fn hebbian_update(state: &mut NetworkState, genome: &Genome) -> Result<()> {
    Network::new(genome)?.hebbian_update(state);
    Ok(())
}

/// Map an output activation to an action: `[-1, -0.33)` waits,
/// `[-0.33, 0.33]` is choice 1, `(0.33, 1]` is choice 2.
pub fn discretize_action(output: f64) -> usize {
    if output < -ACTION_THRESHOLD {
        0
    } else if output <= ACTION_THRESHOLD {
        1
    } else {
        2
    }
}
