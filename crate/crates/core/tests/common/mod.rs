#![allow(dead_code)]

use std::collections::HashMap;

use plasticlab_core::ctgraph::{CtGraphConfig, ObsKind};
use plasticlab_core::features::InputTable;
use plasticlab_core::neuromod::{Connection, Genome, Neuron, NeuronKind, Node, PlasticityRule};
use plasticlab_core::seed;
use rand::Rng;

/// Random valid genome with up to `max_neurons` neurons and `num_inputs` inputs.
pub fn random_genome(rng: &mut seed::Rng, num_inputs: usize, max_neurons: usize) -> Genome {
    let n = rng.random_range(1..=max_neurons);
    let neurons: Vec<Neuron> = (0..n as u32)
        .map(|i| Neuron {
            id: i * 3 + 7,
            kind: if i == 0 || rng.random_bool(0.6) {
                NeuronKind::Standard
            } else {
                NeuronKind::Modulatory
            },
        })
        .collect();
    let mut connections = Vec::new();
    let density = rng.random_range(0.2..0.9);
    for post in &neurons {
        for k in 0..num_inputs {
            if rng.random_bool(density) {
                connections.push(Connection {
                    pre: Node::Input(k),
                    post: post.id,
                    weight: rng.random_range(-1.0..=1.0),
                });
            }
        }
        for pre in &neurons {
            if rng.random_bool(density) {
                connections.push(Connection {
                    pre: Node::Neuron(pre.id),
                    post: post.id,
                    weight: rng.random_range(-1.0..=1.0),
                });
            }
        }
    }
    Genome {
        num_inputs,
        neurons,
        connections,
        rule: PlasticityRule {
            alpha: rng.random_range(0.0..=1.0),
            a: rng.random_range(-1.0..=1.0),
            b: rng.random_range(-1.0..=1.0),
            c: rng.random_range(-1.0..=1.0),
            d: rng.random_range(-1.0..=1.0),
        },
        output_id: 7,
    }
}

/// Straight-line evaluation of the network equations, keyed by ids.
pub struct Reference {
    pub genome: Genome,
    pub weights: HashMap<(Node, u32), f64>,
    pub a_std: HashMap<u32, f64>,
    pub a_mod: HashMap<u32, f64>,
    pub input: Vec<f64>,
}

impl Reference {
    pub fn new(genome: &Genome) -> Self {
        Self {
            genome: genome.clone(),
            weights: genome.connections.iter().map(|c| ((c.pre, c.post), c.weight)).collect(),
            a_std: genome.neurons.iter().map(|n| (n.id, 0.0)).collect(),
            a_mod: genome.neurons.iter().map(|n| (n.id, 0.0)).collect(),
            input: vec![0.0; genome.num_inputs],
        }
    }

    fn kind(&self, id: u32) -> NeuronKind {
        self.genome.neurons.iter().find(|n| n.id == id).unwrap().kind
    }

    fn source_value(&self, pre: Node, a_std: &HashMap<u32, f64>, input: &[f64]) -> f64 {
        match pre {
            Node::Input(k) => input[k],
            Node::Neuron(j) => a_std[&j],
        }
    }

    fn is_from_modulatory(&self, pre: Node) -> bool {
        matches!(pre, Node::Neuron(j) if self.kind(j) == NeuronKind::Modulatory)
    }

    pub fn propagate(&mut self, input: &[f64]) -> f64 {
        let prev = self.a_std.clone();
        let mut new_std = HashMap::new();
        let mut new_mod = HashMap::new();
        for n in &self.genome.neurons {
            let mut s = 0.0;
            let mut m = 0.0;
            for c in self.genome.connections.iter().filter(|c| c.post == n.id) {
                let x = self.weights[&(c.pre, c.post)] * self.source_value(c.pre, &prev, input);
                if self.is_from_modulatory(c.pre) {
                    m += x;
                } else {
                    s += x;
                }
            }
            new_std.insert(n.id, (0.5 * s).tanh());
            new_mod.insert(n.id, (0.5 * m).tanh());
        }
        self.a_std = new_std;
        self.a_mod = new_mod;
        self.input = input.to_vec();
        self.a_std[&self.genome.output_id]
    }

    pub fn hebbian(&mut self) {
        let r = self.genome.rule;
        for c in &self.genome.connections {
            if self.is_from_modulatory(c.pre) {
                continue;
            }
            let i = self.source_value(c.pre, &self.a_std, &self.input);
            let j = self.a_std[&c.post];
            let delta = r.alpha * (r.a * i * j + r.b * i + r.c * j + r.d);
            let w = self.weights.get_mut(&(c.pre, c.post)).unwrap();
            *w = (*w + self.a_mod[&c.post] * delta).clamp(-1.0, 1.0);
        }
    }

    /// Live weights in genome connection order.
    pub fn weight_vec(&self) -> Vec<f64> {
        self.genome.connections.iter().map(|c| self.weights[&(c.pre, c.post)]).collect()
    }

    pub fn std_vec(&self) -> Vec<f64> {
        self.genome.neurons.iter().map(|n| self.a_std[&n.id]).collect()
    }

    pub fn mod_vec(&self) -> Vec<f64> {
        self.genome.neurons.iter().map(|n| self.a_mod[&n.id]).collect()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Hand-made controller inputs: a one-hot code per observation kind.
pub fn one_hot_inputs() -> InputTable {
    InputTable::from_rows(
        ObsKind::ALL
            .iter()
            .map(|k| {
                let mut row = vec![0.0; 8];
                row[k.index()] = 1.0;
                row
            })
            .collect(),
    )
    .unwrap()
}

pub fn d2() -> CtGraphConfig {
    CtGraphConfig {
        obs_seed: 11,
        ..CtGraphConfig::new(2, 2)
    }
}

/// Encoder whose first layer holds exact detectors for the six images plus a
/// unit reading the cue patch; latent unit `k` copies detector `k`.
pub mod fixture {
    use nalgebra::{DMatrix, DVector};
    use plasticlab_core::ctgraph::{self, CtGraphConfig, ObsKind};
    use plasticlab_core::features::{Autoencoder, DenseLayer, Features};
    use plasticlab_core::neuromod::{Connection, Genome, Neuron, NeuronKind, Node, PlasticityRule};

    /// Latent index of the cue-patch unit; indices `0..6` are the image detectors.
    pub const CUE: usize = 6;
    pub const LOCATION_NEURON: u32 = 1;
    pub const CUE_NEURON: u32 = 2;

    pub fn features(env: &CtGraphConfig) -> Features {
        // one row per ObsKind, in ObsKind::ALL order
        let images: Vec<Vec<f64>> = ctgraph::all_observations(env).into_iter().map(|o| o.pixels).collect();
        let p = images[0].len();
        let side = env.obs_side;
        let o = DMatrix::from_fn(6, p, |r, c| images[r][c]);
        let gram_inv = (&o * o.transpose()).try_inverse().expect("images are linearly independent");

        let mut first = DenseLayer {
            inputs: p,
            outputs: 64,
            weights: vec![0.0; 64 * p],
            biases: vec![0.0; 64],
        };
        for k in 0..6 {
            // minimum-norm u with u . image_j = [j == k]
            let u = o.transpose() * (&gram_inv * DVector::from_fn(6, |j, _| if j == k { 1.0 } else { 0.0 }));
            first.weights[k * p..(k + 1) * p].copy_from_slice(u.as_slice());
        }
        for r in 0..4 {
            for c in 0..4 {
                first.weights[CUE * p + r * side + c] = 0.25;
            }
        }
        first.biases[CUE] = -3.0;

        let mut latent = DenseLayer {
            inputs: 64,
            outputs: 16,
            weights: vec![0.0; 64 * 16],
            biases: vec![0.0; 16],
        };
        for k in 0..=CUE {
            latent.weights[k * 64 + k] = 1.0;
        }
        let decoder = [
            DenseLayer {
                inputs: 16,
                outputs: 64,
                weights: vec![0.0; 16 * 64],
                biases: vec![0.0; 64],
            },
            DenseLayer {
                inputs: 64,
                outputs: p,
                weights: vec![0.0; 64 * p],
                biases: vec![0.0; p],
            },
        ];
        let ae = Autoencoder::from_layers([first, latent].into_iter().chain(decoder).collect()).unwrap();
        Features::fit(ae, &images).unwrap()
    }

    fn input(kind: ObsKind) -> Node {
        Node::Input(kind.index())
    }

    /// Waits on start and wait images and takes choice 1 at every decision,
    /// so it always ends in end state 0. Neuron 1 reads the decision
    /// detector, neuron 2 the cue unit; the weight into neuron 2 drifts under
    /// modulation from neuron 3, which follows the wait detector.
    pub fn genome() -> Genome {
        let c = |pre, post, weight| Connection { pre, post, weight };
        Genome {
            num_inputs: 16,
            neurons: vec![
                Neuron { id: 0, kind: NeuronKind::Standard },
                Neuron { id: LOCATION_NEURON, kind: NeuronKind::Standard },
                Neuron { id: CUE_NEURON, kind: NeuronKind::Standard },
                Neuron { id: 3, kind: NeuronKind::Modulatory },
            ],
            connections: vec![
                c(input(ObsKind::Start), 0, -1.0),
                c(input(ObsKind::Wait), 0, -1.0),
                c(input(ObsKind::Decision), LOCATION_NEURON, 1.0),
                c(Node::Input(CUE), CUE_NEURON, 1.0),
                c(input(ObsKind::Wait), 3, 1.0),
                c(Node::Neuron(3), CUE_NEURON, 1.0),
            ],
            rule: PlasticityRule {
                alpha: 0.1,
                a: 0.0,
                b: 0.0,
                c: 0.0,
                d: -0.05,
            },
            output_id: 0,
        }
    }
}
