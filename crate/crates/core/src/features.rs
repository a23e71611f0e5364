//! Autoencoder feature extractor and the latent transform that produces
//! controller inputs.
//!
//! The autoencoder is a stack of fully-connected ReLU layers trained with
//! full-batch SGD on the mean squared reconstruction error. After training it
//! is frozen. Controller inputs are the encoder's latent code, min-max scaled
//! per feature to `[0, 1]` and passed through a clamped inverse sigmoid.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ctgraph::{self, CtGraphConfig, ObsKind, Observation};
use crate::error::{Error, Result};
use crate::seed;

/// Layer widths of the default autoencoder: 144 -> 64 -> 16 -> 64 -> 144.
pub const DEFAULT_LAYER_SIZES: [usize; 5] = [144, 64, 16, 64, 144];
pub const LATENT_DIM: usize = 16;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

/// Initial bias of hidden units; positive so ReLU units start active.
pub const INIT_BIAS: f64 = 0.1;

/// Domain guard for the inverse sigmoid.
pub const TRANSFORM_EPS: f64 = 1e-6;

const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| relu(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)),
        );
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    layers: Vec<DenseLayer>,
}

/// Gradients with the same layout as [`Autoencoder`]'s layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Autoencoder {
    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Weights uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`,
    /// biases [`INIT_BIAS`]. [`train_autoencoder`] then resets the output biases.
    pub fn init(layer_sizes: &[usize], rng: &mut seed::Rng) -> Result<Self> {
        let mut ae = Self::zeros(layer_sizes)?;
        for layer in &mut ae.layers {
            let s = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-s..=s);
            }
            layer.biases.iter_mut().for_each(|b| *b = INIT_BIAS);
        }
        Ok(ae)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() || !layers.len().is_multiple_of(2) {
            return Err(Error::Config(
                "autoencoder needs an even, non-zero number of layers".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Config(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Config(format!("layer {i} input width mismatch")));
            }
        }
        if layers[0].inputs != layers[layers.len() - 1].outputs {
            return Err(Error::Config("output width must equal input width".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.layers.len() / 2 - 1].outputs
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(acts.last().unwrap(), &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Latent code from the encoder half.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers[..self.layers.len() / 2] {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Loss `(1/n) sum_i ||F(o_i) - o_i||^2` over the dataset.
    pub fn loss(&self, data: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for x in data {
            let y = self.reconstruct(x)?;
            total += y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(total / data.len() as f64)
    }

    /// Per-element mean squared reconstruction error.
    pub fn mse(&self, data: &[Vec<f64>]) -> Result<f64> {
        Ok(self.loss(data)? / self.input_dim() as f64)
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_gradients(&self, data: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        if data.is_empty() {
            return Err(Error::Usage("empty dataset".into()));
        }
        let n = data.len() as f64;
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        };
        let mut total = 0.0;
        for x in data {
            self.check_input(x)?;
            let acts = self.activations(x);
            let out = acts.last().unwrap();
            total += out.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();

            // dL/d(output activation)
            let mut delta: Vec<f64> = out.iter().zip(x).map(|(a, b)| 2.0 * (a - b) / n).collect();
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let post = &acts[li + 1];
                let pre_act = &acts[li];
                // through ReLU: derivative 1 where output > 0
                for (d, a) in delta.iter_mut().zip(post) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                let g = &mut grads.layers[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(pre_act) {
                        *gw += d * a;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((total / n, grads))
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= lr * gb;
            }
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 || sizes.len().is_multiple_of(2) {
        return Err(Error::Config(
            "layer_sizes needs an odd number (>= 3) of widths".into(),
        ));
    }
    if sizes.first() != sizes.last() {
        return Err(Error::Config("first and last layer widths must match".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Loss at the start of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Per-element MSE after the last update.
    pub final_mse: f64,
}

/// Every distinct observation of the environment, each repeated `replicas` times.
pub fn collect_observations(config: &CtGraphConfig, replicas: usize) -> Vec<Observation> {
    let obs = ctgraph::all_observations(config);
    (0..replicas.max(1)).flat_map(|_| obs.clone()).collect()
}

/// Full-batch SGD on the reconstruction loss.
pub fn train_autoencoder(data: &[Vec<f64>], config: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Usage("cannot train on an empty dataset".into()));
    }
    let mut rng = seed::rng_from(config.seed);
    let mut ae = Autoencoder::init(&config.layer_sizes, &mut rng)?;
    // Output units start at the mean image so none begins (and stays) dead.
    let n = data.len() as f64;
    let last = ae.layers.last_mut().unwrap();
    for (p, b) in last.biases.iter_mut().enumerate() {
        *b = data.iter().map(|x| x.get(p).copied().unwrap_or(0.0)).sum::<f64>() / n;
    }
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (loss, grads) = ae.loss_and_gradients(data)?;
        epoch_loss.push(loss);
        ae.apply(&grads, config.learning_rate);
    }
    let final_mse = ae.mse(data)?;
    Ok((ae, TrainReport { epoch_loss, final_mse }))
}

/// Per-feature min-max statistics of latent codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl LatentScaler {
    pub fn fit(latents: &[Vec<f64>]) -> Result<Self> {
        if latents.len() < 2 {
            return Err(Error::Usage("scaler needs at least two latent vectors".into()));
        }
        let dim = latents[0].len();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for l in latents {
            if l.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: l.len(),
                });
            }
            for (i, v) in l.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scale into `[0, 1]`; values outside the fitted range are clamped and
    /// constant features map to 0.5.
    pub fn scale(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: latent.len(),
            });
        }
        Ok(latent
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(x, (lo, hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect())
    }
}

/// Inverse sigmoid `log(v / (1 - v))`.
pub fn inverse_sigmoid(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

/// Clamped inverse sigmoid of one scaled feature.
pub fn transform_value(v: f64) -> f64 {
    inverse_sigmoid(v.clamp(TRANSFORM_EPS, 1.0 - TRANSFORM_EPS)).clamp(0.0, 1.0)
}

pub fn transform(scaled: &[f64]) -> Vec<f64> {
    scaled.iter().map(|v| transform_value(*v)).collect()
}

/// Frozen encoder plus scaler: maps an observation to controller inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub autoencoder: Autoencoder,
    pub scaler: LatentScaler,
}

impl Features {
    /// Fit the scaler on the latent codes of `data`.
    pub fn fit(autoencoder: Autoencoder, data: &[Vec<f64>]) -> Result<Self> {
        let latents = data
            .iter()
            .map(|x| autoencoder.encode(x))
            .collect::<Result<Vec<_>>>()?;
        let scaler = LatentScaler::fit(&latents)?;
        Ok(Self { autoencoder, scaler })
    }

    pub fn controller_input(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        let latent = self.autoencoder.encode(pixels)?;
        Ok(transform(&self.scaler.scale(&latent)?))
    }

    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    /// Controller inputs for every image the environment can show.
    pub fn input_table(&self, env: &CtGraphConfig) -> Result<InputTable> {
        let rows = ctgraph::all_observations(env)
            .iter()
            .map(|o| self.controller_input(&o.pixels))
            .collect::<Result<Vec<_>>>()?;
        Ok(InputTable { rows })
    }

    pub fn save(&self, path: &Path, report: Option<&TrainReport>) -> Result<()> {
        let artifact = FeaturesArtifact {
            version: ARTIFACT_VERSION,
            layer_sizes: self.autoencoder.layer_sizes(),
            layers: self
                .autoencoder
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    biases: l.biases.clone(),
                })
                .collect(),
            scaler: self.scaler.clone(),
            final_mse: report.map(|r| r.final_mse),
        };
        let text = serde_json::to_string_pretty(&artifact)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FeaturesArtifact = serde_json::from_str(text)?;
        if doc.version != ARTIFACT_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: ARTIFACT_VERSION,
            });
        }
        check_sizes(&doc.layer_sizes)?;
        if doc.layers.len() + 1 != doc.layer_sizes.len() {
            return Err(Error::Config("layer count does not match layer_sizes".into()));
        }
        let layers = doc
            .layers
            .into_iter()
            .zip(doc.layer_sizes.windows(2))
            .map(|(l, w)| {
                if l.weights.len() != w[1] || l.weights.iter().any(|r| r.len() != w[0]) {
                    return Err(Error::Config("weight matrix shape does not match layer_sizes".into()));
                }
                Ok(DenseLayer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: l.weights.concat(),
                    biases: l.biases,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let autoencoder = Autoencoder::from_layers(layers)?;
        if doc.scaler.dim() != autoencoder.latent_dim() || doc.scaler.max.len() != doc.scaler.dim() {
            return Err(Error::Config("scaler dimension does not match latent width".into()));
        }
        Ok(Self {
            autoencoder,
            scaler: doc.scaler,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeaturesArtifact {
    version: u32,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerDoc>,
    scaler: LatentScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_mse: Option<f64>,
}

/// Precomputed controller inputs, one row per [`ObsKind`].
///
/// The encoder is frozen and the environment only ever shows six images, so
/// the full encode/scale/transform path is evaluated once per image.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTable {
    rows: Vec<Vec<f64>>,
}

impl InputTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != ObsKind::ALL.len() {
            return Err(Error::Shape {
                expected: ObsKind::ALL.len(),
                got: rows.len(),
            });
        }
        Ok(Self { rows })
    }

    pub fn get(&self, kind: ObsKind) -> &[f64] {
        &self.rows[kind.index()]
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }
}

/// Pretrain on every environment image and fit the scaler.
pub fn pretrain(env: &CtGraphConfig, replicas: usize, config: &TrainConfig) -> Result<(Features, TrainReport)> {
    let data: Vec<Vec<f64>> = collect_observations(env, replicas)
        .into_iter()
        .map(|o| o.pixels)
        .collect();
    let (ae, report) = train_autoencoder(&data, config)?;
    Ok((Features::fit(ae, &data)?, report))
}
