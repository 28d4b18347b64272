//! Feed-forward binary classifiers: ReLU hidden layers, sigmoid output.
//!
//! The network is the object being decomposed, so its semantics are pinned
//! down exactly: `forward` accumulates each neuron's pre-activation left to
//! right, `predict` is positive iff the final pre-activation is >= 0 (the
//! sigmoid boundary sits on the positive side), and training is seeded and
//! single-threaded so runs reproduce bit for bit.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Dataset, FeatureSchema, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::UnsupportedActivation {
                found: other.to_string(),
            }),
        }
    }
}

/// One dense layer: `weights` is out x in, row per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn output_width(&self) -> usize {
        self.biases.len()
    }

    pub fn input_width(&self) -> usize {
        self.weights.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// A validated network: hidden layers are ReLU, the final layer is a single
/// sigmoid neuron, widths chain, and all parameters are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_width: usize,
    layers: Vec<Layer>,
}

/// All pre-activations plus the output probability of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `pre_activations[k][i]` is neuron i's linear output in layer k.
    pub pre_activations: Vec<Vec<f64>>,
    /// Sigmoid of the final pre-activation.
    pub probability: f64,
}

fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

fn relu(y: f64) -> f64 {
    if y > 0.0 {
        y
    } else {
        0.0
    }
}

impl Network {
    pub fn new(input_width: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MalformedWeights("network has no layers".into()));
        }
        let mut expected_in = input_width;
        for (k, layer) in layers.iter().enumerate() {
            let out = layer.output_width();
            if out == 0 {
                return Err(Error::MalformedWeights(format!("layer {k} has no neurons")));
            }
            if layer.weights.len() != out {
                return Err(Error::MalformedWeights(format!(
                    "layer {k}: {} weight rows for {} biases",
                    layer.weights.len(),
                    out
                )));
            }
            for row in &layer.weights {
                if row.len() != expected_in {
                    return Err(Error::WidthMismatch {
                        expected: expected_in,
                        found: row.len(),
                    });
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(Error::MalformedWeights(format!(
                        "layer {k} contains non-finite weights"
                    )));
                }
            }
            if layer.biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::MalformedWeights(format!(
                    "layer {k} contains non-finite biases"
                )));
            }
            let is_last = k + 1 == layers.len();
            match (is_last, layer.activation) {
                (true, Activation::Sigmoid) => {
                    if out != 1 {
                        return Err(Error::MalformedWeights(format!(
                            "output layer must have width 1, found {out}"
                        )));
                    }
                }
                (true, Activation::Relu) => {
                    return Err(Error::MalformedWeights(
                        "output layer must use sigmoid activation".into(),
                    ))
                }
                (false, Activation::Relu) => {}
                (false, Activation::Sigmoid) => {
                    return Err(Error::MalformedWeights(
                        "hidden layers must use relu activation".into(),
                    ))
                }
            }
            expected_in = out;
        }
        Ok(Network {
            input_width,
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.output_width())
            .collect()
    }

    pub fn check_input_width(&self, expected: usize) -> Result<()> {
        if self.input_width != expected {
            return Err(Error::WidthMismatch {
                expected,
                found: self.input_width,
            });
        }
        Ok(())
    }

    /// Full forward pass over a one-hot (or arbitrary) input vector.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_width {
            return Err(Error::WidthMismatch {
                expected: self.input_width,
                found: x.len(),
            });
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current: Vec<f64> = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.output_width());
            for (row, b) in layer.weights.iter().zip(&layer.biases) {
                let mut acc = 0.0;
                for (w, xi) in row.iter().zip(&current) {
                    acc += w * xi;
                }
                pre.push(acc + b);
            }
            current = match layer.activation {
                Activation::Relu => pre.iter().map(|&y| relu(y)).collect(),
                Activation::Sigmoid => pre.iter().map(|&y| sigmoid(y)).collect(),
            };
            pre_activations.push(pre);
        }
        let probability = current[0];
        Ok(ForwardPass {
            pre_activations,
            probability,
        })
    }

    /// Class 1 iff the final pre-activation is >= 0 (equivalently, the
    /// sigmoid output is >= 0.5, with the boundary resolved positive).
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        let pass = self.forward(x)?;
        Ok(*pass.pre_activations.last().unwrap().first().unwrap() >= 0.0)
    }

    /// `predict` for an instance without materializing the one-hot vector.
    ///
    /// The first layer accumulates only the hot coordinates, in feature
    /// order. That is the same non-zero term sequence `forward` sums, so the
    /// result is bit-identical.
    pub fn predict_instance(&self, instance: &Instance, schema: &FeatureSchema) -> bool {
        self.output_pre_activation(instance, schema) >= 0.0
    }

    /// Final pre-activation for an instance (see `predict_instance`).
    pub fn output_pre_activation(&self, instance: &Instance, schema: &FeatureSchema) -> f64 {
        let first = &self.layers[0];
        let mut current: Vec<f64> = first
            .weights
            .iter()
            .zip(&first.biases)
            .map(|(row, b)| {
                let mut acc = 0.0;
                for (i, &v) in instance.values().iter().enumerate() {
                    acc += row[schema.offset(i) + v as usize];
                }
                acc + b
            })
            .collect();
        if self.layers.len() == 1 {
            return current[0];
        }
        for y in current.iter_mut() {
            *y = relu(*y);
        }
        for (k, layer) in self.layers.iter().enumerate().skip(1) {
            let pre: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| {
                    let mut acc = 0.0;
                    for (w, xi) in row.iter().zip(&current) {
                        acc += w * xi;
                    }
                    acc + b
                })
                .collect();
            if k + 1 == self.layers.len() {
                return pre[0];
            }
            current = pre.iter().map(|&y| relu(y)).collect();
        }
        unreachable!("network has at least one layer")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = NetworkFile {
            input_width: self.input_width,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                    activation: l.activation.as_str().to_string(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::MalformedWeights(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: NetworkFile =
            serde_json::from_str(&text).map_err(|e| Error::MalformedWeights(e.to_string()))?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    weights: l.weights,
                    biases: l.biases,
                    activation: Activation::parse(&l.activation)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(file.input_width, layers)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    input_width: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    activation: String,
}

/// Trainer hyperparameters. Defaults give reproducible desk-scale runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_widths: vec![6, 3],
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 200,
            seed: 42,
        }
    }
}

/// Uniform Glorot-style init in +/- sqrt(6 / (fan_in + fan_out)); biases 0.
pub fn init_network(
    input_width: usize,
    hidden_widths: &[usize],
    rng: &mut ChaCha20Rng,
) -> Result<Network> {
    let mut layers = Vec::new();
    let mut fan_in = input_width;
    let widths: Vec<(usize, Activation)> = hidden_widths
        .iter()
        .map(|&w| (w, Activation::Relu))
        .chain(std::iter::once((1, Activation::Sigmoid)))
        .collect();
    for (out, activation) in widths {
        if out == 0 {
            return Err(Error::InvalidArgument("layer width must be >= 1".into()));
        }
        let limit = (6.0 / (fan_in + out) as f64).sqrt();
        let weights: Vec<Vec<f64>> = (0..out)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
            .collect();
        layers.push(Layer {
            weights,
            biases: vec![0.0; out],
            activation,
        });
        fan_in = out;
    }
    Network::new(input_width, layers)
}

struct LayerGrad {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

fn zero_grads(net: &Network) -> Vec<LayerGrad> {
    net.layers
        .iter()
        .map(|l| LayerGrad {
            weights: l.weights.iter().map(|r| vec![0.0; r.len()]).collect(),
            biases: vec![0.0; l.biases.len()],
        })
        .collect()
}

/// Accumulates binary cross-entropy gradients for one example into `grads`
/// and returns the example's loss.
fn accumulate_example(net: &Network, x: &[f64], target: f64, grads: &mut [LayerGrad]) -> f64 {
    // Forward, keeping each layer's input.
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    let mut current = x.to_vec();
    for layer in &net.layers {
        inputs.push(current.clone());
        let y: Vec<f64> = layer
            .weights
            .iter()
            .zip(&layer.biases)
            .map(|(row, b)| {
                let mut acc = 0.0;
                for (w, xi) in row.iter().zip(&current) {
                    acc += w * xi;
                }
                acc + b
            })
            .collect();
        current = match layer.activation {
            Activation::Relu => y.iter().map(|&v| relu(v)).collect(),
            Activation::Sigmoid => y.iter().map(|&v| sigmoid(v)).collect(),
        };
        pre.push(y);
    }
    let p = current[0];
    let eps = 1e-12;
    let loss = -(target * p.max(eps).ln() + (1.0 - target) * (1.0 - p).max(eps).ln());

    // Backward. d(BCE)/dy for the sigmoid output collapses to (p - target).
    let mut delta = vec![p - target];
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let grad = &mut grads[k];
        for (i, &d) in delta.iter().enumerate() {
            grad.biases[i] += d;
            for (j, xi) in inputs[k].iter().enumerate() {
                grad.weights[i][j] += d * xi;
            }
        }
        if k > 0 {
            let mut prev = vec![0.0; inputs[k].len()];
            for (i, &d) in delta.iter().enumerate() {
                for (j, w) in layer.weights[i].iter().enumerate() {
                    prev[j] += d * w;
                }
            }
            // Gate by the previous layer's ReLU: derivative 1 iff y > 0.
            for (j, g) in prev.iter_mut().enumerate() {
                if pre[k - 1][j] <= 0.0 {
                    *g = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Trains a network with mini-batch gradient descent on binary cross-entropy.
/// Fully reproducible given (seed, hyperparameters, row order).
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<Network> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let schema = dataset.schema();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut net = init_network(schema.one_hot_width(), &config.hidden_widths, &mut rng)?;

    let encoded: Vec<(Vec<f64>, f64)> = dataset
        .rows()
        .iter()
        .map(|(inst, y)| (inst.encode_one_hot(schema), if *y { 1.0 } else { 0.0 }))
        .collect();

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = zero_grads(&net);
            for &i in batch {
                let (x, t) = &encoded[i];
                epoch_loss += accumulate_example(&net, x, *t, &mut grads);
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (layer, grad) in net.layers.iter_mut().zip(&grads) {
                for (row, grow) in layer.weights.iter_mut().zip(&grad.weights) {
                    for (w, g) in row.iter_mut().zip(grow) {
                        *w -= scale * g;
                    }
                }
                for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                    *b -= scale * g;
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    Ok(net)
}

/// Fraction of rows where `predict` matches the label.
pub fn train_accuracy(net: &Network, dataset: &Dataset) -> f64 {
    let schema = dataset.schema();
    let hits = dataset
        .rows()
        .iter()
        .filter(|(inst, y)| net.predict_instance(inst, schema) == *y)
        .count();
    hits as f64 / dataset.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Split;

    pub(crate) fn tomato_schema() -> FeatureSchema {
        FeatureSchema::parse("color: red, yellow\nsize: small, medium, big").unwrap()
    }

    /// The worked two-feature illustration network.
    pub(crate) fn tomato_network() -> Network {
        Network::new(
            5,
            vec![
                Layer {
                    weights: vec![
                        vec![4.0, 1.0, 1.0, 2.0, 2.0],
                        vec![3.0, 2.0, 2.0, 3.0, 3.0],
                    ],
                    biases: vec![-5.0, -5.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![1.0, 1.0]],
                    biases: vec![-1.0],
                    activation: Activation::Sigmoid,
                },
            ],
        )
        .unwrap()
    }

    fn inst(schema: &FeatureSchema, values: &[u8]) -> Instance {
        Instance::new(values.to_vec(), schema).unwrap()
    }

    #[test]
    fn forward_on_worked_example() {
        let s = tomato_schema();
        let net = tomato_network();

        let red_big = inst(&s, &[0, 2]).encode_one_hot(&s);
        let pass = net.forward(&red_big).unwrap();
        assert_eq!(pass.pre_activations[0], vec![1.0, 1.0]);
        assert_eq!(pass.pre_activations[1], vec![1.0]);
        assert_eq!(pass.probability, sigmoid(1.0));

        let yellow_small = inst(&s, &[1, 0]).encode_one_hot(&s);
        let pass = net.forward(&yellow_small).unwrap();
        assert_eq!(pass.pre_activations[0], vec![-3.0, -1.0]);
        assert_eq!(pass.pre_activations[1], vec![-1.0]);
        assert_eq!(pass.probability, sigmoid(-1.0));
    }

    #[test]
    fn zero_network_outputs_half_and_predicts_positive() {
        let net = Network::new(
            2,
            vec![Layer {
                weights: vec![vec![0.0, 0.0]],
                biases: vec![0.0],
                activation: Activation::Sigmoid,
            }],
        )
        .unwrap();
        let pass = net.forward(&[1.0, 0.0]).unwrap();
        assert_eq!(pass.probability, 0.5);
        assert!(net.predict(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn predict_on_worked_example() {
        let s = tomato_schema();
        let net = tomato_network();
        assert!(net.predict_instance(&inst(&s, &[0, 1]), &s));
        assert!(!net.predict_instance(&inst(&s, &[0, 0]), &s));
    }

    #[test]
    fn predict_instance_matches_forward_exactly() {
        let s = tomato_schema();
        let net = tomato_network();
        for a in s.assignments() {
            let via_forward = net.predict(&a.encode_one_hot(&s)).unwrap();
            assert_eq!(net.predict_instance(&a, &s), via_forward);
            let y = net.output_pre_activation(&a, &s);
            let pass = net.forward(&a.encode_one_hot(&s)).unwrap();
            assert_eq!(y, pass.pre_activations[1][0]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let s = tomato_schema();
        let net = tomato_network();
        let x = inst(&s, &[0, 1]).encode_one_hot(&s);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.pre_activations, b.pre_activations);
        assert_eq!(a.probability, b.probability);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let net = tomato_network();
        assert!(matches!(
            net.forward(&[1.0, 0.0]),
            Err(Error::WidthMismatch { .. })
        ));
    }

    fn toy_color_dataset(schema: &FeatureSchema) -> Dataset {
        // Label = [color=red], replicated for a little training signal.
        let mut rows = Vec::new();
        for _ in 0..8 {
            for a in schema.assignments() {
                let label = a.value(0) == 0;
                rows.push((a, label));
            }
        }
        Dataset::new(schema.clone(), rows, Split::Train).unwrap()
    }

    #[test]
    fn training_fits_a_separable_toy_set() {
        let s = tomato_schema();
        let ds = toy_color_dataset(&s);
        let config = TrainConfig {
            hidden_widths: vec![4],
            epochs: 300,
            ..TrainConfig::default()
        };
        let net = train(&ds, &config).unwrap();
        assert_eq!(train_accuracy(&net, &ds), 1.0);
    }

    #[test]
    fn all_negative_labels_train_to_constant_negative() {
        let s = tomato_schema();
        let rows: Vec<(Instance, bool)> = s.assignments().map(|a| (a, false)).collect();
        let ds = Dataset::new(s.clone(), rows, Split::Train).unwrap();
        let net = train(&ds, &TrainConfig::default()).unwrap();
        assert_eq!(train_accuracy(&net, &ds), 1.0);
    }

    #[test]
    fn training_is_reproducible() {
        let s = tomato_schema();
        let ds = toy_color_dataset(&s);
        let config = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&ds, &config).unwrap();
        let b = train(&ds, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let s = tomato_schema();
        let net = tomato_network();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(net, loaded);
        for a in s.assignments() {
            let x = a.encode_one_hot(&s);
            assert_eq!(
                net.forward(&x).unwrap().probability,
                loaded.forward(&x).unwrap().probability
            );
        }
    }

    #[test]
    fn unsupported_activation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        std::fs::write(
            &path,
            r#"{"input_width":2,"layers":[{"weights":[[0.1,0.2]],"biases":[0.0],"activation":"tanh"}]}"#,
        )
        .unwrap();
        match Network::load(&path) {
            Err(Error::UnsupportedActivation { found }) => assert_eq!(found, "tanh"),
            other => panic!("expected unsupported activation, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let bad = Network::new(
            5,
            vec![
                Layer {
                    weights: vec![vec![1.0, 2.0]],
                    biases: vec![0.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![1.0]],
                    biases: vec![0.0],
                    activation: Activation::Sigmoid,
                },
            ],
        );
        assert!(bad.is_err());
    }

    /// Central finite differences on random small nets agree with the
    /// analytic gradient within 1e-4 relative error.
    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..5 {
            let net = init_network(4, &[3, 2], &mut rng).unwrap();
            let x: Vec<f64> = vec![1.0, 0.0, 0.0, 1.0];
            let target = 1.0;

            let mut grads = zero_grads(&net);
            accumulate_example(&net, &x, target, &mut grads);

            let loss_of = |net: &Network| {
                let p = net.forward(&x).unwrap().probability;
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            };
            let h = 1e-6;
            for k in 0..net.layers.len() {
                for i in 0..net.layers[k].weights.len() {
                    for j in 0..net.layers[k].weights[i].len() {
                        let mut plus = net.clone();
                        plus.layers[k].weights[i][j] += h;
                        let mut minus = net.clone();
                        minus.layers[k].weights[i][j] -= h;
                        let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                        let analytic = grads[k].weights[i][j];
                        let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                        assert!(
                            ((numeric - analytic) / denom).abs() < 1e-4,
                            "grad mismatch at layer {k} [{i}][{j}]: {numeric} vs {analytic}"
                        );
                    }
                }
            }
        }
    }
}
