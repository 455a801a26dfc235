//! Training small networks with every GEMM routed through the engine.
//!
//! Master parameters stay in `f64`; the engine only ever sees BFP views it
//! derives per GEMM. Nonlinearities, the loss and the SGD update run at
//! full precision. Each engine-backed run is paired with a full-precision
//! twin that starts from identical weights and sees identical batches.

pub mod data;
pub mod layers;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::EngineConfig;
pub use data::{Dataset, DatasetConfig};
pub use layers::{Activation, Backend, Conv2d, Layer, LayerCache, LayerKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    pub layers: Vec<Layer>,
}

/// Per-layer caches plus the network output (logits).
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub caches: Vec<LayerCache>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient w.r.t. the network input.
    pub input: Array2<f64>,
}

impl Gradients {
    /// All weight and bias gradients flattened in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

/// Optional convolution in front of the dense stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvConfig {
    pub channels: usize,
    pub kernel: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Widths of the hidden ReLU layers.
    pub hidden: Vec<usize>,
    pub conv: Option<ConvConfig>,
    pub learning_rate: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            conv: None,
            learning_rate: 0.1,
            lr_decay: 1.0,
            batch_size: 32,
            val_fraction: 0.25,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return Err(Error::Config("learning rate decay must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

impl ToyNetwork {
    /// Builds `[conv] -> hidden... -> classes` for samples shaped like
    /// `data`. The last layer has no nonlinearity.
    pub fn build(cfg: &NetConfig, data: &Dataset, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut width = data.dim();
        if let Some(conv) = cfg.conv {
            let (c, h, w) = data
                .image_shape
                .ok_or_else(|| Error::Config("convolution layer needs an image dataset".into()))?;
            let spec = Conv2d {
                c_in: c,
                c_out: conv.channels,
                kernel: conv.kernel,
                padding: conv.padding,
                h_in: h,
                w_in: w,
            };
            let layer = Layer::new(LayerKind::Conv(spec), Activation::Relu, &mut rng)?;
            width = layer.output_features();
            layers.push(layer);
        }
        for &h in &cfg.hidden {
            layers.push(Layer::new(
                LayerKind::Linear {
                    inputs: width,
                    outputs: h,
                },
                Activation::Relu,
                &mut rng,
            )?);
            width = h;
        }
        layers.push(Layer::new(
            LayerKind::Linear {
                inputs: width,
                outputs: data.classes,
            },
            Activation::Identity,
            &mut rng,
        )?);
        Ok(Self { layers })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Forward pass of `x` (`features x batch`).
pub fn forward(net: &ToyNetwork, x: ArrayView2<'_, f64>, backend: &Backend) -> Result<Activations> {
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut cur = x.to_owned();
    for layer in &net.layers {
        let (out, cache) = layer.forward(cur.view(), backend)?;
        caches.push(cache);
        cur = out;
    }
    Ok(Activations {
        caches,
        output: cur,
    })
}

/// Backward pass from `loss_grad`, the gradient w.r.t. the network output.
pub fn backward(
    net: &ToyNetwork,
    acts: &Activations,
    loss_grad: &Array2<f64>,
    backend: &Backend,
) -> Result<Gradients> {
    if loss_grad.dim() != acts.output.dim() {
        return Err(Error::Shape(format!(
            "loss gradient {:?} does not match output {:?}",
            loss_grad.dim(),
            acts.output.dim()
        )));
    }
    let n = net.layers.len();
    let mut weights = vec![Array2::zeros((0, 0)); n];
    let mut biases = vec![Array1::zeros(0); n];
    let mut upstream = loss_grad.clone();
    for i in (0..n).rev() {
        let (dx, dw, db) = net.layers[i].backward(&acts.caches[i], &upstream, backend)?;
        weights[i] = dw;
        biases[i] = db;
        upstream = dx;
    }
    Ok(Gradients {
        weights,
        biases,
        input: upstream,
    })
}

/// `W <- W - eta dW` on the master parameters.
pub fn sgd_step(net: &mut ToyNetwork, grads: &Gradients, eta: f64) -> Result<()> {
    if grads.weights.len() != net.layers.len() {
        return Err(Error::Shape(
            "gradient count does not match layer count".into(),
        ));
    }
    for ((layer, dw), db) in net.layers.iter_mut().zip(&grads.weights).zip(&grads.biases) {
        if dw.dim() != layer.weights.dim() || db.len() != layer.bias.len() {
            return Err(Error::Shape(
                "gradient shape does not match parameters".into(),
            ));
        }
        layer.weights.scaled_add(-eta, dw);
        layer.bias.scaled_add(-eta, db);
    }
    Ok(())
}

/// Mean softmax cross-entropy of `logits` (`classes x batch`) and its
/// gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (classes, batch) = logits.dim();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!(
            "label {l} out of range for {classes} classes"
        )));
    }
    let mut grad = Array2::zeros((classes, batch));
    let mut loss = 0.0;
    for (j, col) in logits.axis_iter(Axis(1)).enumerate() {
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = col.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        loss += log_z - col[labels[j]];
        for c in 0..classes {
            grad[[c, j]] = (col[c] - log_z).exp() / batch as f64;
        }
        grad[[labels[j], j]] -= 1.0 / batch as f64;
    }
    Ok((loss / batch as f64, grad))
}

pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .axis_iter(Axis(1))
        .zip(labels)
        .filter(|(col, &l)| argmax(col.iter().copied()) == l)
        .count();
    correct as f64 / labels.len() as f64
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

/// Loss and accuracy of `net` on `data`.
pub fn evaluate(net: &ToyNetwork, data: &Dataset, backend: &Backend) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let x = data.features.t();
    let acts = forward(net, x, backend)?;
    let (loss, _) = softmax_cross_entropy(&acts.output, &data.labels)?;
    Ok((loss, accuracy(&acts.output, &data.labels)))
}

/// One SGD step on a batch; returns the batch loss.
pub fn train_batch(
    net: &mut ToyNetwork,
    batch: &Dataset,
    eta: f64,
    backend: &Backend,
) -> Result<f64> {
    let acts = forward(net, batch.features.t(), backend)?;
    let (loss, grad) = softmax_cross_entropy(&acts.output, &batch.labels)?;
    let grads = backward(net, &acts, &grad, backend)?;
    sgd_step(net, &grads, eta)?;
    Ok(loss)
}

/// Metrics after one epoch for the engine-backed net and its
/// full-precision twin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub engine_train_loss: f64,
    pub engine_train_acc: f64,
    pub engine_val_loss: f64,
    pub engine_val_acc: f64,
    pub fp_train_loss: f64,
    pub fp_train_acc: f64,
    pub fp_val_loss: f64,
    pub fp_val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
}

impl TrainingReport {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// Trains an engine-backed network and its full-precision twin side by
/// side. Everything random (data, split, initial weights, batch order)
/// derives from `seed`.
pub fn train_toy(
    dataset: &DatasetConfig,
    net_cfg: &NetConfig,
    engine_cfg: &EngineConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainingReport> {
    let data = dataset.build(seed)?;
    let (train, val) = data.split(net_cfg.val_fraction, seed.wrapping_add(1))?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let engine = Backend::rns(*engine_cfg)?;
    let fp = Backend::FullPrecision;
    let mut net = ToyNetwork::build(net_cfg, &train, seed.wrapping_add(2))?;
    let mut twin = net.clone();
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut eta = net_cfg.learning_rate;
    let mut metrics = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(net_cfg.batch_size) {
            let batch = train.subset(chunk);
            train_batch(&mut net, &batch, eta, &engine)?;
            train_batch(&mut twin, &batch, eta, &fp)?;
        }
        eta *= net_cfg.lr_decay;
        let (engine_train_loss, engine_train_acc) = evaluate(&net, &train, &engine)?;
        let (engine_val_loss, engine_val_acc) = evaluate(&net, &val, &engine)?;
        let (fp_train_loss, fp_train_acc) = evaluate(&twin, &train, &fp)?;
        let (fp_val_loss, fp_val_acc) = evaluate(&twin, &val, &fp)?;
        metrics.push(EpochMetrics {
            epoch,
            engine_train_loss,
            engine_train_acc,
            engine_val_loss,
            engine_val_acc,
            fp_train_loss,
            fp_train_acc,
            fp_val_loss,
            fp_val_acc,
        });
    }
    Ok(TrainingReport {
        seed,
        epochs: metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn blobs() -> DatasetConfig {
        DatasetConfig::Blobs {
            samples: 200,
            classes: 2,
            dim: 4,
            separation: 3.0,
            std_dev: 0.7,
        }
    }

    #[test]
    fn identity_layer_passes_non_negative_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Layer::new(
            LayerKind::Linear {
                inputs: 16,
                outputs: 16,
            },
            Activation::Relu,
            &mut rng,
        )
        .unwrap();
        layer.weights = Array2::eye(16);
        let net = ToyNetwork {
            layers: vec![layer],
        };
        let x = Array2::from_shape_fn((16, 5), |(i, j)| (i * 5 + j) as f64 / 8.0);
        let backend = Backend::rns(EngineConfig::new(12, 16)).unwrap();
        let out = forward(&net, x.view(), &backend).unwrap().output;
        assert_eq!(out, x);
        let exact = forward(&net, x.view(), &Backend::FullPrecision)
            .unwrap()
            .output;
        assert_eq!(exact, x);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let data = blobs().build(1).unwrap();
        let net = ToyNetwork::build(&NetConfig::default(), &data, 2).unwrap();
        let backend = Backend::rns(EngineConfig::new(4, 16)).unwrap();
        let x = data.features.slice(ndarray::s![0..8, ..]).t().to_owned();
        let acts = forward(&net, x.view(), &backend).unwrap();
        let zero = Array2::zeros(acts.output.dim());
        let grads = backward(&net, &acts, &zero, &backend).unwrap();
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
        assert!(grads.input.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_zero_rate_and_closed_form() {
        let data = blobs().build(1).unwrap();
        let mut net = ToyNetwork::build(&NetConfig::default(), &data, 2).unwrap();
        let before = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grads = Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| l.weights.mapv(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| l.bias.mapv(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
            input: Array2::zeros((0, 0)),
        };
        sgd_step(&mut net, &grads, 0.0).unwrap();
        assert_eq!(net, before);
        sgd_step(&mut net, &grads, 0.5).unwrap();
        for ((l, b), g) in net.layers.iter().zip(&before.layers).zip(&grads.weights) {
            assert_eq!(l.weights, &b.weights - &(g * 0.5));
        }
    }

    #[test]
    fn quadratic_step_matches_closed_form() {
        // L = 0.5 ||W x||^2 on a single identity layer: dW = (W x) x^T
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = Layer::new(
            LayerKind::Linear {
                inputs: 3,
                outputs: 2,
            },
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let mut net = ToyNetwork {
            layers: vec![layer],
        };
        let w0 = net.layers[0].weights.clone();
        let x = array![[1.0], [-2.0], [0.5]];
        let fp = Backend::FullPrecision;
        let acts = forward(&net, x.view(), &fp).unwrap();
        let grads = backward(&net, &acts, &acts.output.clone(), &fp).unwrap();
        sgd_step(&mut net, &grads, 0.1).unwrap();
        let want = &w0 - &(w0.dot(&x).dot(&x.t()) * 0.1);
        assert!((&net.layers[0].weights - &want)
            .iter()
            .all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn softmax_gradient_sums_to_zero() {
        let logits = array![[1.0, -1.0], [0.5, 2.0], [0.0, 0.0]];
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
        assert!(loss > 0.0);
        for col in grad.axis_iter(Axis(1)) {
            assert!(col.sum().abs() < 1e-15);
        }
        assert!(softmax_cross_entropy(&logits, &[3, 0]).is_err());
    }

    #[test]
    fn full_precision_reaches_high_accuracy() {
        let cfg = NetConfig::default();
        let report = train_toy(&blobs(), &cfg, &EngineConfig::new(4, 16), 20, 5).unwrap();
        let last = report.last().unwrap();
        assert!(last.fp_val_acc >= 0.99, "{last:?}");
        let again = train_toy(&blobs(), &cfg, &EngineConfig::new(4, 16), 20, 5).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn conv_network_trains() {
        let data = DatasetConfig::Bars {
            samples: 120,
            size: 6,
            noise: 0.2,
        };
        let cfg = NetConfig {
            conv: Some(ConvConfig {
                channels: 2,
                kernel: 3,
                padding: 0,
            }),
            hidden: vec![8],
            ..NetConfig::default()
        };
        let report = train_toy(&data, &cfg, &EngineConfig::new(4, 16), 40, 1).unwrap();
        let last = report.last().unwrap();
        assert!(last.engine_train_acc > 0.9, "{last:?}");
    }
}
