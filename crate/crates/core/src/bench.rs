//! Backprop baseline, run reports and timing probes.

use web_time::Instant;

use crc::{Crc, CRC_64_XZ};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PilaeError, Result};
use crate::layer::{train_layer, LayerConfig, WidthRule};
use crate::matrix::Matrix;
use crate::readout::{accuracy, argmax_columns, softmax_columns};
use crate::stack::{grow_stack_detailed, StackConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 128,
            epochs: 20,
            seed: 0,
            hidden: Vec::new(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.eps];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(PilaeError::arg("learning rate and eps must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(PilaeError::arg("Adam decay rates must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(PilaeError::arg("batch size and hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Sigmoid hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Mlp {
        let layers = sizes
            .windows(2)
            .map(|p| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    w: Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.first().map(|l| vec![l.w.cols()]).unwrap_or_default();
        s.extend(self.layers.iter().map(|l| l.w.rows()));
        s
    }

    fn affine(layer: &Dense, x: &Matrix) -> Matrix {
        let mut z = layer.w.matmul(x);
        for j in 0..z.cols() {
            for (v, b) in z.column_mut(j).iter_mut().zip(&layer.b) {
                *v += b;
            }
        }
        z
    }

    /// Activations of every layer, input first, probabilities last.
    fn forward(&self, x: &Matrix) -> Vec<Matrix> {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, acts.last().unwrap());
            acts.push(if i == last { softmax_columns(z) } else { z.map(sigmoid) });
        }
        acts
    }

    pub fn probabilities(&self, x: &Matrix) -> Matrix {
        self.forward(x).pop().unwrap()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        argmax_columns(&self.probabilities(x))
    }

    /// Mean cross-entropy and its gradient, laid out like the network.
    pub fn loss_grad(&self, x: &Matrix, labels: &[usize]) -> (f64, Vec<Dense>) {
        let n = x.cols() as f64;
        let acts = self.forward(x);
        let probs = acts.last().unwrap();
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(j, &l)| probs[(l, j)].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n;

        let mut delta = probs.clone();
        for (j, &l) in labels.iter().enumerate() {
            delta[(l, j)] -= 1.0;
        }
        delta = delta.scale(1.0 / n);

        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            let gw = delta.matmul_t(input);
            let gb = (0..delta.rows()).map(|r| delta.row(r).iter().sum()).collect();
            grads.push(Dense { w: gw, b: gb });
            if i > 0 {
                let mut back = self.layers[i].w.t_matmul(&delta);
                for (v, a) in back.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *v *= a * (1.0 - a);
                }
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> f64 {
        self.loss_grad(x, labels).0
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Adam {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One bias-corrected update of each parameter slice.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub model: Mlp,
    pub seconds: f64,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn baseline_bp_train(data: &Dataset, cfg: &BaselineConfig) -> Result<BaselineRun> {
    cfg.validate()?;
    if data.is_empty() || data.classes == 0 {
        return Err(PilaeError::arg("baseline: empty training set"));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![data.dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(data.classes);
    let mut model = Mlp::init(&sizes, &mut rng);
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.x.select_columns(batch);
            let lb: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = model.loss_grad(&xb, &lb);
            if !loss.is_finite() {
                return Err(PilaeError::Divergence {
                    epoch,
                    step: cfg.learning_rate,
                });
            }
            total += loss;
            batches += 1;
            let grad_slices: Vec<&[f64]> = grads
                .iter()
                .flat_map(|g| [g.w.as_slice(), g.b.as_slice()])
                .collect();
            let mut params: Vec<&mut [f64]> = model
                .layers
                .iter_mut()
                .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
                .collect();
            adam.step(&mut params, &grad_slices);
        }
        let mean = total / batches as f64;
        log::debug!("baseline epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok(BaselineRun {
        model,
        seconds: started.elapsed().as_secs_f64(),
        epoch_losses,
    })
}

/// Checksum over the features and labels of a split, so runs can show they
/// saw identical data.
pub fn split_hash(data: &Dataset) -> String {
    let crc = Crc::<u64>::new(&CRC_64_XZ);
    let mut digest = crc.digest();
    digest.update(&(data.dim() as u64).to_le_bytes());
    digest.update(&(data.len() as u64).to_le_bytes());
    for v in data.x.as_slice() {
        digest.update(&v.to_le_bytes());
    }
    for &l in &data.labels {
        digest.update(&(l as u64).to_le_bytes());
    }
    format!("{:016x}", digest.finalize())
}

/// One machine-readable line per trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub dataset: String,
    pub architecture: Vec<usize>,
    pub layer_seconds: Vec<f64>,
    pub total_seconds: f64,
    pub head: String,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub rank_ratios: Vec<f64>,
    pub stop_reason: Option<String>,
    pub lambda: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub train_split: Option<String>,
    pub test_split: Option<String>,
    pub error: Option<String>,
    pub config: serde_json::Value,
}

impl RunReport {
    pub fn new(method: &str, dataset: &str) -> RunReport {
        RunReport {
            method: method.into(),
            dataset: dataset.into(),
            architecture: Vec::new(),
            layer_seconds: Vec::new(),
            total_seconds: 0.0,
            head: String::new(),
            train_accuracy: None,
            test_accuracy: None,
            rank_ratios: Vec::new(),
            stop_reason: None,
            lambda: None,
            lambda_hat: None,
            train_split: None,
            test_split: None,
            error: None,
            config: serde_json::Value::Null,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json_line(line: &str) -> Result<RunReport> {
        serde_json::from_str(line).map_err(|e| PilaeError::arg(format!("bad report line: {e}")))
    }

    pub fn architecture_string(&self) -> String {
        self.architecture
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

pub fn baseline_report(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &BaselineConfig,
) -> RunReport {
    let mut report = RunReport::new("baseline", &train.name);
    report.head = "softmax".into();
    report.architecture = std::iter::once(train.dim())
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(train.classes))
        .collect();
    report.train_split = Some(split_hash(train));
    report.test_split = test.map(split_hash);
    report.config = serde_json::to_value(cfg).expect("config serializes");
    match baseline_bp_train(train, cfg) {
        Ok(run) => {
            report.total_seconds = run.seconds;
            report.train_accuracy = Some(accuracy(&run.model.predict(&train.x), &train.labels));
            report.test_accuracy = test.map(|t| accuracy(&run.model.predict(&t.x), &t.labels));
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub points: Vec<ScalingPoint>,
    /// `time(N) / time(N/2)` for each consecutive doubling.
    pub ratios: Vec<f64>,
    /// Least-squares slope of log time against log N.
    pub exponent: f64,
}

/// Times stack growth on the first `n` samples for each `n` (ascending).
pub fn scaling_probe(data: &Dataset, cfg: &StackConfig, sizes: &[usize]) -> Result<ScalingProbe> {
    if sizes.len() < 2 {
        return Err(PilaeError::arg("scaling probe needs at least two sizes"));
    }
    let mut points = Vec::new();
    for &n in sizes {
        if n > data.len() {
            return Err(PilaeError::arg(format!(
                "scaling probe: {n} samples requested, {} available",
                data.len()
            )));
        }
        let x = data.x.col_range(0..n);
        let started = Instant::now();
        grow_stack_detailed(&x, cfg)?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("scaling probe: N = {n}, {seconds:.3} s");
        points.push(ScalingPoint { n, seconds });
    }
    let ratios = points
        .windows(2)
        .map(|p| p[1].seconds / p[0].seconds.max(1e-12))
        .collect();
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.n as f64).ln(), p.seconds.max(1e-12).ln()))
        .collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(ScalingProbe {
        points,
        ratios,
        exponent: if sxx > 0.0 { sxy / sxx } else { f64::NAN },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub width: usize,
    pub recon_error: f64,
    pub recon_error_pre_tie: f64,
}

/// Single-layer reconstruction error over a grid of α or β values.
pub fn sweep_width_param(
    x: &Matrix,
    base: &LayerConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let cfg = LayerConfig {
                width_rule: match param {
                    SweepParam::Alpha => WidthRule::RankBlend { alpha: value },
                    SweepParam::Beta => WidthRule::Decay { beta: value },
                },
                ..base.clone()
            };
            let (layer, _) = train_layer(x, &cfg)?;
            Ok(SweepRow {
                value,
                width: layer.width,
                recon_error: layer.recon_error,
                recon_error_pre_tie: layer.recon_error_pre_tie,
            })
        })
        .collect()
}
