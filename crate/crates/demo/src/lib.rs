//! Browser bindings for three interactive views: the singular spectrum of a
//! synthetic data matrix, reconstruction error across width-rule parameters,
//! and layer-by-layer stack growth with a readout on top.
//!
//! Every exported function returns a JSON string; `www/index.html` draws it.

use pilae::bench::{sweep_width_param, SweepParam, SweepRow};
use pilae::data::Dataset;
use pilae::layer::{planned_width, Activation, LayerConfig, WidthRule};
use pilae::linalg::{numeric_rank, singular_values};
use pilae::pipeline::{evaluate, train_model, TrainConfig};
use pilae::readout::{HeadKind, LambdaChoice};
use pilae::stack::{LayerSummary, StackConfig, StopReason};
use pilae::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Shape of the synthetic problem shared by all three views.
#[derive(Debug, Clone, Copy)]
pub struct Synthetic {
    pub dim: usize,
    pub samples: usize,
    /// Dimension of the subspace the class centres and spread live in.
    pub rank: usize,
    pub classes: usize,
    /// Isotropic noise added on top, which lifts the numeric rank to `dim`.
    pub noise: f64,
    pub seed: u64,
}

/// Roughly normal draw from the sum of four uniforms.
fn gaussish(rng: &mut ChaCha8Rng) -> f64 {
    (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 0.866
}

impl Synthetic {
    pub fn generate(&self) -> Result<Dataset, String> {
        if self.dim == 0 || self.samples < 2 || self.rank == 0 || self.classes == 0 {
            return Err("dimension, rank and classes must be positive, samples at least 2".into());
        }
        if self.rank > self.dim {
            return Err(format!("rank {} exceeds dimension {}", self.rank, self.dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let basis = Matrix::from_fn(self.dim, self.rank, |_, _| gaussish(&mut rng));
        let centres = Matrix::from_fn(self.rank, self.classes, |_, _| 2.0 * gaussish(&mut rng));
        let labels: Vec<usize> = (0..self.samples).map(|j| j % self.classes).collect();
        let latent = Matrix::from_fn(self.rank, self.samples, |i, j| {
            centres[(i, labels[j])] + 0.6 * gaussish(&mut rng)
        });
        let mut x = basis.matmul(&latent).scale(1.0 / (self.rank as f64).sqrt());
        if self.noise > 0.0 {
            for v in x.as_mut_slice() {
                *v += self.noise * gaussish(&mut rng);
            }
        }
        Ok(Dataset {
            x,
            labels,
            classes: self.classes,
            name: "synthetic".into(),
            metadata: Default::default(),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub sigma: Vec<f64>,
    pub rank: usize,
    pub dim: usize,
    pub width: usize,
    pub applied_rule: String,
}

pub fn spectrum_report(data: &Synthetic, rule: &str) -> Result<Spectrum, String> {
    let rule: WidthRule = rule.parse().map_err(|e: pilae::PilaeError| e.to_string())?;
    let ds = data.generate()?;
    let sigma = singular_values(&ds.x).map_err(|e| e.to_string())?;
    let rank = numeric_rank(&sigma, ds.dim(), ds.len());
    let cfg = LayerConfig { width_rule: rule, ..LayerConfig::default() };
    let (applied, width) = planned_width(&cfg, rank, ds.dim(), ds.len()).map_err(|e| e.to_string())?;
    Ok(Spectrum {
        sigma,
        rank,
        dim: ds.dim(),
        width,
        applied_rule: applied.to_string(),
    })
}

pub fn sweep_report(
    data: &Synthetic,
    param: &str,
    values: &[f64],
    activation: &str,
) -> Result<Vec<SweepRow>, String> {
    let param = match param {
        "alpha" => SweepParam::Alpha,
        "beta" => SweepParam::Beta,
        other => return Err(format!("unknown parameter {other:?}")),
    };
    let activation: Activation = activation.parse().map_err(|e: pilae::PilaeError| e.to_string())?;
    let ds = data.generate()?;
    let base = LayerConfig { activation, ..LayerConfig::default() };
    sweep_width_param(&ds.x, &base, param, values).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct GrowthReport {
    pub architecture: String,
    pub layers: Vec<LayerSummary>,
    pub stop_reason: StopReason,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub lambda: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GrowthSettings {
    pub rule: String,
    pub max_depth: usize,
    pub min_width: usize,
    pub epsilon: f64,
    pub head: String,
}

/// Trains on the first 80% of the samples and scores the rest.
pub fn growth_report(data: &Synthetic, settings: &GrowthSettings) -> Result<GrowthReport, String> {
    let err = |e: pilae::PilaeError| e.to_string();
    let ds = data.generate()?;
    let split = (ds.len() * 4 / 5).max(data.classes);
    if split >= ds.len() {
        return Err("too few samples to hold any out".into());
    }
    let train_idx: Vec<usize> = (0..split).collect();
    let test_idx: Vec<usize> = (split..ds.len()).collect();
    let (train, test) = (ds.subset(&train_idx), ds.subset(&test_idx));

    let cfg = TrainConfig {
        stack: StackConfig {
            layer: LayerConfig {
                width_rule: settings.rule.parse().map_err(err)?,
                ..LayerConfig::default()
            },
            epsilon: settings.epsilon,
            max_depth: settings.max_depth,
            min_width: settings.min_width,
        },
        head: settings.head.parse::<HeadKind>().map_err(err)?,
        lambda: LambdaChoice::default(),
        ..TrainConfig::default()
    };
    let (net, outcome) = train_model(&train, &cfg).map_err(err)?;
    let test_eval = evaluate(&net, &test).map_err(err)?;
    let growth = net.growth.clone().ok_or("missing growth log")?;
    Ok(GrowthReport {
        architecture: net.architecture(),
        layers: growth.layers,
        stop_reason: growth.stop_reason,
        train_accuracy: outcome.train_accuracy,
        test_accuracy: test_eval.accuracy,
        lambda: outcome.lambda,
        seconds: outcome.total_seconds,
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    value
        .map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen]
pub fn spectrum(
    dim: usize,
    samples: usize,
    rank: usize,
    noise: f64,
    seed: u32,
    rule: &str,
) -> Result<String, JsError> {
    let data = Synthetic { dim, samples, rank, classes: 1, noise, seed: seed.into() };
    to_json(spectrum_report(&data, rule))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    dim: usize,
    samples: usize,
    rank: usize,
    noise: f64,
    seed: u32,
    param: &str,
    values: Vec<f64>,
    activation: &str,
) -> Result<String, JsError> {
    let data = Synthetic { dim, samples, rank, classes: 1, noise, seed: seed.into() };
    to_json(sweep_report(&data, param, &values, activation))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn grow(
    dim: usize,
    samples: usize,
    rank: usize,
    classes: usize,
    noise: f64,
    seed: u32,
    rule: &str,
    max_depth: usize,
    epsilon: f64,
    head: &str,
) -> Result<String, JsError> {
    let data = Synthetic { dim, samples, rank, classes, noise, seed: seed.into() };
    let settings = GrowthSettings {
        rule: rule.to_owned(),
        max_depth,
        min_width: 2,
        epsilon,
        head: head.to_owned(),
    };
    to_json(growth_report(&data, &settings))
}
