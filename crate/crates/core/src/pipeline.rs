//! End-to-end training and evaluation: stack growth followed by a readout head.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PilaeError, Result};
use crate::readout::{
    accuracy, confusion_matrix, fit_shln, fit_softmax_head, HeadKind, LambdaChoice, LambdaSearch,
    ReadoutHead, SoftmaxOptions,
};
use crate::stack::{grow_stack_detailed, transform, StackConfig, StackedNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stack: StackConfig,
    pub head: HeadKind,
    pub lambda: LambdaChoice,
    pub softmax: SoftmaxOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stack: StackConfig::default(),
            head: HeadKind::Shln,
            lambda: LambdaChoice::default(),
            softmax: SoftmaxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub layer_seconds: Vec<f64>,
    pub head_seconds: f64,
    pub total_seconds: f64,
    pub train_accuracy: f64,
    pub lambda: Option<f64>,
    pub search: Option<LambdaSearch>,
}

/// Trains the stack and the configured head. The returned network carries
/// the head in `readout`.
pub fn train_model(train: &Dataset, cfg: &TrainConfig) -> Result<(StackedNetwork, TrainOutcome)> {
    if train.classes == 0 {
        return Err(PilaeError::arg("training set has no classes"));
    }
    let started = Instant::now();
    let growth = grow_stack_detailed(&train.x, &cfg.stack)?;
    let head_started = Instant::now();
    let (head, lambda, search) = fit_head(&growth.features, &train.labels, train.classes, cfg)?;
    let head_seconds = head_started.elapsed().as_secs_f64();
    let total_seconds = started.elapsed().as_secs_f64();

    let train_accuracy = accuracy(&head.predict(&growth.features)?, &train.labels);
    let mut net = growth.network;
    net.readout = Some(head);
    Ok((
        net,
        TrainOutcome {
            layer_seconds: growth.layer_seconds,
            head_seconds,
            total_seconds,
            train_accuracy,
            lambda,
            search,
        },
    ))
}

type HeadFit = (ReadoutHead, Option<f64>, Option<LambdaSearch>);

pub fn fit_head(
    features: &crate::Matrix,
    labels: &[usize],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<HeadFit> {
    Ok(match cfg.head {
        HeadKind::Softmax => (
            fit_softmax_head(features, labels, classes, &cfg.softmax)?,
            None,
            None,
        ),
        kind => {
            let (mut head, fit) = fit_shln(features, labels, classes, cfg.lambda)?;
            head.kind = kind;
            (head, Some(fit.lambda), fit.search)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(net: &StackedNetwork, data: &Dataset) -> Result<Evaluation> {
    let head = net
        .readout
        .as_ref()
        .ok_or_else(|| PilaeError::arg("network has no readout head"))?;
    evaluate_with(net, head, data)
}

pub fn evaluate_with(net: &StackedNetwork, head: &ReadoutHead, data: &Dataset) -> Result<Evaluation> {
    let expected = net.input_dim().unwrap_or(0);
    if data.dim() != expected {
        return Err(PilaeError::arg(format!(
            "model expects {expected}-dimensional inputs but the data has {} features",
            data.dim()
        )));
    }
    let features = transform(net, &data.x)?;
    let predictions = head.predict(&features)?;
    let k = head.classes.max(data.classes);
    Ok(Evaluation {
        accuracy: accuracy(&predictions, &data.labels),
        confusion: confusion_matrix(&predictions, &data.labels, k),
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{LayerConfig, WidthRule};
    use crate::Matrix;
    use std::collections::BTreeMap;

    fn blobs(n: usize) -> Dataset {
        // three well separated clusters in 6 dimensions
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = Matrix::from_fn(6, n, |r, c| {
            let centre = if r % 3 == labels[c] { 2.0 } else { 0.0 };
            centre + 0.1 * (((r * 31 + c * 17) % 13) as f64 / 13.0 - 0.5)
        });
        Dataset {
            x,
            labels,
            classes: 3,
            name: "blobs".into(),
            metadata: BTreeMap::new(),
        }
    }

    fn cfg(head: HeadKind) -> TrainConfig {
        TrainConfig {
            stack: StackConfig {
                layer: LayerConfig {
                    width_rule: WidthRule::Decay { beta: 0.9 },
                    ..LayerConfig::default()
                },
                epsilon: 1e-12,
                max_depth: 2,
                min_width: 1,
            },
            head,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_blobs_memorized() {
        let ds = blobs(90);
        for head in [HeadKind::Shln, HeadKind::Softmax, HeadKind::Cascade] {
            let (net, out) = train_model(&ds, &cfg(head)).unwrap();
            assert_eq!(net.widths(), vec![5, 4]);
            assert_eq!(net.architecture(), "6-5-4-3");
            let ev = evaluate(&net, &ds).unwrap();
            assert_eq!(ev.accuracy, 1.0, "{head}");
            assert_eq!(out.train_accuracy, 1.0);
            assert_eq!(ev.confusion.iter().map(|r| r.iter().sum::<usize>()).sum::<usize>(), 90);
            assert_eq!(out.layer_seconds.len(), 2);
            assert_eq!(ev, evaluate(&net, &ds).unwrap());
        }
    }

    #[test]
    fn auto_lambda_recorded() {
        let (_, out) = train_model(&blobs(90), &cfg(HeadKind::Shln)).unwrap();
        let s = out.search.unwrap();
        assert_eq!(s.fits, 5);
        assert_eq!(Some(s.lambda), out.lambda);
        assert!(s.lambda_hat > 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (net, _) = train_model(&blobs(60), &cfg(HeadKind::Shln)).unwrap();
        let mut other = blobs(10);
        other.x = Matrix::zeros(5, 10);
        assert!(evaluate(&net, &other).is_err());
    }
}
