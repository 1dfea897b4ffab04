//! Greedy layer-wise growth of the stacked feature extractor.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PilaeError, Result};
use crate::layer::{self, planned_width, train_layer, Activation, LayerConfig, WidthRule};
use crate::linalg::{identity_distance_from_sigma, numeric_rank, singular_values};
use crate::matrix::Matrix;
use crate::readout::ReadoutHead;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub layer: LayerConfig,
    /// Growth stops once the identity distance of a layer's features falls
    /// below this value.
    pub epsilon: f64,
    pub max_depth: usize,
    pub min_width: usize,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            layer: LayerConfig::default(),
            epsilon: 1e-3,
            max_depth: 8,
            min_width: 8,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        self.layer.validate()?;
        if self.max_depth == 0 {
            return Err(PilaeError::arg("max_depth must be at least 1"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(PilaeError::arg(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.min_width == 0 {
            return Err(PilaeError::arg("min_width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Epsilon,
    MaxDepth,
    MinWidth,
}

/// Per-layer training record kept alongside the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub width: usize,
    pub input_dim: usize,
    pub input_rank: usize,
    pub applied_rule: WidthRule,
    pub recon_error: f64,
    pub recon_error_pre_tie: f64,
    /// Numeric rank of the layer's output features.
    pub feature_rank: usize,
    pub rank_ratio: f64,
    pub identity_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLog {
    pub layers: Vec<LayerSummary>,
    pub stop_reason: StopReason,
    pub epsilon: f64,
}

/// One deployed encoder: `H = f(W·x)`, with `x` augmented by a ones row when
/// `bias` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub weights: Matrix,
    pub activation: Activation,
    pub bias: bool,
}

impl EncoderLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols() - usize::from(self.bias)
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        layer::encode(&self.weights, self.activation, self.bias, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedNetwork {
    pub encoders: Vec<EncoderLayer>,
    /// Decoders, retained only when the layer config asks for them.
    pub decoders: Option<Vec<Matrix>>,
    /// Absent for networks restored from a model file.
    pub growth: Option<GrowthLog>,
    pub readout: Option<ReadoutHead>,
}

impl StackedNetwork {
    pub fn from_encoders(encoders: Vec<EncoderLayer>) -> Result<Self> {
        check_chain(&encoders)?;
        Ok(StackedNetwork {
            encoders,
            decoders: None,
            growth: None,
            readout: None,
        })
    }

    pub fn depth(&self) -> usize {
        self.encoders.len()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.encoders.first().map(EncoderLayer::input_dim)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.encoders.last().map(EncoderLayer::width)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.encoders.iter().map(EncoderLayer::width).collect()
    }

    pub fn rank_ratios(&self) -> Option<Vec<f64>> {
        self.growth
            .as_ref()
            .map(|g| g.layers.iter().map(|l| l.rank_ratio).collect())
    }

    /// `784-705-634-10` style architecture string.
    pub fn architecture(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(d) = self.input_dim() {
            parts.push(d.to_string());
        }
        parts.extend(self.widths().iter().map(|w| w.to_string()));
        if let Some(head) = &self.readout {
            parts.push(head.classes.to_string());
        }
        parts.join("-")
    }

    /// Reconstructs the input from last-layer features by running the
    /// retained decoders back down the stack.
    pub fn reconstruct(&self, features: &Matrix) -> Result<Matrix> {
        let decoders = self
            .decoders
            .as_ref()
            .ok_or_else(|| PilaeError::arg("network was trained without decoders"))?;
        let mut current = features.clone();
        for (dec, enc) in decoders.iter().zip(&self.encoders).rev() {
            current = dec.matmul(&current);
            if enc.bias {
                current = current.row_range(0..current.rows() - 1);
            }
        }
        Ok(current)
    }
}

pub(crate) fn check_chain(encoders: &[EncoderLayer]) -> Result<()> {
    if encoders.is_empty() {
        return Err(PilaeError::shape("stack", "network has no layers"));
    }
    for (i, pair) in encoders.windows(2).enumerate() {
        if pair[1].input_dim() != pair[0].width() {
            return Err(PilaeError::shape(
                "stack",
                format!(
                    "layer {} expects {} inputs but layer {i} emits {}",
                    i + 1,
                    pair[1].input_dim(),
                    pair[0].width()
                ),
            ));
        }
    }
    Ok(())
}

pub fn grow_stack(x: &Matrix, cfg: &StackConfig) -> Result<StackedNetwork> {
    grow_stack_detailed(x, cfg).map(|g| g.network)
}

/// Grows the stack and also returns the last layer's training features.
pub fn grow_stack_with_features(
    x: &Matrix,
    cfg: &StackConfig,
) -> Result<(StackedNetwork, Matrix)> {
    grow_stack_detailed(x, cfg).map(|g| (g.network, g.features))
}

#[derive(Debug, Clone)]
pub struct Growth {
    pub network: StackedNetwork,
    /// Last layer's features on the training input.
    pub features: Matrix,
    /// Wall-clock seconds per layer, including the diagnostics.
    pub layer_seconds: Vec<f64>,
}

pub fn grow_stack_detailed(x: &Matrix, cfg: &StackConfig) -> Result<Growth> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(PilaeError::arg("grow_stack: empty input"));
    }
    if x.cols() < 2 {
        return Err(PilaeError::arg("grow_stack: need at least 2 samples"));
    }

    let n = x.cols();
    let mut encoders = Vec::new();
    let mut decoders = Vec::new();
    let mut summaries = Vec::new();
    let mut current: Option<Matrix> = None;
    let mut layer_seconds = Vec::new();

    let stop_reason = loop {
        let started = Instant::now();
        let input = current.as_ref().unwrap_or(x);
        let (layer, features) = train_layer(input, &cfg.layer)?;

        let sigma = singular_values(&features)?;
        let feature_rank = numeric_rank(&sigma, features.rows(), features.cols());
        let distance = identity_distance_from_sigma(&sigma, n, cfg.layer.lambda1);
        log::info!(
            "layer {}: {} -> {} (rank {}), recon {:.4e}, identity distance {:.4e}",
            encoders.len(),
            layer.input_dim,
            layer.width,
            feature_rank,
            layer.recon_error,
            distance
        );
        summaries.push(LayerSummary {
            width: layer.width,
            input_dim: layer.input_dim,
            input_rank: layer.input_rank,
            applied_rule: layer.applied_rule,
            recon_error: layer.recon_error,
            recon_error_pre_tie: layer.recon_error_pre_tie,
            feature_rank,
            rank_ratio: feature_rank as f64 / layer.width as f64,
            identity_distance: distance,
        });
        let width = layer.width;
        if let Some(dec) = layer.decoder {
            decoders.push(dec);
        }
        encoders.push(EncoderLayer {
            weights: layer.encoder,
            activation: layer.activation,
            bias: layer.bias,
        });
        current = Some(features);
        layer_seconds.push(started.elapsed().as_secs_f64());

        if distance < cfg.epsilon {
            break StopReason::Epsilon;
        }
        if encoders.len() >= cfg.max_depth {
            break StopReason::MaxDepth;
        }
        let next_dim = width + usize::from(cfg.layer.bias);
        let next_rank = feature_rank.clamp(1, next_dim);
        let (_, next_width) = planned_width(&cfg.layer, next_rank, next_dim, n)?;
        if next_width < cfg.min_width {
            break StopReason::MinWidth;
        }
    };

    let net = StackedNetwork {
        encoders,
        decoders: cfg.layer.keep_decoder.then_some(decoders),
        growth: Some(GrowthLog {
            layers: summaries,
            stop_reason,
            epsilon: cfg.epsilon,
        }),
        readout: None,
    };
    Ok(Growth {
        network: net,
        features: current.expect("at least one layer is trained"),
        layer_seconds,
    })
}

/// Deep feature map: every encoder and activation applied in order.
pub fn transform(net: &StackedNetwork, x: &Matrix) -> Result<Matrix> {
    let (first, rest) = net
        .encoders
        .split_first()
        .ok_or_else(|| PilaeError::arg("transform: network has no layers"))?;
    let mut h = first.encode(x)?;
    for enc in rest {
        h = enc.encode(&h)?;
    }
    Ok(h)
}

/// Encoder weight matrices in layer order.
pub fn export_weights(net: &StackedNetwork) -> Vec<Matrix> {
    net.encoders.iter().map(|e| e.weights.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(d: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(d, n, |_, _| rng.random_range(0.0..1.0))
    }

    fn cfg(rule: WidthRule, max_depth: usize, epsilon: f64) -> StackConfig {
        StackConfig {
            layer: LayerConfig {
                width_rule: rule,
                ..LayerConfig::default()
            },
            epsilon,
            max_depth,
            min_width: 1,
        }
    }

    #[test]
    fn depth_cap_of_one() {
        let x = random(12, 60, 1);
        let net = grow_stack(&x, &cfg(WidthRule::Decay { beta: 0.9 }, 1, 1e-12)).unwrap();
        assert_eq!(net.depth(), 1);
        assert_eq!(net.growth.unwrap().stop_reason, StopReason::MaxDepth);
    }

    #[test]
    fn invertible_square_input_stops_on_epsilon() {
        let x = random(6, 6, 2);
        let c = StackConfig {
            layer: LayerConfig {
                width_rule: WidthRule::Decay { beta: 1.0 },
                lambda1: 1e-12,
                tie_weights: false,
                ..LayerConfig::default()
            },
            epsilon: 1e-3,
            max_depth: 5,
            min_width: 1,
        };
        let net = grow_stack(&x, &c).unwrap();
        let log = net.growth.unwrap();
        assert_eq!(net.encoders.len(), 1);
        assert_eq!(log.stop_reason, StopReason::Epsilon);
        assert!(log.layers[0].identity_distance < 1e-3);
    }

    #[test]
    fn min_width_stops_growth() {
        let x = random(10, 50, 3);
        let mut c = cfg(WidthRule::Decay { beta: 0.5 }, 10, 1e-12);
        c.min_width = 3;
        let net = grow_stack(&x, &c).unwrap();
        // 10 -> 5, next would be 2
        assert_eq!(net.widths(), vec![5]);
        assert_eq!(net.growth.unwrap().stop_reason, StopReason::MinWidth);
    }

    #[test]
    fn transform_reproduces_training_features() {
        let x = random(9, 40, 4);
        let (net, h) =
            grow_stack_with_features(&x, &cfg(WidthRule::Decay { beta: 0.8 }, 3, 1e-12)).unwrap();
        assert_eq!(net.depth(), 3);
        assert_eq!(transform(&net, &x).unwrap(), h);
    }

    #[test]
    fn two_layer_transform_matches_manual_composition() {
        let x = random(5, 6, 5);
        let net = grow_stack(&x, &cfg(WidthRule::Decay { beta: 0.8 }, 2, 1e-12)).unwrap();
        assert_eq!(net.depth(), 2);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (w0, w1) = (&net.encoders[0].weights, &net.encoders[1].weights);
        let mut h0 = Matrix::zeros(w0.rows(), 6);
        for i in 0..w0.rows() {
            for j in 0..6 {
                h0[(i, j)] = sig((0..5).map(|k| w0[(i, k)] * x[(k, j)]).sum());
            }
        }
        let out = transform(&net, &x).unwrap();
        for i in 0..w1.rows() {
            for j in 0..6 {
                let want = sig((0..w0.rows()).map(|k| w1[(i, k)] * h0[(k, j)]).sum());
                assert!((out[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_stack_rejected() {
        let net = StackedNetwork {
            encoders: vec![],
            decoders: None,
            growth: None,
            readout: None,
        };
        assert!(transform(&net, &Matrix::identity(2)).is_err());
        assert!(StackedNetwork::from_encoders(vec![]).is_err());
    }

    #[test]
    fn export_shapes_chain() {
        let x = random(10, 50, 6);
        let net = grow_stack(&x, &cfg(WidthRule::Decay { beta: 0.9 }, 3, 1e-12)).unwrap();
        let w = export_weights(&net);
        assert_eq!(w.len(), net.depth());
        assert_eq!(w[0], net.encoders[0].weights);
        for pair in w.windows(2) {
            assert_eq!(pair[1].cols(), pair[0].rows());
        }
    }

    #[test]
    fn growth_is_deterministic() {
        let x = random(8, 30, 7);
        let c = cfg(WidthRule::RankBlend { alpha: 0.5 }, 3, 1e-9);
        assert_eq!(grow_stack(&x, &c).unwrap(), grow_stack(&x, &c).unwrap());
    }

    #[test]
    fn stop_reason_consistent_with_trace() {
        let x = random(10, 40, 8);
        for eps in [1e-12, 1e-3, 0.5] {
            let net = grow_stack(&x, &cfg(WidthRule::Decay { beta: 0.9 }, 4, eps)).unwrap();
            let log = net.growth.unwrap();
            let dists: Vec<f64> = log.layers.iter().map(|l| l.identity_distance).collect();
            // only the last layer may satisfy the criterion
            assert!(dists[..dists.len() - 1].iter().all(|&d| d >= eps));
            match log.stop_reason {
                StopReason::Epsilon => assert!(*dists.last().unwrap() < eps),
                StopReason::MaxDepth => assert_eq!(dists.len(), 4),
                StopReason::MinWidth => {}
            }
            for l in &log.layers {
                assert!((0.0..=1.0).contains(&l.rank_ratio));
            }
        }
    }

    #[test]
    fn decoders_retained_reconstruct_input_shape() {
        let x = random(8, 30, 9);
        let mut c = cfg(WidthRule::Decay { beta: 0.9 }, 2, 1e-12);
        c.layer.keep_decoder = true;
        let (net, h) = grow_stack_with_features(&x, &c).unwrap();
        let rec = net.reconstruct(&h).unwrap();
        assert_eq!(rec.shape(), x.shape());
        assert!(rec.is_finite());
    }
}
