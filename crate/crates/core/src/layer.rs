//! Closed-form training of a single autoencoder.
//!
//! The encoder is the leading block of rows of the input's pseudoinverse, the
//! decoder is the ridge solution that maps hidden features back to the input,
//! and (optionally) the encoder is then replaced by the transposed decoder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PilaeError, Result};
use crate::linalg::{ridge_fit, svd, truncated_pinv_from};
use crate::matrix::Matrix;

/// Default ridge shift for the decoder solve.
pub const DEFAULT_LAMBDA1: f64 = 1e-6;

/// Inputs whose rank is within this fraction of their dimension are treated
/// as full rank, and the rank-blend rule gives way to the decay rule.
const NEAR_FULL_RANK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// `1` when the input is at least `0.5`, else `0`.
    Step,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Step => {
                if x >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
            Activation::Step => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Step),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Step => "step",
        })
    }
}

impl FromStr for Activation {
    type Err = PilaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "step" => Ok(Activation::Step),
            other => Err(PilaeError::arg(format!("unknown activation {other:?}"))),
        }
    }
}

pub fn apply_activation(a: Activation, z: &Matrix) -> Matrix {
    z.map(|v| a.apply(v))
}

/// How many hidden units a layer gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WidthRule {
    /// `⌊r + α(d − r)⌋`: interpolates between the input rank and dimension.
    RankBlend { alpha: f64 },
    /// `⌊β·d⌋`
    Decay { beta: f64 },
}

impl WidthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WidthRule::RankBlend { alpha } if !(0.0..=1.0).contains(&alpha) => Err(
                PilaeError::arg(format!("rank-blend alpha must lie in [0, 1], got {alpha}")),
            ),
            WidthRule::Decay { beta } if !(beta > 0.0 && beta <= 1.0) => Err(PilaeError::arg(
                format!("decay beta must lie in (0, 1], got {beta}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for WidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidthRule::RankBlend { alpha } => write!(f, "blend:{alpha}"),
            WidthRule::Decay { beta } => write!(f, "decay:{beta}"),
        }
    }
}

impl FromStr for WidthRule {
    type Err = PilaeError;

    /// Parses `blend:<alpha>` or `decay:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| PilaeError::arg(format!("width rule {s:?}: expected kind:value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| PilaeError::arg(format!("width rule {s:?}: bad number")))?;
        let rule = match kind.trim() {
            "blend" => WidthRule::RankBlend { alpha: value },
            "decay" => WidthRule::Decay { beta: value },
            other => return Err(PilaeError::arg(format!("unknown width rule {other:?}"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

pub fn select_width(rule: WidthRule, r: usize, d: usize) -> Result<usize> {
    rule.validate()?;
    if d == 0 {
        return Err(PilaeError::arg("select_width: dimension must be positive"));
    }
    // the small offset keeps exact products such as 0.5 * 10 from flooring
    // one below after rounding
    let raw = match rule {
        WidthRule::RankBlend { alpha } => {
            if r == 0 || r > d {
                return Err(PilaeError::arg(format!(
                    "select_width: rank {r} outside 1..={d}"
                )));
            }
            r as f64 + alpha * (d - r) as f64
        }
        WidthRule::Decay { beta } => beta * d as f64,
    };
    Ok(((raw + 1e-9).floor() as usize).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub width_rule: WidthRule,
    pub activation: Activation,
    pub lambda1: f64,
    pub tie_weights: bool,
    /// Append a constant-one row to the input so the encoder gets a bias column.
    pub bias: bool,
    /// Decay factor used when a rank-blend rule meets a near-full-rank input.
    pub fallback_beta: f64,
    pub keep_decoder: bool,
}

impl Default for LayerConfig {
    fn default() -> Self {
        LayerConfig {
            width_rule: WidthRule::RankBlend { alpha: 0.5 },
            activation: Activation::Sigmoid,
            lambda1: DEFAULT_LAMBDA1,
            tie_weights: true,
            bias: false,
            fallback_beta: 0.9,
            keep_decoder: false,
        }
    }
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        self.width_rule.validate()?;
        WidthRule::Decay {
            beta: self.fallback_beta,
        }
        .validate()?;
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(PilaeError::arg(format!(
                "lambda1 must be positive, got {}",
                self.lambda1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderLayer {
    /// `p × d` (or `p × (d + 1)` with bias augmentation).
    pub encoder: Matrix,
    pub activation: Activation,
    pub bias: bool,
    pub width: usize,
    pub input_dim: usize,
    pub input_rank: usize,
    /// The rule actually applied, after any near-full-rank fallback.
    pub applied_rule: WidthRule,
    /// Mean squared reconstruction error of the final (post-tie) encoder.
    pub recon_error: f64,
    pub recon_error_pre_tie: f64,
    pub decoder: Option<Matrix>,
}

impl AutoencoderLayer {
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        encode(&self.encoder, self.activation, self.bias, x)
    }
}

pub(crate) fn encode(
    encoder: &Matrix,
    activation: Activation,
    bias: bool,
    x: &Matrix,
) -> Result<Matrix> {
    let expected = encoder.cols() - usize::from(bias);
    if x.rows() != expected {
        return Err(PilaeError::shape(
            "encode",
            format!("encoder expects {expected} input rows, got {}", x.rows()),
        ));
    }
    let mut z = if bias {
        encoder.matmul(&x.with_ones_row())
    } else {
        encoder.matmul(x)
    };
    z.map_inplace(|v| activation.apply(v));
    Ok(z)
}

/// `(1/N) · ‖X − W_d · H‖²_F`
pub fn reconstruction_error(x: &Matrix, w_d: &Matrix, h: &Matrix) -> Result<f64> {
    if w_d.cols() != h.rows() || w_d.rows() != x.rows() || h.cols() != x.cols() {
        return Err(PilaeError::shape(
            "reconstruction_error",
            format!(
                "X {:?}, W_d {:?}, H {:?}",
                x.shape(),
                w_d.shape(),
                h.shape()
            ),
        ));
    }
    if x.cols() == 0 {
        return Err(PilaeError::arg("reconstruction_error: no samples"));
    }
    Ok(x.sub(&w_d.matmul(h)).frobenius_sq() / x.cols() as f64)
}

/// Width a layer will get for an input of rank `rank`, dimension `d` and `n`
/// samples, together with the rule that produced it.
pub fn planned_width(
    cfg: &LayerConfig,
    rank: usize,
    d: usize,
    n: usize,
) -> Result<(WidthRule, usize)> {
    let rule = match cfg.width_rule {
        WidthRule::RankBlend { .. } if ((d - rank.min(d)) as f64) < NEAR_FULL_RANK * d as f64 => {
            log::debug!(
                "rank {rank} of {d}-dimensional input is near full; using decay:{}",
                cfg.fallback_beta
            );
            WidthRule::Decay {
                beta: cfg.fallback_beta,
            }
        }
        rule => rule,
    };
    let width = select_width(rule, rank, d)?;
    // the truncated pseudoinverse has only n rows
    Ok((rule, width.min(n)))
}

/// Trains one autoencoder on `x` (`d × N`) and returns it together with the
/// hidden feature matrix `H` (`p × N`) that feeds the next layer.
pub fn train_layer(x: &Matrix, cfg: &LayerConfig) -> Result<(AutoencoderLayer, Matrix)> {
    cfg.validate()?;
    if x.cols() < 2 {
        return Err(PilaeError::arg(format!(
            "train_layer: need at least 2 samples, got {}",
            x.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(PilaeError::arg("train_layer: zero-dimensional input"));
    }
    if !x.is_finite() {
        return Err(PilaeError::arg("train_layer: input contains NaN or infinity"));
    }

    let augmented;
    let input = if cfg.bias {
        augmented = x.with_ones_row();
        &augmented
    } else {
        x
    };
    let (d, n) = input.shape();

    let factors = svd(input)?;
    let rank = factors.rank();
    if rank == 0 {
        return Err(PilaeError::Training(
            "input matrix has rank 0 (all zeros)".into(),
        ));
    }

    let (applied_rule, width) = planned_width(cfg, rank, d, n)?;

    let mut encoder = truncated_pinv_from(&factors, d, n, width)?;
    drop(factors);
    let mut hidden = encoder.matmul(input);
    hidden.map_inplace(|v| cfg.activation.apply(v));

    let decoder = ridge_fit(input, &hidden, cfg.lambda1)?;
    let recon_error_pre_tie = reconstruction_error(input, &decoder, &hidden)?;
    let mut recon_error = recon_error_pre_tie;

    if cfg.tie_weights {
        encoder = decoder.transpose();
        hidden = encoder.matmul(input);
        hidden.map_inplace(|v| cfg.activation.apply(v));
        recon_error = reconstruction_error(input, &decoder, &hidden)?;
    }

    if !hidden.is_finite() || !encoder.is_finite() || !recon_error.is_finite() {
        return Err(PilaeError::Training(
            "non-finite weights or features; lambda1 may be too small for this input".into(),
        ));
    }

    let layer = AutoencoderLayer {
        encoder,
        activation: cfg.activation,
        bias: cfg.bias,
        width,
        input_dim: x.rows(),
        input_rank: rank,
        applied_rule,
        recon_error,
        recon_error_pre_tie,
        decoder: cfg.keep_decoder.then_some(decoder),
    };
    Ok((layer, hidden))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pinv;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn low_rank(d: usize, n: usize, r: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
        a.matmul(&b)
    }

    fn untied(rule: WidthRule) -> LayerConfig {
        LayerConfig {
            width_rule: rule,
            tie_weights: false,
            ..LayerConfig::default()
        }
    }

    #[test]
    fn decay_widths_match_reported_architecture() {
        let rule = WidthRule::Decay { beta: 0.9 };
        assert_eq!(select_width(rule, 784, 784).unwrap(), 705);
        assert_eq!(select_width(rule, 705, 705).unwrap(), 634);
    }

    #[test]
    fn blend_endpoints() {
        let lo = WidthRule::RankBlend { alpha: 0.0 };
        let hi = WidthRule::RankBlend { alpha: 1.0 };
        assert_eq!(select_width(lo, 540, 562).unwrap(), 540);
        assert_eq!(select_width(hi, 540, 562).unwrap(), 562);
        assert_eq!(
            select_width(WidthRule::RankBlend { alpha: 0.5 }, 4, 10).unwrap(),
            7
        );
    }

    #[test]
    fn width_arguments_validated() {
        assert!(select_width(WidthRule::RankBlend { alpha: 1.5 }, 3, 5).is_err());
        assert!(select_width(WidthRule::RankBlend { alpha: 0.5 }, 0, 5).is_err());
        assert!(select_width(WidthRule::RankBlend { alpha: 0.5 }, 6, 5).is_err());
        assert!(select_width(WidthRule::Decay { beta: 0.0 }, 3, 5).is_err());
        assert!(select_width(WidthRule::Decay { beta: 0.9 }, 3, 0).is_err());
        // clamp to one unit
        assert_eq!(select_width(WidthRule::Decay { beta: 0.1 }, 1, 3).unwrap(), 1);
    }

    #[test]
    fn width_rule_parsing() {
        assert_eq!(
            "decay:0.9".parse::<WidthRule>().unwrap(),
            WidthRule::Decay { beta: 0.9 }
        );
        assert_eq!(
            "blend:0.25".parse::<WidthRule>().unwrap(),
            WidthRule::RankBlend { alpha: 0.25 }
        );
        assert!("blend:1.5".parse::<WidthRule>().is_err());
        assert!("pyramid:0.5".parse::<WidthRule>().is_err());
        assert!("decay".parse::<WidthRule>().is_err());
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Step.apply(0.5), 1.0);
        assert_eq!(Activation::Step.apply(0.49), 0.0);
        for a in [Activation::Sigmoid, Activation::Tanh, Activation::Step] {
            assert_eq!(Activation::from_tag(a.tag()), Some(a));
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
    }

    #[test]
    fn reconstruction_error_examples() {
        let x = Matrix::identity(2);
        assert_eq!(reconstruction_error(&x, &x, &x).unwrap(), 0.0);
        let zero = Matrix::zeros(2, 2);
        assert_relative_eq!(reconstruction_error(&x, &zero, &zero).unwrap(), 1.0);
        let scaled = x.scale(3.0);
        assert_relative_eq!(reconstruction_error(&scaled, &zero, &zero).unwrap(), 9.0);
        assert!(reconstruction_error(&x, &Matrix::zeros(2, 3), &zero).is_err());
    }

    #[test]
    fn diagonal_input_encoder_is_scaled_identity() {
        let c = 2.0;
        let x = Matrix::identity(4).scale(c);
        let cfg = untied(WidthRule::Decay { beta: 1.0 });
        let (layer, h) = train_layer(&x, &cfg).unwrap();
        assert!(layer.encoder.sub(&Matrix::identity(4).scale(1.0 / c)).max_abs() < 1e-15);
        let on = 1.0 / (1.0 + (-1.0f64).exp());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { on } else { 0.5 };
                assert_relative_eq!(h[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn untied_encoder_rows_come_from_pinv() {
        let x = low_rank(8, 30, 8, 4);
        let cfg = untied(WidthRule::Decay { beta: 0.75 });
        let (layer, _) = train_layer(&x, &cfg).unwrap();
        let full = pinv(&x).unwrap();
        assert_eq!(layer.encoder, full.row_range(0..layer.width));
    }

    #[test]
    fn recon_error_matches_independent_recompute() {
        let x = low_rank(6, 20, 6, 9);
        let cfg = LayerConfig {
            keep_decoder: true,
            ..untied(WidthRule::Decay { beta: 0.5 })
        };
        let (layer, h) = train_layer(&x, &cfg).unwrap();
        let wd = layer.decoder.as_ref().unwrap();
        let mut resid = 0.0;
        for j in 0..x.cols() {
            for i in 0..x.rows() {
                let rec: f64 = (0..h.rows()).map(|k| wd[(i, k)] * h[(k, j)]).sum();
                resid += (x[(i, j)] - rec).powi(2);
            }
        }
        assert_relative_eq!(layer.recon_error, resid / 20.0, max_relative = 1e-10);
    }

    #[test]
    fn blend_zero_gives_rank_width() {
        let x = low_rank(10, 40, 4, 1);
        let (layer, h) = train_layer(&x, &untied(WidthRule::RankBlend { alpha: 0.0 })).unwrap();
        assert_eq!(layer.input_rank, 4);
        assert_eq!(layer.width, 4);
        assert_eq!(layer.encoder.shape(), (4, 10));
        assert_eq!(h.shape(), (4, 40));
    }

    #[test]
    fn near_full_rank_input_falls_back_to_decay() {
        let x = low_rank(10, 40, 10, 2);
        let cfg = untied(WidthRule::RankBlend { alpha: 0.0 });
        let (layer, _) = train_layer(&x, &cfg).unwrap();
        assert_eq!(layer.applied_rule, WidthRule::Decay { beta: 0.9 });
        assert_eq!(layer.width, 9);
    }

    #[test]
    fn tied_layer_uses_transposed_decoder() {
        let x = low_rank(7, 25, 5, 3);
        let cfg = LayerConfig {
            keep_decoder: true,
            ..LayerConfig::default()
        };
        let (layer, h) = train_layer(&x, &cfg).unwrap();
        assert_eq!(layer.encoder, layer.decoder.as_ref().unwrap().transpose());
        assert_eq!(h, layer.encode(&x).unwrap());
        assert!(layer.recon_error.is_finite() && layer.recon_error >= 0.0);
    }

    #[test]
    fn bias_augmentation_adds_encoder_column() {
        let x = low_rank(5, 20, 5, 6);
        let cfg = LayerConfig {
            bias: true,
            width_rule: WidthRule::Decay { beta: 0.8 },
            ..LayerConfig::default()
        };
        let (layer, h) = train_layer(&x, &cfg).unwrap();
        assert_eq!(layer.encoder.cols(), 6);
        assert_eq!(layer.input_dim, 5);
        assert_eq!(layer.encode(&x).unwrap(), h);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let cfg = LayerConfig::default();
        assert!(matches!(
            train_layer(&Matrix::zeros(3, 5), &cfg),
            Err(PilaeError::Training(_))
        ));
        assert!(train_layer(&Matrix::identity(3).col_range(0..1), &cfg).is_err());
        let bad = LayerConfig {
            lambda1: 0.0,
            ..LayerConfig::default()
        };
        assert!(train_layer(&Matrix::identity(3), &bad).is_err());
    }
}
