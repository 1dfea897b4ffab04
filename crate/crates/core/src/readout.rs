//! Supervised heads on top of the feature stack, plus last-width estimation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PilaeError, Result};
use crate::linalg::{numeric_rank, ridge_fit, svd, ShiftedGram};
use crate::matrix::Matrix;

/// Ridge shift of the preliminary fit that seeds the regularization estimate.
pub const PRELIMINARY_LAMBDA: f64 = 1e-6;

/// Multipliers applied to the point estimate during the λ search.
pub const LAMBDA_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Shln,
    Softmax,
    Cascade,
}

impl HeadKind {
    pub fn tag(self) -> u8 {
        match self {
            HeadKind::Shln => 1,
            HeadKind::Softmax => 2,
            HeadKind::Cascade => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(HeadKind::Shln),
            2 => Some(HeadKind::Softmax),
            3 => Some(HeadKind::Cascade),
            _ => None,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Shln => "shln",
            HeadKind::Softmax => "softmax",
            HeadKind::Cascade => "cascade",
        })
    }
}

impl FromStr for HeadKind {
    type Err = PilaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shln" => Ok(HeadKind::Shln),
            "softmax" => Ok(HeadKind::Softmax),
            "cascade" => Ok(HeadKind::Cascade),
            other => Err(PilaeError::arg(format!(
                "unknown head '{other}' (expected shln, softmax or cascade)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutHead {
    pub kind: HeadKind,
    /// `K × p`: output weights for shln/cascade, `Θ` for softmax.
    pub weights: Matrix,
    /// Ridge shift of the output weights; `None` for softmax.
    pub lambda: Option<f64>,
    pub classes: usize,
}

impl ReadoutHead {
    pub fn new(kind: HeadKind, weights: Matrix, lambda: Option<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PilaeError::arg("readout weights are empty"));
        }
        match (kind, lambda) {
            (HeadKind::Softmax, _) => {}
            (_, Some(l)) if l > 0.0 && l.is_finite() => {}
            (_, l) => {
                return Err(PilaeError::arg(format!(
                    "{kind} head needs a positive lambda, got {l:?}"
                )))
            }
        }
        Ok(ReadoutHead {
            kind,
            classes: weights.rows(),
            weights,
            lambda: if kind == HeadKind::Softmax { None } else { lambda },
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Raw class scores `W · Y`, `K × N`.
    pub fn scores(&self, y: &Matrix) -> Result<Matrix> {
        if y.rows() != self.feature_dim() {
            return Err(PilaeError::shape(
                "readout",
                format!(
                    "head expects {} features, got {}",
                    self.feature_dim(),
                    y.rows()
                ),
            ));
        }
        Ok(self.weights.matmul(y))
    }

    /// Class probabilities; for the shln head these are the raw scores.
    pub fn outputs(&self, y: &Matrix) -> Result<Matrix> {
        let s = self.scores(y)?;
        Ok(match self.kind {
            HeadKind::Shln => s,
            HeadKind::Softmax | HeadKind::Cascade => softmax_columns(s),
        })
    }

    pub fn predict(&self, y: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_columns(&self.scores(y)?))
    }
}

/// `K × N` one-hot targets with `{0, 1}` entries.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix> {
    let mut z = Matrix::zeros(k, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(PilaeError::arg(format!(
                "label {l} at sample {j} is outside 0..{k}"
            )));
        }
        z[(l, j)] = 1.0;
    }
    Ok(z)
}

pub fn argmax_columns(s: &Matrix) -> Vec<usize> {
    (0..s.cols())
        .map(|j| {
            let col = s.column(j);
            let mut best = 0;
            for (i, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predicted.len(), labels.len(), "prediction/label length");
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// `counts[true][predicted]`
pub fn confusion_matrix(predicted: &[usize], labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; k]; k];
    for (&p, &l) in predicted.iter().zip(labels) {
        if p < k && l < k {
            counts[l][p] += 1;
        }
    }
    counts
}

/// Point estimate of the output-layer regularization:
/// `d_x² · [1 + (d_x − 1)²] · residual / (n · Σw²)`.
pub fn estimate_reg_param(
    residual_sq_sum: f64,
    weight_sq_sum: f64,
    d_x: usize,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(PilaeError::arg("estimate_reg_param: n must be at least 1"));
    }
    if weight_sq_sum.is_nan() || weight_sq_sum <= 0.0 {
        return Err(PilaeError::arg(format!(
            "estimate_reg_param: weight sum of squares must be positive, got {weight_sq_sum}"
        )));
    }
    if residual_sq_sum.is_nan() || residual_sq_sum < 0.0 {
        return Err(PilaeError::arg(format!(
            "estimate_reg_param: residual must be non-negative, got {residual_sq_sum}"
        )));
    }
    let d = d_x as f64;
    let dm1 = d - 1.0;
    Ok(d * d * (1.0 + dm1 * dm1) * residual_sq_sum / (n as f64 * weight_sq_sum))
}

/// `Z · Yᵀ (Y Yᵀ + λI)⁻¹`, shape `m × p`.
pub fn fit_output_weights(y: &Matrix, z: &Matrix, lambda: f64) -> Result<Matrix> {
    if y.cols() != z.cols() {
        return Err(PilaeError::arg(format!(
            "fit_output_weights: features have {} samples, targets {}",
            y.cols(),
            z.cols()
        )));
    }
    ridge_fit(z, y, lambda)
}

/// Regularization point estimate from a preliminary near-unregularized fit.
pub fn lambda_point_estimate(y: &Matrix, z: &Matrix) -> Result<f64> {
    let w = fit_output_weights(y, z, PRELIMINARY_LAMBDA)?;
    let resid = w.matmul(y).sub(z).frobenius_sq();
    estimate_reg_param(resid, w.frobenius_sq(), y.rows(), y.cols())
}

/// Sample `i` is held out when `⌊(i+1)f⌋ > ⌊if⌋`, which spreads the
/// validation part evenly over the sample order.
pub fn holdout_mask(n: usize, val_fraction: f64) -> Vec<bool> {
    (0..n)
        .map(|i| ((i + 1) as f64 * val_fraction).floor() > (i as f64 * val_fraction).floor())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub lambda_hat: f64,
    /// `(λ, validation accuracy)` in grid order.
    pub evaluated: Vec<(f64, f64)>,
    pub fits: usize,
}

pub fn search_lambda(
    y: &Matrix,
    z: &Matrix,
    labels: &[usize],
    lambda_hat: f64,
    val_fraction: f64,
) -> Result<LambdaSearch> {
    if !(lambda_hat > 0.0 && lambda_hat.is_finite()) {
        return Err(PilaeError::arg(format!(
            "search_lambda: point estimate must be positive, got {lambda_hat}"
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(PilaeError::arg(format!(
            "search_lambda: validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n = y.cols();
    if z.cols() != n || labels.len() != n {
        return Err(PilaeError::arg("search_lambda: features, targets and labels differ in length"));
    }
    let k = z.rows();
    let mask = holdout_mask(n, val_fraction);
    let train: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let val: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if val.is_empty() || train.is_empty() {
        return Err(PilaeError::arg(format!(
            "search_lambda: {n} samples cannot be split with fraction {val_fraction}"
        )));
    }
    let mut seen = vec![false; k];
    for &i in &train {
        if labels[i] < k {
            seen[labels[i]] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(PilaeError::arg(format!(
            "search_lambda: class {missing} is absent from the training part of the split"
        )));
    }

    let y_tr = y.select_columns(&train);
    let y_val = y.select_columns(&val);
    let val_labels: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
    let gram = y_tr.gram_rows();
    let zyt = z.select_columns(&train).matmul_t(&y_tr);

    let mut evaluated = Vec::with_capacity(LAMBDA_GRID.len());
    let mut best: Option<(f64, f64)> = None;
    for m in LAMBDA_GRID {
        let lambda = m * lambda_hat;
        let w = ShiftedGram::new(&gram, lambda)?.solve_right(&zyt);
        let acc = accuracy(&argmax_columns(&w.matmul(&y_val)), &val_labels);
        log::info!("lambda {lambda:.4e}: validation accuracy {acc:.4}");
        evaluated.push((lambda, acc));
        if best.is_none_or(|(_, a)| acc > a) {
            best = Some((lambda, acc));
        }
    }
    let fits = evaluated.len();
    log::info!("lambda search performed {fits} fits");
    Ok(LambdaSearch {
        lambda: best.expect("grid is non-empty").0,
        lambda_hat,
        evaluated,
        fits,
    })
}

/// How the shln output regularization is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Auto { val_fraction: f64 },
    Fixed(f64),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto { val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShlnFit {
    pub lambda: f64,
    pub search: Option<LambdaSearch>,
}

pub fn fit_shln(
    y: &Matrix,
    labels: &[usize],
    k: usize,
    choice: LambdaChoice,
) -> Result<(ReadoutHead, ShlnFit)> {
    let z = one_hot(labels, k)?;
    let (lambda, search) = match choice {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::Auto { val_fraction } => {
            let hat = lambda_point_estimate(y, &z)?;
            // a perfect preliminary fit gives a zero estimate
            let hat = if hat > 0.0 { hat } else { PRELIMINARY_LAMBDA };
            log::info!("lambda point estimate {hat:.4e}");
            let s = search_lambda(y, &z, labels, hat, val_fraction)?;
            (s.lambda, Some(s))
        }
    };
    let w = fit_output_weights(y, &z, lambda)?;
    Ok((
        ReadoutHead::new(HeadKind::Shln, w, Some(lambda))?,
        ShlnFit { lambda, search },
    ))
}

/// Columnwise softmax with max subtraction.
pub fn softmax_columns(mut s: Matrix) -> Matrix {
    let k = s.rows();
    for j in 0..s.cols() {
        let col = s.column_mut(j);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in col.iter_mut() {
            *v /= sum;
        }
        debug_assert_eq!(col.len(), k);
    }
    s
}

/// Posterior probabilities `softmax(Θ x)` per column.
pub fn softmax_predict(theta: &Matrix, x: &Matrix) -> Result<Matrix> {
    if theta.cols() != x.rows() {
        return Err(PilaeError::shape(
            "softmax_predict",
            format!("theta {:?} against input {:?}", theta.shape(), x.shape()),
        ));
    }
    Ok(softmax_columns(theta.matmul(x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxOptions {
    pub step: f64,
    pub epochs: usize,
    /// Halve the step whenever a full-batch update would raise the loss.
    pub backtrack: bool,
}

impl Default for SoftmaxOptions {
    fn default() -> Self {
        SoftmaxOptions {
            step: 0.1,
            epochs: 500,
            backtrack: true,
        }
    }
}

/// Mean cross-entropy and its gradient with respect to `Θ`.
pub fn softmax_loss_grad(theta: &Matrix, x: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (loss, p) = softmax_loss_probs(theta, x, labels)?;
    let n = x.cols() as f64;
    let mut diff = p;
    for (j, &l) in labels.iter().enumerate() {
        diff[(l, j)] -= 1.0;
    }
    Ok((loss, diff.matmul_t(x).scale(1.0 / n)))
}

pub fn softmax_loss(theta: &Matrix, x: &Matrix, labels: &[usize]) -> Result<f64> {
    softmax_loss_probs(theta, x, labels).map(|(l, _)| l)
}

fn softmax_loss_probs(theta: &Matrix, x: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != x.cols() {
        return Err(PilaeError::arg(format!(
            "softmax: {} labels for {} samples",
            labels.len(),
            x.cols()
        )));
    }
    if x.cols() == 0 {
        return Err(PilaeError::arg("softmax: no samples"));
    }
    let p = softmax_predict(theta, x)?;
    let mut loss = 0.0;
    for (j, &l) in labels.iter().enumerate() {
        if l >= theta.rows() {
            return Err(PilaeError::arg(format!(
                "softmax: label {l} at sample {j} is outside 0..{}",
                theta.rows()
            )));
        }
        let q = p[(l, j)];
        loss -= if q.is_nan() { q } else { q.max(f64::MIN_POSITIVE).ln() };
    }
    Ok((loss / x.cols() as f64, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTrace {
    pub theta: Matrix,
    /// Loss before the first update and after every epoch.
    pub losses: Vec<f64>,
    pub final_step: f64,
}

pub fn softmax_fit(x: &Matrix, labels: &[usize], k: usize, opt: &SoftmaxOptions) -> Result<Matrix> {
    softmax_fit_traced(x, labels, k, opt).map(|t| t.theta)
}

pub fn softmax_fit_traced(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    opt: &SoftmaxOptions,
) -> Result<SoftmaxTrace> {
    if k == 0 {
        return Err(PilaeError::arg("softmax_fit: need at least one class"));
    }
    if !(opt.step > 0.0 && opt.step.is_finite()) {
        return Err(PilaeError::arg(format!(
            "softmax_fit: step must be positive, got {}",
            opt.step
        )));
    }
    if x.cols() < k {
        return Err(PilaeError::arg(format!(
            "softmax_fit: {} samples for {k} classes",
            x.cols()
        )));
    }
    let mut theta = Matrix::zeros(k, x.rows());
    let mut step = opt.step;
    let (mut loss, mut grad) = softmax_loss_grad(&theta, x, labels)?;
    if !loss.is_finite() {
        return Err(PilaeError::Divergence { epoch: 0, step });
    }
    let mut losses = vec![loss];
    'epochs: for epoch in 1..=opt.epochs {
        loop {
            let trial = theta.sub(&grad.scale(step));
            let (trial_loss, trial_grad) = softmax_loss_grad(&trial, x, labels)?;
            if !trial_loss.is_finite() {
                return Err(PilaeError::Divergence { epoch, step });
            }
            if !opt.backtrack || trial_loss <= loss {
                theta = trial;
                loss = trial_loss;
                grad = trial_grad;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                log::debug!("softmax step underflow at epoch {epoch}; stopping");
                break 'epochs;
            }
        }
        losses.push(loss);
    }
    Ok(SoftmaxTrace {
        theta,
        losses,
        final_step: step,
    })
}

pub fn fit_softmax_head(
    y: &Matrix,
    labels: &[usize],
    k: usize,
    opt: &SoftmaxOptions,
) -> Result<ReadoutHead> {
    let theta = softmax_fit(y, labels, k, opt)?;
    ReadoutHead::new(HeadKind::Softmax, theta, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthRecord {
    pub r: usize,
    pub n: usize,
    pub p_star: usize,
    /// Input dimension, used only by the fallback branch.
    #[serde(default)]
    pub d: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRegression {
    /// Coefficients of `[1, r, N, r², N²]`.
    pub theta: [f64; 5],
    pub alpha_fallback: f64,
    /// Sum of squared residuals of the fit.
    pub residual: f64,
}

impl WidthRegression {
    pub fn new(theta: [f64; 5], alpha_fallback: f64) -> Self {
        WidthRegression {
            theta,
            alpha_fallback,
            residual: 0.0,
        }
    }

    pub fn polynomial(&self, r: usize, n: usize) -> f64 {
        let (r, n) = (r as f64, n as f64);
        let t = &self.theta;
        t[0] + t[1] * r + t[2] * n + t[3] * r * r + t[4] * n * n
    }
}

pub const BASIS_NAMES: [&str; 5] = ["1", "r", "N", "r^2", "N^2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub width: usize,
    /// `P(r, N)` after rounding up.
    pub predicted: i64,
    pub fallback: bool,
}

pub fn estimate_last_width(r: usize, n: usize, reg: &WidthRegression, d: usize) -> usize {
    estimate_last_width_detailed(r, n, reg, d).width
}

pub fn estimate_last_width_detailed(
    r: usize,
    n: usize,
    reg: &WidthRegression,
    d: usize,
) -> WidthEstimate {
    let raw = reg.polynomial(r, n).ceil();
    let predicted = if raw.is_finite() {
        raw.clamp(i64::MIN as f64, i64::MAX as f64) as i64
    } else {
        0
    };
    if predicted > 0 {
        return WidthEstimate {
            width: predicted as usize,
            predicted,
            fallback: false,
        };
    }
    let spare = d.saturating_sub(r) as f64;
    WidthEstimate {
        width: (r as f64 + reg.alpha_fallback * spare + 1e-9).floor() as usize,
        predicted,
        fallback: true,
    }
}

pub fn fit_width_regression(records: &[WidthRecord]) -> Result<WidthRegression> {
    fit_width_regression_with(records, 0.5)
}

pub fn fit_width_regression_with(
    records: &[WidthRecord],
    alpha_fallback: f64,
) -> Result<WidthRegression> {
    if records.len() < 5 {
        return Err(PilaeError::arg(format!(
            "width regression needs at least 5 records, got {}",
            records.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha_fallback) {
        return Err(PilaeError::arg(format!(
            "fallback alpha must lie in [0, 1], got {alpha_fallback}"
        )));
    }
    let m = records.len();
    let basis = |rec: &WidthRecord| {
        let (r, n) = (rec.r as f64, rec.n as f64);
        [1.0, r, n, r * r, n * n]
    };
    let mut design = Matrix::zeros(m, 5);
    for (i, rec) in records.iter().enumerate() {
        for (c, v) in basis(rec).into_iter().enumerate() {
            design[(i, c)] = v;
        }
    }
    let mut scale = [1.0; 5];
    for (c, s) in scale.iter_mut().enumerate() {
        let max = design.column(c).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max > 0.0 {
            *s = max;
        }
        design.column_mut(c).iter_mut().for_each(|v| *v /= *s);
    }

    let f = svd(&design)?;
    let rank = numeric_rank(&f.sigma, m, 5)
        .min(f.sigma.iter().filter(|&&s| s > 1e-12 * f.sigma[0]).count());
    if rank < 5 {
        let mut involved = [false; 5];
        for j in rank..5 {
            let v = f.v.column(j);
            let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for (c, &x) in v.iter().enumerate() {
                if x.abs() > 1e-6 * peak {
                    involved[c] = true;
                }
            }
        }
        let columns = (0..5).filter(|&c| involved[c]).map(|c| BASIS_NAMES[c]).collect();
        return Err(PilaeError::CollinearBasis { columns });
    }

    let target: Vec<f64> = records.iter().map(|r| r.p_star as f64).collect();
    let mut theta = [0.0; 5];
    for j in 0..5 {
        let coef = f.u.column(j).iter().zip(&target).map(|(u, t)| u * t).sum::<f64>() / f.sigma[j];
        for (c, t) in theta.iter_mut().enumerate() {
            *t += f.v[(c, j)] * coef;
        }
    }
    for (t, s) in theta.iter_mut().zip(scale) {
        *t /= s;
    }
    let mut reg = WidthRegression::new(theta, alpha_fallback);
    reg.residual = records
        .iter()
        .map(|rec| {
            let e = reg.polynomial(rec.r, rec.n) - rec.p_star as f64;
            e * e
        })
        .sum();
    if !theta.iter().all(|t| t.is_finite()) {
        return Err(PilaeError::numerical("fit_width_regression", "non-finite coefficients"));
    }
    Ok(reg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooPrediction {
    pub record: WidthRecord,
    pub theta: [f64; 5],
    pub estimate: WidthEstimate,
}

/// Refits with each record left out in turn and predicts the held-out one.
pub fn leave_one_out(records: &[WidthRecord], alpha_fallback: f64) -> Result<Vec<LooPrediction>> {
    if records.len() < 6 {
        return Err(PilaeError::arg(format!(
            "leave-one-out needs at least 6 records, got {}",
            records.len()
        )));
    }
    (0..records.len())
        .map(|i| {
            let rest: Vec<WidthRecord> = records
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| *r)
                .collect();
            let reg = fit_width_regression_with(&rest, alpha_fallback)?;
            let rec = records[i];
            let estimate = estimate_last_width_detailed(rec.r, rec.n, &reg, rec.d.unwrap_or(rec.r));
            Ok(LooPrediction {
                record: rec,
                theta: reg.theta,
                estimate,
            })
        })
        .collect()
}

/// Reads a `r,n,p_star[,d]` CSV file with a header row.
pub fn load_width_records(path: &Path) -> Result<Vec<WidthRecord>> {
    let io = |e: csv::Error| crate::data::DataError::Csv {
        path: path.display().to_string(),
        line: e.position().map(|p| p.line()),
        detail: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(io)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let rec: WidthRecord = row.map_err(io)?;
        if rec.r == 0 || rec.n == 0 || rec.p_star == 0 {
            return Err(crate::data::DataError::Csv {
                path: path.display().to_string(),
                line: Some(out.len() as u64 + 2),
                detail: "r, n and p_star must be positive".into(),
            }
            .into());
        }
        out.push(rec);
    }
    Ok(out)
}
