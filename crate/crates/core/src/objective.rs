//! The max-min-margin objective and its building blocks.
//!
//! The training objective is
//!
//! ```text
//!   Σᵢ Σ_{k≠yᵢ} ℓ(xᵢ, yᵢ, k)  +  λ Σ_{k<l} ‖wₖ − wₗ‖^p  +  ε (‖W‖²_F + ‖b‖²)
//! ```
//!
//! where the per-pair loss `ℓ` is either the smoothed hinge
//! `g(1 − f_{yᵢk}(xᵢ); δ)` or the logistic loss `log(1 + exp(−f_{yᵢk}(xᵢ)))`,
//! with `f_{kl}(x) = (wₖ − wₗ)ᵀx + bₖ − bₗ`. The same data term can be written
//! as a sum over class pairs (see [`pairwise_objective`]); both forms are
//! implemented independently so that one can check the other.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::model::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SmoothedHinge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegNorm {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub loss: LossKind,
    pub reg_norm: RegNorm,
    pub p: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Smoothing width of the hinge; unused by the logistic loss.
    pub delta: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::SmoothedHinge,
            reg_norm: RegNorm::L2,
            p: 4.0,
            lambda: 1e-3,
            epsilon: 1e-6,
            delta: 1e-3,
        }
    }
}

impl ObjectiveConfig {
    /// Checks the ranges shared by evaluation and training. `delta = 0` is
    /// accepted here (exact hinge) but rejected by [`validate_for_training`].
    ///
    /// [`validate_for_training`]: Self::validate_for_training
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be positive, got {}", self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn validate_for_training(&self) -> Result<()> {
        self.validate()?;
        if self.loss == LossKind::SmoothedHinge && self.delta <= 0.0 {
            return Err(Error::Config("delta must be positive for training".into()));
        }
        Ok(())
    }
}

/// The three terms of the objective, unweighted, plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data_loss: f64,
    pub reg_term: f64,
    pub eps_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(data_loss: f64, lambda: f64, reg_term: f64, epsilon: f64, eps_term: f64) -> Self {
        Self {
            data_loss,
            reg_term,
            eps_term,
            total: data_loss + lambda * reg_term + epsilon * eps_term,
        }
    }
}

/// Gradient with respect to `(W, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// A differentiable training objective over linear model parameters.
pub trait Objective: Sync {
    fn evaluate(&self, model: &LinearModel) -> LossBreakdown;

    fn evaluate_with_gradient(&self, model: &LinearModel) -> (LossBreakdown, Gradient);

    /// Moves an iterate to a point that is no worse and lies in a subspace
    /// known to contain the minimizer. The default leaves it unchanged.
    fn project(&self, _model: &mut LinearModel) {}
}

/// `(x + √(x² + δ²)) / 2`, a smooth upper approximation of `max(0, x)`.
///
/// For negative `x` the algebraically equal form `δ² / (2(√(x²+δ²) − x))`
/// avoids cancellation. `delta = 0` yields the exact hinge.
pub fn smoothed_hinge(x: f64, delta: f64) -> f64 {
    if x >= 0.0 {
        0.5 * (x + x.hypot(delta))
    } else {
        let r = x.hypot(delta);
        0.5 * delta * delta / (r - x)
    }
}

/// Derivative of [`smoothed_hinge`]: `(x + √(x²+δ²)) / (2√(x²+δ²))`.
pub fn smoothed_hinge_slope(x: f64, delta: f64) -> f64 {
    let r = x.hypot(delta);
    if r == 0.0 {
        return 0.5;
    }
    if x >= 0.0 {
        0.5 * (x + r) / r
    } else {
        0.5 * delta * delta / (r * (r - x))
    }
}

/// [`smoothed_hinge`] and its slope from a single square root, written
/// without data-dependent branches in the common case.
#[inline]
pub(crate) fn smoothed_hinge_and_slope(x: f64, delta: f64) -> (f64, f64) {
    if !(x.abs() < 1e150) || delta == 0.0 {
        return (smoothed_hinge(x, delta), smoothed_hinge_slope(x, delta));
    }
    let r = (x * x + delta * delta).sqrt();
    let upper = 0.5 * (x + r);
    let lower = 0.5 * delta * delta / (r - x);
    let value = if x >= 0.0 { upper } else { lower };
    (value, value / r)
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid `1 / (1 + exp(−x))`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ_{k<l} ‖wₖ − wₗ‖^p` under the chosen norm.
pub fn regularizer(weights: &Array2<f64>, p: f64, norm: RegNorm) -> f64 {
    regularizer_impl(weights, p, norm, None)
}

/// Adds `scale · ∇regularizer` into `grad` and returns the regularizer value.
///
/// At `wₖ = wₗ` the pair contributes a zero (sub)gradient.
fn regularizer_impl(
    weights: &Array2<f64>,
    p: f64,
    norm: RegNorm,
    mut grad: Option<(&mut Array2<f64>, f64)>,
) -> f64 {
    let c = weights.ncols();
    let mut total = 0.0;
    for k in 0..c {
        for l in k + 1..c {
            let diff = &weights.column(k) - &weights.column(l);
            let (value, coef) = match norm {
                RegNorm::L2 => {
                    let sq = diff.dot(&diff);
                    let value = if p == 2.0 { sq } else { sq.powf(0.5 * p) };
                    let coef = if sq > 0.0 { p * sq.powf(0.5 * p - 1.0) } else { 0.0 };
                    (value, coef)
                }
                RegNorm::L1 => {
                    let n1: f64 = diff.iter().map(|v| v.abs()).sum();
                    let coef = if n1 > 0.0 { p * n1.powf(p - 1.0) } else { 0.0 };
                    (n1.powf(p), coef)
                }
            };
            total += value;
            if let Some((g, scale)) = grad.as_mut() {
                if coef == 0.0 {
                    continue;
                }
                let step: Array1<f64> = match norm {
                    RegNorm::L2 => diff.mapv(|v| *scale * coef * v),
                    RegNorm::L1 => diff.mapv(|v| *scale * coef * sign(v)),
                };
                let mut gk = g.column_mut(k);
                gk += &step;
                let mut gl = g.column_mut(l);
                gl -= &step;
            }
        }
    }
    total
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖W‖²_F + ‖b‖²`.
pub(crate) fn frobenius_sq(model: &LinearModel) -> f64 {
    model.weights.iter().map(|v| v * v).sum::<f64>() + model.bias.dot(&model.bias)
}

/// Per-sample multi-class loss shapes over score differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PairLoss {
    /// `g(1 − (s_y − s_k); δ)`
    Hinge { delta: f64 },
    /// `log(1 + exp(−(s_y − s_k)))`
    Logistic,
}

impl PairLoss {
    pub(crate) fn from_config(cfg: &ObjectiveConfig) -> Self {
        match cfg.loss {
            LossKind::SmoothedHinge => PairLoss::Hinge { delta: cfg.delta },
            LossKind::Logistic => PairLoss::Logistic,
        }
    }

    /// Loss and its derivative with respect to the score gap `t = s_y − s_k`.
    #[inline]
    pub(crate) fn eval(self, t: f64) -> (f64, f64) {
        match self {
            PairLoss::Hinge { delta } => {
                let (value, slope) = smoothed_hinge_and_slope(1.0 - t, delta);
                (value, -slope)
            }
            PairLoss::Logistic => (softplus(-t), -sigmoid(-t)),
        }
    }
}

/// `Σᵢ Σ_{k≠yᵢ} loss(s_{i,yᵢ} − s_{i,k})`. When `coef` is given, writes
/// `∂/∂sᵢₖ` of the sum into it (n×c).
pub(crate) fn sum_over_rivals(
    scores: &Array2<f64>,
    labels: &[usize],
    loss: PairLoss,
    mut coef: Option<&mut Array2<f64>>,
) -> f64 {
    let mut total = 0.0;
    for (i, (row, &y)) in scores.rows().into_iter().zip(labels).enumerate() {
        let sy = row[y];
        let mut g_row = coef.as_deref_mut().map(|g| g.row_mut(i));
        let mut g_y = 0.0;
        for (k, &sk) in row.iter().enumerate() {
            if k == y {
                continue;
            }
            let (value, slope) = loss.eval(sy - sk);
            total += value;
            if let Some(g) = g_row.as_mut() {
                g_y += slope;
                g[k] -= slope;
            }
        }
        if let Some(g) = g_row.as_mut() {
            g[y] += g_y;
        }
    }
    total
}

/// Chain rule from score coefficients to `(∇W, ∇b)`.
pub(crate) fn backprop_scores(x: &Array2<f64>, coef: &Array2<f64>) -> Gradient {
    Gradient {
        weights: x.t().dot(coef),
        bias: coef.sum_axis(Axis(0)),
    }
}

pub(crate) fn check_model_data(model: &LinearModel, data: &Dataset) -> Result<()> {
    check_dim("feature count", model.d(), data.d())?;
    check_dim("class count", model.c(), data.c())?;
    check_dim("bias length", model.c(), model.bias.len())
}

/// The full max-min-margin objective bound to one dataset.
pub struct MaxMinObjective<'a> {
    data: &'a Dataset,
    cfg: ObjectiveConfig,
}

impl<'a> MaxMinObjective<'a> {
    pub fn new(data: &'a Dataset, cfg: ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { data, cfg })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    fn compute(&self, model: &LinearModel, want_grad: bool) -> (LossBreakdown, Option<Gradient>) {
        let x = self.data.features();
        let scores = x.dot(&model.weights) + &model.bias;
        let loss = PairLoss::from_config(&self.cfg);
        let mut coef = want_grad.then(|| Array2::zeros(scores.raw_dim()));
        let data_loss = sum_over_rivals(&scores, self.data.labels(), loss, coef.as_mut());

        let mut grad = coef.map(|c| backprop_scores(x, &c));
        let reg_term = regularizer_impl(
            &model.weights,
            self.cfg.p,
            self.cfg.reg_norm,
            grad.as_mut().map(|g| (&mut g.weights, self.cfg.lambda)),
        );
        let eps_term = frobenius_sq(model);
        if let Some(g) = grad.as_mut() {
            let two_eps = 2.0 * self.cfg.epsilon;
            Zip::from(&mut g.weights)
                .and(&model.weights)
                .for_each(|g, &w| *g += two_eps * w);
            Zip::from(&mut g.bias)
                .and(&model.bias)
                .for_each(|g, &b| *g += two_eps * b);
        }
        let breakdown =
            LossBreakdown::combine(data_loss, self.cfg.lambda, reg_term, self.cfg.epsilon, eps_term);
        (breakdown, grad)
    }
}

impl Objective for MaxMinObjective<'_> {
    fn evaluate(&self, model: &LinearModel) -> LossBreakdown {
        self.compute(model, false).0
    }

    fn evaluate_with_gradient(&self, model: &LinearModel) -> (LossBreakdown, Gradient) {
        let (b, g) = self.compute(model, true);
        (b, g.expect("gradient requested"))
    }

    /// Removes the shared translation: subtracts the row means of `W` from
    /// every column and the mean of `b` from every bias. Scores differences,
    /// and with them the data and pair terms, are unchanged while the `ε`
    /// term can only shrink.
    fn project(&self, model: &mut LinearModel) {
        center(model);
    }
}

/// Subtracts the class-mean column from `W` and the mean from `b`.
pub fn center(model: &mut LinearModel) {
    let (w_mean, b_mean) = model.translation_component();
    for (mut row, m) in model.weights.rows_mut().into_iter().zip(&w_mean) {
        row -= *m;
    }
    model.bias -= b_mean;
}

/// Objective value with the data term summed sample by sample.
pub fn persample_objective(
    model: &LinearModel,
    data: &Dataset,
    cfg: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    check_model_data(model, data)?;
    Ok(MaxMinObjective::new(data, *cfg)?.evaluate(model))
}

/// Objective value with the data term summed over class pairs `k < l` and,
/// within a pair, over the samples of those two classes with signed label
/// `+1` for class `k` and `−1` for class `l`.
pub fn pairwise_objective(
    model: &LinearModel,
    data: &Dataset,
    cfg: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    check_model_data(model, data)?;
    cfg.validate()?;
    let c = model.c();
    let x = data.features();
    let mut data_loss = 0.0;
    for k in 0..c {
        for l in k + 1..c {
            let w_kl = &model.weights.column(k) - &model.weights.column(l);
            let b_kl = model.bias[k] - model.bias[l];
            for (row, &y) in x.rows().into_iter().zip(data.labels()) {
                let sign = if y == k {
                    1.0
                } else if y == l {
                    -1.0
                } else {
                    continue;
                };
                let margin = sign * (row.dot(&w_kl) + b_kl);
                data_loss += match cfg.loss {
                    LossKind::SmoothedHinge => smoothed_hinge(1.0 - margin, cfg.delta),
                    LossKind::Logistic => softplus(-margin),
                };
            }
        }
    }
    let reg_term = regularizer(&model.weights, cfg.p, cfg.reg_norm);
    Ok(LossBreakdown::combine(
        data_loss,
        cfg.lambda,
        reg_term,
        cfg.epsilon,
        frobenius_sq(model),
    ))
}

/// Analytic gradient of the objective with respect to `(W, b)`.
pub fn gradient(model: &LinearModel, data: &Dataset, cfg: &ObjectiveConfig) -> Result<Gradient> {
    check_model_data(model, data)?;
    Ok(MaxMinObjective::new(data, *cfg)?.evaluate_with_gradient(model).1)
}

/// The ridge-regularized counterpart of the `p = 2` objective:
/// data term `+ λc Σₖ‖wₖ‖² + ε‖b‖²`, with `λ`, `ε`, loss and `δ` taken from
/// `cfg` (`cfg.p` and `cfg.reg_norm` are ignored).
///
/// `reg_term` holds `c Σₖ‖wₖ‖²` and `eps_term` holds `‖b‖²`.
pub fn l2_equivalent_objective(
    model: &LinearModel,
    data: &Dataset,
    cfg: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    check_model_data(model, data)?;
    cfg.validate()?;
    let scores = model.scores(data.features())?;
    let data_loss = sum_over_rivals(&scores, data.labels(), PairLoss::from_config(cfg), None);
    let c = model.c() as f64;
    let reg_term = c * model.weights.iter().map(|v| v * v).sum::<f64>();
    let eps_term = model.bias.dot(&model.bias);
    Ok(LossBreakdown::combine(data_loss, cfg.lambda, reg_term, cfg.epsilon, eps_term))
}

/// Both sides of `Σ_{k<l}‖wₖ−wₗ‖² = c Σₖ‖wₖ − w̄‖²`.
pub fn variance_identity_sides(weights: &Array2<f64>) -> (f64, f64) {
    let c = weights.ncols();
    let mut lhs = 0.0;
    for k in 0..c {
        for l in k + 1..c {
            let diff = &weights.column(k) - &weights.column(l);
            lhs += diff.dot(&diff);
        }
    }
    let mean = weights.sum_axis(Axis(1)) / c as f64;
    let rhs = c as f64
        * weights
            .columns()
            .into_iter()
            .map(|w| {
                let dev = &w - &mean;
                dev.dot(&dev)
            })
            .sum::<f64>();
    (lhs, rhs)
}

/// `|Σ_{k<l}‖wₖ−wₗ‖² − c Σₖ‖wₖ − w̄‖²|`.
pub fn variance_identity_residual(weights: &Array2<f64>) -> f64 {
    let (lhs, rhs) = variance_identity_sides(weights);
    (lhs - rhs).abs()
}

/// Sides of the pairwise-score norm bound, biases excluded:
///
/// * `lhs = maxᵢ (Σ_{k<l} |(wₖ−wₗ)ᵀxᵢ|^p)^{1/p}`
/// * `rhs = Λ (Σ_{k<l} ‖wₖ−wₗ‖₂^p)^{1/p}` with `Λ = maxᵢ ‖xᵢ‖₂`
pub fn srm_bound_check(model: &LinearModel, data: &Dataset, p: f64) -> Result<(f64, f64)> {
    check_dim("feature count", model.d(), data.d())?;
    if data.n() == 0 {
        return Err(Error::NoSamples);
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("bound requires p >= 1, got {p}")));
    }
    let c = model.c();
    let x = data.features();
    let mut diffs = Vec::with_capacity(c * (c - 1) / 2);
    for k in 0..c {
        for l in k + 1..c {
            diffs.push(&model.weights.column(k) - &model.weights.column(l));
        }
    }
    let mut lhs: f64 = 0.0;
    let mut radius: f64 = 0.0;
    for row in x.rows() {
        let s: f64 = diffs.iter().map(|d| row.dot(d).abs().powf(p)).sum();
        lhs = lhs.max(s.powf(1.0 / p));
        radius = radius.max(row.dot(&row).sqrt());
    }
    let reg: f64 = diffs.iter().map(|d| d.dot(d).sqrt().powf(p)).sum();
    Ok((lhs, radius * reg.powf(1.0 / p)))
}

/// `Σᵢ log(1 + Σ_{j≠yᵢ} exp(s_{ij} − s_{iyᵢ}))`, evaluated with log-sum-exp.
pub fn softmax_loss(model: &LinearModel, data: &Dataset) -> Result<f64> {
    check_model_data(model, data)?;
    let scores = model.scores(data.features())?;
    Ok(softmax_term(&scores, data.labels(), None))
}

/// Softmax cross-entropy over score rows; optionally writes `∂/∂s` into `coef`.
pub(crate) fn softmax_term(
    scores: &Array2<f64>,
    labels: &[usize],
    mut coef: Option<&mut Array2<f64>>,
) -> f64 {
    let mut total = 0.0;
    for (i, (row, &y)) in scores.rows().into_iter().zip(labels).enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|&s| (s - m).exp()).sum();
        total += m + z.ln() - row[y];
        if let Some(g) = coef.as_deref_mut() {
            for (k, &s) in row.iter().enumerate() {
                g[[i, k]] += (s - m).exp() / z;
            }
            g[[i, y]] -= 1.0;
        }
    }
    total
}
