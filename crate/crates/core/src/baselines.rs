//! Classical multi-class baselines: one-vs-rest, one-vs-one,
//! Crammer–Singer, Weston–Watkins and multinomial logistic regression.
//!
//! All of them are trained with the same full-batch Adam loop as the
//! max-min-margin model, with the hinge smoothed by the same `g(·; δ)`.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::model::{argmax, EvalReport, LinearModel};
use crate::objective::{
    backprop_scores, check_model_data, smoothed_hinge, smoothed_hinge_slope, softmax_term,
    sum_over_rivals, Gradient, LossBreakdown, Objective, ObjectiveConfig, PairLoss,
};
use crate::optim::{init_model, minimize, TrainConfig, TrainTrace};
use crate::par;

/// A single separating hyperplane; positive scores mean the first class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub w: Array1<f64>,
    pub b: f64,
}

impl BinaryModel {
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.w.dot(&x) + self.b
    }
}

/// `Σᵢ g(1 − sᵢ(wᵀxᵢ + b); δ) + λ‖w‖²` with signs `sᵢ ∈ {+1, −1}`.
/// The model is stored as a single-column [`LinearModel`].
pub struct BinaryHingeObjective<'a> {
    x: &'a Array2<f64>,
    signs: Vec<f64>,
    lambda: f64,
    delta: f64,
}

impl<'a> BinaryHingeObjective<'a> {
    pub fn new(x: &'a Array2<f64>, signs: Vec<f64>, lambda: f64, delta: f64) -> Result<Self> {
        check_dim("sign count", x.nrows(), signs.len())?;
        Ok(Self {
            x,
            signs,
            lambda,
            delta,
        })
    }

    fn compute(&self, model: &LinearModel, want_grad: bool) -> (LossBreakdown, Option<Gradient>) {
        let scores = self.x.dot(&model.weights.column(0)) + model.bias[0];
        let mut coef = want_grad.then(|| Array2::zeros((self.x.nrows(), 1)));
        let mut data_loss = 0.0;
        for (i, (&s, &y)) in scores.iter().zip(&self.signs).enumerate() {
            let gamma = 1.0 - y * s;
            data_loss += smoothed_hinge(gamma, self.delta);
            if let Some(c) = coef.as_mut() {
                c[[i, 0]] = -y * smoothed_hinge_slope(gamma, self.delta);
            }
        }
        let reg_term = model.weights.iter().map(|v| v * v).sum::<f64>();
        let grad = coef.map(|c| {
            let mut g = backprop_scores(self.x, &c);
            g.weights.scaled_add(2.0 * self.lambda, &model.weights);
            g
        });
        (
            LossBreakdown::combine(data_loss, self.lambda, reg_term, 0.0, 0.0),
            grad,
        )
    }
}

impl Objective for BinaryHingeObjective<'_> {
    fn evaluate(&self, model: &LinearModel) -> LossBreakdown {
        self.compute(model, false).0
    }

    fn evaluate_with_gradient(&self, model: &LinearModel) -> (LossBreakdown, Gradient) {
        let (b, g) = self.compute(model, true);
        (b, g.expect("gradient requested"))
    }
}

fn fit_signed(
    x: &Array2<f64>,
    signs: Vec<f64>,
    lambda: f64,
    delta: f64,
    cfg: &TrainConfig,
) -> Result<BinaryModel> {
    if !(delta > 0.0) {
        return Err(Error::Config("delta must be positive for training".into()));
    }
    let objective = BinaryHingeObjective::new(x, signs, lambda, delta)?;
    let (m, _) = minimize(&objective, init_model(x.ncols(), 1, cfg.seed), cfg, |_| None)?;
    Ok(BinaryModel {
        w: m.weights.column(0).to_owned(),
        b: m.bias[0],
    })
}

/// Soft-margin binary SVM on a two-class dataset; class 0 maps to `+1`.
pub fn train_binary_svm(
    data: &Dataset,
    lambda: f64,
    delta: f64,
    train_cfg: &TrainConfig,
) -> Result<BinaryModel> {
    check_dim("class count", 2, data.c())?;
    let counts = data.class_counts();
    if counts.contains(&0) {
        return Err(Error::TooFewClasses);
    }
    let signs = data
        .labels()
        .iter()
        .map(|&y| if y == 0 { 1.0 } else { -1.0 })
        .collect();
    fit_signed(data.features(), signs, lambda, delta, train_cfg)
}

/// `c` binary machines, machine `k` separating class `k` from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvRModel {
    pub members: Vec<BinaryModel>,
}

impl OvRModel {
    pub fn c(&self) -> usize {
        self.members.len()
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        let scores: Array1<f64> = self.members.iter().map(|m| m.decision(x)).collect();
        argmax(scores.view())
    }
}

pub fn train_ovr(data: &Dataset, cfg: &ObjectiveConfig, train_cfg: &TrainConfig) -> Result<OvRModel> {
    let classes: Vec<usize> = (0..data.c()).collect();
    let members = par::try_map(&classes, |&k| {
        let signs = data
            .labels()
            .iter()
            .map(|&y| if y == k { 1.0 } else { -1.0 })
            .collect();
        fit_signed(data.features(), signs, cfg.lambda, cfg.delta, train_cfg)
    })?;
    Ok(OvRModel { members })
}

/// One machine per class pair `k < l`, positive side = class `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvOMember {
    pub k: usize,
    pub l: usize,
    pub model: BinaryModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvOModel {
    pub c: usize,
    pub members: Vec<OvOMember>,
}

/// Majority vote; ties go to the lowest class index among the tied.
pub fn vote(c: usize, outcomes: impl IntoIterator<Item = usize>) -> usize {
    let mut votes = Array1::<f64>::zeros(c);
    for winner in outcomes {
        votes[winner] += 1.0;
    }
    argmax(votes.view())
}

impl OvOModel {
    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        vote(
            self.c,
            self.members
                .iter()
                .map(|m| if m.model.decision(x) >= 0.0 { m.k } else { m.l }),
        )
    }
}

pub fn train_ovo(data: &Dataset, cfg: &ObjectiveConfig, train_cfg: &TrainConfig) -> Result<OvOModel> {
    train_ovo_with(data, |_, _| cfg.lambda, cfg.delta, train_cfg)
}

/// [`train_ovo`] with a per-pair `λ`.
pub fn train_ovo_with<L>(
    data: &Dataset,
    lambda_for: L,
    delta: f64,
    train_cfg: &TrainConfig,
) -> Result<OvOModel>
where
    L: Fn(usize, usize) -> f64 + Sync + Send,
{
    let c = data.c();
    let pairs: Vec<(usize, usize)> = (0..c)
        .flat_map(|k| (k + 1..c).map(move |l| (k, l)))
        .collect();
    let members = par::try_map(&pairs, |&(k, l)| {
        let idx: Vec<usize> = (0..data.n())
            .filter(|&i| data.labels()[i] == k || data.labels()[i] == l)
            .collect();
        let sub = data.subset(&idx);
        let pos = sub.labels().iter().filter(|&&y| y == k).count();
        if pos == 0 || pos == sub.n() {
            return Err(Error::EmptyPair { k, l });
        }
        let signs = sub
            .labels()
            .iter()
            .map(|&y| if y == k { 1.0 } else { -1.0 })
            .collect();
        let model = fit_signed(sub.features(), signs, lambda_for(k, l), delta, train_cfg)?;
        Ok(OvOMember { k, l, model })
    })?;
    Ok(OvOModel { c, members })
}

/// Per-sample Weston–Watkins losses `Σ_{k≠yᵢ} g(Δᵢₖ; δ)` with
/// `Δᵢₖ = 1 − (s_{yᵢ} − s_k)`.
pub fn weston_watkins_losses(model: &LinearModel, data: &Dataset, delta: f64) -> Result<Vec<f64>> {
    check_model_data(model, data)?;
    let scores = model.scores(data.features())?;
    Ok(scores
        .rows()
        .into_iter()
        .zip(data.labels())
        .map(|(row, &y)| {
            (0..row.len())
                .filter(|&k| k != y)
                .map(|k| smoothed_hinge(1.0 - (row[y] - row[k]), delta))
                .sum()
        })
        .collect())
}

/// Per-sample Crammer–Singer losses `max_{k≠yᵢ} g(Δᵢₖ; δ)`.
pub fn crammer_singer_losses(model: &LinearModel, data: &Dataset, delta: f64) -> Result<Vec<f64>> {
    check_model_data(model, data)?;
    let scores = model.scores(data.features())?;
    Ok(scores
        .rows()
        .into_iter()
        .zip(data.labels())
        .map(|(row, &y)| rival_max(row, y, delta).1)
        .collect())
}

/// First rival class attaining `max_{k≠y} g(1 − (s_y − s_k); δ)`, and that value.
fn rival_max(row: ArrayView1<f64>, y: usize, delta: f64) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (k, &sk) in row.iter().enumerate() {
        if k == y {
            continue;
        }
        let v = smoothed_hinge(1.0 - (row[y] - sk), delta);
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Which ridge-regularized multi-class data term to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeLoss {
    WestonWatkins,
    CrammerSinger,
    Softmax,
}

/// `data term + λ Σₖ‖wₖ‖² + ε‖b‖²` for one of the unified baselines.
///
/// `reg_term` is `Σₖ‖wₖ‖²`, `eps_term` is `‖b‖²`. The Crammer–Singer max
/// is differentiated through its first maximizing rival only.
pub struct RidgeObjective<'a> {
    data: &'a Dataset,
    loss: RidgeLoss,
    lambda: f64,
    epsilon: f64,
    delta: f64,
}

impl<'a> RidgeObjective<'a> {
    pub fn new(data: &'a Dataset, loss: RidgeLoss, cfg: &ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            data,
            loss,
            lambda: cfg.lambda,
            epsilon: cfg.epsilon,
            delta: cfg.delta,
        })
    }

    fn compute(&self, model: &LinearModel, want_grad: bool) -> (LossBreakdown, Option<Gradient>) {
        let x = self.data.features();
        let labels = self.data.labels();
        let scores = x.dot(&model.weights) + &model.bias;
        let mut coef = want_grad.then(|| Array2::zeros(scores.raw_dim()));
        let data_loss = match self.loss {
            RidgeLoss::WestonWatkins => sum_over_rivals(
                &scores,
                labels,
                PairLoss::Hinge { delta: self.delta },
                coef.as_mut(),
            ),
            RidgeLoss::Softmax => softmax_term(&scores, labels, coef.as_mut()),
            RidgeLoss::CrammerSinger => {
                let mut total = 0.0;
                for (i, (row, &y)) in scores.rows().into_iter().zip(labels).enumerate() {
                    let (k, v) = rival_max(row, y, self.delta);
                    total += v;
                    if let Some(g) = coef.as_mut() {
                        let slope = smoothed_hinge_slope(1.0 - (row[y] - row[k]), self.delta);
                        g[[i, k]] += slope;
                        g[[i, y]] -= slope;
                    }
                }
                total
            }
        };
        let reg_term = model.weights.iter().map(|v| v * v).sum::<f64>();
        let eps_term = model.bias.dot(&model.bias);
        let grad = coef.map(|c| {
            let mut g = backprop_scores(x, &c);
            g.weights.scaled_add(2.0 * self.lambda, &model.weights);
            Zip::from(&mut g.bias)
                .and(&model.bias)
                .for_each(|g, &b| *g += 2.0 * self.epsilon * b);
            g
        });
        (
            LossBreakdown::combine(data_loss, self.lambda, reg_term, self.epsilon, eps_term),
            grad,
        )
    }
}

impl Objective for RidgeObjective<'_> {
    fn evaluate(&self, model: &LinearModel) -> LossBreakdown {
        self.compute(model, false).0
    }

    fn evaluate_with_gradient(&self, model: &LinearModel) -> (LossBreakdown, Gradient) {
        let (b, g) = self.compute(model, true);
        (b, g.expect("gradient requested"))
    }
}

/// Trains one of the ridge-regularized baselines and returns its trace,
/// with accuracy on `eval_set` per iteration when given.
pub fn train_ridge(
    data: &Dataset,
    loss: RidgeLoss,
    cfg: &ObjectiveConfig,
    train_cfg: &TrainConfig,
    eval_set: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    if data.n() == 0 {
        return Err(Error::NoSamples);
    }
    if loss != RidgeLoss::Softmax && !(cfg.delta > 0.0) {
        return Err(Error::Config("delta must be positive for training".into()));
    }
    let objective = RidgeObjective::new(data, loss, cfg)?;
    let init = init_model(data.d(), data.c(), train_cfg.seed);
    let (mut model, trace) = minimize(&objective, init, train_cfg, |m| {
        eval_set.map(|e| m.evaluate(e).map(|r| r.accuracy).unwrap_or(f64::NAN))
    })?;
    model.class_names = data.class_names().to_vec();
    Ok((model, trace))
}

/// Crammer–Singer: `Σᵢ max_{k≠yᵢ} g(Δᵢₖ) + λΣ‖wₖ‖² + ε‖b‖²`.
pub fn train_crammer(data: &Dataset, cfg: &ObjectiveConfig, train_cfg: &TrainConfig) -> Result<LinearModel> {
    train_ridge(data, RidgeLoss::CrammerSinger, cfg, train_cfg, None).map(|(m, _)| m)
}

/// Weston–Watkins: `Σᵢ Σ_{k≠yᵢ} g(Δᵢₖ) + λΣ‖wₖ‖² + ε‖b‖²`, minimized
/// directly in this ridge form. Its optimum coincides with the max-min
/// objective at `p = 2` and `λ/c`.
pub fn train_ww(data: &Dataset, cfg: &ObjectiveConfig, train_cfg: &TrainConfig) -> Result<LinearModel> {
    train_ridge(data, RidgeLoss::WestonWatkins, cfg, train_cfg, None).map(|(m, _)| m)
}

/// Multinomial logistic regression: softmax loss `+ λΣ‖wₖ‖² + ε‖b‖²`.
pub fn train_multilr(data: &Dataset, cfg: &ObjectiveConfig, train_cfg: &TrainConfig) -> Result<LinearModel> {
    train_ridge(data, RidgeLoss::Softmax, cfg, train_cfg, None).map(|(m, _)| m)
}

/// Evaluates any per-sample predictor on `data`.
pub fn evaluate_with(data: &Dataset, predict: impl Fn(ArrayView1<f64>) -> usize) -> EvalReport {
    let predicted: Vec<usize> = data.features().rows().into_iter().map(predict).collect();
    EvalReport::from_predictions(data, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::check_gradient_at;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(lambda: f64) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda,
            delta: 1e-2,
            ..ObjectiveConfig::default()
        }
    }

    fn blobs(seed: u64, per_class: usize, centers: &[(f64, f64)], spread: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * centers.len();
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % centers.len();
            x[[i, 0]] = centers[k].0 + spread * rng.random_range(-1.0..1.0);
            x[[i, 1]] = centers[k].1 + spread * rng.random_range(-1.0..1.0);
            y.push(k);
        }
        Dataset::new(x, y, centers.len()).unwrap()
    }

    #[test]
    fn binary_svm_separates_points_on_a_line() {
        let x = array![[-2.0], [-2.1], [2.0], [2.2]];
        let data = Dataset::new(x, vec![0, 0, 1, 1], 2).unwrap();
        let m = train_binary_svm(&data, 1e-3, 1e-2, &TrainConfig::default()).unwrap();
        for (row, &y) in data.features().rows().into_iter().zip(data.labels()) {
            let positive = m.decision(row) > 0.0;
            assert_eq!(positive, y == 0);
        }
    }

    #[test]
    fn binary_svm_rejects_single_class() {
        let data = Dataset::new(array![[1.0], [2.0]], vec![0, 0], 2).unwrap();
        assert!(train_binary_svm(&data, 1e-3, 1e-2, &TrainConfig::default()).is_err());
    }

    #[test]
    fn binary_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0));
        let signs = (0..15).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let obj = BinaryHingeObjective::new(&x, signs, 0.3, 1e-2).unwrap();
        let m = crate::optim::random_model(3, 1, &mut rng);
        assert!(check_gradient_at(&obj, &m, false).max_rel_error <= 1e-5);
    }

    #[test]
    fn ridge_gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let data = Dataset::new(x, (0..20).map(|i| i % 4).collect(), 4).unwrap();
        for loss in [RidgeLoss::WestonWatkins, RidgeLoss::Softmax] {
            let obj = RidgeObjective::new(&data, loss, &cfg(0.2)).unwrap();
            let m = crate::optim::random_model(3, 4, &mut rng);
            let r = check_gradient_at(&obj, &m, false);
            assert!(r.max_rel_error <= 1e-5, "{loss:?} {r:?}");
        }
    }

    #[test]
    fn ovo_votes() {
        assert_eq!(vote(3, [0, 0, 1]), 0);
        assert_eq!(vote(3, [0, 1, 2]), 0);
        assert_eq!(vote(3, [1, 2, 2]), 2);
    }

    #[test]
    fn ensemble_sizes_and_accuracy() {
        let data = blobs(1, 20, &[(0.0, 3.0), (3.0, -2.0), (-3.0, -2.0)], 0.8);
        let ovr = train_ovr(&data, &cfg(1e-3), &TrainConfig::default()).unwrap();
        let ovo = train_ovo(&data, &cfg(1e-3), &TrainConfig::default()).unwrap();
        assert_eq!(ovr.c(), 3);
        assert_eq!(ovo.members.len(), 3);
        assert!(evaluate_with(&data, |x| ovr.predict(x)).accuracy >= 0.95);
        assert!(evaluate_with(&data, |x| ovo.predict(x)).accuracy >= 0.95);
    }

    #[test]
    fn ovr_tolerates_singleton_class() {
        let mut x = Array2::zeros((7, 1));
        for i in 0..7 {
            x[[i, 0]] = i as f64;
        }
        let data = Dataset::new(x, vec![0, 0, 0, 1, 1, 1, 2], 3).unwrap();
        assert!(train_ovr(&data, &cfg(1e-3), &TrainConfig::default()).is_ok());
    }

    #[test]
    fn ovo_rejects_missing_class() {
        let data = Dataset::new(array![[0.0], [1.0]], vec![0, 1], 3).unwrap();
        assert!(matches!(
            train_ovo(&data, &cfg(1e-3), &TrainConfig::default()),
            Err(Error::EmptyPair { k: 0, l: 2 })
        ));
    }

    #[test]
    fn crammer_and_ww_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for c in [2, 5] {
            let x = Array2::from_shape_fn((30, 3), |_| rng.random_range(-2.0..2.0));
            let data = Dataset::new(x, (0..30).map(|i| i % c).collect(), c).unwrap();
            let m = crate::optim::random_model(3, c, &mut rng);
            let cs = crammer_singer_losses(&m, &data, 1e-2).unwrap();
            let ww = weston_watkins_losses(&m, &data, 1e-2).unwrap();
            for (a, b) in cs.iter().zip(&ww) {
                if c == 2 {
                    assert_eq!(a, b);
                } else {
                    assert!(a <= b);
                }
            }
        }
    }

    #[test]
    fn unified_baselines_fit_separable_blobs() {
        let data = blobs(2, 15, &[(0.0, 4.0), (4.0, -3.0), (-4.0, -3.0)], 0.5);
        let tc = TrainConfig::default();
        let cs = train_crammer(&data, &cfg(1e-3), &tc).unwrap();
        assert_eq!(cs.evaluate(&data).unwrap().accuracy, 1.0);
        let lr = train_multilr(&data, &cfg(1e-3), &tc).unwrap();
        assert!(lr.evaluate(&data).unwrap().accuracy >= 0.95);
        let ww = train_ww(&data, &cfg(1e-3), &tc).unwrap();
        assert_eq!(ww.evaluate(&data).unwrap().accuracy, 1.0);
    }
}
