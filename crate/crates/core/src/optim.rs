//! Full-batch Adam training, convergence traces and gradient checking.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::model::LinearModel;
use crate::objective::{Gradient, LossBreakdown, MaxMinObjective, Objective, ObjectiveConfig};

/// Standard deviation of the Gaussian used to initialize `W` and `b`.
pub const INIT_SCALE: f64 = 1e-2;

/// Window (in iterations) over which the relative objective change is measured.
pub const STOP_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_iters: 2000,
            rel_tol: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Config("rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// First and second moment accumulators shaped like `(W, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: Array2<f64>,
    pub m_bias: Array1<f64>,
    pub v_weights: Array2<f64>,
    pub v_bias: Array1<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(d: usize, c: usize) -> Self {
        Self {
            m_weights: Array2::zeros((d, c)),
            m_bias: Array1::zeros(c),
            v_weights: Array2::zeros((d, c)),
            v_bias: Array1::zeros(c),
            t: 0,
        }
    }
}

fn find_non_finite(grad: &Gradient) -> Option<String> {
    if let Some(((j, k), _)) = grad.weights.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Some(format!("weights[{j}, {k}]"));
    }
    grad.bias
        .iter()
        .position(|v| !v.is_finite())
        .map(|k| format!("bias[{k}]"))
}

/// One bias-corrected Adam update of `(W, b)`.
pub fn adam_step(
    model: &mut LinearModel,
    grad: &Gradient,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    check_dim("gradient rows", model.d(), grad.weights.nrows())?;
    check_dim("gradient columns", model.c(), grad.weights.ncols())?;
    check_dim("bias gradient", model.c(), grad.bias.len())?;
    if let Some(coordinate) = find_non_finite(grad) {
        return Err(Error::NonFiniteGradient { coordinate });
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (cfg.learning_rate, cfg.adam_eps);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    Zip::from(&mut model.weights)
        .and(&mut state.m_weights)
        .and(&mut state.v_weights)
        .and(&grad.weights)
        .for_each(|p, m, v, &g| update(p, m, v, g));
    Zip::from(&mut model.bias)
        .and(&mut state.m_bias)
        .and(&mut state.v_bias)
        .and(&grad.bias)
        .for_each(|p, m, v, &g| update(p, m, v, g));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub data_loss: f64,
    pub reg_term: f64,
    pub eps_term: f64,
    pub eval_acc: Option<f64>,
    /// Wall-clock seconds spent on this iteration. Not exported to CSV.
    #[serde(skip)]
    pub seconds: f64,
}

/// Per-iteration objective log of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Writes `iter,objective,data_loss,reg_term,eps_term[,eval_acc]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let with_eval = self.rows.iter().any(|r| r.eval_acc.is_some());
        write!(out, "iter,objective,data_loss,reg_term,eps_term")?;
        writeln!(out, "{}", if with_eval { ",eval_acc" } else { "" })?;
        for r in &self.rows {
            write!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.iter, r.objective, r.data_loss, r.reg_term, r.eps_term
            )?;
            match (with_eval, r.eval_acc) {
                (true, Some(a)) => writeln!(out, ",{:?}", a)?,
                (true, None) => writeln!(out, ",")?,
                _ => writeln!(out)?,
            }
        }
        Ok(())
    }
}

/// Seeded `N(0, INIT_SCALE²)` initialization, `W` row-major first, then `b`.
pub fn init_model(d: usize, c: usize, seed: u64) -> LinearModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    let weights = Array2::from_shape_fn((d, c), |_| normal.sample(&mut rng));
    let bias = Array1::from_shape_fn(c, |_| normal.sample(&mut rng));
    LinearModel::new(weights, bias)
}

/// Runs Adam on `objective` from `init` until `max_iters` or until the
/// objective changes by less than `rel_tol` (relative) over
/// [`STOP_WINDOW`] iterations. Returns the last iterate.
///
/// `observe` is called on every iterate before the step and may return an
/// evaluation accuracy to store in the trace.
pub fn minimize<O, F>(
    objective: &O,
    init: LinearModel,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<(LinearModel, TrainTrace)>
where
    O: Objective + ?Sized,
    F: FnMut(&LinearModel) -> Option<f64>,
{
    cfg.validate()?;
    let mut model = init;
    objective.project(&mut model);
    let mut state = AdamState::new(model.d(), model.c());
    let mut trace = TrainTrace::default();
    for iter in 0..cfg.max_iters {
        let start = Instant::now();
        let (loss, grad) = objective.evaluate_with_gradient(&model);
        if !loss.total.is_finite() {
            return Err(diverged(iter, &loss));
        }
        let eval_acc = observe(&model);
        let done = converged(&trace, loss.total, cfg.rel_tol);
        if !done && iter + 1 < cfg.max_iters {
            adam_step(&mut model, &grad, &mut state, cfg)?;
            objective.project(&mut model);
        }
        trace.rows.push(TraceRow {
            iter,
            objective: loss.total,
            data_loss: loss.data_loss,
            reg_term: loss.reg_term,
            eps_term: loss.eps_term,
            eval_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
        if done {
            break;
        }
    }
    Ok((model, trace))
}

fn converged(trace: &TrainTrace, current: f64, rel_tol: f64) -> bool {
    let n = trace.rows.len();
    if n < STOP_WINDOW {
        return false;
    }
    let before = trace.rows[n - STOP_WINDOW].objective;
    (before - current).abs() <= rel_tol * current.abs().max(f64::MIN_POSITIVE)
}

fn diverged(iteration: usize, loss: &LossBreakdown) -> Error {
    Error::Diverged {
        iteration,
        data_loss: loss.data_loss,
        reg_term: loss.reg_term,
        eps_term: loss.eps_term,
    }
}

/// Trains the max-min-margin model on `data`.
pub fn train(
    data: &Dataset,
    cfg_obj: &ObjectiveConfig,
    cfg_train: &TrainConfig,
    eval_set: Option<&Dataset>,
) -> Result<(LinearModel, TrainTrace)> {
    if data.n() == 0 {
        return Err(Error::NoSamples);
    }
    cfg_obj.validate_for_training()?;
    if let Some(eval) = eval_set {
        check_dim("eval feature count", data.d(), eval.d())?;
        check_dim("eval class count", data.c(), eval.c())?;
    }
    let objective = MaxMinObjective::new(data, *cfg_obj)?;
    let init = init_model(data.d(), data.c(), cfg_train.seed);
    let (mut model, trace) = minimize(&objective, init, cfg_train, |m| {
        eval_set.map(|e| m.evaluate(e).map(|r| r.accuracy).unwrap_or(f64::NAN))
    })?;
    model.class_names = data.class_names().to_vec();
    Ok((model, trace))
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub coordinates_checked: usize,
    pub coordinates_skipped: usize,
    pub max_rel_error: f64,
}

/// Largest initial step of the finite-difference tableaux.
pub const FD_STEP: f64 = 1e-2;
/// Coordinates whose analytic and numeric derivatives are both below this
/// are not compared.
pub const FD_ABS_FLOOR: f64 = 1e-12;
/// Relative errors are taken against at least this multiple of
/// `max(1, |f|)`, the size below which differences of `f` are roundoff.
pub const FD_SCALE_FLOOR: f64 = 1e-6;

/// Derivative of `f` at `x` by central differences with Ridders'
/// polynomial extrapolation. The step shrinks geometrically from `h` over
/// the whole tableau (no early exit, so a kink within `h` of `x` is stepped
/// past) and the entry with the smallest internal error estimate is
/// returned together with that estimate.
pub fn ridders_derivative(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const SHRINK2: f64 = SHRINK * SHRINK;
    const ROWS: usize = 20;
    let mut table = [[0.0f64; ROWS]; ROWS];
    // Roundoff in a central difference is about eps * |f| / step; an entry's
    // error estimate is never allowed below it, so coincidental agreement of
    // noisy entries at tiny steps is not mistaken for convergence.
    let mut central = |step: f64| {
        let (fp, fm) = (f(x + step), f(x - step));
        let noise = 4.0 * f64::EPSILON * fp.abs().max(fm.abs()) / step;
        ((fp - fm) / (2.0 * step), noise)
    };
    let mut step = h;
    let mut noise = [0.0f64; ROWS];
    (table[0][0], noise[0]) = central(step);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..ROWS {
        step /= SHRINK;
        (table[0][i], noise[i]) = central(step);
        let mut factor = SHRINK2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * factor - table[j - 1][i - 1]) / (factor - 1.0);
            factor *= SHRINK2;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs())
                .max(noise[i] * (j + 1) as f64);
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
    }
    (best, err)
}

/// [`ridders_derivative`] started from `h`, `h / 10` and `h / 100`; the
/// estimate with the smallest error wins. Near a kink only the smaller
/// starts resolve the derivative, elsewhere the larger ones are less noisy.
pub fn numeric_derivative(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    [h, h / 10.0, h / 100.0]
        .into_iter()
        .map(|start| ridders_derivative(&mut f, x, start))
        .fold((f64::NAN, f64::INFINITY), |best, r| if r.1 < best.1 { r } else { best })
}

/// Checks `objective`'s analytic gradient at `model` coordinate by
/// coordinate against [`numeric_derivative`] started from [`FD_STEP`].
pub fn check_gradient_at<O: Objective + ?Sized>(
    objective: &O,
    model: &LinearModel,
    inject_fault: bool,
) -> GradcheckReport {
    let (value, mut grad) = objective.evaluate_with_gradient(model);
    let floor = FD_SCALE_FLOOR * value.total.abs().max(1.0);
    if inject_fault {
        grad.weights[[0, 0]] = grad.weights[[0, 0]] * 1.01 + 1e-3;
    }
    let mut report = GradcheckReport {
        trials: 1,
        coordinates_checked: 0,
        coordinates_skipped: 0,
        max_rel_error: 0.0,
    };
    let mut probe = model.clone();
    let compare = |analytic: f64, numeric: f64, report: &mut GradcheckReport| {
        let scale = analytic.abs().max(numeric.abs());
        if scale < FD_ABS_FLOOR {
            report.coordinates_skipped += 1;
            return;
        }
        let scale = scale.max(floor);
        report.coordinates_checked += 1;
        report.max_rel_error = report.max_rel_error.max((analytic - numeric).abs() / scale);
    };
    for idx in 0..model.weights.len() {
        let (j, k) = (idx / model.c(), idx % model.c());
        let orig = model.weights[[j, k]];
        let (numeric, _) = numeric_derivative(
            |v| {
                probe.weights[[j, k]] = v;
                objective.evaluate(&probe).total
            },
            orig,
            FD_STEP,
        );
        probe.weights[[j, k]] = orig;
        compare(grad.weights[[j, k]], numeric, &mut report);
    }
    for k in 0..model.c() {
        let orig = model.bias[k];
        let (numeric, _) = numeric_derivative(
            |v| {
                probe.bias[k] = v;
                objective.evaluate(&probe).total
            },
            orig,
            FD_STEP,
        );
        probe.bias[k] = orig;
        compare(grad.bias[k], numeric, &mut report);
    }
    report
}

/// Random model for gradient checks: entries uniform in `[-1, 1)`.
pub fn random_model(d: usize, c: usize, rng: &mut impl Rng) -> LinearModel {
    LinearModel::new(
        Array2::from_shape_fn((d, c), |_| rng.random_range(-1.0..1.0)),
        Array1::from_shape_fn(c, |_| rng.random_range(-1.0..1.0)),
    )
}

/// Checks the analytic gradient of the objective on `trial_count` seeded
/// random models over `data`.
pub fn gradcheck(
    data: &Dataset,
    cfg_obj: &ObjectiveConfig,
    trial_count: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    gradcheck_with_fault(data, cfg_obj, trial_count, seed, false)
}

/// [`gradcheck`] with an optional deliberate corruption of one gradient
/// coordinate, used as a negative control.
pub fn gradcheck_with_fault(
    data: &Dataset,
    cfg_obj: &ObjectiveConfig,
    trial_count: usize,
    seed: u64,
    inject_fault: bool,
) -> Result<GradcheckReport> {
    cfg_obj.validate()?;
    if cfg_obj.loss == crate::objective::LossKind::SmoothedHinge && cfg_obj.delta < 1e-3 {
        return Err(Error::Config("gradcheck needs delta >= 1e-3".into()));
    }
    let objective = MaxMinObjective::new(data, *cfg_obj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradcheckReport {
        trials: 0,
        coordinates_checked: 0,
        coordinates_skipped: 0,
        max_rel_error: 0.0,
    };
    for _ in 0..trial_count {
        let model = random_model(data.d(), data.c(), &mut rng);
        let r = check_gradient_at(&objective, &model, inject_fault);
        total.trials += 1;
        total.coordinates_checked += r.coordinates_checked;
        total.coordinates_skipped += r.coordinates_skipped;
        total.max_rel_error = total.max_rel_error.max(r.max_rel_error);
    }
    Ok(total)
}

/// One row of a `p` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PSweepRow {
    pub p: f64,
    pub min_margin: f64,
    pub cv_accuracy: f64,
    pub cv_std: f64,
}

/// For each `p`: cross-validated accuracy (stratified `k`-fold with `seed`)
/// and the minimum pairwise margin of a model fit on all of `data`.
pub fn p_sweep(
    data: &Dataset,
    p_values: &[f64],
    cfg_obj: &ObjectiveConfig,
    cfg_train: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<PSweepRow>> {
    if p_values.is_empty() {
        return Err(Error::Config("p_values must be nonempty".into()));
    }
    let plan = crate::data::make_folds(data, k, seed)?;
    let rows = crate::par::try_map(p_values, |&p| {
        let cfg = ObjectiveConfig { p, ..*cfg_obj };
        let (model, _) = train(data, &cfg, cfg_train, None)?;
        let min_margin = model.margin_report()?.min_margin;
        let method = crate::cv::MethodConfig::new(crate::cv::Method::M3svm, cfg);
        let fold_acc = crate::cv::cross_validate(data, &method, cfg_train, &plan, false)?;
        let (cv_accuracy, cv_std) = crate::cv::mean_std(&fold_acc);
        Ok(PSweepRow {
            p,
            min_margin,
            cv_accuracy,
            cv_std,
        })
    })?;
    Ok(rows)
}

pub fn write_p_sweep_csv<W: Write>(rows: &[PSweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "p,min_margin,cv_accuracy,cv_std")?;
    for r in rows {
        writeln!(out, "{:?},{:?},{:?},{:?}", r.p, r.min_margin, r.cv_accuracy, r.cv_std)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{LossKind, RegNorm};
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = LinearModel::new(array![[1.0, -2.0]], array![0.5, 0.0]);
        let g = Gradient {
            weights: array![[3.0, -0.25]],
            bias: array![1e-3, -7.0],
        };
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(1, 2);
        adam_step(&mut m, &g, &mut state, &cfg).unwrap();
        assert!((m.weights[[0, 0]] - (1.0 - 0.01)).abs() < 1e-8);
        assert!((m.weights[[0, 1]] - (-2.0 + 0.01)).abs() < 1e-8);
        assert!((m.bias[0] - (0.5 - 0.01)).abs() < 1e-7);
        assert!((m.bias[1] - 0.01).abs() < 1e-8);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let start = LinearModel::new(array![[1.0, -2.0]], array![0.5, 0.0]);
        let mut m = start.clone();
        let g = Gradient {
            weights: Array2::zeros((1, 2)),
            bias: Array1::zeros(2),
        };
        let mut state = AdamState::new(1, 2);
        for _ in 0..50 {
            adam_step(&mut m, &g, &mut state, &TrainConfig::default()).unwrap();
        }
        assert_eq!(m, start);
    }

    #[test]
    fn non_finite_gradient_names_coordinate() {
        let mut m = LinearModel::zeros(2, 2);
        let mut g = Gradient {
            weights: Array2::zeros((2, 2)),
            bias: Array1::zeros(2),
        };
        g.weights[[1, 0]] = f64::NAN;
        let err = adam_step(&mut m, &g, &mut AdamState::new(2, 2), &TrainConfig::default())
            .unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient at weights[1, 0]");
    }

    #[test]
    fn single_sample_trains() {
        let data = Dataset::new(array![[1.0, -1.0]], vec![1], 3).unwrap();
        let (m, trace) =
            train(&data, &ObjectiveConfig::default(), &TrainConfig::default(), None).unwrap();
        assert_eq!(m.predict(array![1.0, -1.0].view()).unwrap(), 1);
        assert!(trace.rows.len() <= 2000);
    }

    #[test]
    fn flat_region_skips_comparisons() {
        // functional margin 1000 against the only rival: every derivative is
        // below the absolute floor
        let data = Dataset::new(array![[1.0]], vec![0], 2).unwrap();
        let cfg = ObjectiveConfig {
            lambda: 0.0,
            epsilon: 0.0,
            ..ObjectiveConfig::default()
        };
        let objective = MaxMinObjective::new(&data, cfg).unwrap();
        let model = LinearModel::new(array![[1000.0, -1.0]], array![0.0, 0.0]);
        let r = check_gradient_at(&objective, &model, false);
        assert_eq!(r.coordinates_checked, 0);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainTrace {
            rows: vec![TraceRow {
                iter: 0,
                objective: 1.5,
                data_loss: 1.0,
                reg_term: 0.25,
                eps_term: 0.0,
                eval_acc: Some(0.5),
                seconds: 0.1,
            }],
        };
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "iter,objective,data_loss,reg_term,eps_term,eval_acc\n0,1.5,1.0,0.25,0.0,0.5\n"
        );
    }

    #[test]
    fn logistic_gradcheck_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((12, 3), |_| rng.random_range(-1.0..1.0));
        let y = (0..12).map(|i| i % 3).collect();
        let data = Dataset::new(x, y, 3).unwrap();
        let cfg = ObjectiveConfig {
            loss: LossKind::Logistic,
            reg_norm: RegNorm::L2,
            p: 2.0,
            ..ObjectiveConfig::default()
        };
        let r = gradcheck(&data, &cfg, 3, 5).unwrap();
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
        let bad = gradcheck_with_fault(&data, &cfg, 1, 5, true).unwrap();
        assert!(bad.max_rel_error > 1e-5);
    }
}
