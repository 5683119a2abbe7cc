//! Seeded self-checks over the mathematical properties the library relies
//! on. Every check returns the number of cases, the number of violations
//! and the worst observed statistic, so a report is reproducible bit for bit
//! from its seed.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{crammer_singer_losses, train_ww, weston_watkins_losses};
use crate::data::{fit_standardizer, make_folds, Dataset};
use crate::model::LinearModel;
use crate::objective::{
    pairwise_objective, persample_objective, smoothed_hinge, srm_bound_check,
    variance_identity_sides, LossKind, MaxMinObjective, ObjectiveConfig, RegNorm,
};
use crate::optim::{check_gradient_at, random_model, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub violations: usize,
    /// Worst value of the checked statistic (its meaning depends on the check).
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, cases: usize, violations: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: violations == 0 && cases > 0,
            cases,
            violations,
            worst,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Corrupts one analytic gradient coordinate; the gradient check must
    /// then fail.
    pub inject_gradient_fault: bool,
}

/// Runs every check with sizes small enough for interactive use.
pub fn run(opts: VerifyOptions) -> VerifyReport {
    let s = opts.seed;
    let checks = vec![
        check_pairwise_identity(s, 100),
        check_gradients(s.wrapping_add(1), 10, opts.inject_gradient_fault),
        check_smoothing_bound(20_001),
        check_variance_identity(s.wrapping_add(2), 1000),
        check_convexity(s.wrapping_add(3), 1000),
        check_srm_bound(s.wrapping_add(4), 200),
        check_crammer_below_ww(s.wrapping_add(5), 200),
        check_fold_partition(s.wrapping_add(6), 100),
        check_standardize_inverse(s.wrapping_add(7), 100),
        check_bias_shift_invariance(s.wrapping_add(8), 200),
        check_ww_equivalence(s.wrapping_add(9), 1),
    ];
    VerifyReport {
        seed: s,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Random data with `n ∈ [1, max_n]`, `c ∈ [2, max_c]`, `d ∈ [1, max_d]`,
/// features uniform in `[-2, 2)` and labels uniform over the classes.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_c: usize, max_d: usize) -> Dataset {
    let n = rng.random_range(1..=max_n);
    let c = rng.random_range(2..=max_c);
    let d = rng.random_range(1..=max_d);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    Dataset::new(x, labels, c).expect("valid random data")
}

fn random_config(rng: &mut ChaCha8Rng, loss: LossKind) -> ObjectiveConfig {
    ObjectiveConfig {
        loss,
        reg_norm: if rng.random_bool(0.5) { RegNorm::L2 } else { RegNorm::L1 },
        p: rng.random_range(1.0..8.0),
        lambda: rng.random_range(0.0..1.0),
        epsilon: rng.random_range(0.0..0.1),
        delta: rng.random_range(1e-3..1.0),
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

const LOSSES: [LossKind; 2] = [LossKind::SmoothedHinge, LossKind::Logistic];

/// Per-sample and pairwise evaluations of the objective agree.
pub fn check_pairwise_identity(seed: u64, instances_per_loss: usize) -> CheckResult {
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut bad, mut worst) = (0, 0, 0.0f64);
    for loss in LOSSES {
        for _ in 0..instances_per_loss {
            let data = random_dataset(&mut rng, 50, 6, 10);
            let model = random_model(data.d(), data.c(), &mut rng);
            let cfg = random_config(&mut rng, loss);
            let a = persample_objective(&model, &data, &cfg).expect("valid instance");
            let b = pairwise_objective(&model, &data, &cfg).expect("valid instance");
            let r = rel_diff(a.total, b.total).max(rel_diff(a.data_loss, b.data_loss));
            worst = worst.max(r);
            cases += 1;
            bad += usize::from(!(r <= tol));
        }
    }
    CheckResult::new("pairwise_identity", cases, bad, worst, tol)
}

/// Analytic gradients against central differences, `δ = 1e-2`,
/// `p ∈ {1, 2, 4}`, both losses.
pub fn check_gradients(seed: u64, instances_per_setting: usize, inject_fault: bool) -> CheckResult {
    let tol = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut bad, mut worst) = (0, 0, 0.0f64);
    for loss in LOSSES {
        for p in [1.0, 2.0, 4.0] {
            for _ in 0..instances_per_setting {
                let data = random_dataset(&mut rng, 30, 5, 6);
                let model = random_model(data.d(), data.c(), &mut rng);
                let cfg = ObjectiveConfig {
                    loss,
                    reg_norm: RegNorm::L2,
                    p,
                    lambda: rng.random_range(0.0..1.0),
                    epsilon: rng.random_range(0.0..0.1),
                    delta: 1e-2,
                };
                let obj = MaxMinObjective::new(&data, cfg).expect("valid config");
                let r = check_gradient_at(&obj, &model, inject_fault);
                worst = worst.max(r.max_rel_error);
                cases += 1;
                bad += usize::from(!(r.max_rel_error <= tol));
            }
        }
    }
    CheckResult::new("gradient", cases, bad, worst, tol)
}

/// `0 ≤ g(x; δ) − max(0, x) ≤ δ/2` on `points` evenly spaced `x` in
/// `[-10, 10]` plus a few extremes, for `δ ∈ {1e-3, 1e-2, 1}`.
/// `worst` is the largest gap as a fraction of `δ/2`.
pub fn check_smoothing_bound(points: usize) -> CheckResult {
    let mut xs: Vec<f64> = (0..points)
        .map(|i| -10.0 + 20.0 * i as f64 / (points - 1).max(1) as f64)
        .collect();
    xs.extend([-1e12, -1e6, -1e-9, 0.0, 1e-9, 1e6, 1e12]);
    let (mut cases, mut bad, mut worst) = (0, 0, 0.0f64);
    for delta in [1e-3, 1e-2, 1.0] {
        for &x in &xs {
            let gap = smoothed_hinge(x, delta) - x.max(0.0);
            worst = worst.max(gap / (delta / 2.0));
            cases += 1;
            bad += usize::from(!(gap >= 0.0 && gap <= delta / 2.0));
        }
    }
    CheckResult::new("smoothing_bound", cases, bad, worst, 1.0)
}

/// `Σ_{k<l}‖wₖ−wₗ‖² = c Σₖ‖wₖ − w̄‖²` up to `1e-10 (1 + magnitude)`.
/// `worst` is the residual divided by `1 + magnitude`.
pub fn check_variance_identity(seed: u64, count: usize) -> CheckResult {
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..count {
        let d = rng.random_range(1..=12);
        let c = rng.random_range(2..=10);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_fn((d, c), |_| scale * rng.random_range(-1.0..1.0));
        let (lhs, rhs) = variance_identity_sides(&w);
        let r = (lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs()));
        worst = worst.max(r);
        bad += usize::from(!(r <= tol));
    }
    CheckResult::new("variance_identity", count, bad, worst, tol)
}

/// Midpoint convexity of the objective for `p ≥ 1`, both losses and norms.
/// `worst` is the largest excess `f(mid) − (f(a) + f(b))/2` over scale.
pub fn check_convexity(seed: u64, count: usize) -> CheckResult {
    let tol = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut worst) = (0, f64::NEG_INFINITY);
    for i in 0..count {
        let data = random_dataset(&mut rng, 30, 5, 6);
        let cfg = random_config(&mut rng, LOSSES[i % 2]);
        let obj = MaxMinObjective::new(&data, cfg).expect("valid config");
        let spread = 10f64.powf(rng.random_range(-1.0..1.0));
        let mut a = random_model(data.d(), data.c(), &mut rng);
        let mut b = random_model(data.d(), data.c(), &mut rng);
        a.weights *= spread;
        b.weights *= spread;
        let mid = LinearModel::new(
            (&a.weights + &b.weights) * 0.5,
            (&a.bias + &b.bias) * 0.5,
        );
        use crate::objective::Objective;
        let (fa, fb, fm) = (
            obj.evaluate(&a).total,
            obj.evaluate(&b).total,
            obj.evaluate(&mid).total,
        );
        let scale = fa.abs().max(fb.abs()).max(1.0);
        let excess = (fm - 0.5 * (fa + fb)) / scale;
        worst = worst.max(excess);
        bad += usize::from(!(excess <= tol));
    }
    CheckResult::new("convexity", count, bad, worst, tol)
}

/// Pairwise-score norm bound; `worst` is the largest `lhs / rhs`.
pub fn check_srm_bound(seed: u64, count: usize) -> CheckResult {
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..count {
        let data = random_dataset(&mut rng, 40, 6, 8);
        let model = random_model(data.d(), data.c(), &mut rng);
        let p = rng.random_range(1.0..8.0);
        let (lhs, rhs) = srm_bound_check(&model, &data, p).expect("valid instance");
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
        bad += usize::from(!(lhs <= rhs * (1.0 + tol)));
    }
    CheckResult::new("srm_bound", count, bad, worst, tol)
}

/// Per-sample Crammer–Singer loss never exceeds the Weston–Watkins loss and
/// equals it for two classes. `worst` is the largest `cs − ww`.
pub fn check_crammer_below_ww(seed: u64, count: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut bad, mut worst) = (0, 0, f64::NEG_INFINITY);
    for _ in 0..count {
        let data = random_dataset(&mut rng, 20, 6, 5);
        let model = random_model(data.d(), data.c(), &mut rng);
        let delta = rng.random_range(1e-3..1.0);
        let cs = crammer_singer_losses(&model, &data, delta).expect("valid instance");
        let ww = weston_watkins_losses(&model, &data, delta).expect("valid instance");
        for (a, b) in cs.iter().zip(&ww) {
            worst = worst.max(a - b);
            cases += 1;
            let ok = if data.c() == 2 { a == b } else { a <= b };
            bad += usize::from(!ok);
        }
    }
    CheckResult::new("crammer_below_ww", cases, bad, worst, 0.0)
}

/// Folds partition the samples, fold sizes differ by at most one overall
/// and within each class. `worst` is the largest size spread seen.
pub fn check_fold_partition(seed: u64, count: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut bad, mut worst) = (0, 0, 0.0f64);
    for _ in 0..count {
        let data = random_dataset(&mut rng, 60, 6, 1);
        if data.n() < 2 {
            continue;
        }
        let k = rng.random_range(2..=data.n().min(10));
        let plan = make_folds(&data, k, rng.random()).expect("valid fold count");
        cases += 1;
        let mut spread = spread_of(&plan.fold_sizes());
        let mut ok = plan.assignment.iter().all(|&f| f < k);
        let mut seen = vec![false; data.n()];
        for f in 0..k {
            let (train, test) = plan.split(f);
            ok &= train.len() + test.len() == data.n();
            for &i in &test {
                ok &= !seen[i];
                seen[i] = true;
            }
        }
        ok &= seen.iter().all(|&s| s);
        for class in 0..data.c() {
            let mut sizes = vec![0usize; k];
            for (i, &y) in data.labels().iter().enumerate() {
                if y == class {
                    sizes[plan.assignment[i]] += 1;
                }
            }
            spread = spread.max(spread_of(&sizes));
        }
        ok &= spread <= 1.0;
        worst = worst.max(spread);
        bad += usize::from(!ok);
    }
    CheckResult::new("fold_partition", cases, bad, worst, 1.0)
}

fn spread_of(sizes: &[usize]) -> f64 {
    let max = sizes.iter().max().copied().unwrap_or(0);
    let min = sizes.iter().min().copied().unwrap_or(0);
    (max - min) as f64
}

/// Standardizing then inverting reproduces the features.
/// `worst` is the largest relative coordinate error.
pub fn check_standardize_inverse(seed: u64, count: usize) -> CheckResult {
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..count {
        let mut data = random_dataset(&mut rng, 30, 4, 6);
        let offset = rng.random_range(-100.0..100.0);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        data = data
            .with_features(data.features().mapv(|v| offset + scale * v))
            .expect("finite features");
        let stats = fit_standardizer(&data);
        let back = stats
            .invert(&stats.apply(&data).expect("same width"))
            .expect("same width");
        let err = data
            .features()
            .iter()
            .zip(back.features())
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        worst = worst.max(err);
        bad += usize::from(!(err <= tol));
    }
    CheckResult::new("standardize_inverse", count, bad, worst, tol)
}

/// Adding the same constant to every bias never changes a prediction.
pub fn check_bias_shift_invariance(seed: u64, count: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..count {
        let data = random_dataset(&mut rng, 20, 6, 5);
        let model = random_model(data.d(), data.c(), &mut rng);
        let shift: f64 = rng.random_range(-8.0..8.0);
        let shifted = LinearModel::new(model.weights.clone(), model.bias.mapv(|b| b + shift));
        let a = model.predict_batch(data.features()).expect("same width");
        let b = shifted.predict_batch(data.features()).expect("same width");
        bad += a.iter().zip(&b).filter(|(x, y)| x != y).count();
    }
    CheckResult::new("bias_shift_invariance", count, bad, if bad > 0 { 1.0 } else { 0.0 }, 0.0)
}

/// Seeded 3-class Gaussian problem used by the equivalence check.
pub fn gaussian_problem(seed: u64, n: usize, d: usize, c: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Array2::from_shape_fn((c, d), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        centers[[labels[i], j]] + rng.random_range(-1.5..1.5)
    });
    Dataset::new(x, labels, c).expect("valid problem")
}

/// Outcome of one ridge-form versus pair-form comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOutcome {
    pub max_weight_diff: f64,
    pub agreeing_predictions: usize,
    pub test_points: usize,
}

/// Training settings for the equivalence comparison: a smaller step and more
/// iterations than the defaults, so both optimizers settle well inside the
/// comparison tolerance.
pub fn equivalence_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        max_iters: 20_000,
        rel_tol: 0.0,
        seed,
        ..TrainConfig::default()
    }
}

/// Trains the ridge-form Weston–Watkins model with `λ` and the max-min
/// model with `p = 2`, `λ/c`, then compares mean-centered weights and the
/// predictions on `test_points` fresh points.
pub fn compare_ww_equivalence(seed: u64, test_points: usize) -> EquivalenceOutcome {
    let c = 3;
    let data = gaussian_problem(seed, 60, 4, c);
    let lambda = 0.5;
    let train_cfg = equivalence_train_config(seed);
    let ww_cfg = ObjectiveConfig {
        lambda,
        delta: 1e-2,
        ..ObjectiveConfig::default()
    };
    let m3_cfg = ObjectiveConfig {
        p: 2.0,
        lambda: lambda / c as f64,
        ..ww_cfg
    };
    let ww = train_ww(&data, &ww_cfg, &train_cfg).expect("trainable problem");
    let (m3, _) = train(&data, &m3_cfg, &train_cfg, None).expect("trainable problem");
    let centered = |m: &LinearModel| {
        let (mean, _) = m.translation_component();
        let mut w = m.weights.clone();
        for (mut row, mu) in w.rows_mut().into_iter().zip(&mean) {
            row -= *mu;
        }
        w
    };
    let max_weight_diff = (&centered(&ww) - &centered(&m3))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let agreeing_predictions = (0..test_points)
        .filter(|_| {
            let x = Array1::from_shape_fn(data.d(), |_| rng.random_range(-4.0..4.0));
            ww.predict(x.view()).expect("same width") == m3.predict(x.view()).expect("same width")
        })
        .count();
    EquivalenceOutcome {
        max_weight_diff,
        agreeing_predictions,
        test_points,
    }
}

/// Ridge-form and pair-form training agree; `worst` is the largest
/// mean-centered weight difference.
pub fn check_ww_equivalence(seed: u64, problems: usize) -> CheckResult {
    let tol = 1e-3;
    let (mut bad, mut worst) = (0, 0.0f64);
    for i in 0..problems as u64 {
        let r = compare_ww_equivalence(seed.wrapping_add(i), 100);
        worst = worst.max(r.max_weight_diff);
        bad += usize::from(!(r.max_weight_diff <= tol && r.agreeing_predictions >= 99));
    }
    CheckResult::new("ww_equivalence", problems, bad, worst, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        assert!(check_pairwise_identity(1, 20).passed);
        assert!(check_smoothing_bound(1001).passed);
        assert!(check_variance_identity(1, 100).passed);
        assert!(check_fold_partition(1, 30).passed);
    }

    #[test]
    fn gradient_fault_is_detected() {
        assert!(check_gradients(3, 2, false).passed);
        let faulty = check_gradients(3, 2, true);
        assert!(!faulty.passed);
        assert_eq!(faulty.violations, faulty.cases);
    }
}
