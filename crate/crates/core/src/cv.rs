//! Method dispatch, cross-validation, grid search and method comparison.
//!
//! Every parallel loop here goes through [`crate::par`], which merges
//! results in input order, so reports are identical at any thread count.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, OvOModel, OvRModel, RidgeLoss};
use crate::data::{fit_standardizer, make_folds, Dataset, FoldPlan, StandardizationStats};
use crate::error::{Error, Result};
use crate::model::{EvalReport, LinearModel, MarginReport};
use crate::objective::{LossKind, ObjectiveConfig};
use crate::optim::{self, TrainConfig, TrainTrace};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    M3svm,
    Ism3,
    Ovr,
    Ovo,
    Crammer,
    Ww,
    Multilr,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::M3svm,
        Method::Ism3,
        Method::Ovr,
        Method::Ovo,
        Method::Crammer,
        Method::Ww,
        Method::Multilr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::M3svm => "m3svm",
            Method::Ism3 => "ism3",
            Method::Ovr => "ovr",
            Method::Ovo => "ovo",
            Method::Crammer => "crammer",
            Method::Ww => "ww",
            Method::Multilr => "multilr",
        }
    }

    /// Whether the method has a pairwise-regularizer exponent `p`.
    pub fn uses_p(self) -> bool {
        matches!(self, Method::M3svm | Method::Ism3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected one of m3svm, ism3, ovr, ovo, crammer, ww, multilr)"
                ))
            })
    }
}

/// A method together with its objective settings. For `ism3` the loss is
/// forced to logistic and for `m3svm` to the smoothed hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub objective: ObjectiveConfig,
}

impl MethodConfig {
    pub fn new(method: Method, mut objective: ObjectiveConfig) -> Self {
        match method {
            Method::M3svm => objective.loss = LossKind::SmoothedHinge,
            Method::Ism3 => objective.loss = LossKind::Logistic,
            _ => {}
        }
        Self { method, objective }
    }

    pub fn with_params(&self, p: Option<f64>, lambda: f64) -> Self {
        let mut objective = self.objective;
        if let Some(p) = p {
            objective.p = p;
        }
        objective.lambda = lambda;
        Self {
            method: self.method,
            objective,
        }
    }
}

/// A trained model of any method.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Linear { method: Method, model: LinearModel },
    Ovr(OvRModel),
    Ovo(OvOModel),
}

impl Classifier {
    pub fn method(&self) -> Method {
        match self {
            Classifier::Linear { method, .. } => *method,
            Classifier::Ovr(_) => Method::Ovr,
            Classifier::Ovo(_) => Method::Ovo,
        }
    }

    pub fn c(&self) -> usize {
        match self {
            Classifier::Linear { model, .. } => model.c(),
            Classifier::Ovr(m) => m.c(),
            Classifier::Ovo(m) => m.c,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Classifier::Linear { model, .. } => model.d(),
            Classifier::Ovr(m) => m.members.first().map_or(0, |b| b.w.len()),
            Classifier::Ovo(m) => m.members.first().map_or(0, |b| b.model.w.len()),
        }
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        crate::error::check_dim("sample length", self.d(), x.len())?;
        Ok(match self {
            Classifier::Linear { model, .. } => model.predict(x)?,
            Classifier::Ovr(m) => m.predict(x),
            Classifier::Ovo(m) => m.predict(x),
        })
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<EvalReport> {
        crate::error::check_dim("class count", self.c(), data.c())?;
        crate::error::check_dim("feature count", self.d(), data.d())?;
        Ok(match self {
            Classifier::Linear { model, .. } => model.evaluate(data)?,
            Classifier::Ovr(m) => baselines::evaluate_with(data, |x| m.predict(x)),
            Classifier::Ovo(m) => baselines::evaluate_with(data, |x| m.predict(x)),
        })
    }

    /// Pairwise margins; only defined for single-matrix models.
    pub fn margin_report(&self) -> Option<Result<MarginReport>> {
        match self {
            Classifier::Linear { model, .. } => Some(model.margin_report()),
            _ => None,
        }
    }
}

/// Trains `method` on `data` (no standardization).
pub fn fit(data: &Dataset, method: &MethodConfig, train_cfg: &TrainConfig) -> Result<Classifier> {
    let obj = &method.objective;
    let linear = |model| Classifier::Linear {
        method: method.method,
        model,
    };
    Ok(match method.method {
        Method::M3svm | Method::Ism3 => linear(optim::train(data, obj, train_cfg, None)?.0),
        Method::Crammer => linear(baselines::train_crammer(data, obj, train_cfg)?),
        Method::Ww => linear(baselines::train_ww(data, obj, train_cfg)?),
        Method::Multilr => linear(baselines::train_multilr(data, obj, train_cfg)?),
        Method::Ovr => Classifier::Ovr(baselines::train_ovr(data, obj, train_cfg)?),
        Method::Ovo => Classifier::Ovo(baselines::train_ovo(data, obj, train_cfg)?),
    })
}

/// [`fit`] that also returns the optimizer trace of single-matrix methods,
/// with per-iteration accuracy on `eval_set` when given.
pub fn fit_traced(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    eval_set: Option<&Dataset>,
) -> Result<(Classifier, Option<TrainTrace>)> {
    let obj = &method.objective;
    let ridge = |loss| baselines::train_ridge(data, loss, obj, train_cfg, eval_set);
    let (model, trace) = match method.method {
        Method::M3svm | Method::Ism3 => optim::train(data, obj, train_cfg, eval_set)?,
        Method::Crammer => ridge(RidgeLoss::CrammerSinger)?,
        Method::Ww => ridge(RidgeLoss::WestonWatkins)?,
        Method::Multilr => ridge(RidgeLoss::Softmax)?,
        Method::Ovr | Method::Ovo => return Ok((fit(data, method, train_cfg)?, None)),
    };
    Ok((
        Classifier::Linear {
            method: method.method,
            model,
        },
        Some(trace),
    ))
}

/// A classifier plus the feature standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub standardizer: Option<StandardizationStats>,
    pub classifier: Classifier,
}

impl Pipeline {
    /// Standardization statistics, when used, come from `data` alone.
    pub fn fit(
        data: &Dataset,
        method: &MethodConfig,
        train_cfg: &TrainConfig,
        standardize: bool,
    ) -> Result<Self> {
        let standardizer = standardize.then(|| fit_standardizer(data));
        let classifier = match &standardizer {
            Some(s) => fit(&s.apply(data)?, method, train_cfg)?,
            None => fit(data, method, train_cfg)?,
        };
        Ok(Self {
            standardizer,
            classifier,
        })
    }

    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        match &self.standardizer {
            Some(s) => s.apply(data),
            None => Ok(data.clone()),
        }
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<EvalReport> {
        self.classifier.evaluate(&self.prepare(data)?)
    }

    pub fn predict_batch(&self, data: &Dataset) -> Result<Vec<usize>> {
        let prepared = self.prepare(data)?;
        prepared
            .features()
            .rows()
            .into_iter()
            .map(|x| self.classifier.predict(x))
            .collect()
    }
}

/// Population mean and standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct FoldOutcome {
    accuracy: f64,
    min_margin: Option<f64>,
}

fn run_fold(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    plan: &FoldPlan,
    fold: usize,
    standardize: bool,
) -> Result<FoldOutcome> {
    let (train_idx, test_idx) = plan.split(fold);
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let pipeline = Pipeline::fit(&train, method, train_cfg, standardize)?;
    let accuracy = pipeline.evaluate(&test)?.accuracy;
    let min_margin = match pipeline.classifier.margin_report() {
        Some(Ok(r)) => Some(r.min_margin),
        Some(Err(Error::DegeneratePair { .. })) => Some(0.0),
        Some(Err(e)) => return Err(e),
        None => None,
    };
    Ok(FoldOutcome {
        accuracy,
        min_margin,
    })
}

fn check_plan(data: &Dataset, plan: &FoldPlan) -> Result<()> {
    crate::error::check_dim("fold assignment length", data.n(), plan.assignment.len())
}

/// Test accuracy on each fold of `plan`, in fold order.
pub fn cross_validate(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    plan: &FoldPlan,
    standardize: bool,
) -> Result<Vec<f64>> {
    check_plan(data, plan)?;
    let folds: Vec<usize> = (0..plan.k).collect();
    let outcomes = par::try_map(&folds, |&f| {
        run_fold(data, method, train_cfg, plan, f, standardize)
    })?;
    Ok(outcomes.into_iter().map(|o| o.accuracy).collect())
}

/// Evenly spaced values over `[lo, hi]`, or spaced evenly in log scale.
pub fn spaced(lo: f64, hi: f64, count: usize, log: bool) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
    (0..count)
        .map(|i| {
            let v = a + (b - a) * i as f64 / (count - 1) as f64;
            if log {
                v.exp()
            } else {
                v
            }
        })
        .collect()
}

/// Hyperparameter grid. `p` values are ignored for methods without `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Grid {
    pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 1e-1);

    /// `p ∈ {1, …, 8}` and ten `λ` values over `[1e-4, 1e-1]`.
    pub fn default_grid(log_lambda: bool) -> Self {
        Self {
            p: (1..=8).map(f64::from).collect(),
            lambda: spaced(Self::LAMBDA_RANGE.0, Self::LAMBDA_RANGE.1, 10, log_lambda),
        }
    }

    /// Cells in `p`-major, `λ`-minor order.
    pub fn cells(&self, method: Method) -> Vec<(Option<f64>, f64)> {
        let ps: Vec<Option<f64>> = if method.uses_p() {
            self.p.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        ps.into_iter()
            .flat_map(|p| self.lambda.iter().map(move |&l| (p, l)))
            .collect()
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        if self.lambda.is_empty() || (method.uses_p() && self.p.is_empty()) {
            return Err(Error::Config("grids must be nonempty".into()));
        }
        Ok(())
    }
}

/// One grid cell's cross-validated result. `min_margin` is the mean over
/// the fold models' minimum pairwise margins (`None` for ensembles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub p: Option<f64>,
    pub lambda: f64,
    pub mean_acc: f64,
    pub std: f64,
    pub min_margin: Option<f64>,
}

/// Cross-validates every cell of `grid` on the same folds.
pub fn grid_search(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    plan: &FoldPlan,
    grid: &Grid,
    standardize: bool,
) -> Result<Vec<GridRow>> {
    check_plan(data, plan)?;
    grid.validate(method.method)?;
    let cells = grid.cells(method.method);
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.k).map(move |f| (c, f)))
        .collect();
    let outcomes = par::try_map(&tasks, |&(c, f)| {
        let (p, lambda) = cells[c];
        run_fold(data, &method.with_params(p, lambda), train_cfg, plan, f, standardize)
    })?;
    Ok(cells
        .iter()
        .zip(outcomes.chunks(plan.k))
        .map(|(&(p, lambda), folds)| {
            let acc: Vec<f64> = folds.iter().map(|o| o.accuracy).collect();
            let (mean_acc, std) = mean_std(&acc);
            let margins: Option<Vec<f64>> = folds.iter().map(|o| o.min_margin).collect();
            GridRow {
                p,
                lambda,
                mean_acc,
                std,
                min_margin: margins.map(|m| mean_std(&m).0),
            }
        })
        .collect())
}

/// Highest mean accuracy; ties go to the earliest row.
pub fn best_row(rows: &[GridRow]) -> Option<&GridRow> {
    rows.iter()
        .fold(None, |best: Option<&GridRow>, r| match best {
            Some(b) if b.mean_acc >= r.mean_acc => Some(b),
            _ => Some(r),
        })
}

pub fn write_grid_csv<W: std::io::Write>(rows: &[GridRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "p,lambda,mean_acc,std,min_margin")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{}",
            opt(r.p),
            r.lambda,
            r.mean_acc,
            r.std,
            opt(r.min_margin)
        )?;
    }
    Ok(())
}

/// Summary of the pairwise margins of a refit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub argmin_pair: (usize, usize),
}

impl MarginStats {
    pub fn from_report(r: &MarginReport) -> Self {
        let margins: Vec<f64> = r.pair_margins.iter().map(|p| p.margin).collect();
        Self {
            min: r.min_margin,
            mean: mean_std(&margins).0,
            max: margins.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            argmin_pair: r.argmin_pair,
        }
    }
}

/// Hyperparameters picked by an inner grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub p: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Per outer fold, when hyperparameters were chosen by an inner search.
    pub selected: Option<Vec<Selected>>,
    /// Margins of a model refit on all data; `None` for ensembles.
    pub refit_margins: Option<MarginStats>,
}

/// Settings shared by the cross-validation entry points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k: usize,
    pub seed: u64,
    pub standardize: bool,
    /// Hyperparameter grid searched on each outer training split.
    pub inner_grid: Option<Grid>,
}

fn margin_stats(c: &Classifier) -> Result<Option<MarginStats>> {
    c.margin_report()
        .transpose()
        .map(|r| r.as_ref().map(MarginStats::from_report))
}

/// Stratified `k`-fold CV. With an inner grid, each outer training split is
/// itself split into `k` folds (same seed) and the best cell there is refit
/// on the whole training split before touching the test fold. The refit on
/// all data uses the cell chosen most often, earliest on ties.
pub fn cv_report(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    settings: &CvSettings,
) -> Result<CvReport> {
    let plan = make_folds(data, settings.k, settings.seed)?;
    let (fold_accuracies, selected, final_cfg) = match &settings.inner_grid {
        None => (
            cross_validate(data, method, train_cfg, &plan, settings.standardize)?,
            None,
            *method,
        ),
        Some(grid) => {
            let folds: Vec<usize> = (0..plan.k).collect();
            let outer = par::try_map(&folds, |&f| {
                let (train_idx, test_idx) = plan.split(f);
                let train = data.subset(&train_idx);
                let test = data.subset(&test_idx);
                let inner = make_folds(&train, settings.k.min(train.n()), settings.seed)?;
                let rows = grid_search(&train, method, train_cfg, &inner, grid, settings.standardize)?;
                let best = best_row(&rows).expect("nonempty grid");
                let cfg = method.with_params(best.p, best.lambda);
                let pipeline = Pipeline::fit(&train, &cfg, train_cfg, settings.standardize)?;
                let acc = pipeline.evaluate(&test)?.accuracy;
                Ok((acc, Selected { p: best.p, lambda: best.lambda }))
            })?;
            let (acc, sel): (Vec<f64>, Vec<Selected>) = outer.into_iter().unzip();
            let mode = most_common(&sel);
            (acc, Some(sel), method.with_params(mode.p, mode.lambda))
        }
    };
    let refit = Pipeline::fit(data, &final_cfg, train_cfg, settings.standardize)?;
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(CvReport {
        method: method.method,
        k: settings.k,
        seed: settings.seed,
        fold_accuracies,
        mean,
        std,
        selected,
        refit_margins: margin_stats(&refit.classifier)?,
    })
}

fn most_common(sel: &[Selected]) -> Selected {
    let mut best = sel[0];
    let mut best_count = 0;
    for s in sel {
        let count = sel.iter().filter(|t| *t == s).count();
        if count > best_count {
            best = *s;
            best_count = count;
        }
    }
    best
}

/// Outcome of the repeated grid-search protocol for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub method: Method,
    /// Best cell of each run, one run per fold seed.
    pub runs: Vec<GridRow>,
    pub mean: f64,
    pub std: f64,
}

/// For each of `runs` fold seeds (`seed`, `seed + 1`, ...): stratified
/// `k`-fold grid search, keeping the best cell's mean accuracy. Reports the
/// mean and standard deviation of those accuracies across runs.
pub fn repeated_grid_search(
    data: &Dataset,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    grid: &Grid,
    k: usize,
    seed: u64,
    runs: usize,
    standardize: bool,
) -> Result<ProtocolReport> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let mut best = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let plan = make_folds(data, k, seed.wrapping_add(r))?;
        let rows = grid_search(data, method, train_cfg, &plan, grid, standardize)?;
        best.push(*best_row(&rows).expect("nonempty grid"));
    }
    let acc: Vec<f64> = best.iter().map(|r| r.mean_acc).collect();
    let (mean, std) = mean_std(&acc);
    Ok(ProtocolReport {
        method: method.method,
        runs: best,
        mean,
        std,
    })
}

/// Runs [`repeated_grid_search`] for each method with the same folds.
pub fn compare(
    data: &Dataset,
    methods: &[MethodConfig],
    train_cfg: &TrainConfig,
    grid: &Grid,
    k: usize,
    seed: u64,
    runs: usize,
    standardize: bool,
) -> Result<Vec<ProtocolReport>> {
    methods
        .iter()
        .map(|m| repeated_grid_search(data, m, train_cfg, grid, k, seed, runs, standardize))
        .collect()
}

/// Markdown table of a comparison.
pub fn comparison_markdown(reports: &[ProtocolReport]) -> String {
    let mut s = String::from("| method | mean accuracy | std | runs |\n|---|---|---|---|\n");
    for r in reports {
        s.push_str(&format!(
            "| {} | {:.4} | {:.4} | {} |\n",
            r.method,
            r.mean,
            r.std,
            r.runs.len()
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64, n: usize, c: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        for (i, &y) in labels.iter().enumerate() {
            let angle = y as f64 * std::f64::consts::TAU / c as f64;
            x[[i, 0]] = 3.0 * angle.cos() + rng.random_range(-1.0..1.0);
            x[[i, 1]] = 3.0 * angle.sin() + rng.random_range(-1.0..1.0);
        }
        Dataset::new(x, labels, c).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_iters: 300,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn linear_lambda_grid() {
        let g = Grid::default_grid(false);
        assert_eq!(g.lambda.len(), 10);
        assert_eq!(g.lambda[0], 1e-4);
        assert!((g.lambda[9] - 1e-1).abs() < 1e-15);
        assert!((g.lambda[1] - (1e-4 + 0.0999 / 9.0)).abs() < 1e-15);
        let log = Grid::default_grid(true);
        assert!((log.lambda[3] - 1e-3).abs() < 1e-15);
        assert_eq!(g.cells(Method::M3svm).len(), 80);
        assert_eq!(g.cells(Method::Ovo).len(), 10);
        assert_eq!(g.cells(Method::M3svm)[1], (Some(1.0), g.lambda[1]));
    }

    #[test]
    fn best_row_prefers_earliest_tie() {
        let row = |p, acc| GridRow {
            p: Some(p),
            lambda: 0.1,
            mean_acc: acc,
            std: 0.0,
            min_margin: None,
        };
        let rows = [row(1.0, 0.5), row(2.0, 0.7), row(3.0, 0.7)];
        assert_eq!(best_row(&rows).unwrap().p, Some(2.0));
    }

    #[test]
    fn leave_one_out_reports_n_folds() {
        let data = blobs(1, 20, 2);
        let settings = CvSettings {
            k: 20,
            seed: 0,
            standardize: false,
            inner_grid: None,
        };
        let method = MethodConfig::new(Method::M3svm, ObjectiveConfig::default());
        let r = cv_report(&data, &method, &quick(), &settings).unwrap();
        assert_eq!(r.fold_accuracies.len(), 20);
        let (mean, _) = mean_std(&r.fold_accuracies);
        assert_eq!(mean, r.mean);
    }

    #[test]
    fn single_cell_grid_matches_cv() {
        let data = blobs(2, 30, 3);
        let method = MethodConfig::new(Method::M3svm, ObjectiveConfig::default());
        let plan = make_folds(&data, 3, 5).unwrap();
        let grid = Grid {
            p: vec![3.0],
            lambda: vec![0.01],
        };
        let rows = grid_search(&data, &method, &quick(), &plan, &grid, true).unwrap();
        let cell = method.with_params(Some(3.0), 0.01);
        let acc = cross_validate(&data, &cell, &quick(), &plan, true).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].mean_acc, rows[0].std), mean_std(&acc));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let data = blobs(3, 24, 3);
        let method = MethodConfig::new(Method::Ovo, ObjectiveConfig::default());
        let plan = make_folds(&data, 4, 1).unwrap();
        let grid = Grid {
            p: vec![],
            lambda: vec![1e-3, 1e-1],
        };
        let one = par::with_jobs(Some(1), || grid_search(&data, &method, &quick(), &plan, &grid, false));
        let three = par::with_jobs(Some(3), || grid_search(&data, &method, &quick(), &plan, &grid, false));
        assert_eq!(one.unwrap(), three.unwrap());
    }
}
