//! Run configuration: command-line flags layered over an optional flat TOML
//! file. Precedence is flag, then file, then `MAXMIN_SVM_SEED` (seed only),
//! then built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use maxmin_svm::cv::{Grid, Method, MethodConfig};
use maxmin_svm::data::{load_csv, load_libsvm, Dataset, LabelColumn};
use maxmin_svm::objective::{ObjectiveConfig, RegNorm};
use maxmin_svm::optim::TrainConfig;
use serde::Deserialize;

use crate::CliError;

pub const SEED_ENV: &str = "MAXMIN_SVM_SEED";

/// Flags shared by every subcommand. Each one can also be set in the
/// `--config` file under the same name with underscores.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Flat TOML file with any of the options below.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Training (or evaluation) data file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `csv` or `libsvm`; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Label column of CSV input: `last`, a 0-based index or a header name.
    #[arg(long)]
    pub label_column: Option<String>,
    /// CSV input has no header row.
    #[arg(long)]
    pub no_header: bool,

    /// m3svm, ism3, ovr, ovo, crammer, ww or multilr.
    #[arg(long)]
    pub method: Option<String>,
    /// Methods for `compare`, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// `l2` or `l1` norm inside the pairwise regularizer.
    #[arg(long)]
    pub reg_norm: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Seed for initialization and, unless `--cv-seed` is given, folds.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    /// Repetitions with fold seeds `cv_seed, cv_seed + 1, ...`.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Grid of `p` values, comma separated (default 1..8).
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Grid of `λ` values, comma separated (default: ten over [1e-4, 1e-1]).
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Space the default `λ` grid logarithmically instead of linearly.
    #[arg(long)]
    pub log_lambda: bool,
    /// Standardize features with statistics of the training split.
    #[arg(long)]
    pub standardize: bool,
    /// `cv`: choose (p, λ) by an inner grid search on each training split.
    #[arg(long)]
    pub nested: bool,

    /// Model file to read (`predict`, `eval`, `margins`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Held-out data whose accuracy is logged per iteration by `train`.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random models per gradient check.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Corrupts the analytic gradient inside `verify` and `gradcheck`.
    #[arg(long, hide = true)]
    pub inject_gradient_fault: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    format: Option<String>,
    label_column: Option<toml::Value>,
    header: Option<bool>,
    method: Option<String>,
    methods: Option<Vec<String>>,
    reg_norm: Option<String>,
    p: Option<f64>,
    lambda: Option<f64>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    adam_eps: Option<f64>,
    max_iters: Option<usize>,
    rel_tol: Option<f64>,
    seed: Option<u64>,
    k: Option<usize>,
    cv_seed: Option<u64>,
    runs: Option<usize>,
    p_grid: Option<Vec<f64>>,
    lambda_grid: Option<Vec<f64>>,
    log_lambda: Option<bool>,
    standardize: Option<bool>,
    nested: Option<bool>,
    model: Option<PathBuf>,
    eval_data: Option<PathBuf>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone)]
pub struct DataSource {
    pub format: Option<Format>,
    pub label_column: LabelColumn,
    pub header: bool,
}

impl DataSource {
    pub fn load(&self, path: &Path) -> Result<Dataset, CliError> {
        if !path.exists() {
            return Err(CliError::Usage(format!("{}: no such file", path.display())));
        }
        let format = self.format.unwrap_or_else(|| {
            match path.extension().and_then(|e| e.to_str()) {
                Some("libsvm" | "svm") => Format::Libsvm,
                _ => Format::Csv,
            }
        });
        Ok(match format {
            Format::Csv => load_csv(path, &self.label_column, self.header)?,
            Format::Libsvm => load_libsvm(path)?,
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub source: DataSource,
    pub method: MethodConfig,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub k: usize,
    pub cv_seed: u64,
    pub runs: usize,
    pub grid: Grid,
    pub standardize: bool,
    pub nested: bool,
    pub model: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub out: PathBuf,
    pub trials: usize,
    pub jobs: Option<usize>,
    pub inject_gradient_fault: bool,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse().map_err(|e: maxmin_svm::Error| usage(e.to_string()))
}

fn label_column(s: &str) -> LabelColumn {
    match s.parse::<LabelColumn>() {
        Ok(c) => c,
        Err(never) => match never {},
    }
}

impl RunConfig {
    pub fn resolve(flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            None => FileConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| usage(format!("{SEED_ENV}={v} is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };

        let method_name = flags.method.or(file.method).unwrap_or_else(|| "m3svm".into());
        let method = parse_method(&method_name)?;
        let p = flags.p.or(file.p);
        let p_grid = flags.p_grid.or(file.p_grid);
        if !method.uses_p() && (p.is_some() || p_grid.is_some()) {
            return Err(usage(format!("p not applicable to method {method}")));
        }

        let defaults = ObjectiveConfig::default();
        let reg_norm = match flags.reg_norm.or(file.reg_norm).as_deref() {
            None | Some("l2") => RegNorm::L2,
            Some("l1") => RegNorm::L1,
            Some(other) => return Err(usage(format!("unknown reg_norm `{other}` (expected l2 or l1)"))),
        };
        let objective = ObjectiveConfig {
            loss: defaults.loss,
            reg_norm,
            p: p.unwrap_or(defaults.p),
            lambda: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
            delta: flags.delta.or(file.delta).unwrap_or(defaults.delta),
        };
        let method = MethodConfig::new(method, objective);
        method.objective.validate().map_err(|e| usage(e.to_string()))?;

        let td = TrainConfig::default();
        let seed = flags.seed.or(file.seed).or(env_seed).unwrap_or(td.seed);
        let train = TrainConfig {
            learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(td.learning_rate),
            beta1: flags.beta1.or(file.beta1).unwrap_or(td.beta1),
            beta2: flags.beta2.or(file.beta2).unwrap_or(td.beta2),
            adam_eps: flags.adam_eps.or(file.adam_eps).unwrap_or(td.adam_eps),
            max_iters: flags.max_iters.or(file.max_iters).unwrap_or(td.max_iters),
            rel_tol: flags.rel_tol.or(file.rel_tol).unwrap_or(td.rel_tol),
            seed,
        };
        train.validate().map_err(|e| usage(e.to_string()))?;

        let methods = match flags.methods.or(file.methods) {
            None => Method::ALL.to_vec(),
            Some(list) => list.iter().map(|m| parse_method(m.trim())).collect::<Result<_, _>>()?,
        };
        if methods.is_empty() {
            return Err(usage("methods must name at least one method"));
        }

        let log_lambda = flags.log_lambda || file.log_lambda.unwrap_or(false);
        let mut grid = Grid::default_grid(log_lambda);
        if let Some(p) = p_grid {
            grid.p = p;
        }
        if let Some(l) = flags.lambda_grid.or(file.lambda_grid) {
            grid.lambda = l;
        }
        if grid.p.is_empty() || grid.lambda.is_empty() {
            return Err(usage("grids must be nonempty"));
        }
        if grid.p.iter().any(|&p| !(p > 0.0)) || grid.lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(usage("grid values must be positive (p) and nonnegative (lambda)"));
        }

        let label_column = match (flags.label_column, file.label_column) {
            (Some(s), _) => label_column(&s),
            (None, Some(toml::Value::Integer(i))) if i >= 0 => LabelColumn::Index(i as usize),
            (None, Some(toml::Value::String(s))) => label_column(&s),
            (None, Some(other)) => return Err(usage(format!("invalid label_column {other}"))),
            (None, None) => LabelColumn::Last,
        };
        let format = match flags.format.or(file.format).as_deref() {
            None => None,
            Some("csv") => Some(Format::Csv),
            Some("libsvm") => Some(Format::Libsvm),
            Some(other) => return Err(usage(format!("unknown format `{other}` (expected csv or libsvm)"))),
        };
        let k = flags.k.or(file.k).unwrap_or(5);
        if k < 2 {
            return Err(usage("k must be at least 2"));
        }
        let runs = flags.runs.or(file.runs).unwrap_or(1);
        if runs == 0 {
            return Err(usage("runs must be at least 1"));
        }
        let jobs = flags.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(usage("jobs must be at least 1"));
        }

        Ok(RunConfig {
            data: flags.data.or(file.data),
            source: DataSource {
                format,
                label_column,
                header: !flags.no_header && file.header.unwrap_or(true),
            },
            method,
            methods,
            train,
            k,
            cv_seed: flags.cv_seed.or(file.cv_seed).unwrap_or(seed),
            runs,
            grid,
            standardize: flags.standardize || file.standardize.unwrap_or(false),
            nested: flags.nested || file.nested.unwrap_or(false),
            model: flags.model.or(file.model),
            eval_data: flags.eval_data.or(file.eval_data),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            trials: flags.trials.or(file.trials).unwrap_or(5),
            jobs,
            inject_gradient_fault: flags.inject_gradient_fault,
        })
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| usage("--data is required"))
    }

    pub fn model_path(&self) -> Result<&Path, CliError> {
        self.model.as_deref().ok_or_else(|| usage("--model is required"))
    }

    pub fn load_data(&self) -> Result<Dataset, CliError> {
        self.source.load(self.data_path()?)
    }

    pub fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| usage(format!("{}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }
}
