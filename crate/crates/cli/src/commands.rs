use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use maxmin_svm::cv::{self, Classifier, CvSettings, MethodConfig, Pipeline};
use maxmin_svm::data::{fit_standardizer, make_folds, Dataset};
use maxmin_svm::io::{load_model, save_model, write_json, SavedModel};
use maxmin_svm::optim::gradcheck_with_fault;
use maxmin_svm::verify::{self, VerifyOptions};
use maxmin_svm::Error;

use crate::config::RunConfig;
use crate::CliError;

const GRADCHECK_TOLERANCE: f64 = 1e-5;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source,
        }))
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Relabels `data` so that its class indices follow `names`.
fn align(data: Dataset, names: &[String]) -> Result<Dataset, CliError> {
    let labels = data
        .labels()
        .iter()
        .map(|&y| {
            let name = &data.class_names()[y];
            names.iter().position(|n| n == name).ok_or_else(|| {
                CliError::Usage(format!("class `{name}` does not occur in the model"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::with_class_names(
        data.features().clone(),
        labels,
        names.to_vec(),
    )?)
}

fn load_pipeline(cfg: &RunConfig) -> Result<(SavedModel, Pipeline), CliError> {
    let path = cfg.model_path()?;
    if !path.exists() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    let saved = load_model(path)?;
    let pipeline = saved.to_pipeline()?;
    Ok((saved, pipeline))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.load_data()?;
    let eval = match &cfg.eval_data {
        Some(path) => Some(align(cfg.source.load(path)?, data.class_names())?),
        None => None,
    };
    let standardizer = cfg.standardize.then(|| fit_standardizer(&data));
    let (train_set, eval_set) = match &standardizer {
        Some(s) => (s.apply(&data)?, eval.map(|e| s.apply(&e)).transpose()?),
        None => (data.clone(), eval),
    };
    let (classifier, trace) =
        cv::fit_traced(&train_set, &cfg.method, &cfg.train, eval_set.as_ref())?;
    let accuracy = classifier.evaluate(&train_set)?.accuracy;
    let pipeline = Pipeline {
        standardizer,
        classifier,
    };
    let saved = SavedModel::from_pipeline(&pipeline, &cfg.method, &cfg.train, data.class_names());
    let model_path = cfg.output("model.json")?;
    save_model(&model_path, &saved)?;
    println!("method          {}", cfg.method.method);
    println!("samples         {} ({} features, {} classes)", data.n(), data.d(), data.c());
    println!("train accuracy  {accuracy:.4}");
    println!("model           {}", model_path.display());
    if let Some(trace) = trace {
        let trace_path = cfg.output("trace.csv")?;
        let mut out = create(&trace_path)?;
        trace.write_csv(&mut out).map_err(io_error(&trace_path))?;
        out.flush().map_err(io_error(&trace_path))?;
        println!("iterations      {}", trace.rows.len());
        println!("final objective {:.10e}", trace.final_objective());
        println!("trace           {}", trace_path.display());
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let (saved, pipeline) = load_pipeline(cfg)?;
    let data = cfg.load_data()?;
    let predicted = pipeline.predict_batch(&data)?;
    let path = cfg.output("predictions.csv")?;
    let mut out = create(&path)?;
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "index,class_index,class_name")?;
        for (i, &k) in predicted.iter().enumerate() {
            writeln!(out, "{i},{k},{}", saved.class_names[k])?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_error(&path))?;
    println!("{} predictions written to {}", predicted.len(), path.display());
    Ok(())
}

fn print_confusion(confusion: &[Vec<usize>], names: &[String]) {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(1).max(6);
    print!("{:>width$} |", "true");
    for n in names {
        print!(" {n:>width$}");
    }
    println!();
    for (row, name) in confusion.iter().zip(names) {
        print!("{name:>width$} |");
        for v in row {
            print!(" {v:>width$}");
        }
        println!();
    }
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let (saved, pipeline) = load_pipeline(cfg)?;
    let data = align(cfg.load_data()?, &saved.class_names)?;
    let report = pipeline.evaluate(&data)?;
    let path = cfg.output("eval.json")?;
    write_json(&path, &report)?;
    println!("accuracy {:.4} on {} samples", report.accuracy, report.n);
    print_confusion(&report.confusion, &saved.class_names);
    Ok(())
}

pub fn cv(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.load_data()?;
    let settings = CvSettings {
        k: cfg.k,
        seed: cfg.cv_seed,
        standardize: cfg.standardize,
        inner_grid: cfg.nested.then(|| cfg.grid.clone()),
    };
    let report = cv::cv_report(&data, &cfg.method, &cfg.train, &settings)?;
    let path = cfg.output("cv.json")?;
    write_json(&path, &report)?;
    println!("{:>4}  {:>8}  {:>4}  {:>10}", "fold", "accuracy", "p", "lambda");
    for (f, acc) in report.fold_accuracies.iter().enumerate() {
        let (p, lambda) = match &report.selected {
            Some(sel) => (
                sel[f].p.map_or("-".into(), |p| format!("{p}")),
                format!("{:.6}", sel[f].lambda),
            ),
            None => (
                if cfg.method.method.uses_p() {
                    format!("{}", cfg.method.objective.p)
                } else {
                    "-".into()
                },
                format!("{:.6}", cfg.method.objective.lambda),
            ),
        };
        println!("{f:>4}  {acc:>8.4}  {p:>4}  {lambda:>10}");
    }
    println!("mean {:.4}  std {:.4}", report.mean, report.std);
    if let Some(m) = &report.refit_margins {
        println!(
            "refit margins: min {:.6} (pair {:?})  mean {:.6}  max {:.6}",
            m.min, m.argmin_pair, m.mean, m.max
        );
    }
    Ok(())
}

pub fn gridsearch(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.load_data()?;
    let plan = make_folds(&data, cfg.k, cfg.cv_seed)?;
    let rows = cv::grid_search(&data, &cfg.method, &cfg.train, &plan, &cfg.grid, cfg.standardize)?;
    let path = cfg.output("grid.csv")?;
    let mut out = create(&path)?;
    cv::write_grid_csv(&rows, &mut out).map_err(io_error(&path))?;
    out.flush().map_err(io_error(&path))?;
    let best = cv::best_row(&rows).expect("nonempty grid");
    println!("{} cells written to {}", rows.len(), path.display());
    println!(
        "best: p={} lambda={} mean accuracy {:.4} (std {:.4})",
        best.p.map_or("-".into(), |p| p.to_string()),
        best.lambda,
        best.mean_acc,
        best.std
    );
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let data = cfg.load_data()?;
    let methods: Vec<MethodConfig> = cfg
        .methods
        .iter()
        .map(|&m| MethodConfig::new(m, cfg.method.objective))
        .collect();
    let reports = cv::compare(
        &data,
        &methods,
        &cfg.train,
        &cfg.grid,
        cfg.k,
        cfg.cv_seed,
        cfg.runs,
        cfg.standardize,
    )?;
    write_json(cfg.output("compare.json")?, &reports)?;
    let table = cv::comparison_markdown(&reports);
    let md_path = cfg.output("compare.md")?;
    std::fs::write(&md_path, &table).map_err(io_error(&md_path))?;
    print!("{table}");
    Ok(())
}

pub fn margins(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, pipeline) = load_pipeline(cfg)?;
    let report = match &pipeline.classifier {
        Classifier::Linear { model, .. } => model.margin_report()?,
        other => {
            return Err(CliError::Usage(format!(
                "margins need a single weight matrix; {} models have none",
                other.method()
            )))
        }
    };
    let path = cfg.output("margins.csv")?;
    let mut out = create(&path)?;
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "k,l,margin")?;
        for m in &report.pair_margins {
            writeln!(out, "{},{},{:?}", m.k, m.l, m.margin)?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_error(&path))?;
    println!("{:>3} {:>3}  {:>12}", "k", "l", "margin");
    for m in &report.pair_margins {
        println!("{:>3} {:>3}  {:>12.6}", m.k, m.l, m.margin);
    }
    println!(
        "min margin {:.6} at pair {:?}",
        report.min_margin, report.argmin_pair
    );
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let data = match &cfg.data {
        Some(_) => cfg.load_data()?,
        None => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.train.seed);
            verify::random_dataset(&mut rng, 30, 5, 6)
        }
    };
    let data = match cfg.standardize {
        true => fit_standardizer(&data).apply(&data)?,
        false => data,
    };
    let report = gradcheck_with_fault(
        &data,
        &cfg.method.objective,
        cfg.trials,
        cfg.train.seed,
        cfg.inject_gradient_fault,
    )?;
    write_json(cfg.output("gradcheck.json")?, &report)?;
    println!(
        "{} trials, {} coordinates checked, {} skipped, max relative error {:.3e} (tolerance {:e})",
        report.trials,
        report.coordinates_checked,
        report.coordinates_skipped,
        report.max_rel_error,
        GRADCHECK_TOLERANCE
    );
    if report.max_rel_error <= GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "max relative error {:e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )))
    }
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let report = verify::run(VerifyOptions {
        seed: cfg.train.seed,
        inject_gradient_fault: cfg.inject_gradient_fault,
    });
    write_json(cfg.output("verify.json")?, &report)?;
    for c in &report.checks {
        println!(
            "{} {:<24} cases {:>6}  violations {:>4}  worst {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.violations,
            c.worst
        );
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
