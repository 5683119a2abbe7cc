use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maxmin-svm"));
    cmd.env_remove("MAXMIN_SVM_SEED");
    cmd
}

fn glass() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/glass.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three well separated 2-D blobs, `per_class` points each.
fn blobs(dir: &Path, per_class: usize) -> PathBuf {
    let centers = [(0.0, 4.0), (4.0, -2.0), (-4.0, -2.0)];
    let mut text = String::from("x,y,label\n");
    for (k, (cx, cy)) in centers.iter().enumerate() {
        for i in 0..per_class {
            let t = i as f64 * 2.399;
            let r = 0.3 + 0.1 * (i % 3) as f64;
            text += &format!("{},{},c{k}\n", cx + r * t.cos(), cy + r * t.sin());
        }
    }
    let p = dir.join("blobs.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&["train", "--data", path(&glass()), "--method", "svm", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown method"));
}

#[test]
fn p_with_ovo_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "train", "--data", path(&glass()), "--method", "ovo", "--p", "2", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("p not applicable"));
}

#[test]
fn missing_data_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&["cv", "--data", "no/such/file.csv", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "method = \"m3svm\"\nlearning_rat = 0.1\n").unwrap();
    let out = run(&["train", "--config", path(&cfg), "--data", path(&glass())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_model_and_trace() {
    let dir = TempDir::new().unwrap();
    let out = run(&["train", "--data", path(&glass()), "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    for key in ["d", "c", "W", "b", "class_names", "objective_config", "train_config"] {
        assert!(model.get(key).is_some(), "missing {key}");
    }
    assert_eq!(model["d"], 9);
    assert_eq!(model["c"], 6);
    assert_eq!(model["W"].as_array().unwrap().len(), 54);

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iter,objective,data_loss,reg_term,eps_term"));
    let last = lines.last().unwrap();
    let objective: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(objective.is_finite());
}

#[test]
fn eval_data_adds_accuracy_column() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), 10);
    let out = run(&[
        "train", "--data", path(&data), "--eval-data", path(&data), "--max-iters", "30",
        "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,data_loss,reg_term,eps_term,eval_acc\n"));
}

#[test]
fn predict_eval_and_margins_read_a_trained_model() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), 15);
    let d = path(dir.path());
    assert_eq!(code(&run(&["train", "--data", path(&data), "--out", d])), 0);
    let model = dir.path().join("model.json");

    let out = run(&["eval", "--data", path(&data), "--model", path(&model), "--out", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);

    let out = run(&["predict", "--data", path(&data), "--model", path(&model), "--out", d]);
    assert_eq!(code(&out), 0);
    let predictions = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 46);
    assert_eq!(predictions.lines().nth(1), Some("0,0,c0"));

    let out = run(&["margins", "--model", path(&model), "--out", d]);
    assert_eq!(code(&out), 0);
    let margins = fs::read_to_string(dir.path().join("margins.csv")).unwrap();
    let rows: Vec<&str> = margins.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let m: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(m > 0.0);
    }
}

#[test]
fn identical_columns_report_the_degenerate_pair() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), 5);
    let d = path(dir.path());
    assert_eq!(code(&run(&["train", "--data", path(&data), "--max-iters", "5", "--out", d])), 0);
    let model_path = dir.path().join("model.json");
    let mut model: Value = serde_json::from_str(&fs::read_to_string(&model_path).unwrap()).unwrap();
    for w in model["W"].as_array_mut().unwrap() {
        *w = Value::from(0.5);
    }
    fs::write(&model_path, serde_json::to_string(&model).unwrap()).unwrap();
    let out = run(&["margins", "--model", path(&model_path), "--out", d]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("degenerate pair (0, 1)"), "{}", stderr(&out));
}

#[test]
fn leave_one_out_reports_one_fold_per_sample() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("a,b,y\n");
    for i in 0..20 {
        let y = i % 2;
        text += &format!("{},{},{y}\n", i as f64 * 0.1, y as f64 * 3.0 - 1.5);
    }
    let data = dir.path().join("small.csv");
    fs::write(&data, text).unwrap();
    let out = run(&[
        "cv", "--data", path(&data), "--k", "20", "--max-iters", "100", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cv.json")).unwrap()).unwrap();
    assert_eq!(report["fold_accuracies"].as_array().unwrap().len(), 20);
    assert_eq!(report["k"], 20);
}

#[test]
fn default_grid_has_eighty_rows_in_p_major_order() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "gridsearch", "--data", path(&glass()), "--max-iters", "10", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let grid = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let rows: Vec<Vec<f64>> = grid
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 80);
    assert_eq!(rows[0], vec![1.0, 1e-4]);
    assert_eq!(rows[9][1], 0.1);
    assert_eq!(rows[10][0], 2.0);
    assert_eq!(rows[79][0], 8.0);
}

#[test]
fn verify_passes_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&run(&["verify", "--out", path(a.path())])), 0);
    assert_eq!(code(&run(&["verify", "--out", path(b.path())])), 0);
    assert_eq!(
        fs::read(a.path().join("verify.json")).unwrap(),
        fs::read(b.path().join("verify.json")).unwrap()
    );
}

#[test]
fn corrupted_gradient_fails_verification() {
    let dir = TempDir::new().unwrap();
    let out = run(&["verify", "--inject-gradient-fault", "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
    let out = run(&["gradcheck", "--inject-gradient-fault", "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gradcheck_passes_on_bundled_data() {
    let dir = TempDir::new().unwrap();
    for method in ["m3svm", "ism3"] {
        let out = run(&[
            "gradcheck", "--data", path(&glass()), "--method", method, "--delta", "0.01",
            "--out", path(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{method}: {}", stderr(&out));
    }
}

#[test]
fn seed_from_environment_is_overridden_by_flag() {
    let dirs: Vec<TempDir> = (0..4).map(|_| TempDir::new().unwrap()).collect();
    let data = glass();
    let train = |dir: &TempDir, env: Option<&str>, seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["train", "--data", path(&data), "--max-iters", "20", "--out", path(dir.path())]);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        if let Some(e) = env {
            cmd.env("MAXMIN_SVM_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read(dir.path().join("model.json")).unwrap()
    };
    let from_env = train(&dirs[0], Some("7"), None);
    let from_flag = train(&dirs[1], None, Some("7"));
    let default = train(&dirs[2], None, None);
    let overridden = train(&dirs[3], Some("7"), Some("0"));
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, default);
    assert_eq!(overridden, default);
}

#[test]
fn config_file_sets_options_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "data = \"{}\"\nmethod = \"ovr\"\nmax_iters = 20\nout = \"{}\"\n",
            path(&glass()),
            path(dir.path())
        ),
    )
    .unwrap();
    assert_eq!(code(&run(&["train", "--config", path(&cfg)])), 0);
    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["method"], "ovr");
    assert_eq!(model["train_config"]["max_iters"], 20);

    assert_eq!(code(&run(&["train", "--config", path(&cfg), "--method", "crammer"])), 0);
    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["method"], "crammer");
}

#[test]
fn outputs_do_not_depend_on_job_count() {
    let data = glass();
    let runs: Vec<(TempDir, &str)> = ["1", "2", "3"].into_iter().map(|j| (TempDir::new().unwrap(), j)).collect();
    for (dir, jobs) in &runs {
        let d = path(dir.path());
        let common = ["--data", path(&data), "--max-iters", "40", "--jobs", jobs, "--out", d];
        let grid = ["--p-grid", "1,4", "--lambda-grid", "0.001,0.05"];
        for (cmd, extra) in [
            ("train", vec!["--method", "ovo"]),
            ("gridsearch", grid.to_vec()),
            ("cv", [&["--nested", "--k", "3"][..], &grid[..]].concat()),
            ("compare", vec!["--methods", "m3svm,ovr,ww", "--runs", "2", "--lambda-grid", "0.01"]),
        ] {
            let out = bin().arg(cmd).args(common).args(&extra).output().unwrap();
            assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
        }
    }
    for file in ["model.json", "grid.csv", "cv.json", "compare.json", "compare.md"] {
        let reference = fs::read(runs[0].0.path().join(file)).unwrap();
        for (dir, jobs) in &runs[1..] {
            assert_eq!(fs::read(dir.path().join(file)).unwrap(), reference, "{file} differs at --jobs {jobs}");
        }
    }
}

#[test]
fn libsvm_input_is_detected_by_extension() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("tiny.libsvm");
    fs::write(&data, "1 1:0.5 2:1.0\n2 1:-0.5\n1 2:0.7\n2 1:-0.9 2:-0.1\n").unwrap();
    let out = run(&["train", "--data", path(&data), "--max-iters", "50", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["d"], 2);
    assert_eq!(model["class_names"], serde_json::json!(["1", "2"]));
}
