use std::fs;
use std::path::Path;

use qbr_cli::{run, EXIT_ACCEPTANCE, EXIT_INPUT, EXIT_OK};
use serde_json::Value;

fn qbr(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("qbr").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn reproduce_output_is_byte_identical_across_runs() {
    let (c1, o1, _) = qbr(&["reproduce", "--seed", "0"]);
    let (c2, o2, _) = qbr(&["reproduce", "--seed", "0"]);
    assert_eq!(c1, c2);
    assert_eq!(o1, o2);
    assert!(o1.contains("Algorithm"));
    assert_eq!(o1.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 6);
}

#[test]
fn reproduce_exit_code_tracks_checks_and_lists_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = qbr(&["reproduce", "--out", p(dir.path())]);
    let failing: Vec<&str> = out.lines().filter(|l| l.starts_with("FAIL")).collect();
    if failing.is_empty() {
        assert_eq!(code, EXIT_OK);
    } else {
        assert_eq!(code, EXIT_ACCEPTANCE);
        for line in failing {
            let name = line["FAIL ".len()..].split(':').next().unwrap();
            assert!(err.contains(name), "{err}");
        }
    }
    for tag in ["logistic", "naive_bayes", "forest", "mlp", "svm"] {
        let roc = fs::read_to_string(dir.path().join(format!("roc_{tag}.csv"))).unwrap();
        assert!(roc.starts_with("fpr,tpr\n"));
    }
    assert!(dir.path().join("svm_grid.csv").exists());
    assert!(dir.path().join("features.csv").exists());
}

#[test]
fn bogus_algorithm_is_usage_error() {
    let (code, _, err) = qbr(&["train", "--algorithm", "bogus", "--model", "x.isvmodel"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("bogus"));
}

#[test]
fn missing_data_file_names_the_path() {
    let (code, _, err) = qbr(&["features", "--data", "/definitely/not/here.csv"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("/definitely/not/here.csv"), "{err}");
}

#[test]
fn malformed_data_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "IR,MR,FF,CR,CO,OR,Class\nP,P,P,P,P,X,NB\n").unwrap();
    let (code, _, err) = qbr(&["evaluate", "--algorithm", "nb", "--data", p(&bad)]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("bad.csv"), "{err}");
}

fn train(dir: &Path, name: &str, algorithm: &str) -> Value {
    let model = dir.join(name);
    let (code, out, err) = qbr(&["train", "--algorithm", algorithm, "--seed", "3", "--model", p(&model)]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    serde_json::from_slice(&fs::read(&model).unwrap()).unwrap()
}

#[test]
fn training_twice_gives_identical_artifacts_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    for alg in ["logistic", "nb", "forest", "mlp"] {
        let mut a = train(dir.path(), "a.isvmodel", alg);
        let mut b = train(dir.path(), "b.isvmodel", alg);
        a["training"]["timestamp"] = Value::Null;
        b["training"]["timestamp"] = Value::Null;
        assert_eq!(a, b, "{alg}");
        assert!(a["metrics_summary"]["accuracy"].as_f64().unwrap() > 0.9);
    }
}

#[test]
fn explicit_svm_parameters_skip_grid_search() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("svm.isvmodel");
    let (code, out, _) = qbr(&[
        "train", "--algorithm", "svm", "--c", "2", "--gamma", "0.25", "--model", p(&model),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(!out.contains("grid search"));
    let v: Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(v["hyperparameters"]["c"], 2.0);
    assert_eq!(v["hyperparameters"]["gamma"], 0.25);
}

#[test]
fn predict_single_row_and_extreme_profile() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("nb.isvmodel");
    train(dir.path(), "nb.isvmodel", "nb");
    let input = dir.path().join("one.csv");
    fs::write(&input, "IR,MR,FF,CR,CO,OR\nN,N,N,N,N,N\n").unwrap();
    let (code, out, err) = qbr(&["predict", "--model", p(&model), "--input", p(&input)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "IR,MR,FF,CR,CO,OR,Predicted,Score");
    assert!(lines[1].starts_with("N,N,N,N,N,N,B,"));
    assert!(err.is_empty(), "unlabeled input has no error rate");
}

#[test]
fn predict_error_rate_matches_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("lr.isvmodel");
    train(dir.path(), "lr.isvmodel", "logistic");
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/qualitative_bankruptcy.csv");
    let dest = dir.path().join("pred.csv");
    let (code, out, _) = qbr(&["predict", "--model", p(&model), "--input", p(&data), "--out", p(&dest)]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(&dest).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 250);
    let correct = rows.iter().filter(|r| r[6] == r[8]).count();
    let accuracy = correct as f64 / rows.len() as f64;
    let expected = format!("error: {:.2}%", 100.0 * (1.0 - accuracy));
    assert!(out.contains(&expected), "{out} vs {expected}");
}

#[test]
fn predict_reports_bad_row_line() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("nb.isvmodel");
    train(dir.path(), "nb.isvmodel", "nb");
    let input = dir.path().join("short.csv");
    fs::write(&input, "IR,MR,FF,CR,CO,OR\nP,P,P,P,P,P\nP,P,P\n").unwrap();
    let (code, _, err) = qbr(&["predict", "--model", p(&model), "--input", p(&input)]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains('3'), "{err}");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("qbr.toml");
    fs::write(&cfg, "algorithm = \"nb\"\nk = 5\nseed = 1\n").unwrap();
    let (code, out, _) = qbr(&["--config", p(&cfg), "evaluate"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("Naive Bayes (5-fold, seed 1)"), "{out}");
    let (_, out, _) = qbr(&["--config", p(&cfg), "evaluate", "--k", "4", "--algorithm", "logistic"]);
    assert!(out.starts_with("Logistic regression (4-fold, seed 1)"), "{out}");

    fs::write(&cfg, "colour = \"red\"\n").unwrap();
    let (code, _, err) = qbr(&["--config", p(&cfg), "features"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn heldout_evaluation_writes_roc() {
    let dir = tempfile::tempdir().unwrap();
    let roc = dir.path().join("roc.csv");
    let (code, out, _) = qbr(&["evaluate", "--algorithm", "forest", "--cv-mode", "heldout", "--k", "4", "--out", p(&roc)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("auc:"));
    let text = fs::read_to_string(&roc).unwrap();
    assert!(text.lines().count() >= 3);
}
