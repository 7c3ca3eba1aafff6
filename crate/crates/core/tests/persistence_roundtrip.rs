//! Artifact save/load round trips, staged load errors and prediction export.

use qbr_core::dataset::{encode, parse_record, Dataset, FEATURE_NAMES};
use qbr_core::persistence::{
    dataset_hash, export_predictions, from_bytes, load_model_file, save_model, save_model_file,
    to_bytes, ModelArtifact, PersistError, PredictionRow, TrainingInfo, FORMAT_VERSION,
};
use qbr_core::{Algorithm, Classifier, ClassifierConfig, Record, TrainedModel};
use serde_json::Value;

fn artifact(algorithm: Algorithm) -> ModelArtifact {
    let d = Dataset::bundled();
    let m = encode(&d).unwrap();
    let config = ClassifierConfig::default_for(algorithm);
    let model = config.fit_with(&m, 0, Default::default()).unwrap();
    ModelArtifact::new(
        config.seeded(0),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        model,
        TrainingInfo {
            dataset_hash: dataset_hash(Dataset::bundled_bytes()),
            seed: 0,
            timestamp: 1_700_000_000,
        },
        None,
    )
}

fn edit(bytes: &[u8], f: impl FnOnce(&mut Value)) -> Vec<u8> {
    let mut v: Value = serde_json::from_slice(bytes).unwrap();
    f(&mut v);
    serde_json::to_vec_pretty(&v).unwrap()
}

#[test]
fn round_trip_is_bit_exact_for_every_algorithm() {
    for a in Algorithm::ALL {
        let original = artifact(a);
        let mut buf = Vec::new();
        let n = save_model(&original, &mut buf).unwrap();
        assert_eq!(n, buf.len());
        let loaded = from_bytes(&buf).unwrap();
        assert_eq!(loaded, original, "{a}");
        for r in Record::all_rating_combinations() {
            let x = r.encoded();
            assert_eq!(
                original.model.score(&x).to_bits(),
                loaded.model.score(&x).to_bits(),
                "{a}"
            );
            assert_eq!(original.model.predict(&x), loaded.model.predict(&x));
        }
        // Stable field order: re-saving yields identical bytes.
        assert_eq!(to_bytes(&loaded), buf);
    }
}

#[test]
fn document_layout() {
    let text = String::from_utf8(to_bytes(&artifact(Algorithm::Svm))).unwrap();
    let keys = [
        "\"format_version\"",
        "\"algorithm\"",
        "\"features\"",
        "\"hyperparameters\"",
        "\"parameters\"",
        "\"training\"",
        "\"metrics_summary\"",
    ];
    let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    assert!(text.contains("\"algorithm\": \"svm\""));
}

#[test]
fn staged_load_errors() {
    let good = to_bytes(&artifact(Algorithm::NaiveBayes));

    let truncated = &good[..good.len() / 2];
    match from_bytes(truncated) {
        Err(PersistError::Parse { line, .. }) => assert!(line > 0),
        other => panic!("expected parse error, got {other:?}"),
    }

    let future = edit(&good, |v| v["format_version"] = (FORMAT_VERSION + 1).into());
    assert!(matches!(
        from_bytes(&future),
        Err(PersistError::UnsupportedVersion { found }) if found == FORMAT_VERSION + 1
    ));

    let alien = edit(&good, |v| v["algorithm"] = "rotation_forest".into());
    assert!(matches!(from_bytes(&alien), Err(PersistError::UnsupportedAlgorithm(t)) if t == "rotation_forest"));

    let tampered = edit(&good, |v| {
        v["parameters"]["likelihoods"][0][1] = serde_json::json!([0.6, 0.4, 0.2]);
    });
    assert!(matches!(from_bytes(&tampered), Err(PersistError::InvariantViolation(_))));

    let bad_feature = edit(&good, |v| v["features"][0] = "XX".into());
    assert!(matches!(from_bytes(&bad_feature), Err(PersistError::InvariantViolation(_))));
}

#[test]
fn svm_equality_constraint_is_rechecked() {
    let good = to_bytes(&artifact(Algorithm::Svm));
    let loaded = from_bytes(&good).unwrap();
    let TrainedModel::Svm(svm) = &loaded.model else {
        panic!("svm expected")
    };
    assert!(svm.equality_residual() <= 1e-8);

    let skewed = edit(&good, |v| {
        let a = v["parameters"]["alphas"][0].as_f64().unwrap();
        v["parameters"]["alphas"][0] = (a * 0.5).into();
    });
    assert!(matches!(from_bytes(&skewed), Err(PersistError::InvariantViolation(_))));
}

#[test]
fn atomic_file_write_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.isvmodel");
    let a = artifact(Algorithm::Forest);
    save_model_file(&a, &path).unwrap();
    save_model_file(&a, &path).unwrap();
    assert_eq!(load_model_file(&path).unwrap(), a);
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn export_of_corpus_reparses() {
    let a = artifact(Algorithm::Logistic);
    let rows: Vec<PredictionRow> = Dataset::bundled()
        .records
        .iter()
        .map(|r| PredictionRow::assess(&a, r))
        .collect();
    let mut out = Vec::new();
    assert_eq!(export_predictions(&rows, &mut out).unwrap(), 250);
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 251);
    assert_eq!(lines[0], "IR,MR,FF,CR,CO,OR,Predicted,Score,Actual");
    for (line, row) in lines[1..].iter().zip(&rows) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        let parsed = parse_record(&fields[..6].join(",")).unwrap();
        assert_eq!(parsed.ratings, row.ratings);
    }
}
