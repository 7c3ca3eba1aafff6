//! ROC against the concordance statistic, confusion identities and CV behaviour.

use proptest::prelude::*;
use qbr_core::classifier::{Classifier, TrainError, Trainer};
use qbr_core::dataset::{encode, Dataset, EncodedMatrix, Label};
use qbr_core::evaluation::{
    confusion, k_fold_cv, metrics, roc, stratified_folds, stratified_split, ConfusionMatrix,
};
use qbr_core::{Algorithm, ClassifierConfig, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probability a random positive outranks a random negative, ties counted half.
fn concordance(labels: &[Label], scores: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if li.is_bankrupt() && !lj.is_bankrupt() {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Bankrupt), Just(Label::NonBankrupt)]
}

proptest! {
    #[test]
    fn auc_equals_concordance(
        mut labels in prop::collection::vec(label_strategy(), 2..80),
        raw in prop::collection::vec(0u8..12, 80),
    ) {
        labels[0] = Label::Bankrupt;
        labels[1] = Label::NonBankrupt;
        // Coarse scores so ties are common.
        let scores: Vec<f64> = raw[..labels.len()].iter().map(|&s| f64::from(s) / 4.0).collect();
        let curve = roc(&labels, &scores).unwrap();
        prop_assert!((curve.auc - concordance(&labels, &scores)).abs() <= 1e-9);
        prop_assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        prop_assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn confusion_is_permutation_invariant_and_accuracy_exact(
        pairs in prop::collection::vec((label_strategy(), label_strategy()), 1..60),
        seed in any::<u64>(),
    ) {
        let (t, p): (Vec<Label>, Vec<Label>) = pairs.iter().copied().unzip();
        let cm = confusion(&t, &p).unwrap();
        let mut shuffled = pairs.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (t2, p2): (Vec<Label>, Vec<Label>) = shuffled.into_iter().unzip();
        prop_assert_eq!(confusion(&t2, &p2).unwrap(), cm);
        let acc = metrics(&cm).accuracy;
        prop_assert_eq!((acc * cm.total() as f64).round() as usize, cm.tp + cm.tn);
        prop_assert!((acc * cm.total() as f64 - (cm.tp + cm.tn) as f64).abs() < 1e-9);
    }

    #[test]
    fn folds_partition_and_stratify(n_b in 1usize..40, n_nb in 1usize..40, k in 2usize..11, seed in any::<u64>()) {
        prop_assume!(n_b + n_nb >= k);
        let labels: Vec<Label> = (0..n_b + n_nb)
            .map(|i| if i < n_b { Label::Bankrupt } else { Label::NonBankrupt })
            .collect();
        let fold = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(fold.len(), labels.len());
        let mut sizes = vec![0usize; k];
        let mut b_per = vec![0usize; k];
        for (i, &f) in fold.iter().enumerate() {
            prop_assert!(f < k);
            sizes[f] += 1;
            if labels[i].is_bankrupt() {
                b_per[f] += 1;
            }
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        // Round-robin dealing keeps each class within two of an even share.
        let share = n_b as f64 / k as f64;
        for &b in &b_per {
            prop_assert!((b as f64 - share).abs() <= 2.0);
        }
        prop_assert_eq!(stratified_folds(&labels, k, seed).unwrap(), fold);
    }
}

#[test]
fn random_scores_have_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let labels: Vec<Label> = (0..200)
        .map(|i| if i % 2 == 0 { Label::Bankrupt } else { Label::NonBankrupt })
        .collect();
    let scores: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let curve = roc(&labels, &scores).unwrap();
    assert!((curve.auc - 0.5).abs() <= 0.12, "auc {}", curve.auc);
    assert!((curve.auc - concordance(&labels, &scores)).abs() <= 1e-9);
}

#[test]
fn split_of_bundled_corpus() {
    let d = Dataset::bundled();
    let (train, test) = stratified_split(&d, 2.0 / 3.0, 0).unwrap();
    assert_eq!((train.len(), test.len()), (166, 84));
    assert_eq!(train.class_counts(), (95, 71));
    let (again, _) = stratified_split(&d, 2.0 / 3.0, 0).unwrap();
    assert_eq!(again.records, train.records);
}

/// Always predicts the class it saw most often during training.
struct Majority;
struct Constant(Label);

impl Classifier for Constant {
    fn score(&self, _: &[f64]) -> f64 {
        self.0.encode()
    }
    fn predict(&self, _: &[f64]) -> Label {
        self.0
    }
}

impl Trainer for Majority {
    type Model = Constant;
    fn fit(&self, m: &EncodedMatrix, _: u64) -> Result<Constant, TrainError> {
        let (nb, b) = m.class_counts();
        Ok(Constant(if b > nb { Label::Bankrupt } else { Label::NonBankrupt }))
    }
}

#[test]
fn constant_classifier_scores_majority_fraction() {
    let m = encode(&Dataset::bundled()).unwrap();
    let cv = k_fold_cv(&m, &Majority, 10, 0, Execution::Serial).unwrap();
    assert!((cv.mean.accuracy - 143.0 / 250.0).abs() < 1e-12);
    assert_eq!(
        cv.pooled,
        ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 107,
            tn: 143
        }
    );
}

/// Perfect single-rule classifier on a 12-record toy under leave-one-out.
#[test]
fn leave_one_out_on_separable_toy() {
    struct Rule;
    struct RuleModel;
    impl Classifier for RuleModel {
        fn score(&self, x: &[f64]) -> f64 {
            1.0 - x[4]
        }
        fn predict(&self, x: &[f64]) -> Label {
            if x[4] == 0.0 { Label::Bankrupt } else { Label::NonBankrupt }
        }
    }
    impl Trainer for Rule {
        type Model = RuleModel;
        fn fit(&self, _: &EncodedMatrix, _: u64) -> Result<RuleModel, TrainError> {
            Ok(RuleModel)
        }
    }
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| vec![0.5, 0.5, 0.5, 0.5, if i < 5 { 0.0 } else { 1.0 }, 0.5])
        .collect();
    let y = (0..12).map(|i| if i < 5 { 1.0 } else { 0.0 }).collect();
    let m = EncodedMatrix::from_rows(&rows, y, qbr_core::dataset::FEATURE_NAMES.iter().map(|s| s.to_string()).collect());
    let cv = k_fold_cv(&m, &Rule, 12, 3, Execution::Serial).unwrap();
    assert_eq!(cv.mean.accuracy, 1.0);
    assert_eq!(cv.per_fold.len(), 12);
}

#[test]
fn serial_and_parallel_cv_agree() {
    let m = encode(&Dataset::bundled()).unwrap();
    for a in Algorithm::ALL {
        let cfg = ClassifierConfig::default_for(a);
        let s = k_fold_cv(&m, &cfg, 10, 5, Execution::Serial).unwrap();
        let p = k_fold_cv(&m, &cfg, 10, 5, Execution::Parallel).unwrap();
        assert_eq!(s, p, "{a}");
        assert_eq!(s.per_fold.len(), 10);
        assert_eq!(s.pooled.total(), 250);
    }
}
