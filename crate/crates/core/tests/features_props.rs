//! Correlation and information-gain properties.

use proptest::prelude::*;
use qbr_core::dataset::{encode, Dataset, EncodedMatrix};
use qbr_core::features::{
    correlation_filter, entropy_from_counts, information_gain, label_entropy, pearson, rank_features,
};

fn grid_value() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), Just(1.0)]
}

proptest! {
    #[test]
    fn pearson_is_bounded_and_symmetric(
        x in prop::collection::vec(grid_value(), 3..40),
        y in prop::collection::vec(grid_value(), 40),
    ) {
        let y = &y[..x.len()];
        if let (Ok(a), Ok(b)) = (pearson(&x, y), pearson(y, &x)) {
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
            // Affine invariance: rescaling a grid column leaves r unchanged.
            let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
            prop_assert!((pearson(&scaled, y).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn information_gain_bounds(
        cols in prop::collection::vec(grid_value(), 30),
        ys in prop::collection::vec(0u8..2, 30),
    ) {
        let y: Vec<f64> = ys.iter().map(|&v| f64::from(v)).collect();
        let rows: Vec<Vec<f64>> = cols.iter().map(|&v| vec![v]).collect();
        let m = EncodedMatrix::from_rows(&rows, y.clone(), vec!["f".into()]);
        let ig = information_gain(&m, 0).unwrap();
        let h = label_entropy(&y);
        prop_assert!(ig >= -1e-12 && ig <= h + 1e-12);
    }
}

#[test]
fn entropy_examples() {
    assert_eq!(entropy_from_counts(&[5, 5]), 1.0);
    assert_eq!(entropy_from_counts(&[7, 0]), 0.0);
    assert!((entropy_from_counts(&[1, 1, 1, 1]) - 2.0).abs() < 1e-15);
}

#[test]
fn label_copy_has_full_gain() {
    let y: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
    let rows: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
    let m = EncodedMatrix::from_rows(&rows, y.clone(), vec!["copy".into()]);
    assert!((information_gain(&m, 0).unwrap() - label_entropy(&y)).abs() < 1e-15);
}

#[test]
fn bundled_corpus_screening() {
    let m = encode(&Dataset::bundled()).unwrap();
    let rep = correlation_filter(&m, 0.7).unwrap();
    assert_eq!(rep.kept.len(), 6);
    assert!(rep.dropped.is_empty());
    let ranking = rank_features(&m);
    assert_eq!(ranking.gains.len(), 6);
    assert!(ranking.gains.iter().all(|g| g.gain > 0.0));
    for w in ranking.gains.windows(2) {
        assert!(w[0].gain >= w[1].gain);
    }
}
