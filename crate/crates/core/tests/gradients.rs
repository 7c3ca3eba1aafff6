//! Finite-difference gradient checks and training-loss behaviour.

use qbr_core::dataset::{encode, Dataset, EncodedMatrix};
use qbr_core::logistic::{fit_logistic_traced, logistic_gradient, logistic_loss, LogisticConfig};
use qbr_core::neural::{
    fit_mlp, fit_mlp_traced, init_mlp, mlp_forward, mlp_gradients, mlp_loss, MlpConfig, MlpModel,
};
use qbr_core::Classifier;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn corpus() -> EncodedMatrix {
    encode(&Dataset::bundled()).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let m = corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = rng.random_range(-2.0..2.0);
        let lambda = rng.random_range(0.0..0.1);
        let (gw, gb) = logistic_gradient(&w, b, &m, lambda);
        let mut numeric = Vec::new();
        for j in 0..6 {
            let (mut hi, mut lo) = (w.clone(), w.clone());
            hi[j] += EPS;
            lo[j] -= EPS;
            numeric.push((logistic_loss(&hi, b, &m, lambda) - logistic_loss(&lo, b, &m, lambda)) / (2.0 * EPS));
        }
        numeric.push((logistic_loss(&w, b + EPS, &m, lambda) - logistic_loss(&w, b - EPS, &m, lambda)) / (2.0 * EPS));
        let mut analytic = gw.clone();
        analytic.push(gb);
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-6, "relative error {e}");
    }
}

#[test]
fn logistic_loss_never_increases_at_default_rate() {
    let (_, trace) = fit_logistic_traced(&corpus(), &LogisticConfig::default()).unwrap();
    assert!(trace.len() > 1);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn logistic_fits_corpus_and_toy() {
    let m = corpus();
    let (model, _) = fit_logistic_traced(&m, &LogisticConfig::default()).unwrap();
    let correct = (0..m.n_rows()).filter(|&i| model.predict(m.row(i)) == m.label(i)).count();
    assert!(correct as f64 / m.n_rows() as f64 >= 0.95);

    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
    let toy = EncodedMatrix::from_rows(&rows, y, vec!["x".into()]);
    let (model, _) = fit_logistic_traced(&toy, &LogisticConfig::default()).unwrap();
    assert!(model.score(&[0.0]) < 0.5 && model.score(&[1.0]) > 0.9);
}

/// Flat view of every MLP parameter, group by group.
fn params_mut(m: &mut MlpModel) -> Vec<&mut f64> {
    let mut out: Vec<&mut f64> = Vec::new();
    for row in m.w1.iter_mut() {
        out.extend(row.iter_mut());
    }
    out.extend(m.b1.iter_mut());
    out.extend(m.w2.iter_mut());
    out.push(&mut m.b2);
    out
}

fn numeric_mlp_gradient(model: &MlpModel, batch: &EncodedMatrix) -> Vec<f64> {
    let n = params_mut(&mut model.clone()).len();
    (0..n)
        .map(|k| {
            let mut hi = model.clone();
            *params_mut(&mut hi)[k] += EPS;
            let mut lo = model.clone();
            *params_mut(&mut lo)[k] -= EPS;
            (mlp_loss(&hi, batch) - mlp_loss(&lo, batch)) / (2.0 * EPS)
        })
        .collect()
}

#[test]
fn mlp_gradient_matches_central_differences_per_group() {
    let m = corpus();
    for seed in 0..20u64 {
        let model = init_mlp(
            6,
            &MlpConfig {
                seed,
                init_scale: 2.0,
                ..Default::default()
            },
        );
        let g = mlp_gradients(&model, &m);
        let numeric = numeric_mlp_gradient(&model, &m);
        let (h, d) = (model.hidden(), model.n_inputs());
        let groups: [(&str, Vec<f64>, std::ops::Range<usize>); 4] = [
            ("w1", g.w1.concat(), 0..h * d),
            ("b1", g.b1.clone(), h * d..h * d + h),
            ("w2", g.w2.clone(), h * d + h..h * d + 2 * h),
            ("b2", vec![g.b2], h * d + 2 * h..h * d + 2 * h + 1),
        ];
        for (name, analytic, range) in groups {
            let e = rel_err(&analytic, &numeric[range]);
            assert!(e < 1e-4, "seed {seed} group {name}: relative error {e}");
        }
    }
}

#[test]
fn mlp_gradient_is_a_batch_mean() {
    let m = corpus();
    let idx: Vec<usize> = (0..m.n_rows()).chain(0..m.n_rows()).collect();
    let doubled = m.select_rows(&idx);
    let model = init_mlp(6, &MlpConfig::default());
    let a = mlp_gradients(&model, &m);
    let b = mlp_gradients(&model, &doubled);
    assert!(rel_err(&[a.w1.concat(), a.b1, a.w2, vec![a.b2]].concat(), &[b.w1.concat(), b.b1, b.w2, vec![b.b2]].concat()) < 1e-12);
}

#[test]
fn mlp_loss_non_increasing_on_corpus() {
    let m = corpus();
    let monotone = |cfg: &MlpConfig| {
        let (_, trace) = fit_mlp_traced(&m, cfg).unwrap();
        trace.windows(2).all(|w| w[1] <= w[0] + 1e-9)
    };
    let cfg = MlpConfig::default();
    let halved = MlpConfig {
        learning_rate: cfg.learning_rate / 2.0,
        ..cfg
    };
    assert!(monotone(&cfg) || monotone(&halved));
}

#[test]
fn mlp_fits_corpus() {
    let m = corpus();
    let model = fit_mlp(&m, &MlpConfig::default()).unwrap();
    let correct = (0..m.n_rows()).filter(|&i| model.predict(m.row(i)) == m.label(i)).count();
    assert!(correct as f64 / m.n_rows() as f64 >= 0.96, "{correct}/250");
}

#[test]
fn mlp_learns_xor() {
    let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let toy = EncodedMatrix::from_rows(&rows, vec![0.0, 1.0, 1.0, 0.0], vec!["a".into(), "b".into()]);
    let cfg = MlpConfig {
        hidden: 4,
        learning_rate: 2.0,
        epochs: 20_000,
        seed: 3,
        init_scale: 1.0,
    };
    let model = fit_mlp(&toy, &cfg).unwrap();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(model.predict(row), toy.label(i), "pattern {row:?}");
    }
}

#[test]
fn hidden_unit_permutation_is_invisible() {
    let model = init_mlp(
        6,
        &MlpConfig {
            seed: 8,
            init_scale: 1.5,
            ..Default::default()
        },
    );
    let perm = [2, 0, 3, 1];
    let mut shuffled = model.clone();
    for (new, &old) in perm.iter().enumerate() {
        shuffled.w1[new] = model.w1[old].clone();
        shuffled.b1[new] = model.b1[old];
        shuffled.w2[new] = model.w2[old];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..=1.0)).collect();
        assert!((mlp_forward(&model, &x) - mlp_forward(&shuffled, &x)).abs() < 1e-12);
    }
}
