use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{finite_diff_check, DEFAULT_STEP};

#[path = "../../tests/common/oracle.rs"]
mod oracle;

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn eval(f: impl FnOnce(&mut Graph, Var) -> Result<Var>, x: &Matrix) -> Result<f64> {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v)?;
    Ok(g.scalar(out))
}

fn two_view_labels(original: &[usize]) -> Vec<usize> {
    original.iter().chain(original).copied().collect()
}

fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
}

#[test]
fn cross_entropy_examples() {
    let perfect = m(1, 2, &[0.0, -1000.0]);
    assert_eq!(eval(|g, x| cross_entropy(g, x, &[0]), &perfect).unwrap(), 0.0);

    let uniform = Matrix::zeros(3, 5);
    let v = eval(|g, x| cross_entropy(g, x, &[0, 3, 4]), &uniform).unwrap();
    assert!((v - 5f64.ln()).abs() < 1e-15);

    // probabilities [0.25, 0.75] given as log-probabilities
    let logits = m(1, 2, &[0.25f64.ln(), 0.75f64.ln()]);
    let v = eval(|g, x| cross_entropy(g, x, &[1]), &logits).unwrap();
    assert!((v - 0.287_682_072_451_780_93).abs() < 1e-15);
}

#[test]
fn cross_entropy_rejects_out_of_range_label() {
    let err = eval(|g, x| cross_entropy(g, x, &[2]), &Matrix::zeros(1, 2)).unwrap_err();
    assert!(matches!(err, Error::Index { .. }));
}

#[test]
fn single_pair_batches_have_zero_loss() {
    let reps = m(2, 3, &[0.3, -0.2, 0.9, 0.5, 0.1, -0.4]);
    let inter = eval(|g, x| inter_contrastive(g, x, &[1, 1], 0.1, true), &reps).unwrap();
    let intra = eval(|g, x| intra_contrastive(g, x, 0.01, true), &reps).unwrap();
    assert!(inter.abs() < 1e-12 && intra.abs() < 1e-12);
}

#[test]
fn inter_fixed_batch_matches_frozen_oracle() {
    // reference from 50-digit evaluation of the double sum
    let reps = m(4, 2, &[1., 0., 0.8, 0.6, 0., 1., -0.6, 0.8]);
    let v = eval(|g, x| inter_contrastive(g, x, &[0, 0, 1, 1], 0.1, true), &reps).unwrap();
    assert!((v - 0.063_779_839_761_910_99).abs() < 1e-12, "{v}");
    let brute = oracle::brute_inter(&to_rows(&reps), &[0, 0, 1, 1], 0.1, true);
    assert!((v - brute).abs() < 1e-12);
}

#[test]
fn intra_fixed_batch_matches_frozen_oracle() {
    let probs = m(4, 2, &[0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.45, 0.55]);
    let v = eval(|g, x| intra_contrastive(g, x, 0.01, true), &probs).unwrap();
    assert!((v - 2.995_453_180_835_211_7).abs() < 1e-10, "{v}");
    let brute = oracle::brute_intra(&to_rows(&probs), 0.01, true);
    assert!((v - brute).abs() < 1e-10);
}

#[test]
fn distinct_labels_reduce_inter_to_intra() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..6);
        let data: Vec<f64> = (0..2 * n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reps = Matrix::from_vec(2 * n, 3, data).unwrap();
        let labels = two_view_labels(&(0..n).collect::<Vec<_>>());
        let a = eval(|g, x| inter_contrastive(g, x, &labels, 0.1, true), &reps).unwrap();
        let b = eval(|g, x| intra_contrastive(g, x, 0.1, true), &reps).unwrap();
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn vectorized_losses_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..100 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=6);
        let tau = [0.01, 0.1, 1.0][trial % 3];
        let data: Vec<f64> = (0..2 * n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reps = Matrix::from_vec(2 * n, d, data).unwrap();
        let original: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let labels = two_view_labels(&original);
        let rows = to_rows(&reps);
        let inter = eval(|g, x| inter_contrastive(g, x, &labels, tau, true), &reps).unwrap();
        let intra = eval(|g, x| intra_contrastive(g, x, tau, true), &reps).unwrap();
        assert!((inter - oracle::brute_inter(&rows, &labels, tau, true)).abs() <= 1e-9);
        assert!((intra - oracle::brute_intra(&rows, tau, true)).abs() <= 1e-9);
    }
}

#[test]
fn unnormalized_variant_matches_brute_force() {
    let reps = m(4, 2, &[0.2, 0.1, 0.4, 0.3, 0.9, 0.5, 0.1, 0.7]);
    let rows = to_rows(&reps);
    let a = eval(|g, x| intra_contrastive(g, x, 0.5, false), &reps).unwrap();
    assert!((a - oracle::brute_intra(&rows, 0.5, false)).abs() < 1e-12);
    let b = eval(|g, x| inter_contrastive(g, x, &[0, 1, 0, 1], 0.5, false), &reps).unwrap();
    assert!((b - oracle::brute_inter(&rows, &[0, 1, 0, 1], 0.5, false)).abs() < 1e-12);
}

#[test]
fn contrastive_contract_errors() {
    let one = Matrix::zeros(1, 2);
    assert!(matches!(
        eval(|g, x| intra_contrastive(g, x, 0.1, true), &one),
        Err(Error::Contract(_))
    ));
    let odd = Matrix::filled(3, 2, 1.0);
    assert!(matches!(
        eval(|g, x| intra_contrastive(g, x, 0.1, true), &odd),
        Err(Error::Contract(_))
    ));
    let two = Matrix::filled(2, 2, 1.0);
    assert!(matches!(
        eval(|g, x| intra_contrastive(g, x, 0.0, true), &two),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        eval(|g, x| inter_contrastive(g, x, &[0, 0], -1.0, true), &two),
        Err(Error::Config(_))
    ));
}

#[test]
fn anchors_without_positives_contribute_zero() {
    // rows 0 and 1 share a label, 2 and 3 are singletons
    let reps = m(4, 2, &[1., 0., 0.9, 0.1, 0., 1., -1., 0.2]);
    let v = eval(|g, x| inter_contrastive(g, x, &[0, 0, 1, 2], 0.5, true), &reps).unwrap();
    let brute = oracle::brute_inter(&to_rows(&reps), &[0, 0, 1, 2], 0.5, true);
    assert!((v - brute).abs() < 1e-12);
}

#[test]
fn discriminator_examples() {
    let uniform = Matrix::zeros(3, 4);
    let (ld, lfs) = {
        let mut g = Graph::new();
        let x = g.constant(uniform);
        let (a, b) = discriminator_objective(&mut g, x, 2, ConfusionKind::Nll).unwrap();
        (g.scalar(a), g.scalar(b))
    };
    assert!((ld - 4f64.ln()).abs() < 1e-15);
    assert_eq!(lfs, -ld);

    // softmax([0, ln 3]) = [1/4, 3/4]
    let mut g = Graph::new();
    let x = g.constant(m(1, 2, &[0.0, 3f64.ln()]));
    let (a, b) = discriminator_objective(&mut g, x, 0, ConfusionKind::Nll).unwrap();
    assert!((g.scalar(a) - 4f64.ln()).abs() < 1e-15);
    assert_eq!(g.scalar(b), -g.scalar(a));

    let y = g.constant(Matrix::zeros(1, 2));
    assert!(matches!(
        discriminator_objective(&mut g, y, 2, ConfusionKind::Nll),
        Err(Error::Index { .. })
    ));
}

#[test]
fn entropy_confusion_is_minimized_at_uniform() {
    let mut g = Graph::new();
    let x = g.constant(Matrix::zeros(2, 4));
    let (_, lfs) = discriminator_objective(&mut g, x, 0, ConfusionKind::Entropy).unwrap();
    assert!((g.scalar(lfs) + 4f64.ln()).abs() < 1e-15);
    let y = g.constant(m(1, 4, &[3., 0., 0., 0.]));
    let (_, peaked) = discriminator_objective(&mut g, y, 0, ConfusionKind::Entropy).unwrap();
    assert!(g.scalar(peaked) > g.scalar(lfs));
}

#[test]
fn total_main_loss_weighting() {
    let mut g = Graph::new();
    let c = g.constant(Matrix::filled(1, 1, 1.0));
    let fs0 = g.constant(Matrix::filled(1, 1, 1.5));
    let fs1 = g.constant(Matrix::filled(1, 1, 0.5));
    let intra = g.constant(Matrix::filled(1, 1, 3.0));
    let terms = MainLossTerms {
        classification: vec![c],
        confusion: vec![fs0, fs1],
        intra: vec![intra],
    };
    let weights = LossWeights {
        lambda_domain: 0.05,
        lambda_intra: 1.0,
        ..LossWeights::default()
    };
    let (total, parts) = total_main_loss(&mut g, &terms, &weights).unwrap();
    assert!((g.scalar(total) - 4.1).abs() < 1e-15);
    assert_eq!(parts.confusion, 2.0);
    assert_eq!(parts.classification, 1.0);
    assert_eq!(parts.intra, 3.0);

    let zero = LossWeights {
        lambda_domain: 0.0,
        lambda_inter: 0.0,
        lambda_intra: 0.0,
        ..LossWeights::default()
    };
    let (total, _) = total_main_loss(&mut g, &terms, &zero).unwrap();
    assert_eq!(g.scalar(total), 1.0);
}

#[test]
fn loss_weights_validation() {
    assert!(LossWeights::default().validate().is_ok());
    let bad = LossWeights {
        tau_intra: 0.0,
        ..LossWeights::default()
    };
    assert!(bad.validate().is_err());
    let neg = LossWeights {
        lambda_inter: -0.1,
        ..LossWeights::default()
    };
    assert!(neg.validate().is_err());
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..30 {
        let n = rng.random_range(1..=4);
        let d = rng.random_range(2..=5);
        let tau = [0.1, 0.5, 1.0][trial % 3];
        let data: Vec<f64> = (0..2 * n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reps = Matrix::from_vec(2 * n, d, data).unwrap();
        let labels = two_view_labels(&(0..n).map(|_| rng.random_range(0..2)).collect::<Vec<_>>());
        let class_labels: Vec<usize> = (0..2 * n).map(|_| rng.random_range(0..d)).collect();
        let checks = [
            finite_diff_check(|g, x| inter_contrastive(g, x, &labels, tau, true), &reps, DEFAULT_STEP),
            finite_diff_check(|g, x| intra_contrastive(g, x, tau, true), &reps, DEFAULT_STEP),
            finite_diff_check(|g, x| cross_entropy(g, x, &class_labels), &reps, DEFAULT_STEP),
            finite_diff_check(
                |g, x| Ok(discriminator_objective(g, x, 1, ConfusionKind::Entropy)?.1),
                &reps,
                DEFAULT_STEP,
            ),
        ];
        for (k, err) in checks.into_iter().enumerate() {
            let err = err.unwrap();
            assert!(err <= 1e-4, "loss {k} trial {trial}: {err}");
        }
    }
}

fn batch_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>)> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(n, d)| {
        (
            Just(n),
            Just(d),
            proptest::collection::vec(-3.0f64..3.0, 2 * n * d),
            proptest::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #[test]
    fn contrastive_losses_are_nonnegative((n, d, data, labels) in batch_strategy(), tau in 0.01f64..2.0) {
        let reps = Matrix::from_vec(2 * n, d, data).unwrap();
        let labels = two_view_labels(&labels);
        let inter = eval(|g, x| inter_contrastive(g, x, &labels, tau, true), &reps).unwrap();
        let intra = eval(|g, x| intra_contrastive(g, x, tau, true), &reps).unwrap();
        prop_assert!(inter >= -1e-12);
        prop_assert!(intra >= -1e-12);
    }

    #[test]
    fn contrastive_losses_ignore_row_scale(
        (n, d, data, labels) in batch_strategy(),
        row in 0usize..10,
        factor in 0.1f64..10.0,
    ) {
        let reps = Matrix::from_vec(2 * n, d, data).unwrap();
        let mut scaled = reps.clone();
        let r = row % (2 * n);
        scaled.row_mut(r).iter_mut().for_each(|v| *v *= factor);
        let labels = two_view_labels(&labels);
        let a = eval(|g, x| inter_contrastive(g, x, &labels, 0.1, true), &reps).unwrap();
        let b = eval(|g, x| inter_contrastive(g, x, &labels, 0.1, true), &scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        let a = eval(|g, x| intra_contrastive(g, x, 0.1, true), &reps).unwrap();
        let b = eval(|g, x| intra_contrastive(g, x, 0.1, true), &scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn contrastive_losses_ignore_sample_order((n, d, data, labels) in batch_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let reps = Matrix::from_vec(2 * n, d, data).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let rows: Vec<usize> = order.iter().copied().chain(order.iter().map(|i| i + n)).collect();
        let permuted = reps.select_rows(&rows);
        let permuted_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let (l1, l2) = (two_view_labels(&labels), two_view_labels(&permuted_labels));
        let a = eval(|g, x| inter_contrastive(g, x, &l1, 0.5, true), &reps).unwrap();
        let b = eval(|g, x| inter_contrastive(g, x, &l2, 0.5, true), &permuted).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        let a = eval(|g, x| intra_contrastive(g, x, 0.5, true), &reps).unwrap();
        let b = eval(|g, x| intra_contrastive(g, x, 0.5, true), &permuted).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
