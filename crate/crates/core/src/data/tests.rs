use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::losses::cross_entropy;
use crate::tensor::Graph;

fn spec(k: usize, c: usize, dim: usize, n: usize) -> SyntheticSpec {
    SyntheticSpec {
        num_domains: k,
        num_classes: c,
        dim,
        per_domain_n: n,
        class_separation: 3.0,
        domain_shift: 1.0,
        domain_rotation: 0.4,
        noise_std: 1.0,
        seed: 42,
    }
}

fn ids(xs: &[Instance]) -> BTreeSet<usize> {
    xs.iter().map(|i| i.id).collect()
}

fn assert_bookkeeping(ds: &MultiDomainDataset, train_sizes: &[usize]) {
    for (pool, &n) in ds.pools.iter().zip(train_sizes) {
        let (l, u) = (ids(&pool.labeled), ids(&pool.unlabeled));
        assert!(l.is_disjoint(&u));
        assert!(l.is_disjoint(&ids(&pool.val)) && l.is_disjoint(&ids(&pool.test)));
        assert!(u.is_disjoint(&ids(&pool.val)) && u.is_disjoint(&ids(&pool.test)));
        assert_eq!(pool.labeled.len() + pool.unlabeled.len(), n);
        assert!(pool.labeled.iter().all(|i| i.label.is_some()));
    }
}

#[test]
fn synthetic_split_counts() {
    let ds = spec(2, 2, 4, 100).generate().unwrap();
    assert_eq!(ds.num_domains(), 2);
    for pool in &ds.pools {
        assert_eq!((pool.labeled.len(), pool.val.len(), pool.test.len()), (70, 10, 20));
        assert!(pool.unlabeled.is_empty());
    }
    assert_eq!(ds.feature_dim, 4);
    assert_eq!(ds.num_classes, 2);
}

#[test]
fn synthetic_is_deterministic() {
    let s = spec(3, 3, 5, 60);
    assert_eq!(s.generate().unwrap(), s.generate().unwrap());
    let other = SyntheticSpec { seed: 43, ..s.clone() };
    assert_ne!(s.generate().unwrap(), other.generate().unwrap());
}

#[test]
fn synthetic_rejects_more_classes_than_instances() {
    let s = spec(2, 5, 3, 4);
    assert!(matches!(s.generate(), Err(Error::Config(_))));
}

#[test]
fn unshifted_domains_share_a_distribution() {
    let s = SyntheticSpec {
        domain_shift: 0.0,
        domain_rotation: 0.0,
        per_domain_n: 2000,
        ..spec(2, 2, 4, 2000)
    };
    let ds = s.generate().unwrap();
    let all = |p: &DomainPool| -> Vec<Instance> { p.labeled.iter().chain(&p.val).chain(&p.test).cloned().collect() };
    let (a, b) = (all(&ds.pools[0]), all(&ds.pools[1]));
    let n = a.len() as f64;
    for j in 0..4 {
        let mean = |xs: &[Instance]| xs.iter().map(|i| i.features[j]).sum::<f64>() / n;
        let var = |xs: &[Instance], m: f64| xs.iter().map(|i| (i.features[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        let (ma, mb) = (mean(&a), mean(&b));
        let sigma = ((var(&a, ma) + var(&b, mb)) / 2.0).sqrt();
        // two-sample difference has standard deviation σ·√(2/n)
        assert!(
            (ma - mb).abs() < 3.0 * sigma * (2.0 / n).sqrt(),
            "coord {j}: {ma} vs {mb}"
        );
    }
}

/// Softmax regression trained by gradient descent, used as a separability
/// oracle.
fn linear_train_accuracy(x: &Matrix, y: &[usize], classes: usize) -> f64 {
    let d = x.cols();
    let mut w = Matrix::zeros(d, classes);
    let mut b = Matrix::zeros(1, classes);
    for _ in 0..300 {
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.param(w.clone()), g.param(b.clone()));
        let logits = g.affine(xv, wv, bv).unwrap();
        let loss = cross_entropy(&mut g, logits, y).unwrap();
        g.backward(loss).unwrap();
        w.add_scaled(g.grad(wv).unwrap(), -0.5);
        b.add_scaled(g.grad(bv).unwrap(), -0.5);
    }
    let pred = x.matmul(&w).unwrap().argmax_rows();
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}

#[test]
fn well_separated_domains_are_linearly_separable() {
    let s = SyntheticSpec {
        class_separation: 10.0,
        noise_std: 0.1,
        ..spec(2, 3, 6, 150)
    };
    let ds = s.generate().unwrap();
    for pool in &ds.pools {
        let x = features_matrix(&pool.labeled, ds.feature_dim);
        let y: Vec<usize> = pool.labeled.iter().map(|i| i.label.unwrap()).collect();
        assert!(linear_train_accuracy(&x, &y, 3) >= 0.99);
    }
}

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn csv_partitions_by_label_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "d.csv", "label,f0,f1\n0,1.5,2\n1,-3,4e-2\n-1,0.25,7\n");
    let pool = load_domain_csv(&path, 3).unwrap();
    assert_eq!(pool.domain_id, 3);
    assert_eq!(pool.labeled.len(), 2);
    assert_eq!(pool.unlabeled.len(), 1);
    assert_eq!(pool.unlabeled[0].features, vec![0.25, 7.0]);
    assert_eq!(pool.unlabeled[0].label, None);
    assert_eq!(pool.labeled[1].features, vec![-3.0, 0.04]);
}

#[test]
fn csv_empty_data_section() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "d.csv", "label,f0,f1\n");
    let pool = load_domain_csv(&path, 0).unwrap();
    assert!(pool.labeled.is_empty() && pool.unlabeled.is_empty());
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = write(dir.path(), "r.csv", "label,f0,f1\n0,1,2\n1,3\n");
    let err = load_domain_csv(&ragged, 0).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

    let text = write(dir.path(), "t.csv", "label,f0\n0,1\n1,2\n0,abc\n");
    let err = load_domain_csv(&text, 0).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

    let label = write(dir.path(), "l.csv", "label,f0\n-2,1\n");
    assert!(matches!(load_domain_csv(&label, 0), Err(Error::Parse { line: 2, .. })));

    let header = write(dir.path(), "h.csv", "y,f0\n0,1\n");
    assert!(matches!(load_domain_csv(&header, 0), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let instances: Vec<Instance> = (0..50)
        .map(|id| Instance {
            id,
            features: (0..6)
                .map(|_| {
                    let mag = 10f64.powi(rng.random_range(-300..300));
                    rng.random_range(-1.0..1.0) * mag
                })
                .collect(),
            label: (id % 3 != 0).then_some(id % 4),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.csv");
    write_instances_csv(&path, &instances, 6).unwrap();
    let pool = load_domain_csv(&path, 0).unwrap();
    let mut loaded: Vec<Instance> = pool.labeled.into_iter().chain(pool.unlabeled).collect();
    loaded.sort_by_key(|i| i.id);
    for (a, b) in loaded.iter().zip(&instances) {
        assert_eq!(a.label, b.label);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }
}

#[test]
fn csv_dataset_carves_held_out_splits_and_checks_dims() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("label,f0,f1\n");
    for i in 0..20 {
        body.push_str(&format!("{},{},{}\n", i % 2, i, -i));
    }
    body.push_str("-1,0.5,0.5\n");
    let a = write(dir.path(), "a.csv", &body);
    let b = write(dir.path(), "b.csv", &body);
    let domains = vec![
        CsvDomain {
            train: a.clone(),
            val: None,
            test: None,
        },
        CsvDomain {
            train: b,
            val: None,
            test: None,
        },
    ];
    let ds = MultiDomainDataset::from_csv(&domains, None, 1).unwrap();
    assert_eq!(ds.num_classes, 2);
    for pool in &ds.pools {
        assert_eq!(
            (
                pool.labeled.len(),
                pool.val.len(),
                pool.test.len(),
                pool.unlabeled.len()
            ),
            (14, 2, 4, 1)
        );
    }

    let wide = write(dir.path(), "w.csv", "label,f0,f1,f2\n0,1,2,3\n");
    let bad = vec![
        CsvDomain {
            train: a,
            val: None,
            test: None,
        },
        CsvDomain {
            train: wide,
            val: None,
            test: None,
        },
    ];
    assert!(matches!(
        MultiDomainDataset::from_csv(&bad, None, 1),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn seed_labels_counts_and_determinism() {
    let ds = spec(2, 2, 3, 100).generate().unwrap();
    let full = ds.seed_labels(1.0, 0).unwrap();
    assert!(full
        .pools
        .iter()
        .all(|p| p.unlabeled.is_empty() && p.labeled.len() == 70));

    let five = ds.seed_labels(0.05, 3).unwrap();
    assert!(five
        .pools
        .iter()
        .all(|p| p.labeled.len() == 4 && p.unlabeled.len() == 66));
    assert!(five.pools.iter().all(|p| p.unlabeled.iter().all(|i| i.label.is_some())));
    assert_eq!(five, ds.seed_labels(0.05, 3).unwrap());
    assert_ne!(five, ds.seed_labels(0.05, 4).unwrap());

    let ten = ds.seed_labels(0.1, 0).unwrap();
    assert!(ten.pools.iter().all(|p| p.labeled.len() == 7));

    // reseeding an already-seeded dataset draws from the whole training set
    let again = five.seed_labels(0.2, 1).unwrap();
    assert!(again.pools.iter().all(|p| p.labeled.len() == 14));
    assert_bookkeeping(&again, &[70, 70]);

    assert!(matches!(ds.seed_labels(0.0, 0), Err(Error::Config(_))));
    assert!(matches!(ds.seed_labels(1.5, 0), Err(Error::Config(_))));
}

#[test]
fn seed_labels_is_stratified() {
    let ds = spec(3, 5, 3, 200).generate().unwrap();
    for seed in 0..20 {
        let seeded = ds.seed_labels(0.04, seed).unwrap();
        for pool in &seeded.pools {
            assert_eq!(pool.labeled.len(), 6);
            let classes: BTreeSet<usize> = pool.labeled.iter().map(|i| i.label.unwrap()).collect();
            assert_eq!(classes.len(), 5);
        }
    }
}

#[test]
fn ceil_fraction_tolerates_rounding() {
    assert_eq!(ceil_fraction(0.05, 70), 4);
    assert_eq!(ceil_fraction(0.1, 70), 7);
    assert_eq!(ceil_fraction(0.3, 10), 3);
    assert_eq!(ceil_fraction(0.01, 70), 1);
    assert_eq!(ceil_fraction(1.0, 70), 70);
}

#[test]
fn mixed_batches() {
    let ds = spec(4, 2, 3, 100).generate().unwrap().seed_labels(0.1, 0).unwrap();
    let batch = ds.sample_mixed_labeled(8, 1).unwrap();
    assert_eq!(batch.features.shape(), (8, 3));
    assert_eq!(batch.labels.len(), 8);
    assert!(batch.domains.iter().all(|&d| d < 4));
    assert_eq!(batch, ds.sample_mixed_labeled(8, 1).unwrap());
}

#[test]
fn mixed_batch_from_single_instance() {
    let mut ds = spec(2, 1, 3, 10).generate().unwrap();
    ds.pools[0].labeled.truncate(1);
    ds.pools[1].labeled.clear();
    let batch = ds.sample_mixed_labeled(8, 0).unwrap();
    for i in 0..8 {
        assert_eq!(batch.features.row(i), ds.pools[0].labeled[0].features.as_slice());
    }
    ds.pools[0].labeled.clear();
    assert!(matches!(ds.sample_mixed_labeled(8, 0), Err(Error::State(_))));
}

#[test]
fn mixed_batch_domain_frequencies_are_uniform() {
    let ds = spec(4, 2, 2, 100).generate().unwrap().seed_labels(0.2, 0).unwrap();
    let draws = 10_000;
    let batch = ds.sample_mixed_labeled(draws, 5).unwrap();
    let p = 0.25;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for d in 0..4 {
        let count = batch.domains.iter().filter(|&&x| x == d).count() as f64;
        assert!((count - draws as f64 * p).abs() < 3.0 * sd, "domain {d}: {count}");
    }
}

#[test]
fn augment_without_noise_duplicates() {
    let x = Matrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let out = two_view_augment(&x, 0.0, 9).unwrap();
    assert_eq!(out.shape(), (6, 2));
    for i in 0..3 {
        assert_eq!(out.row(i), out.row(i + 3));
        assert_eq!(out.row(i), x.row(i));
    }
    assert!(two_view_augment(&x, -1.0, 0).is_err());
}

#[test]
fn augment_noise_has_requested_std() {
    let x = Matrix::filled(500, 100, 0.7);
    let out = two_view_augment(&x, 0.01, 1).unwrap();
    assert_eq!(out.shape(), (1000, 100));
    let diffs: Vec<f64> = out.as_slice().iter().map(|v| v - 0.7).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std - 0.01).abs() / 0.01 < 0.02, "{std}");
    assert_ne!(out.row(0), out.row(500));
}

#[test]
fn acquire_all_and_none() {
    let ds = spec(2, 2, 3, 100).generate().unwrap().seed_labels(0.1, 0).unwrap();
    let none = ds.acquire_labels(&[vec![], vec![]]).unwrap();
    assert_eq!(none, ds);

    let all: Vec<Vec<usize>> = ds
        .pools
        .iter()
        .map(|p| p.unlabeled.iter().map(|i| i.id).collect())
        .collect();
    let grown = ds.acquire_labels(&all).unwrap();
    for (before, after) in ds.pools.iter().zip(&grown.pools) {
        assert!(after.unlabeled.is_empty());
        assert_eq!(after.labeled.len(), before.labeled.len() + before.unlabeled.len());
    }
}

#[test]
fn acquire_rejects_bad_selections() {
    let ds = spec(2, 2, 3, 100).generate().unwrap().seed_labels(0.1, 0).unwrap();
    let u = ds.pools[0].unlabeled[0].id;
    let l = ds.pools[0].labeled[0].id;
    assert!(matches!(
        ds.acquire_labels(&[vec![u, u], vec![]]),
        Err(Error::Selection(_))
    ));
    assert!(matches!(
        ds.acquire_labels(&[vec![l], vec![]]),
        Err(Error::Selection(_))
    ));
    assert!(matches!(ds.acquire_labels(&[vec![u]]), Err(Error::Selection(_))));
}

#[test]
fn random_acquisition_rounds_preserve_bookkeeping() {
    let ds = spec(3, 2, 3, 100).generate().unwrap().seed_labels(0.05, 0).unwrap();
    let sizes: Vec<usize> = ds.pools.iter().map(DomainPool::train_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut cur = ds;
    for _ in 0..10 {
        let picks: Vec<Vec<usize>> = cur
            .pools
            .iter()
            .map(|p| {
                let k = rng.random_range(0..=p.unlabeled.len().min(6));
                rand::seq::index::sample(&mut rng, p.unlabeled.len(), k)
                    .into_iter()
                    .map(|j| p.unlabeled[j].id)
                    .collect()
            })
            .collect();
        let before = cur.total_labeled();
        let n: usize = picks.iter().map(Vec::len).sum();
        cur = cur.acquire_labels(&picks).unwrap();
        assert_eq!(cur.total_labeled(), before + n);
        assert_bookkeeping(&cur, &sizes);
    }
}
