//! Finite-difference audit of every training objective on small random
//! shared-private models.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trainer::{main_objective, MainBatches};
use crate::data::two_view_augment_with;
use crate::error::Result;
use crate::losses::{
    cross_entropy, discriminator_objective, inter_contrastive, intra_contrastive, ConfusionKind, LossWeights,
};
use crate::model::{Binding, ModelConfig, SpModel};
use crate::rng;
use crate::tensor::{finite_diff_check_with, FdOptions, Graph, Matrix, Stencil, Var};

pub const TERMS: [&str; 5] = ["L_C", "L_inter", "L_intra", "L_D", "main"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub trials: usize,
    /// Worst relative error per objective, in [`TERMS`] order.
    pub max_error: Vec<f64>,
}

impl GradcheckReport {
    pub fn overall(&self) -> f64 {
        self.max_error.iter().copied().fold(0.0, f64::max)
    }
}

struct Toy {
    model: SpModel,
    x: Matrix,
    labels: Vec<usize>,
    views: Matrix,
    view_labels: Vec<usize>,
    domain: usize,
    batches: MainBatches,
    weights: LossWeights,
    confusion: ConfusionKind,
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

fn toy(seed: u64) -> Result<Toy> {
    let mut rng = rng::stream(&[seed, 0x70F]);
    let k = rng.random_range(2..=4);
    let c = rng.random_range(2..=4);
    let cfg = ModelConfig {
        input_dim: rng.random_range(2..=8),
        shared_dim: rng.random_range(2..=8),
        private_dim: rng.random_range(2..=8),
        num_domains: k,
        num_classes: c,
        shared_classifier: rng.random_bool(0.5),
        extractor_depth: rng.random_range(1..=2),
        init_seed: rng.random(),
        init_scale: 2.0,
    };
    let d = cfg.input_dim;
    let model = SpModel::new(cfg)?;
    let n = rng.random_range(1..=3);
    let x = gaussian(&mut rng, 2 * n, d);
    let labels: Vec<usize> = (0..2 * n).map(|_| rng.random_range(0..c)).collect();
    let base = gaussian(&mut rng, n, d);
    let views = two_view_augment_with(&mut rng, &base, 0.3)?;
    let half: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let view_labels = half.iter().chain(&half).copied().collect();

    let mut batches = MainBatches::default();
    for _ in 0..k {
        let b = rng.random_range(1..=6);
        let ys = (0..b).map(|_| rng.random_range(0..c)).collect();
        batches.labeled.push((gaussian(&mut rng, b, d), ys));
        let m = rng.random_range(1..=3);
        let u = gaussian(&mut rng, m, d);
        batches.views.push(Some(two_view_augment_with(&mut rng, &u, 0.3)?));
        batches.unlabeled.push(u);
    }
    let taus = [0.1, 0.5, 1.0];
    let weights = LossWeights {
        lambda_domain: rng.random_range(0.01..1.0),
        lambda_inter: 1.0,
        lambda_intra: rng.random_range(0.1..1.0),
        tau_inter: taus[rng.random_range(0..3)],
        tau_intra: taus[rng.random_range(0..3)],
    };
    let confusion = if rng.random_bool(0.5) {
        ConfusionKind::Nll
    } else {
        ConfusionKind::Entropy
    };
    Ok(Toy {
        domain: rng.random_range(0..k),
        model,
        x,
        labels,
        views,
        view_labels,
        batches,
        weights,
        confusion,
    })
}

fn objective(t: &Toy, term: usize, g: &mut Graph, vars: &[Var]) -> Result<Var> {
    let b = Binding::from_vars(vars.to_vec());
    let m = &t.model;
    match term {
        0 => {
            let x = g.constant(t.x.clone());
            let out = m.forward(g, &b, x, t.domain)?;
            cross_entropy(g, out.class_logits, &t.labels)
        }
        1 => {
            let x = g.constant(t.views.clone());
            let z = m.shared_features(g, &b, x)?;
            inter_contrastive(g, z, &t.view_labels, t.weights.tau_inter, true)
        }
        2 => {
            let x = g.constant(t.views.clone());
            let out = m.forward(g, &b, x, t.domain)?;
            intra_contrastive(g, out.class_probs, t.weights.tau_intra, true)
        }
        3 => {
            let x = g.constant(t.x.clone());
            let out = m.forward(g, &b, x, t.domain)?;
            Ok(discriminator_objective(g, out.domain_logits, t.domain, t.confusion)?.0)
        }
        _ => Ok(main_objective(m, g, &b, &t.batches, &t.weights, t.confusion, true)?.0),
    }
}

/// Checks every objective's analytic gradient, with respect to every model
/// parameter, against Richardson-extrapolated central differences on
/// `trials` random toy models.
pub fn toy_gradcheck(trials: usize, seed: u64) -> Result<GradcheckReport> {
    let opts = FdOptions {
        step: 1e-3,
        stencil: Stencil::Richardson,
    };
    let mut max_error = vec![0.0; TERMS.len()];
    for trial in 0..trials {
        let t = toy(rng::derive_seed(&[seed, trial as u64]))?;
        let values = t.model.values();
        for (term, worst) in max_error.iter_mut().enumerate() {
            let err = finite_diff_check_with(|g, vars| objective(&t, term, g, vars), &values, opts)?;
            *worst = f64::max(*worst, err);
        }
    }
    Ok(GradcheckReport { trials, max_error })
}
