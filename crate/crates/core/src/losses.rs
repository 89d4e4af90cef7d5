//! Objective terms: classification, the two NT-Xent contrastive losses, and
//! the adversarial discriminator/confusion pair.
//!
//! Contrastive batches use a two-view layout: with `2N` rows, row `i` and row
//! `i + N` are the two augmented views of the same original sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_domain: f64,
    pub lambda_inter: f64,
    pub lambda_intra: f64,
    pub tau_inter: f64,
    pub tau_intra: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_domain: 0.05,
            lambda_inter: 1.0,
            lambda_intra: 1.0,
            tau_inter: 0.1,
            tau_intra: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_domain", self.lambda_domain),
            ("lambda_inter", self.lambda_inter),
            ("lambda_intra", self.lambda_intra),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be a nonnegative number")));
            }
        }
        check_tau(self.tau_inter)?;
        check_tau(self.tau_intra)
    }
}

/// How the shared extractor is pushed to confuse the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionKind {
    /// Negated discriminator cross-entropy.
    #[default]
    Nll,
    /// Negative entropy of the discriminator's prediction.
    Entropy,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Index of the other view of row `i` in a `2n`-row batch.
pub fn partner(i: usize, n: usize) -> usize {
    if i < n {
        i + n
    } else {
        i - n
    }
}

/// Mean cross-entropy of softmax(`logits`) against `labels`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, c) = g.value(logits).shape();
    if labels.len() != n {
        return Err(Error::Shape {
            op: "cross_entropy labels",
            left: (n, c),
            right: (labels.len(), 1),
        });
    }
    if n == 0 {
        return Err(Error::Contract("cross_entropy on an empty batch".into()));
    }
    let mut weights = Matrix::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Index {
                what: "class label",
                index: y,
                bound: c,
            });
        }
        weights[(i, y)] = -1.0 / n as f64;
    }
    let log_probs = g.log_softmax_rows(logits);
    g.weighted_sum(log_probs, weights)
}

/// Log-probabilities of the contrastive softmax over `A(i) = I \ {i}`.
fn similarity_log_probs(g: &mut Graph, reps: Var, tau: f64, normalize: bool) -> Result<Var> {
    check_tau(tau)?;
    let rows = g.value(reps).rows();
    if rows < 2 {
        return Err(Error::Contract(format!(
            "contrastive batch needs at least 2 rows, got {rows}"
        )));
    }
    if !rows.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "contrastive batch needs an even row count, got {rows}"
        )));
    }
    let z = if normalize { g.l2_normalize_rows(reps) } else { reps };
    let sim = g.matmul_nt(z, z)?;
    let logits = g.scale(sim, 1.0 / tau);
    Ok(g.log_softmax_rows_off_diagonal(logits))
}

/// Supervised NT-Xent over a labelled two-view batch.
///
/// `labels` has one entry per row (so `labels[i] == labels[i + N]`). Each
/// anchor averages the log-likelihood of all its same-label rows; the result
/// is averaged over the `2N` anchors. Anchors without positives add zero.
pub fn inter_contrastive(g: &mut Graph, reps: Var, labels: &[usize], tau: f64, normalize: bool) -> Result<Var> {
    let rows = g.value(reps).rows();
    if labels.len() != rows {
        return Err(Error::Shape {
            op: "inter_contrastive labels",
            left: g.value(reps).shape(),
            right: (labels.len(), 1),
        });
    }
    let log_probs = similarity_log_probs(g, reps, tau, normalize)?;
    let mut weights = Matrix::zeros(rows, rows);
    for i in 0..rows {
        let positives: Vec<usize> = (0..rows).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let w = -1.0 / (positives.len() as f64 * rows as f64);
        for p in positives {
            weights[(i, p)] = w;
        }
    }
    g.weighted_sum(log_probs, weights)
}

/// Unsupervised NT-Xent: each anchor's only positive is its other view.
pub fn intra_contrastive(g: &mut Graph, reps: Var, tau: f64, normalize: bool) -> Result<Var> {
    let log_probs = similarity_log_probs(g, reps, tau, normalize)?;
    let rows = g.value(reps).rows();
    let n = rows / 2;
    let mut weights = Matrix::zeros(rows, rows);
    for i in 0..rows {
        weights[(i, partner(i, n))] = -1.0 / rows as f64;
    }
    g.weighted_sum(log_probs, weights)
}

/// Returns `(L_D, L_Fs)` for a batch whose rows all come from `true_domain`.
///
/// `L_D` is the discriminator cross-entropy. With [`ConfusionKind::Nll`],
/// `L_Fs = -L_D`; with [`ConfusionKind::Entropy`], `L_Fs` is the mean
/// negative entropy of the predicted domain distribution.
pub fn discriminator_objective(
    g: &mut Graph,
    domain_logits: Var,
    true_domain: usize,
    kind: ConfusionKind,
) -> Result<(Var, Var)> {
    let (n, k) = g.value(domain_logits).shape();
    if true_domain >= k {
        return Err(Error::Index {
            what: "domain",
            index: true_domain,
            bound: k,
        });
    }
    let l_d = cross_entropy(g, domain_logits, &vec![true_domain; n])?;
    let l_fs = match kind {
        ConfusionKind::Nll => g.neg(l_d),
        ConfusionKind::Entropy => {
            let log_p = g.log_softmax_rows(domain_logits);
            let p = g.softmax_rows(domain_logits);
            let plogp = g.mul(p, log_p)?;
            let total = g.sum(plogp);
            g.scale(total, 1.0 / n as f64)
        }
    };
    Ok((l_d, l_fs))
}

/// Terms of the main-iteration objective, summed over domains by the caller
/// or left as per-domain lists.
#[derive(Debug, Clone, Default)]
pub struct MainLossTerms {
    pub classification: Vec<Var>,
    pub confusion: Vec<Var>,
    pub intra: Vec<Var>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MainLossBreakdown {
    pub classification: f64,
    pub confusion: f64,
    pub intra: f64,
    pub total: f64,
}

/// `Σ L_C + λd · Σ L_Fs + λintra · Σ L_intra`.
pub fn total_main_loss(
    g: &mut Graph,
    terms: &MainLossTerms,
    weights: &LossWeights,
) -> Result<(Var, MainLossBreakdown)> {
    let classification = g.add_all(&terms.classification)?;
    let confusion = g.add_all(&terms.confusion)?;
    let intra = g.add_all(&terms.intra)?;
    let weighted_confusion = g.scale(confusion, weights.lambda_domain);
    let weighted_intra = g.scale(intra, weights.lambda_intra);
    let total = g.add_all(&[classification, weighted_confusion, weighted_intra])?;
    let breakdown = MainLossBreakdown {
        classification: g.scalar(classification),
        confusion: g.scalar(confusion),
        intra: g.scalar(intra),
        total: g.scalar(total),
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests;
