use serde::{Deserialize, Serialize};

use crate::data::{MultiDomainDataset, Split};
use crate::error::{Error, Result};
use crate::model::SpModel;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_domain: Vec<f64>,
    /// Unweighted mean over domains.
    pub mean: f64,
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    let hits = probs.argmax_rows().iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate(model: &SpModel, ds: &MultiDomainDataset, split: Split) -> Result<Evaluation> {
    let mut per_domain = Vec::with_capacity(ds.num_domains());
    for d in 0..ds.num_domains() {
        let (x, labels) = ds.split_matrix(d, split);
        if labels.is_empty() {
            return Err(Error::state(format!("domain {d}: {split:?} split is empty")));
        }
        let labels = labels
            .into_iter()
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| Error::state(format!("domain {d}: {split:?} split has unlabeled rows")))?;
        let probs = model.predict_proba(&x, d)?;
        per_domain.push(accuracy(&probs, &labels));
    }
    let mean = per_domain.iter().sum::<f64>() / per_domain.len() as f64;
    Ok(Evaluation { per_domain, mean })
}
