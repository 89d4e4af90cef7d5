use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{features_matrix, Instance, MultiDomainDataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    /// Visible labels; empty for unlabeled batches.
    pub labels: Vec<usize>,
    pub domains: Vec<usize>,
}

fn draw<'a, R: Rng>(rng: &mut R, from: &'a [Instance], n: usize) -> Vec<&'a Instance> {
    (0..n).map(|_| &from[rng.random_range(0..from.len())]).collect()
}

impl MultiDomainDataset {
    /// Uniform draw with replacement from the union of every domain's
    /// labeled set.
    pub fn sample_mixed_labeled(&self, batch_n: usize, seed: u64) -> Result<Batch> {
        self.sample_mixed_labeled_with(&mut rng::stream(&[self.seed, seed, 0x313D]), batch_n)
    }

    pub fn sample_mixed_labeled_with<R: Rng>(&self, rng: &mut R, batch_n: usize) -> Result<Batch> {
        let union: Vec<(usize, &Instance)> = self
            .pools
            .iter()
            .flat_map(|p| p.labeled.iter().map(move |i| (p.domain_id, i)))
            .collect();
        if union.is_empty() {
            return Err(Error::state("no labeled data to sample"));
        }
        let picks: Vec<(usize, &Instance)> = (0..batch_n).map(|_| union[rng.random_range(0..union.len())]).collect();
        let rows: Vec<&[f64]> = picks.iter().map(|(_, i)| i.features.as_slice()).collect();
        Ok(Batch {
            features: Matrix::from_rows(&rows, self.feature_dim)?,
            labels: picks.iter().map(|(_, i)| i.label.expect("labeled")).collect(),
            domains: picks.iter().map(|(d, _)| *d).collect(),
        })
    }

    /// Draw with replacement from one domain's labeled set.
    pub fn sample_domain_labeled_with<R: Rng>(&self, rng: &mut R, domain: usize, batch_n: usize) -> Result<Batch> {
        let pool = &self.pools[domain];
        if pool.labeled.is_empty() {
            return Err(Error::state(format!("domain {domain} has no labeled data")));
        }
        let picks = draw(rng, &pool.labeled, batch_n);
        Ok(Batch {
            features: self.stack(&picks),
            labels: picks.iter().map(|i| i.label.expect("labeled")).collect(),
            domains: vec![domain; batch_n],
        })
    }

    /// Draw with replacement from one domain's unlabeled pool, optionally
    /// together with its labeled set. Falls back to the labeled set when the
    /// pool is empty. Labels are never exposed.
    pub fn sample_domain_unlabeled_with<R: Rng>(
        &self,
        rng: &mut R,
        domain: usize,
        batch_n: usize,
        include_labeled: bool,
    ) -> Result<Batch> {
        let pool = &self.pools[domain];
        let source: Vec<&Instance> = if include_labeled || pool.unlabeled.is_empty() {
            pool.unlabeled.iter().chain(&pool.labeled).collect()
        } else {
            pool.unlabeled.iter().collect()
        };
        if source.is_empty() {
            return Err(Error::state(format!("domain {domain} has no training data")));
        }
        let picks: Vec<&Instance> = (0..batch_n)
            .map(|_| source[rng.random_range(0..source.len())])
            .collect();
        Ok(Batch {
            features: self.stack(&picks),
            labels: Vec::new(),
            domains: vec![domain; batch_n],
        })
    }

    fn stack(&self, picks: &[&Instance]) -> Matrix {
        let rows: Vec<&[f64]> = picks.iter().map(|i| i.features.as_slice()).collect();
        Matrix::from_rows(&rows, self.feature_dim).expect("consistent dimension")
    }

    /// Features of one domain's split as a matrix, with labels.
    pub fn split_matrix(&self, domain: usize, split: super::Split) -> (Matrix, Vec<Option<usize>>) {
        let rows = self.pools[domain].split(split);
        (
            features_matrix(rows, self.feature_dim),
            rows.iter().map(|i| i.label).collect(),
        )
    }
}

/// Two independently noised copies of `features`, stacked: row `i` and row
/// `i + N` are views of the same input.
pub fn two_view_augment(features: &Matrix, noise_std: f64, seed: u64) -> Result<Matrix> {
    two_view_augment_with(&mut rng::stream(&[seed, 0xA06]), features, noise_std)
}

pub fn two_view_augment_with<R: Rng>(rng: &mut R, features: &Matrix, noise_std: f64) -> Result<Matrix> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::config(format!("noise_std must be nonnegative, got {noise_std}")));
    }
    let mut out = features.vstack(features)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("validated above");
        out.as_mut_slice().iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    Ok(out)
}
