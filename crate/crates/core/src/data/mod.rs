//! Multi-domain datasets: per-domain labeled sets, unlabeled pools and
//! held-out splits, plus sampling and augmentation.
//!
//! Instance ids are unique within a domain and are the stable handle used by
//! label acquisition. Unlabeled instances may carry a hidden label, which only
//! [`MultiDomainDataset::acquire_labels`] reveals.

mod csv_io;
mod sampling;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

pub use csv_io::{load_domain_csv, write_instances_csv, CsvDomain};
pub use sampling::{two_view_augment, two_view_augment_with, Batch};
pub use synthetic::SyntheticSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub features: Vec<f64>,
    /// Visible label for labeled/val/test rows; hidden oracle label (if any)
    /// for unlabeled rows.
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainPool {
    pub domain_id: usize,
    pub labeled: Vec<Instance>,
    pub unlabeled: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Labeled,
    Val,
    Test,
}

impl DomainPool {
    pub fn split(&self, split: Split) -> &[Instance] {
        match split {
            Split::Labeled => &self.labeled,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Size of the training portion (labeled plus unlabeled).
    pub fn train_len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for inst in self
            .labeled
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.val)
            .chain(&self.test)
        {
            if !seen.insert(inst.id) {
                return Err(Error::state(format!(
                    "domain {}: instance id {} appears in more than one split",
                    self.domain_id, inst.id
                )));
            }
        }
        if let Some(inst) = self.labeled.iter().find(|i| i.label.is_none()) {
            return Err(Error::state(format!(
                "domain {}: labeled instance {} has no label",
                self.domain_id, inst.id
            )));
        }
        Ok(())
    }
}

/// Stacks instance features into a matrix.
pub fn features_matrix(instances: &[Instance], dim: usize) -> Matrix {
    let rows: Vec<&[f64]> = instances.iter().map(|i| i.features.as_slice()).collect();
    Matrix::from_rows(&rows, dim).expect("instances share the dataset dimension")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDomainDataset {
    pub pools: Vec<DomainPool>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl MultiDomainDataset {
    /// Assembles pools, checking dimensions, labels and split disjointness.
    /// `num_classes` of `None` infers one more than the largest label seen.
    pub fn from_pools(pools: Vec<DomainPool>, num_classes: Option<usize>, seed: u64) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::config("dataset needs at least one domain"));
        }
        let all = || {
            pools
                .iter()
                .flat_map(|p| p.labeled.iter().chain(&p.unlabeled).chain(&p.val).chain(&p.test))
        };
        let feature_dim = all().map(|i| i.features.len()).next().unwrap_or(0);
        if let Some(bad) = all().find(|i| i.features.len() != feature_dim) {
            return Err(Error::config(format!(
                "instance {} has {} features, expected {feature_dim}",
                bad.id,
                bad.features.len()
            )));
        }
        let max_label = all().filter_map(|i| i.label).max();
        let num_classes = match (num_classes, max_label) {
            (Some(c), Some(m)) if m >= c => {
                return Err(Error::config(format!("label {m} exceeds num_classes {c}")));
            }
            (Some(c), _) => c,
            (None, Some(m)) => m + 1,
            (None, None) => return Err(Error::config("cannot infer num_classes without labels")),
        };
        for (k, p) in pools.iter().enumerate() {
            if p.domain_id != k {
                return Err(Error::config(format!("pool {k} carries domain id {}", p.domain_id)));
            }
            p.check_disjoint()?;
        }
        Ok(Self {
            pools,
            num_classes,
            feature_dim,
            seed,
        })
    }

    pub fn num_domains(&self) -> usize {
        self.pools.len()
    }

    pub fn total_labeled(&self) -> usize {
        self.pools.iter().map(|p| p.labeled.len()).sum()
    }

    pub fn total_unlabeled(&self) -> usize {
        self.pools.iter().map(|p| p.unlabeled.len()).sum()
    }

    pub fn total_train(&self) -> usize {
        self.pools.iter().map(DomainPool::train_len).sum()
    }

    /// Labeled share of the training data across all domains.
    pub fn labeled_fraction(&self) -> f64 {
        let total = self.total_train();
        if total == 0 {
            0.0
        } else {
            self.total_labeled() as f64 / total as f64
        }
    }

    /// Re-draws each domain's labeled set as `⌈fraction · |train|⌉` instances
    /// of its training data, returning the rest to the unlabeled pool with
    /// hidden labels. Every class present gets at least one labeled instance
    /// whenever the count allows. Unlabeled rows without an oracle label stay
    /// unlabeled and are not counted.
    pub fn seed_labels(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("label fraction {fraction} outside (0, 1]")));
        }
        let mut out = self.clone();
        for pool in &mut out.pools {
            let mut rng = rng::stream(&[self.seed, seed, pool.domain_id as u64, 0x5EED]);
            let (mut candidates, orphans): (Vec<Instance>, Vec<Instance>) = pool
                .labeled
                .drain(..)
                .chain(pool.unlabeled.drain(..))
                .partition(|i| i.label.is_some());
            candidates.sort_by_key(|i| i.id);
            let count = ceil_fraction(fraction, candidates.len());

            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (pos, inst) in candidates.iter().enumerate() {
                by_class.entry(inst.label.expect("partitioned")).or_default().push(pos);
            }
            let mut chosen: Vec<usize> = Vec::with_capacity(count);
            if count >= by_class.len() {
                for members in by_class.values() {
                    chosen.push(*members.choose(&mut rng).expect("non-empty class"));
                }
            }
            let mut rest: Vec<usize> = (0..candidates.len()).filter(|p| !chosen.contains(p)).collect();
            rest.shuffle(&mut rng);
            chosen.extend(rest.into_iter().take(count - chosen.len()));
            let chosen: BTreeSet<usize> = chosen.into_iter().collect();

            for (pos, inst) in candidates.into_iter().enumerate() {
                if chosen.contains(&pos) {
                    pool.labeled.push(inst);
                } else {
                    pool.unlabeled.push(inst);
                }
            }
            pool.unlabeled.extend(orphans);
            pool.unlabeled.sort_by_key(|i| i.id);
        }
        Ok(out)
    }

    /// Moves the given unlabeled instances (by id, one list per domain) into
    /// the labeled sets, revealing their hidden labels.
    pub fn acquire_labels(&self, per_domain_ids: &[Vec<usize>]) -> Result<Self> {
        if per_domain_ids.len() != self.num_domains() {
            return Err(Error::Selection(format!(
                "expected {} per-domain id lists, got {}",
                self.num_domains(),
                per_domain_ids.len()
            )));
        }
        let mut out = self.clone();
        for (pool, ids) in out.pools.iter_mut().zip(per_domain_ids) {
            let wanted: BTreeSet<usize> = ids.iter().copied().collect();
            if wanted.len() != ids.len() {
                return Err(Error::Selection(format!(
                    "domain {}: duplicate ids in selection",
                    pool.domain_id
                )));
            }
            let (picked, kept): (Vec<Instance>, Vec<Instance>) =
                pool.unlabeled.drain(..).partition(|i| wanted.contains(&i.id));
            if picked.len() != wanted.len() {
                let present: BTreeSet<usize> = picked.iter().map(|i| i.id).collect();
                let stale = wanted.difference(&present).next().expect("some id missing");
                return Err(Error::Selection(format!(
                    "domain {}: id {stale} is not in the unlabeled pool",
                    pool.domain_id
                )));
            }
            if let Some(blind) = picked.iter().find(|i| i.label.is_none()) {
                return Err(Error::Selection(format!(
                    "domain {}: id {} has no oracle label",
                    pool.domain_id, blind.id
                )));
            }
            pool.unlabeled = kept;
            pool.labeled.extend(picked);
            pool.labeled.sort_by_key(|i| i.id);
        }
        Ok(out)
    }
}

/// `⌈fraction · n⌉`, tolerant of representation error in the product
/// (`0.1 · 70` must give 7, not 8).
pub fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.ceil()
    };
    (count as usize).min(n)
}

#[cfg(test)]
mod tests;
