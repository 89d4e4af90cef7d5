use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DomainPool, Instance, MultiDomainDataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::dot;

/// Gaussian class clusters shared by all domains; each domain sees them
/// through its own rotation and offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_domains: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub per_domain_n: usize,
    /// Pairwise distance between class means.
    pub class_separation: f64,
    /// Norm of each domain's mean offset.
    pub domain_shift: f64,
    /// Rotation angle (radians) in a random plane, per domain.
    pub domain_rotation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_domains: 4,
            num_classes: 2,
            dim: 50,
            per_domain_n: 400,
            class_separation: 3.0,
            domain_shift: 1.0,
            domain_rotation: 0.5,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = dot(&v, &v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Random direction orthogonal to `basis` (assumed orthonormal); falls back
/// to a plain random direction once the space is exhausted.
fn orthogonal_direction(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for _ in 0..16 {
        let mut v = gaussian(rng, dim);
        for b in basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= proj * bi);
        }
        if dot(&v, &v).sqrt() > 1e-6 {
            return unit(v);
        }
    }
    unit(gaussian(rng, dim))
}

struct DomainTransform {
    shift: Vec<f64>,
    plane: Option<(Vec<f64>, Vec<f64>)>,
    angle: f64,
}

impl DomainTransform {
    fn apply(&self, x: &mut [f64]) {
        if let Some((u, v)) = &self.plane {
            let (a, b) = (dot(x, u), dot(x, v));
            let (sin, cos) = self.angle.sin_cos();
            let (ra, rb) = (a * cos - b * sin, a * sin + b * cos);
            for i in 0..x.len() {
                x[i] += (ra - a) * u[i] + (rb - b) * v[i];
            }
        }
        x.iter_mut().zip(&self.shift).for_each(|(xi, s)| *xi += s);
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains == 0 || self.num_classes == 0 || self.dim == 0 || self.per_domain_n == 0 {
            return Err(Error::config("synthetic counts must all be at least 1"));
        }
        if self.num_classes > self.per_domain_n {
            return Err(Error::config(format!(
                "{} classes cannot fit in {} instances per domain",
                self.num_classes, self.per_domain_n
            )));
        }
        if !(self.class_separation > 0.0 && self.noise_std > 0.0) {
            return Err(Error::config("class_separation and noise_std must be positive"));
        }
        if !(self.domain_shift.is_finite() && self.domain_rotation.is_finite()) {
            return Err(Error::config("domain_shift and domain_rotation must be finite"));
        }
        Ok(())
    }

    /// Generates the dataset with every training row labeled; use
    /// [`MultiDomainDataset::seed_labels`] to hide most of them. Each domain is
    /// split 70/10/20 into train/val/test.
    pub fn generate(&self) -> Result<MultiDomainDataset> {
        self.validate()?;
        let mut rng = rng::stream(&[self.seed, 0xDA7A]);

        let mut directions: Vec<Vec<f64>> = Vec::with_capacity(self.num_classes);
        for _ in 0..self.num_classes {
            let basis = if directions.len() < self.dim {
                &directions[..]
            } else {
                &[][..]
            };
            let d = orthogonal_direction(&mut rng, basis, self.dim);
            directions.push(d);
        }
        let radius = self.class_separation / std::f64::consts::SQRT_2;
        let means: Vec<Vec<f64>> = directions
            .iter()
            .map(|d| d.iter().map(|v| v * radius).collect())
            .collect();

        let n = self.per_domain_n;
        let n_train = (0.7 * n as f64).round() as usize;
        let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);

        let mut pools = Vec::with_capacity(self.num_domains);
        for k in 0..self.num_domains {
            let shift: Vec<f64> = unit(gaussian(&mut rng, self.dim))
                .into_iter()
                .map(|v| v * self.domain_shift)
                .collect();
            let plane = (self.dim >= 2).then(|| {
                let u = orthogonal_direction(&mut rng, &[], self.dim);
                let v = orthogonal_direction(&mut rng, std::slice::from_ref(&u), self.dim);
                (u, v)
            });
            let transform = DomainTransform {
                shift,
                plane,
                angle: self.domain_rotation,
            };

            let mut labels: Vec<usize> = (0..n).map(|i| i % self.num_classes).collect();
            labels.shuffle(&mut rng);
            let instances: Vec<Instance> = labels
                .into_iter()
                .enumerate()
                .map(|(id, label)| {
                    let mut x: Vec<f64> = means[label]
                        .iter()
                        .map(|m| m + self.noise_std * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    transform.apply(&mut x);
                    Instance {
                        id,
                        features: x,
                        label: Some(label),
                    }
                })
                .collect();

            let mut rest = instances;
            let test = rest.split_off(n_train + n_val);
            let val = rest.split_off(n_train);
            pools.push(DomainPool {
                domain_id: k,
                labeled: rest,
                unlabeled: Vec::new(),
                val,
                test,
            });
        }
        MultiDomainDataset::from_pools(pools, Some(self.num_classes), self.seed)
    }
}
