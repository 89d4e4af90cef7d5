//! Multi-domain active learning: margin-based (BvSB) or random acquisition,
//! per-round retraining, learning curves and their AULC summary.

mod report;

use std::cmp::Ordering;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ceil_fraction, MultiDomainDataset, Split};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SpModel};
use crate::rng;
use crate::tensor::Matrix;
use crate::train::{evaluate, train_mdcl, TrainConfig};

pub use report::{mean_std, results_csv, summary_csv, SummaryRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bvsb,
    Random,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Bvsb => "BvSB",
            Strategy::Random => "Random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retrain {
    #[default]
    Scratch,
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ALConfig {
    pub strategy: Strategy,
    pub seed_fraction: f64,
    pub round_budget_fraction: f64,
    pub final_fraction: f64,
    /// Give each domain the same share of every round's budget; otherwise
    /// select the lowest margins across all domains at once.
    pub per_domain_budget: bool,
    pub retrain: Retrain,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bvsb,
            seed_fraction: 0.05,
            round_budget_fraction: 0.05,
            final_fraction: 0.5,
            per_domain_budget: true,
            retrain: Retrain::Scratch,
            repeats: 5,
            seed: 0,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_fraction > 0.0 && self.seed_fraction < self.final_fraction && self.final_fraction <= 1.0) {
            return Err(Error::config(format!(
                "need 0 < seed_fraction ({}) < final_fraction ({}) <= 1",
                self.seed_fraction, self.final_fraction
            )));
        }
        if !(self.round_budget_fraction > 0.0 && self.round_budget_fraction.is_finite()) {
            return Err(Error::config("round_budget_fraction must be positive"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        Ok(())
    }

    /// Nominal labeled fraction at each curve checkpoint.
    pub fn schedule(&self) -> Vec<f64> {
        let steps = (self.final_fraction - self.seed_fraction) / self.round_budget_fraction;
        let steps = (steps + 1e-9).floor() as usize;
        (0..=steps)
            .map(|t| self.seed_fraction + t as f64 * self.round_budget_fraction)
            .collect()
    }
}

/// Best-versus-second-best margin per row; smaller means more uncertain.
pub fn bvsb_scores(class_probs: &Matrix) -> Result<Vec<f64>> {
    if class_probs.cols() < 2 {
        return Err(Error::config(format!(
            "margins need at least 2 classes, got {}",
            class_probs.cols()
        )));
    }
    Ok((0..class_probs.rows())
        .map(|i| {
            let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &p in class_probs.row(i) {
                if p > best {
                    second = best;
                    best = p;
                } else if p > second {
                    second = p;
                }
            }
            best - second
        })
        .collect())
}

/// How many instances one round may acquire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Budget {
    PerDomain(Vec<usize>),
    Global(usize),
}

impl Budget {
    pub fn total(&self) -> usize {
        match self {
            Budget::PerDomain(v) => v.iter().sum(),
            Budget::Global(n) => *n,
        }
    }
}

/// A candidate in the unlabeled pool: `(margin, id, domain)`.
type Scored = (f64, usize, usize);

fn by_margin_then_id(a: &Scored, b: &Scored) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

fn margins(model: &SpModel, ds: &MultiDomainDataset, domain: usize) -> Result<Vec<Scored>> {
    let pool = &ds.pools[domain].unlabeled;
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let x = crate::data::features_matrix(pool, ds.feature_dim);
    let scores = bvsb_scores(&model.predict_proba(&x, domain)?)?;
    Ok(scores
        .into_iter()
        .zip(pool)
        .map(|(m, inst)| (m, inst.id, domain))
        .collect())
}

/// Picks unlabeled instance ids to label next, one list per domain.
///
/// BvSB takes the smallest margins, ties going to the smaller instance id.
/// Random samples uniformly without replacement.
pub fn select(
    strategy: Strategy,
    model: &SpModel,
    ds: &MultiDomainDataset,
    budget: &Budget,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let k = ds.num_domains();
    let mut picks = vec![Vec::new(); k];
    match budget {
        Budget::PerDomain(per) => {
            if per.len() != k {
                return Err(Error::Selection(format!("{} budgets for {k} domains", per.len())));
            }
            for (d, &n) in per.iter().enumerate() {
                let available = ds.pools[d].unlabeled.len();
                if n > available {
                    return Err(Error::Selection(format!(
                        "domain {d}: budget {n} exceeds {available} unlabeled instances"
                    )));
                }
                picks[d] = match strategy {
                    Strategy::Bvsb => {
                        let mut scored = margins(model, ds, d)?;
                        scored.sort_by(by_margin_then_id);
                        scored.into_iter().take(n).map(|s| s.1).collect()
                    }
                    Strategy::Random => {
                        let mut rng = rng::stream(&[seed, d as u64, 0x5E1]);
                        sample(&mut rng, available, n)
                            .into_iter()
                            .map(|j| ds.pools[d].unlabeled[j].id)
                            .collect()
                    }
                };
            }
        }
        Budget::Global(n) => {
            let available = ds.total_unlabeled();
            if *n > available {
                return Err(Error::Selection(format!(
                    "budget {n} exceeds {available} unlabeled instances"
                )));
            }
            let chosen: Vec<(usize, usize)> = match strategy {
                Strategy::Bvsb => {
                    let mut scored = Vec::with_capacity(available);
                    for d in 0..k {
                        scored.extend(margins(model, ds, d)?);
                    }
                    scored.sort_by(by_margin_then_id);
                    scored.into_iter().take(*n).map(|s| (s.2, s.1)).collect()
                }
                Strategy::Random => {
                    let all: Vec<(usize, usize)> = ds
                        .pools
                        .iter()
                        .flat_map(|p| p.unlabeled.iter().map(move |i| (p.domain_id, i.id)))
                        .collect();
                    let mut rng = rng::stream(&[seed, 0x5E1]);
                    sample(&mut rng, all.len(), *n).into_iter().map(|j| all[j]).collect()
                }
            };
            for (d, id) in chosen {
                picks[d].push(id);
            }
        }
    }
    for p in &mut picks {
        p.sort_unstable();
    }
    Ok(picks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Nominal labeled fraction of this checkpoint.
    pub fraction: f64,
    /// Labeled instances per domain at this checkpoint.
    pub labeled: Vec<usize>,
    /// Test accuracy per domain.
    pub accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

/// 100 × the mean accuracy over the curve's checkpoints.
pub fn aulc(curve: &LearningCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::Contract("AULC of an empty learning curve".into()));
    }
    let sum: f64 = curve.points.iter().map(|p| p.mean_accuracy).sum();
    Ok(100.0 * sum / curve.points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub curve: LearningCurve,
    pub aulc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdalResult {
    pub repeats: Vec<RepeatResult>,
    pub aulc_mean: f64,
    pub aulc_std: f64,
}

/// Labels each domain needs to reach `fraction` of its training set.
fn budget_to(ds: &MultiDomainDataset, fraction: f64, per_domain: bool) -> Budget {
    let per: Vec<usize> = ds
        .pools
        .iter()
        .map(|p| {
            ceil_fraction(fraction, p.train_len())
                .saturating_sub(p.labeled.len())
                .min(p.unlabeled.len())
        })
        .collect();
    if per_domain {
        Budget::PerDomain(per)
    } else {
        Budget::Global(per.iter().sum())
    }
}

/// One repeat: seed labels, then train, evaluate and acquire until the final
/// fraction is reached. `observe` sees the dataset after every acquisition.
pub fn mdal_repeat(
    base: &MultiDomainDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    al: &ALConfig,
    repeat: usize,
    mut observe: impl FnMut(&MultiDomainDataset),
) -> Result<RepeatResult> {
    al.validate()?;
    let run_seed = rng::derive_seed(&[al.seed, repeat as u64]);
    let schedule = al.schedule();
    let mut ds = base.seed_labels(al.seed_fraction, run_seed)?;
    observe(&ds);
    let mut curve = LearningCurve::default();
    let mut model: Option<SpModel> = None;

    for (round, &fraction) in schedule.iter().enumerate() {
        let round_seed = rng::derive_seed(&[run_seed, round as u64]);
        let mut m = match (al.retrain, model.take()) {
            (Retrain::Warm, Some(m)) => m,
            _ => SpModel::new(ModelConfig {
                init_seed: rng::derive_seed(&[model_cfg.init_seed, round_seed]),
                ..model_cfg.clone()
            })?,
        };
        let cfg = TrainConfig {
            seed: rng::derive_seed(&[train_cfg.seed, round_seed]),
            ..train_cfg.clone()
        };
        train_mdcl(&mut m, &ds, &cfg)?;
        let eval = evaluate(&m, &ds, Split::Test)?;
        curve.points.push(CurvePoint {
            fraction,
            labeled: ds.pools.iter().map(|p| p.labeled.len()).collect(),
            accuracy: eval.per_domain,
            mean_accuracy: eval.mean,
        });

        if let Some(&next) = schedule.get(round + 1) {
            let budget = budget_to(&ds, next, al.per_domain_budget);
            let picks = select(al.strategy, &m, &ds, &budget, round_seed)?;
            for (pool, ids) in ds.pools.iter().zip(&picks) {
                if let Some(id) = ids.iter().find(|id| pool.labeled.iter().any(|i| i.id == **id)) {
                    return Err(Error::Selection(format!(
                        "domain {}: selected already-labeled id {id}",
                        pool.domain_id
                    )));
                }
            }
            ds = ds.acquire_labels(&picks)?;
            observe(&ds);
        }
        model = Some(m);
    }
    let aulc = aulc(&curve)?;
    Ok(RepeatResult { repeat, curve, aulc })
}

/// Runs `al.repeats` independent repeats (in parallel on the current rayon
/// pool) and summarizes their AULC.
pub fn mdal_run(
    base: &MultiDomainDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    al: &ALConfig,
) -> Result<MdalResult> {
    al.validate()?;
    let repeats = (0..al.repeats)
        .into_par_iter()
        .map(|r| mdal_repeat(base, model_cfg, train_cfg, al, r, |_| {}))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = repeats.iter().map(|r| r.aulc).collect();
    let (aulc_mean, aulc_std) = mean_std(&scores);
    Ok(MdalResult {
        repeats,
        aulc_mean,
        aulc_std,
    })
}
