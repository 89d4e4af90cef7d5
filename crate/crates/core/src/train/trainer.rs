use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, Evaluation};
use super::optim::Optimizer;
use super::TrainConfig;
use crate::data::{two_view_augment_with, MultiDomainDataset, Split};
use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy, discriminator_objective, inter_contrastive, intra_contrastive, total_main_loss, ConfusionKind,
    LossWeights, MainLossTerms,
};
use crate::model::{Binding, Component, SpModel};
use crate::rng;
use crate::tensor::{Graph, Matrix, Var};

// stream labels for per-step randomness
const INTER: u64 = 1;
const ADV: u64 = 2;
const MAIN_LABELED: u64 = 3;
const MAIN_UNLABELED: u64 = 4;
const MAIN_AUGMENT: u64 = 5;
const INTER_AUGMENT: u64 = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MainStepStats {
    /// Σ_d L_C.
    pub classification: f64,
    /// Σ_d L_Fs on the unlabeled batches.
    pub confusion: f64,
    /// Σ_d L_D on the same batches, for the identity `L_Fs = -L_D`.
    pub discriminator: f64,
    /// Σ_d L_intra (zero when the term is disabled).
    pub intra: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Mean unweighted L_inter over the inter steps (zero if none ran).
    pub inter: f64,
    /// Mean Σ_d L_D over the discriminator steps (zero if none ran).
    pub discriminator: f64,
    pub main: MainStepStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub classification: f64,
    pub inter: f64,
    pub intra: f64,
    pub discriminator: f64,
    pub confusion: f64,
    pub val_accuracy: Vec<f64>,
    pub val_mean: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_mean: f64,
    pub stop_reason: StopReason,
    pub test: Evaluation,
}

impl TrainReport {
    /// Per-epoch log as CSV text.
    pub fn log_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let k = self.epochs.first().map_or(0, |e| e.val_accuracy.len());
        let mut header: Vec<String> = ["epoch", "L_C", "L_inter", "L_intra", "L_D"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..k).map(|d| format!("val_acc_d{d}")));
        header.extend(["val_mean".to_string(), "lr".to_string()]);
        w.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![e.epoch.to_string()];
            row.extend(
                [e.classification, e.inter, e.intra, e.discriminator]
                    .iter()
                    .map(|v| format!("{v:?}")),
            );
            row.extend(e.val_accuracy.iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", e.val_mean));
            row.push(format!("{:?}", e.lr));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.log_csv()?.as_bytes())?;
        Ok(())
    }
}

fn finite(value: f64, component: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            component: component.to_string(),
        })
    }
}

/// Runs the three phases against one model. Each phase method performs one
/// optimizer step and returns the losses it saw.
pub struct Trainer<'a> {
    model: &'a mut SpModel,
    data: &'a MultiDomainDataset,
    config: TrainConfig,
    weights: LossWeights,
    optimizer: Optimizer,
    lr: f64,
    // steps taken per phase; each phase's randomness is keyed on its own count
    steps: [u64; 3],
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut SpModel, data: &'a MultiDomainDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mc = model.config();
        if mc.input_dim != data.feature_dim
            || mc.num_domains != data.num_domains()
            || mc.num_classes != data.num_classes
        {
            return Err(Error::config(format!(
                "model expects dim {} / {} domains / {} classes, data has {} / {} / {}",
                mc.input_dim,
                mc.num_domains,
                mc.num_classes,
                data.feature_dim,
                data.num_domains(),
                data.num_classes
            )));
        }
        if let Some(pool) = data.pools.iter().find(|p| p.labeled.is_empty()) {
            return Err(Error::state(format!("domain {} has no labeled data", pool.domain_id)));
        }
        let optimizer = Optimizer::new(config.optimizer, config.weight_decay, model.params().len());
        Ok(Self {
            weights: config.effective_weights(),
            lr: config.learning_rate,
            model,
            data,
            config,
            optimizer,
            steps: [0; 3],
        })
    }

    pub fn model(&self) -> &SpModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn rng(&self, purpose: u64, domain: usize) -> ChaCha8Rng {
        let phase = match purpose {
            INTER | INTER_AUGMENT => 0,
            ADV => 1,
            _ => 2,
        };
        rng::stream(&[self.config.seed, self.steps[phase], purpose, domain as u64])
    }

    fn update(&mut self, g: &Graph, b: &Binding, pred: impl Fn(Component) -> bool) -> Result<()> {
        for i in self.model.param_indices(pred) {
            let grad = g.grad_or_zeros(b.var(i));
            if !grad.is_finite() {
                return Err(Error::NonFinite {
                    component: format!("gradient of {}", self.model.params()[i].name),
                });
            }
            let lr = self.lr;
            self.optimizer
                .step(i, &mut self.model.params_mut()[i].value, &grad, lr)?;
        }
        Ok(())
    }

    /// Phase 1: supervised contrastive alignment of the shared extractor on a
    /// two-view mixed-domain labeled batch. Only Fs is updated. Returns the
    /// unweighted L_inter.
    pub fn inter_step(&mut self) -> Result<f64> {
        self.steps[0] += 1;
        let n = self.config.batch_size;
        let batch = self.data.sample_mixed_labeled_with(&mut self.rng(INTER, 0), n)?;
        let views = two_view_augment_with(&mut self.rng(INTER_AUGMENT, 0), &batch.features, self.config.noise_std)?;
        let labels: Vec<usize> = batch.labels.iter().chain(&batch.labels).copied().collect();

        let mut g = Graph::new();
        let b = self.model.bind(&mut g, |c| c == Component::Shared);
        let (loss, raw) = inter_objective(
            self.model,
            &mut g,
            &b,
            views,
            &labels,
            &self.weights,
            self.config.normalize,
        )?;
        let value = finite(g.scalar(raw), "L_inter")?;
        g.backward(loss)?;
        self.update(&g, &b, |c| c == Component::Shared)?;
        Ok(value)
    }

    /// Phase 2: trains the discriminator on detached shared features of one
    /// unlabeled batch per domain. Only D is updated. Returns Σ_d L_D.
    pub fn adversarial_step(&mut self) -> Result<f64> {
        self.steps[1] += 1;
        let n = self.config.batch_size;
        let batches = (0..self.data.num_domains())
            .map(|d| {
                self.data
                    .sample_domain_unlabeled_with(&mut self.rng(ADV, d), d, n, false)
                    .map(|b| b.features)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let b = self.model.bind(&mut g, |c| c == Component::Discriminator);
        let loss = adversarial_objective(self.model, &mut g, &b, &batches)?;
        let value = finite(g.scalar(loss), "L_D")?;
        g.backward(loss)?;
        self.update(&g, &b, |c| c == Component::Discriminator)?;
        Ok(value)
    }

    /// Draws the inputs of the next main step.
    fn main_batches(&self) -> Result<MainBatches> {
        let n = self.config.batch_size;
        let mut batches = MainBatches::default();
        for d in 0..self.data.num_domains() {
            let labeled = self
                .data
                .sample_domain_labeled_with(&mut self.rng(MAIN_LABELED, d), d, n)?;
            batches.labeled.push((labeled.features, labeled.labels));
            let unlabeled = self
                .data
                .sample_domain_unlabeled_with(&mut self.rng(MAIN_UNLABELED, d), d, n, false)?
                .features;
            let views = if self.weights.lambda_intra > 0.0 {
                Some(two_view_augment_with(
                    &mut self.rng(MAIN_AUGMENT, d),
                    &unlabeled,
                    self.config.noise_std,
                )?)
            } else {
                None
            };
            batches.unlabeled.push(unlabeled);
            batches.views.push(views);
        }
        Ok(batches)
    }

    /// Phase 3: classification on labeled batches, confusion and intra-domain
    /// contrast on unlabeled batches; updates Fs, every Fd and C, never D.
    pub fn main_step(&mut self) -> Result<MainStepStats> {
        self.steps[2] += 1;
        let batches = self.main_batches()?;
        let trainable = |c: Component| c != Component::Discriminator;
        let mut g = Graph::new();
        let b = self.model.bind(&mut g, trainable);
        let (loss, stats) = main_objective(
            self.model,
            &mut g,
            &b,
            &batches,
            &self.weights,
            self.config.confusion,
            self.config.normalize,
        )?;
        finite(stats.classification, "L_C")?;
        finite(stats.confusion, "L_Fs")?;
        finite(stats.intra, "L_intra")?;
        finite(stats.total, "main loss")?;
        g.backward(loss)?;
        self.update(&g, &b, trainable)?;
        Ok(stats)
    }

    /// One outer iteration: `k_inter` alignment steps (skipped when the inter
    /// term is disabled), `k_adv` discriminator steps, one main step.
    pub fn iteration(&mut self) -> Result<IterationStats> {
        let k_inter = self.config.effective_k_inter();
        let mut inter = 0.0;
        for _ in 0..k_inter {
            inter += self.inter_step()?;
        }
        let mut disc = 0.0;
        for _ in 0..self.config.k_adv {
            disc += self.adversarial_step()?;
        }
        let main = self.main_step()?;
        Ok(IterationStats {
            inter: if k_inter > 0 { inter / k_inter as f64 } else { 0.0 },
            discriminator: if self.config.k_adv > 0 {
                disc / self.config.k_adv as f64
            } else {
                0.0
            },
            main,
        })
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.config.iterations_per_epoch.unwrap_or_else(|| {
            let largest = self.data.pools.iter().map(|p| p.train_len()).max().unwrap_or(0);
            largest.div_ceil(self.config.batch_size).max(1)
        })
    }

    /// Runs one epoch and returns the mean of each loss component.
    pub fn epoch(&mut self) -> Result<IterationStats> {
        let iters = self.iterations_per_epoch();
        let mut acc = IterationStats::default();
        for _ in 0..iters {
            let s = self.iteration()?;
            acc.inter += s.inter;
            acc.discriminator += s.discriminator;
            acc.main.classification += s.main.classification;
            acc.main.confusion += s.main.confusion;
            acc.main.discriminator += s.main.discriminator;
            acc.main.intra += s.main.intra;
            acc.main.total += s.main.total;
        }
        let k = iters as f64;
        acc.inter /= k;
        acc.discriminator /= k;
        acc.main.classification /= k;
        acc.main.confusion /= k;
        acc.main.discriminator /= k;
        acc.main.intra /= k;
        acc.main.total /= k;
        Ok(acc)
    }
}

/// Inputs of one main step, indexed by domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MainBatches {
    /// Labeled features and labels.
    pub labeled: Vec<(Matrix, Vec<usize>)>,
    /// Unlabeled features for the confusion term.
    pub unlabeled: Vec<Matrix>,
    /// Two-view augmentation of `unlabeled`, present when the intra term is on.
    pub views: Vec<Option<Matrix>>,
}

/// Returns `(λinter · L_inter, L_inter)` for a two-view batch.
pub fn inter_objective(
    model: &SpModel,
    g: &mut Graph,
    b: &Binding,
    views: Matrix,
    labels: &[usize],
    weights: &LossWeights,
    normalize: bool,
) -> Result<(Var, Var)> {
    let x = g.constant(views);
    let z = model.shared_features(g, b, x)?;
    let raw = inter_contrastive(g, z, labels, weights.tau_inter, normalize)?;
    Ok((g.scale(raw, weights.lambda_inter), raw))
}

/// Σ_d L_D with the shared features cut from the graph; `batches[d]` comes
/// from domain `d`.
pub fn adversarial_objective(model: &SpModel, g: &mut Graph, b: &Binding, batches: &[Matrix]) -> Result<Var> {
    let mut terms = Vec::with_capacity(batches.len());
    for (d, x) in batches.iter().enumerate() {
        let n = x.rows();
        let x = g.constant(x.clone());
        let z = model.shared_features(g, b, x)?;
        let z = g.detach(z);
        let logits = model.discriminate(g, b, z)?;
        terms.push(cross_entropy(g, logits, &vec![d; n])?);
    }
    g.add_all(&terms)
}

/// `Σ_d L_C + λd · Σ_d L_Fs + λintra · Σ_d L_intra`, where the intra term
/// uses the class probabilities of both views.
pub fn main_objective(
    model: &SpModel,
    g: &mut Graph,
    b: &Binding,
    batches: &MainBatches,
    weights: &LossWeights,
    confusion: ConfusionKind,
    normalize: bool,
) -> Result<(Var, MainStepStats)> {
    let mut terms = MainLossTerms::default();
    let mut discriminator = 0.0;
    for (d, (x, labels)) in batches.labeled.iter().enumerate() {
        let x = g.constant(x.clone());
        let out = model.forward(g, b, x, d)?;
        terms.classification.push(cross_entropy(g, out.class_logits, labels)?);
    }
    for (d, (x, views)) in batches.unlabeled.iter().zip(&batches.views).enumerate() {
        let x = g.constant(x.clone());
        let out = model.forward(g, b, x, d)?;
        let (l_d, l_fs) = discriminator_objective(g, out.domain_logits, d, confusion)?;
        discriminator += g.scalar(l_d);
        terms.confusion.push(l_fs);
        if let Some(views) = views {
            let xv = g.constant(views.clone());
            let out = model.forward(g, b, xv, d)?;
            terms
                .intra
                .push(intra_contrastive(g, out.class_probs, weights.tau_intra, normalize)?);
        }
    }
    let (loss, parts) = total_main_loss(g, &terms, weights)?;
    Ok((
        loss,
        MainStepStats {
            classification: parts.classification,
            confusion: parts.confusion,
            discriminator,
            intra: parts.intra,
            total: parts.total,
        },
    ))
}

/// Trains `model` in place and restores the parameters of the best
/// validation epoch.
pub fn train_mdcl(model: &mut SpModel, ds: &MultiDomainDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let mut trainer = Trainer::new(model, ds, cfg.clone())?;
    let decay_after = cfg.early_stop_patience.div_ceil(2);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Matrix>)> = None;
    let mut since_best = 0;
    let mut since_decay = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let lr = trainer.learning_rate();
        let stats = trainer.epoch()?;
        let val = evaluate(trainer.model(), ds, Split::Val)?;
        epochs.push(EpochRecord {
            epoch,
            classification: stats.main.classification,
            inter: stats.inter,
            intra: stats.main.intra,
            discriminator: stats.discriminator,
            confusion: stats.main.confusion,
            val_accuracy: val.per_domain,
            val_mean: val.mean,
            lr,
        });
        if best.as_ref().is_none_or(|(_, score, _)| val.mean > *score) {
            best = Some((epoch, val.mean, trainer.model().values()));
            since_best = 0;
            since_decay = 0;
            continue;
        }
        since_best += 1;
        since_decay += 1;
        if since_best >= cfg.early_stop_patience {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
        if let Some(factor) = cfg.lr_decay_factor {
            if since_decay >= decay_after {
                trainer.set_learning_rate(lr * factor);
                since_decay = 0;
            }
        }
    }
    drop(trainer);

    let (best_epoch, best_val_mean, values) = best.expect("at least one epoch ran");
    model.set_values(values)?;
    let test = evaluate(model, ds, Split::Test)?;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_mean,
        stop_reason,
        test,
    })
}
