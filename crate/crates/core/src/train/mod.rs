//! The MDCL training loop: inter-domain alignment, discriminator training and
//! the main iteration, with validation-driven LR decay and early stopping.

mod eval;
pub mod gradcheck;
mod optim;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ConfusionKind, LossWeights};

pub use eval::{accuracy, evaluate, Evaluation};
pub use optim::{AdamState, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    adversarial_objective, inter_objective, main_objective, train_mdcl, EpochRecord, IterationStats, MainBatches,
    MainStepStats, StopReason, TrainReport, Trainer,
};

/// Which contrastive terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    InterOnly,
    IntraOnly,
    /// Neither contrastive term: plain adversarial shared-private training.
    Baseline,
}

impl Ablation {
    pub fn apply(self, mut w: LossWeights) -> LossWeights {
        match self {
            Ablation::Full => {}
            Ablation::InterOnly => w.lambda_intra = 0.0,
            Ablation::IntraOnly => w.lambda_inter = 0.0,
            Ablation::Baseline => {
                w.lambda_inter = 0.0;
                w.lambda_intra = 0.0;
            }
        }
        w
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::InterOnly => "inter_only",
            Ablation::IntraOnly => "intra_only",
            Ablation::Baseline => "baseline",
        }
    }
}

/// Hyperparameter rows for the benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Amazon,
    MnistUsps,
    OfficeHome,
    Fdumtl,
    Pacs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub k_inter: usize,
    pub k_adv: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Multiplier applied on a validation plateau; `None` keeps the rate fixed.
    pub lr_decay_factor: Option<f64>,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    /// Outer iterations per epoch. `None` sizes an epoch to one pass over the
    /// largest domain's training set.
    pub iterations_per_epoch: Option<usize>,
    pub noise_std: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub confusion: ConfusionKind,
    /// L2-normalize rows before contrastive dot products.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Amazon)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            weights: LossWeights::default(),
            k_inter: 1,
            k_adv: 5,
            optimizer: OptimizerKind::Adam,
            learning_rate: 3e-4,
            weight_decay: 0.05,
            lr_decay_factor: None,
            batch_size: 8,
            early_stop_patience: 20,
            max_epochs: 100,
            iterations_per_epoch: None,
            noise_std: 0.01,
            seed: 0,
            ablation: Ablation::Full,
            confusion: ConfusionKind::Nll,
            normalize: true,
        };
        let w = |li, ti, la, ta| LossWeights {
            lambda_inter: li,
            tau_inter: ti,
            lambda_intra: la,
            tau_intra: ta,
            ..LossWeights::default()
        };
        match preset {
            Preset::Amazon => base,
            Preset::MnistUsps => Self {
                learning_rate: 3e-3,
                lr_decay_factor: Some(0.33),
                weight_decay: 0.001,
                early_stop_patience: 30,
                weights: w(0.1, 0.1, 1.0, 0.1),
                ..base
            },
            Preset::OfficeHome => Self {
                learning_rate: 1e-2,
                lr_decay_factor: Some(0.33),
                weight_decay: 0.001,
                early_stop_patience: 15,
                weights: w(1.0, 0.01, 1.0, 0.01),
                ..base
            },
            Preset::Fdumtl => Self {
                learning_rate: 3e-4,
                lr_decay_factor: Some(0.1),
                weight_decay: 0.001,
                early_stop_patience: 30,
                weights: w(0.1, 0.01, 1.0, 0.01),
                ..base
            },
            Preset::Pacs => Self {
                optimizer: OptimizerKind::Sgd,
                learning_rate: 1e-3,
                lr_decay_factor: Some(0.1),
                weight_decay: 0.001,
                early_stop_patience: 15,
                weights: w(0.1, 1.0, 1.0, 0.1),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if let Some(f) = self.lr_decay_factor {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(format!("lr_decay_factor {f} outside (0, 1]")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if self.iterations_per_epoch == Some(0) {
            return Err(Error::config("iterations_per_epoch must be at least 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be nonnegative"));
        }
        Ok(())
    }

    /// Loss weights after the ablation switches are applied.
    pub fn effective_weights(&self) -> LossWeights {
        self.ablation.apply(self.weights)
    }

    /// Inter-domain steps actually run per outer iteration.
    pub fn effective_k_inter(&self) -> usize {
        if self.effective_weights().lambda_inter == 0.0 {
            0
        } else {
            self.k_inter
        }
    }
}
