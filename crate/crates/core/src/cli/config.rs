use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::active::ALConfig;
use crate::data::{CsvDomain, MultiDomainDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub domains: Vec<CsvDomain>,
    #[serde(default)]
    pub num_classes: Option<usize>,
}

/// Exactly one of `synthetic` or `csv` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub csv: Option<CsvSource>,
    /// Labeled share of each domain's training data, drawn per seed. `null`
    /// keeps the labels exactly as loaded.
    #[serde(default = "default_fraction")]
    pub labeled_fraction: Option<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

fn default_fraction() -> Option<f64> {
    Some(0.05)
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            synthetic: Some(SyntheticSpec::default()),
            csv: None,
            labeled_fraction: default_fraction(),
            name: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.synthetic, &self.csv) {
            (Some(s), None) => s.validate()?,
            (None, Some(c)) => {
                if c.domains.is_empty() {
                    return Err(Error::config("dataset.csv.domains is empty"));
                }
                for d in &c.domains {
                    let paths = std::iter::once(&d.train).chain(d.val.iter()).chain(d.test.iter());
                    for p in paths {
                        if !p.is_file() {
                            return Err(Error::config(format!("dataset file {} does not exist", p.display())));
                        }
                    }
                }
            }
            _ => return Err(Error::config("dataset needs exactly one of `synthetic` or `csv`")),
        }
        if let Some(f) = self.labeled_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(format!("labeled_fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn display_name(&self) -> String {
        match (&self.name, &self.synthetic) {
            (Some(n), _) => n.clone(),
            (None, Some(_)) => "synthetic".into(),
            (None, None) => "csv".into(),
        }
    }

    /// The full dataset before label seeding.
    pub fn load(&self, seed: u64) -> Result<MultiDomainDataset> {
        match (&self.synthetic, &self.csv) {
            (Some(s), _) => s.generate(),
            (None, Some(c)) => MultiDomainDataset::from_csv(&c.domains, c.num_classes, seed),
            (None, None) => Err(Error::config("no dataset source")),
        }
    }

    /// The dataset as trained on for one seed.
    pub fn load_for_seed(&self, seed: u64) -> Result<MultiDomainDataset> {
        let ds = self.load(seed)?;
        match self.labeled_fraction {
            Some(f) => ds.seed_labels(f, seed),
            None => Ok(ds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// `input_dim`, `num_domains` and `num_classes` are taken from the data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub al: Option<ALConfig>,
    pub output_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            al: None,
            output_dir: None,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        if let Some(al) = &self.al {
            al.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds list is empty"));
        }
        Ok(())
    }

    /// Copies the data's shape into the model section.
    pub fn fit_model_to(&mut self, ds: &MultiDomainDataset) -> Result<()> {
        self.model.input_dim = ds.feature_dim;
        self.model.num_domains = ds.num_domains();
        self.model.num_classes = ds.num_classes;
        self.model.validate()
    }

    /// Model config for one seed's run.
    pub fn model_for_seed(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            init_seed: crate::rng::derive_seed(&[self.model.init_seed, seed]),
            ..self.model.clone()
        }
    }

    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed: crate::rng::derive_seed(&[self.train.seed, seed]),
            ..self.train.clone()
        }
    }
}

/// Sets `dotted.key` to `value` inside a JSON object, creating intermediate
/// objects. The value is read as JSON when it parses, else as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key `{key}` is malformed")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(Error::config(format!(
                "override `{key}`: `{}` is not an object",
                parts[..i].join(".")
            )));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one part")
}

/// Reads the config file (or starts from defaults), applies overrides and
/// validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[String], seeds: &[u64]) -> Result<ExperimentConfig> {
    let mut root = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if !root.is_object() {
        return Err(Error::config("config must be a JSON object"));
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    // A dataset section naming no source means the default synthetic one.
    if let Some(Value::Object(ds)) = root.get_mut("dataset") {
        if !ds.contains_key("synthetic") && !ds.contains_key("csv") {
            ds.insert("synthetic".into(), Value::Object(Default::default()));
        }
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| Error::config(e.to_string()))?;
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    cfg.validate()?;
    Ok(cfg)
}
