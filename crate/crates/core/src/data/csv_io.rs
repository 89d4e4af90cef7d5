//! Per-domain CSV files: header `label,f0,…,f{d-1}`, one instance per row,
//! label `-1` for unlabeled rows. Values are written in shortest round-trip
//! form, so save→load reproduces every bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DomainPool, Instance, MultiDomainDataset};
use crate::error::{Error, Result};
use crate::rng;

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one domain's file. Labeled rows go to `labeled`, `-1` rows to
/// `unlabeled` (with no oracle label); `val` and `test` stay empty. Instance
/// ids are zero-based data-row indices.
pub fn load_domain_csv(path: impl AsRef<Path>, domain_id: usize) -> Result<DomainPool> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if header.get(0) != Some("label") {
        return Err(parse_error(path, 1, "first column must be `label`"));
    }
    let dim = header.len() - 1;

    let mut pool = DomainPool {
        domain_id,
        ..DomainPool::default()
    };
    for (id, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(id as u64 + 2, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(id as u64 + 2, |p| p.line());
        if record.len() != dim + 1 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let label: i64 = record[0]
            .parse()
            .map_err(|_| parse_error(path, line, format!("label `{}` is not an integer", &record[0])))?;
        let features = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("value `{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => {
                return Err(parse_error(
                    path,
                    line,
                    format!("label {l} is neither a class id nor -1"),
                ))
            }
        };
        let inst = Instance { id, features, label };
        if inst.label.is_some() {
            pool.labeled.push(inst);
        } else {
            pool.unlabeled.push(inst);
        }
    }
    Ok(pool)
}

/// Writes instances in the domain CSV format; instances without a label are
/// written as `-1`.
pub fn write_instances_csv(path: impl AsRef<Path>, instances: &[Instance], dim: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::from("label");
    for j in 0..dim {
        header.push_str(&format!(",f{j}"));
    }
    writeln!(out, "{header}")?;
    for inst in instances {
        let label = inst.label.map_or(-1, |l| l as i64);
        let mut line = label.to_string();
        for v in &inst.features {
            line.push(',');
            line.push_str(&format!("{v:?}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// File locations for one domain. When `val` or `test` is absent, they are
/// carved out of the training file's labeled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDomain {
    pub train: PathBuf,
    #[serde(default)]
    pub val: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

fn labeled_only(path: &Path, pool: DomainPool) -> Result<Vec<Instance>> {
    if let Some(u) = pool.unlabeled.first() {
        return Err(parse_error(
            path,
            u.id as u64 + 2,
            "held-out files must be fully labeled",
        ));
    }
    Ok(pool.labeled)
}

impl MultiDomainDataset {
    /// Loads one CSV set per domain. Ids of val/test rows are offset past the
    /// training rows so they stay unique within the domain.
    pub fn from_csv(domains: &[CsvDomain], num_classes: Option<usize>, seed: u64) -> Result<Self> {
        let mut pools = Vec::with_capacity(domains.len());
        let mut dim: Option<(usize, &Path)> = None;
        for (k, spec) in domains.iter().enumerate() {
            let mut pool = load_domain_csv(&spec.train, k)?;
            let mut next_id = pool.train_len();
            let mut held_out = |p: &Option<PathBuf>| -> Result<Option<Vec<Instance>>> {
                let Some(p) = p else { return Ok(None) };
                let mut rows = labeled_only(p, load_domain_csv(p, k)?)?;
                for r in &mut rows {
                    r.id += next_id;
                }
                next_id += rows.len();
                Ok(Some(rows))
            };
            let val = held_out(&spec.val)?;
            let test = held_out(&spec.test)?;

            if val.is_none() || test.is_none() {
                let mut rng = rng::stream(&[seed, k as u64, 0x5B17]);
                pool.labeled.shuffle(&mut rng);
                let n = pool.labeled.len();
                if test.is_none() {
                    let take = (0.2 * n as f64).round() as usize;
                    pool.test = pool.labeled.split_off(pool.labeled.len() - take);
                }
                if val.is_none() {
                    let take = ((0.1 * n as f64).round() as usize).min(pool.labeled.len());
                    pool.val = pool.labeled.split_off(pool.labeled.len() - take);
                }
                for split in [&mut pool.labeled, &mut pool.val, &mut pool.test] {
                    split.sort_by_key(|i| i.id);
                }
            }
            if let Some(v) = val {
                pool.val = v;
            }
            if let Some(t) = test {
                pool.test = t;
            }

            let d = pool
                .labeled
                .iter()
                .chain(&pool.unlabeled)
                .chain(&pool.val)
                .chain(&pool.test)
                .map(|i| i.features.len())
                .next();
            if let Some(d) = d {
                match dim {
                    Some((expected, first)) if expected != d => {
                        return Err(parse_error(
                            &spec.train,
                            1,
                            format!("{d} features, but {} has {expected}", first.display()),
                        ));
                    }
                    None => dim = Some((d, &spec.train)),
                    _ => {}
                }
            }
            pools.push(pool);
        }
        MultiDomainDataset::from_pools(pools, num_classes, seed)
    }
}
