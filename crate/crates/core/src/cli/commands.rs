use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{load_config, CsvSource, ExperimentConfig};
use super::summary::{summarize, write_metrics, Metrics};
use super::{method_label, Cli, Command, Failure, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
use crate::active::{mdal_run, results_csv, summary_csv, SummaryRow};
use crate::data::{write_instances_csv, CsvDomain, Split};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, SpModel};
use crate::train::gradcheck::{toy_gradcheck, TERMS};
use crate::train::{evaluate, train_mdcl, TrainReport};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

type Outcome = std::result::Result<i32, Failure>;

pub(super) fn dispatch(cli: &Cli) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gradcheck { trials } => gradcheck(*trials, cli.seed.first().copied().unwrap_or(0)),
        Command::Summarize { dirs, out } => summarize_cmd(dirs, out.as_deref()),
        cmd => {
            let mut cfg = load_config(cli.config.as_deref(), &cli.overrides, &cli.seed)?;
            let out = output_dir(cli, &cfg);
            cfg.output_dir = Some(out.clone());
            match cmd {
                Command::GenData => gen_data(&cfg, &out),
                Command::Train => train(cfg, &out),
                Command::Eval { checkpoint, split } => eval(&cfg, checkpoint, (*split).into()),
                Command::Mdal { strategies } => {
                    let mut al = cfg.al.clone().unwrap_or_default();
                    if let Some(&s) = cli.seed.first() {
                        al.seed = s;
                    }
                    let strategies = if strategies.is_empty() {
                        vec![al.strategy]
                    } else {
                        strategies.iter().map(|&s| s.into()).collect()
                    };
                    cfg.al = Some(al);
                    mdal(cfg, &out, &strategies)
                }
                Command::Gradcheck { .. } | Command::Summarize { .. } => unreachable!("handled above"),
            }
        }
    })
}

fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("resolved_config.json"), cfg)
}

fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let Some(spec) = &cfg.dataset.synthetic else {
        return Err(Failure::Config("gen-data needs a synthetic dataset section".into()));
    };
    prepare(cfg, out)?;
    let ds = spec.generate()?;
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir).map_err(Error::from)?;
    let mut domains = Vec::new();
    for pool in &ds.pools {
        let k = pool.domain_id;
        let train: Vec<_> = pool.labeled.iter().chain(&pool.unlabeled).cloned().collect();
        let paths = ["train", "val", "test"].map(|s| data_dir.join(format!("domain_{k}_{s}.csv")));
        write_instances_csv(&paths[0], &train, ds.feature_dim)?;
        write_instances_csv(&paths[1], &pool.val, ds.feature_dim)?;
        write_instances_csv(&paths[2], &pool.test, ds.feature_dim)?;
        let [train, val, test] = paths;
        domains.push(CsvDomain {
            train,
            val: Some(val),
            test: Some(test),
        });
    }
    let manifest = json!({
        "num_domains": ds.num_domains(),
        "num_classes": ds.num_classes,
        "feature_dim": ds.feature_dim,
        "generator": spec,
        "dataset": {
            "csv": CsvSource { domains, num_classes: Some(ds.num_classes) },
            "name": cfg.dataset.name.clone().unwrap_or_else(|| "synthetic".into()),
        },
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {} domains to {}", ds.num_domains(), data_dir.display());
    Ok(0)
}

#[derive(Serialize)]
struct SeedMetrics<'a> {
    seed: u64,
    method: &'a str,
    labeled_fraction: f64,
    report: &'a TrainReport,
}

fn train_seed(cfg: &ExperimentConfig, seed: u64, method: &str, out: &Path) -> Result<TrainReport> {
    let ds = cfg.dataset.load_for_seed(seed)?;
    let mut model = SpModel::new(cfg.model_for_seed(seed))?;
    let report = train_mdcl(&mut model, &ds, &cfg.train_for_seed(seed))?;
    let dir = out.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir)?;
    report.write_log(dir.join("train_log.csv"))?;
    save_checkpoint(&model, dir.join("model.ckpt"))?;
    let metrics = SeedMetrics {
        seed,
        method,
        labeled_fraction: ds.labeled_fraction(),
        report: &report,
    };
    write_json(&dir.join("final_metrics.json"), &metrics)?;
    Ok(report)
}

fn train(mut cfg: ExperimentConfig, out: &Path) -> Outcome {
    let probe = cfg.dataset.load_for_seed(cfg.seeds[0])?;
    cfg.fit_model_to(&probe)?;
    let fraction = cfg.dataset.labeled_fraction.unwrap_or_else(|| probe.labeled_fraction());
    prepare(&cfg, out)?;
    let method = method_label(&cfg.model, cfg.train.ablation);

    let reports = cfg
        .seeds
        .par_iter()
        .map(|&s| train_seed(&cfg, s, &method, out))
        .collect::<Result<Vec<_>>>()?;
    for (seed, r) in cfg.seeds.iter().zip(&reports) {
        println!(
            "seed {seed}: test {:.4} (best epoch {}, {} epochs)",
            r.test.mean,
            r.best_epoch,
            r.epochs.len()
        );
    }
    let values = reports.iter().map(|r| r.test.mean).collect();
    let m = Metrics::new(
        method,
        cfg.dataset.display_name(),
        Some(fraction),
        "accuracy",
        cfg.seeds.clone(),
        values,
    );
    write_metrics(out, std::slice::from_ref(&m))?;
    println!("{} {} {}", m.method, m.dataset, m.report());
    Ok(0)
}

fn eval(cfg: &ExperimentConfig, checkpoint: &Path, split: Split) -> Outcome {
    let ds = cfg.dataset.load_for_seed(cfg.seeds[0])?;
    let model = load_checkpoint(checkpoint)?;
    let mc = model.config();
    if (mc.input_dim, mc.num_domains, mc.num_classes) != (ds.feature_dim, ds.num_domains(), ds.num_classes) {
        return Err(Failure::Config(format!(
            "checkpoint expects dim {} with {} domains and {} classes; data has {}, {}, {}",
            mc.input_dim,
            mc.num_domains,
            mc.num_classes,
            ds.feature_dim,
            ds.num_domains(),
            ds.num_classes
        )));
    }
    let e = evaluate(&model, &ds, split)?;
    for (k, a) in e.per_domain.iter().enumerate() {
        println!("domain {k}: {a:.4}");
    }
    println!("mean: {:.4}", e.mean);
    Ok(0)
}

fn gradcheck(trials: usize, seed: u64) -> Outcome {
    let report = toy_gradcheck(trials, seed)?;
    for (name, err) in TERMS.iter().zip(&report.max_error) {
        println!("{name}: {err:.3e}");
    }
    let worst = report.overall();
    println!("max relative error over {trials} toy models: {worst:.3e}");
    if worst <= GRADCHECK_TOLERANCE {
        Ok(0)
    } else {
        eprintln!("error: gradient check exceeds {GRADCHECK_TOLERANCE:e}");
        Ok(2)
    }
}

fn mdal(mut cfg: ExperimentConfig, out: &Path, strategies: &[crate::active::Strategy]) -> Outcome {
    let al = cfg.al.clone().expect("filled by dispatch");
    let base = cfg.dataset.load(al.seed)?;
    cfg.fit_model_to(&base)?;
    prepare(&cfg, out)?;
    let method = method_label(&cfg.model, cfg.train.ablation);

    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &strategy in strategies {
        let al = crate::active::ALConfig { strategy, ..al.clone() };
        let result = mdal_run(&base, &cfg.model, &cfg.train, &al)?;
        let name = format!("results_{}.csv", strategy.label().to_lowercase());
        fs::write(out.join(name), results_csv(&result)?).map_err(Error::from)?;
        rows.push(SummaryRow {
            method: method.clone(),
            strategy: strategy.label().into(),
            aulc_mean: result.aulc_mean,
            aulc_std: result.aulc_std,
        });
        metrics.push(Metrics::new(
            format!("{method} ({})", strategy.label()),
            cfg.dataset.display_name(),
            Some(al.final_fraction),
            "AULC",
            (0..al.repeats as u64).collect(),
            result.repeats.iter().map(|r| r.aulc).collect(),
        ));
    }
    let table = summary_csv(&rows)?;
    fs::write(out.join("summary.csv"), &table).map_err(Error::from)?;
    write_metrics(out, &metrics)?;
    print!("{table}");
    Ok(0)
}

fn summarize_cmd(dirs: &[PathBuf], out: Option<&Path>) -> Outcome {
    let (table, skipped) = summarize(dirs)?;
    for (dir, e) in &skipped {
        eprintln!("warning: skipping {}: {e}", dir.display());
    }
    match out {
        Some(p) => fs::write(p, &table).map_err(Error::from)?,
        None => print!("{table}"),
    }
    Ok(0)
}
