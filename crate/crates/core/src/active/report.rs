use super::MdalResult;
use crate::error::{Error, Result};

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per repeat and round: `repeat,round,labeled_fraction,acc_domain_*,mean_acc`.
pub fn results_csv(result: &MdalResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k = result
        .repeats
        .first()
        .and_then(|r| r.curve.points.first())
        .map_or(0, |p| p.accuracy.len());
    let mut header = vec!["repeat".to_string(), "round".into(), "labeled_fraction".into()];
    header.extend((0..k).map(|d| format!("acc_domain_{d}")));
    header.push("mean_acc".into());
    w.write_record(&header)?;
    for r in &result.repeats {
        for (round, p) in r.curve.points.iter().enumerate() {
            let mut row = vec![r.repeat.to_string(), round.to_string(), format!("{:?}", p.fraction)];
            row.extend(p.accuracy.iter().map(|a| format!("{a:?}")));
            row.push(format!("{:?}", p.mean_accuracy));
            w.write_record(&row)?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub strategy: String,
    pub aulc_mean: f64,
    pub aulc_std: f64,
}

/// `method,strategy,AULC_mean,AULC_std,AULC` with two decimals; the last
/// column reads `mean (std)`.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "strategy", "AULC_mean", "AULC_std", "AULC"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.strategy.clone(),
            format!("{:.2}", r.aulc_mean),
            format!("{:.2}", r.aulc_std),
            format!("{:.2} ({:.2})", r.aulc_mean, r.aulc_std),
        ])?;
    }
    finish(w)
}
