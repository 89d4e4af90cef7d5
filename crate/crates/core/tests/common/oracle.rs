//! Literal double-sum evaluations of the contrastive losses, written without
//! log-sum-exp or any matrix machinery so they stay independent of the
//! vectorized implementation.

#![allow(dead_code)]

fn normalized(rows: &[Vec<f64>], normalize: bool) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            if !normalize {
                return r.clone();
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            r.iter().map(|v| v / norm).collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Per-row labels; positives of `i` are the other rows with the same label.
pub fn brute_inter(rows: &[Vec<f64>], labels: &[usize], tau: f64, normalize: bool) -> f64 {
    let z = normalized(rows, normalize);
    let m = z.len();
    let mut total = 0.0;
    for i in 0..m {
        let mut denom = 0.0;
        for a in 0..m {
            if a != i {
                denom += (dot(&z[i], &z[a]) / tau).exp();
            }
        }
        let mut count = 0usize;
        let mut acc = 0.0;
        for p in 0..m {
            if p != i && labels[p] == labels[i] {
                acc += ((dot(&z[i], &z[p]) / tau).exp() / denom).ln();
                count += 1;
            }
        }
        if count > 0 {
            total += -acc / count as f64;
        }
    }
    total / m as f64
}

/// Two-view layout: the positive of row `i` is row `(i + N) mod 2N`.
pub fn brute_intra(rows: &[Vec<f64>], tau: f64, normalize: bool) -> f64 {
    let z = normalized(rows, normalize);
    let m = z.len();
    let n = m / 2;
    let mut total = 0.0;
    for i in 0..m {
        let j = (i + n) % m;
        let mut denom = 0.0;
        for a in 0..m {
            if a != i {
                denom += (dot(&z[i], &z[a]) / tau).exp();
            }
        }
        total += -((dot(&z[i], &z[j]) / tau).exp() / denom).ln();
    }
    total / m as f64
}

pub fn brute_cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[y].exp() / denom).ln();
    }
    total / logits.len() as f64
}
