//! Pure metric functions over token sequences and score tables.

use crate::error::{Error, Result};

/// Levenshtein distance with unit insert/delete/substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=a.len()).collect();
    for (j, y) in b.iter().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for (i, x) in a.iter().enumerate() {
            let up = row[i + 1];
            row[i + 1] = if x == y { diag } else { 1 + diag.min(up).min(row[i]) };
            diag = up;
        }
    }
    row[a.len()]
}

/// Edit distance over `max(|a|, |b|)`; two empty sequences are at distance 0.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        0.0
    } else {
        edit_distance(a, b) as f64 / n as f64
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Undefined(format!(
            "correlation needs two equal-length series of at least 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Undefined(format!("spearman on lengths {} and {}", xs.len(), ys.len())));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn hamming<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Spearman correlation between pairwise message edit distances and pairwise
/// meaning Hamming distances over all unordered record pairs.
pub fn topsim(messages: &[Vec<usize>], meanings: &[Vec<usize>]) -> Result<f64> {
    if messages.len() != meanings.len() || messages.len() < 2 {
        return Err(Error::Undefined(format!(
            "topsim needs at least 2 aligned records, got {} messages and {} meanings",
            messages.len(),
            meanings.len()
        )));
    }
    let n = messages.len();
    let mut dm = Vec::with_capacity(n * (n - 1) / 2);
    let mut ds = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dm.push(normalized_edit_distance(&messages[i], &messages[j]));
            ds.push(hamming(&meanings[i], &meanings[j]) as f64);
        }
    }
    spearman(&dm, &ds)
}

/// `(n − 1) · Σ SR(i,i) / Σ_{i≠j} SR(i,j)` over a row-major `n × n` table.
pub fn interchangeability(sr: &[Vec<f64>]) -> Result<f64> {
    let n = sr.len();
    if n < 2 || sr.iter().any(|r| r.len() != n) {
        return Err(Error::Undefined("interchangeability needs a square table with n ≥ 2".into()));
    }
    let diag: f64 = (0..n).map(|i| sr[i][i]).sum();
    let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| sr[i][j]).sum();
    if off == 0.0 {
        return Err(Error::Undefined("interchangeability: every cross-play success rate is zero".into()));
    }
    Ok((n - 1) as f64 * diag / off)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}
