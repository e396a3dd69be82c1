//! Top-1 accuracy and mean average precision.

use std::collections::BTreeSet;

use super::scoring::ClassScoreTable;
use crate::error::{Error, Result};

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::config("predictions", "accuracy of an empty set is undefined"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Labels ordered by ascending score, ties to the lower label.
pub fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// `(1/|Y|)·Σ_{y∈Y} |{y' ∈ Y : rank(y') ≤ rank(y)}| / rank(y)` over a
/// best-first `ranking`; `None` when `positives` is empty. The sum is kept
/// as an exact fraction and rounded once, falling back to floating point
/// only if the fraction outgrows 128 bits.
pub fn average_precision(ranking: &[usize], positives: &BTreeSet<usize>) -> Option<f64> {
    if positives.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut terms = Vec::with_capacity(positives.len());
    for (pos, label) in ranking.iter().enumerate() {
        if positives.contains(label) {
            hits += 1;
            terms.push((hits as u128, (pos + 1) as u128));
        }
    }
    let p = positives.len() as u128;
    Some(exact_mean(&terms, p).unwrap_or_else(|| {
        terms.iter().map(|&(n, d)| n as f64 / d as f64).sum::<f64>() / p as f64
    }))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `Σ n_i/d_i / p` rounded once, or `None` on overflow.
fn exact_mean(terms: &[(u128, u128)], p: u128) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(n, d) in terms {
        let g = gcd(den, d);
        let l = den.checked_mul(d / g)?;
        num = num.checked_mul(l / den)?.checked_add(n.checked_mul(l / d)?)?;
        den = l;
        let r = gcd(num, den);
        (num, den) = (num / r, den / r);
    }
    den = den.checked_mul(p)?;
    let r = gcd(num, den);
    (num, den) = (num / r, den / r);
    const EXACT: u128 = 1 << 53;
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

/// Mean AP over images whose tables carry a full score for every label.
/// Images without positives are skipped with a warning.
pub fn mean_average_precision(tables: &[ClassScoreTable], label_sets: &[BTreeSet<usize>]) -> Result<f64> {
    if tables.len() != label_sets.len() {
        return Err(Error::dim(format!(
            "{} score tables for {} label sets",
            tables.len(),
            label_sets.len()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, (table, labels)) in tables.iter().zip(label_sets).enumerate() {
        let scores = (0..table.class_count())
            .map(|c| table.mean(c))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::config("tables", format!("image {i} lacks scores for some labels")))?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= scores.len()) {
            return Err(Error::config("labels", format!("image {i} has unknown label {bad}")));
        }
        match average_precision(&rank_ascending(&scores), labels) {
            Some(ap) => {
                total += ap;
                counted += 1;
            }
            None => log::warn!("image {i} has no ground-truth labels; skipped in mAP"),
        }
    }
    if counted == 0 {
        return Err(Error::config("labels", "no image has a ground-truth label"));
    }
    Ok(total / counted as f64)
}
