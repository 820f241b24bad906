//! Ranking quality and list diversity metrics.

use std::cmp::Ordering;

use crate::linalg::{dot, norm};
use crate::{Error, Result};

/// A ranked list with binary relevance and the size of the full relevant set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRanking {
    pub items: Vec<String>,
    pub labels: Vec<u8>,
    /// Relevant items in the ground truth, including any not in `items`.
    pub total_relevant: usize,
}

impl LabeledRanking {
    /// Labels every id found in `relevant`; `total_relevant` is `relevant.len()`.
    pub fn from_relevant<S: AsRef<str>>(items: Vec<String>, relevant: &[S]) -> Self {
        let labels = items
            .iter()
            .map(|id| relevant.iter().any(|r| r.as_ref() == id) as u8)
            .collect();
        Self {
            items,
            labels,
            total_relevant: relevant.len(),
        }
    }

    pub fn ndcg_at_k(&self, k: usize) -> f64 {
        ndcg_at_k(&self.labels, self.total_relevant, k)
    }

    pub fn map_at_k(&self, k: usize) -> f64 {
        map_at_k(&self.labels, self.total_relevant, k)
    }
}

fn discount(pos: usize) -> f64 {
    // pos is 0-based, rank is pos + 1
    1.0 / ((pos + 2) as f64).log2()
}

/// Binary-gain nDCG. `total_relevant` sizes the ideal list; 0 relevant gives 0.
pub fn ndcg_at_k(labels: &[u8], total_relevant: usize, k: usize) -> f64 {
    let total = total_relevant.max(labels.iter().filter(|&&l| l > 0).count());
    if total == 0 || k == 0 {
        return 0.0;
    }
    let dcg: f64 = labels
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..total.min(k)).map(discount).sum();
    dcg / idcg
}

pub fn map_at_k(labels: &[u8], total_relevant: usize, k: usize) -> f64 {
    let total = total_relevant.max(labels.iter().filter(|&&l| l > 0).count());
    if total == 0 || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, &l) in labels.iter().take(k).enumerate() {
        if l > 0 {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    sum / total.min(k) as f64
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Validation("no scores to evaluate".into()));
    }
    Ok(())
}

/// Area under the ROC curve from the Mann–Whitney rank statistic; ties count 1/2.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l > 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average 1-based rank of the tie group i..=j
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&o| labels[o] > 0).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let eps = 1e-15;
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let p = s.clamp(eps, 1.0 - eps);
            if y > 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Intra-list average cosine distance.
pub fn ilad(list: &[&[f64]]) -> Result<f64> {
    if list.len() < 2 {
        return Err(Error::Validation(format!(
            "ILAD needs at least 2 items, got {}",
            list.len()
        )));
    }
    let norms: Vec<f64> = list.iter().map(|v| norm(v)).collect();
    if norms.contains(&0.0) {
        return Err(Error::Numerical("ILAD of a zero-norm embedding".into()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..list.len() {
        for j in i + 1..list.len() {
            sum += 1.0 - dot(list[i], list[j]) / (norms[i] * norms[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}
