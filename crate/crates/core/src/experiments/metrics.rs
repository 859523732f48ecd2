use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Windows scoring at or above this value are predicted positive.
    pub threshold: f64,
}

/// ROC curve by a descending threshold sweep with tied scores grouped, and
/// its trapezoidal area.
///
/// The curve starts at (0, 0) with threshold `max + 1` and ends at (1, 1).
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteOutput("roc scores".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassTestSet);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (pos as f64, neg as f64);
    let top = scores[order[0]];
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: top + 1.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("non-empty");
        let pt = RocPoint { fpr: fp as f64 / n, tpr: tp as f64 / p, threshold: s };
        auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
        points.push(pt);
    }
    Ok((points, auc))
}

/// `counts[actual][predicted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

impl Confusion {
    pub fn from_predictions(actual: &[usize], predicted: &[usize]) -> Self {
        let mut c = Confusion::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            c.counts[a][p] += 1;
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.counts[0][0] + self.counts[1][1]) as f64 / total as f64
    }
}

/// Class-1 decision on the class-1 probability.
pub fn predict(score: f64) -> usize {
    usize::from(score > 0.5)
}

/// Majority vote of window predictions within each group; a split vote is
/// decided by the mean score. Returns the fraction of groups voted correctly.
pub fn majority_vote_accuracy<K: Ord>(groups: impl IntoIterator<Item = (K, f64, usize)>) -> f64 {
    // key -> (votes for 1, votes, score sum, truth)
    let mut acc: BTreeMap<K, (usize, usize, f64, usize)> = BTreeMap::new();
    for (k, score, truth) in groups {
        let e = acc.entry(k).or_insert((0, 0, 0.0, truth));
        e.0 += predict(score);
        e.1 += 1;
        e.2 += score;
    }
    if acc.is_empty() {
        return 0.0;
    }
    let correct = acc
        .values()
        .filter(|&&(ones, n, sum, truth)| {
            let vote = match (2 * ones).cmp(&n) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => predict(sum / n as f64),
            };
            vote == truth
        })
        .count();
    correct as f64 / acc.len() as f64
}
