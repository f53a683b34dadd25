//! Canonicalization metrics and cluster-count prediction scores.
//!
//! * macro: precision is the fraction of predicted clusters whose members
//!   share one gold entity; recall is the fraction of gold entities whose
//!   members fall into a single predicted cluster.
//! * micro: precision is `sum_c max_g |c ∩ g| / N`, recall the mirror image.
//! * pairwise: precision is the fraction of same-cluster element pairs that
//!   are also same-entity pairs; recall the mirror image. When one side has no
//!   intra-cluster pair the ratio is 1 if the other side has none either and
//!   0 otherwise.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{compact_labels, Clustering, GoldLabels};

/// Predicted and gold labels over the same elements, both compacted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aligned {
    pred: Vec<usize>,
    gold: Vec<usize>,
    k_pred: usize,
    k_gold: usize,
}

impl Aligned {
    pub fn new(pred: &[usize], gold: &[usize]) -> Result<Self> {
        if pred.len() != gold.len() {
            return Err(Error::domain("prediction and gold differ in length"));
        }
        if pred.is_empty() {
            return Err(Error::domain("no element carries both a prediction and a gold label"));
        }
        let (pred, k_pred) = compact_labels(pred);
        let (gold, k_gold) = compact_labels(gold);
        Ok(Self {
            pred,
            gold,
            k_pred,
            k_gold,
        })
    }

    /// Restricts `pred` to the elements labelled in `gold`.
    pub fn from_labels<K: Hash + Eq>(pred: &Clustering<K>, gold: &GoldLabels<K>) -> Result<Self> {
        let mut entity_ids: HashMap<&str, usize> = HashMap::new();
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (key, c) in pred.labelled() {
            if let Some(label) = gold.get(key) {
                let next = entity_ids.len();
                g.push(*entity_ids.entry(label.as_str()).or_insert(next));
                p.push(c);
            }
        }
        Self::new(&p, &g)
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    /// Sparse contingency table `(pred, gold) -> count`.
    fn overlaps(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for (&p, &g) in self.pred.iter().zip(&self.gold) {
            *m.entry((p, g)).or_insert(0) += 1;
        }
        m
    }

    fn sizes(labels: &[usize], k: usize) -> Vec<usize> {
        let mut s = vec![0; k];
        labels.iter().for_each(|&l| s[l] += 1);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

pub fn macro_f1(a: &Aligned) -> Prf {
    let ov = a.overlaps();
    let mut pred_parts = vec![0usize; a.k_pred];
    let mut gold_parts = vec![0usize; a.k_gold];
    for &(p, g) in ov.keys() {
        pred_parts[p] += 1;
        gold_parts[g] += 1;
    }
    let pure = |parts: &[usize]| parts.iter().filter(|&&c| c == 1).count() as f64 / parts.len() as f64;
    Prf::new(pure(&pred_parts), pure(&gold_parts))
}

pub fn micro_f1(a: &Aligned) -> Prf {
    let ov = a.overlaps();
    let mut best_pred = vec![0usize; a.k_pred];
    let mut best_gold = vec![0usize; a.k_gold];
    for (&(p, g), &c) in &ov {
        best_pred[p] = best_pred[p].max(c);
        best_gold[g] = best_gold[g].max(c);
    }
    let n = a.len() as f64;
    Prf::new(
        best_pred.iter().sum::<usize>() as f64 / n,
        best_gold.iter().sum::<usize>() as f64 / n,
    )
}

fn pairs(m: usize) -> u64 {
    let m = m as u64;
    m * m.saturating_sub(1) / 2
}

pub fn pairwise_f1(a: &Aligned) -> Prf {
    let hits: u64 = a.overlaps().values().map(|&c| pairs(c)).sum();
    let pred_pairs: u64 = Aligned::sizes(&a.pred, a.k_pred).into_iter().map(pairs).sum();
    let gold_pairs: u64 = Aligned::sizes(&a.gold, a.k_gold).into_iter().map(pairs).sum();
    let ratio = |num: u64, den: u64, other: u64| match (den, other) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => num as f64 / den as f64,
    };
    Prf::new(ratio(hits, pred_pairs, gold_pairs), ratio(hits, gold_pairs, pred_pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub micro: Prf,
    pub pairwise: Prf,
    pub average_f1: f64,
    pub elements: usize,
}

impl MetricReport {
    pub fn from_aligned(a: &Aligned) -> Self {
        let (m, u, p) = (macro_f1(a), micro_f1(a), pairwise_f1(a));
        Self {
            macro_: m,
            micro: u,
            pairwise: p,
            average_f1: (m.f1 + u.f1 + p.f1) / 3.0,
            elements: a.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for MetricReport {
    /// Flat `key=value` block.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, prf) in [
            ("macro", self.macro_),
            ("micro", self.micro),
            ("pairwise", self.pairwise),
        ] {
            writeln!(f, "{name}_precision={:.6}", prf.precision)?;
            writeln!(f, "{name}_recall={:.6}", prf.recall)?;
            writeln!(f, "{name}_f1={:.6}", prf.f1)?;
        }
        writeln!(f, "average_f1={:.6}", self.average_f1)?;
        writeln!(f, "elements={}", self.elements)
    }
}

/// Full report for a predicted clustering against (partial) gold labels.
pub fn evaluate<K: Hash + Eq>(pred: &Clustering<K>, gold: &GoldLabels<K>) -> Result<MetricReport> {
    Aligned::from_labels(pred, gold).map(|a| MetricReport::from_aligned(&a))
}

/// `|k - k_gold| / k_gold`.
pub fn relative_error(k: usize, k_gold: usize) -> Result<f64> {
    if k_gold == 0 {
        return Err(Error::domain("gold cluster count must be positive"));
    }
    Ok(k.abs_diff(k_gold) as f64 / k_gold as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    /// Average rank per method.
    pub ar: Vec<f64>,
    /// Average relative error per method.
    pub are: Vec<f64>,
}

/// Competition ranking per dataset (ties share the lowest rank), averaged over datasets.
///
/// `errors[d][m]` is the relative error of method `m` on dataset `d`.
pub fn rank_aggregate(errors: &[Vec<f64>]) -> Result<RankSummary> {
    let Some(first) = errors.first() else {
        return Err(Error::domain("rank aggregation needs at least one dataset"));
    };
    let methods = first.len();
    if errors.iter().any(|row| row.len() != methods) {
        return Err(Error::domain("every dataset must score every method"));
    }
    let mut ar = vec![0.0; methods];
    let mut are = vec![0.0; methods];
    for row in errors {
        for m in 0..methods {
            let better = row.iter().filter(|&&e| e < row[m] - 1e-12).count();
            ar[m] += (better + 1) as f64;
            are[m] += row[m];
        }
    }
    let d = errors.len() as f64;
    ar.iter_mut().for_each(|x| *x /= d);
    are.iter_mut().for_each(|x| *x /= d);
    Ok(RankSummary { ar, are })
}
