//! Retrieval-quality metrics and the per-K top/bottom evaluation protocol.

use std::collections::HashMap;

use crate::error::{invalid, Result, RiseError};
use crate::indexer::{QueryRanking, ScoredCandidate};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(RiseError::DimensionMismatch {
            what: "labels",
            expected: scores.len(),
            found: labels.len(),
        });
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RiseError::UndefinedMetric(format!(
            "auROC needs both classes (got {n_pos} positives, {n_neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut wins = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_g, mut neg_g) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos_g += 1;
            } else {
                neg_g += 1;
            }
            j += 1;
        }
        wins += pos_g as f64 * neg_below as f64 + 0.5 * pos_g as f64 * neg_g as f64;
        neg_below += neg_g;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Average precision. Items are ranked by score descending; equal scores keep
/// their input order, so passing a ranking in rank order reproduces it exactly.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    average_precision_ranked(order.iter().map(|&i| labels[i]))
}

/// Average precision of labels already listed in rank order.
pub fn average_precision_ranked(ranked_labels: impl IntoIterator<Item = bool>) -> Result<f64> {
    let (mut hits, mut sum) = (0usize, 0.0f64);
    for (k, l) in ranked_labels.into_iter().enumerate() {
        if l {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(RiseError::UndefinedMetric("auPRC needs at least one positive".into()));
    }
    Ok(sum / hits as f64)
}

/// Fraction of positives among the first `k` ranked items.
pub fn precision_at_k(ranked_labels: &[bool], k: usize) -> Result<f64> {
    if k == 0 || k > ranked_labels.len() {
        return invalid(format!("precision@k needs 1 <= k <= {}, got {k}", ranked_labels.len()));
    }
    Ok(ranked_labels[..k].iter().filter(|&&l| l).count() as f64 / k as f64)
}

/// One `(query, K)` evaluation on the top-K ∪ bottom-K set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryKRecord {
    pub query_id: u64,
    pub k: usize,
    pub auprc: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMetrics {
    pub k: usize,
    /// Macro average over non-degenerate queries; `None` if every query was skipped.
    pub auprc: Option<f64>,
    pub auroc: Option<f64>,
    pub precision: f64,
    pub queries_used: usize,
    /// Queries whose evaluation set held a single class.
    pub queries_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub per_k: Vec<KMetrics>,
    /// Mean over the Ks of the per-K macro averages.
    pub summary_auprc: Option<f64>,
    pub summary_auroc: Option<f64>,
    /// Macro average over queries of the full-ranking metrics.
    pub global_auprc: Option<f64>,
    pub global_auroc: Option<f64>,
    pub records: Vec<QueryKRecord>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn labels_for(ranking: &[ScoredCandidate], labels: &HashMap<u64, bool>) -> Result<Vec<bool>> {
    ranking
        .iter()
        .map(|c| {
            labels
                .get(&c.sample_id)
                .copied()
                .ok_or_else(|| RiseError::InvalidArgument(format!("sample {} has no label", c.sample_id)))
        })
        .collect()
}

/// For every query and K, scores the top-K ∪ bottom-K candidates with their
/// original scores, macro-averages across queries, then averages across Ks.
pub fn per_k_eval(rankings: &[QueryRanking], labels: &HashMap<u64, bool>, ks: &[usize]) -> Result<MetricTable> {
    if rankings.is_empty() {
        return invalid("no query rankings to evaluate");
    }
    if ks.is_empty() {
        return invalid("no K values given");
    }
    let n = rankings[0].ranking.len();
    if rankings.iter().any(|q| q.ranking.len() != n) {
        return invalid("all query rankings must cover the same pool");
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || 2 * k > n) {
        return invalid(format!("K={k} invalid for a pool of {n}: need 1 <= K and 2K <= n"));
    }

    let ranked: Vec<(u64, Vec<f64>, Vec<bool>)> = rankings
        .iter()
        .map(|q| {
            let scores = q.ranking.iter().map(|c| c.score).collect();
            Ok((q.query_id, scores, labels_for(&q.ranking, labels)?))
        })
        .collect::<Result<_>>()?;

    let mut per_k = Vec::with_capacity(ks.len());
    let mut records = Vec::new();
    for &k in ks {
        let (mut aps, mut aucs, mut precs) = (Vec::new(), Vec::new(), Vec::new());
        let mut skipped = 0;
        for (qid, scores, labs) in &ranked {
            precs.push(precision_at_k(labs, k)?);
            let idx: Vec<usize> = (0..k).chain(n - k..n).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labs[i]).collect();
            let (pos, neg) = (l.iter().filter(|&&x| x).count(), l.iter().filter(|&&x| !x).count());
            if pos == 0 || neg == 0 {
                skipped += 1;
                continue;
            }
            let ap = auprc(&s, &l)?;
            let auc = auroc(&s, &l)?;
            aps.push(ap);
            aucs.push(auc);
            records.push(QueryKRecord {
                query_id: *qid,
                k,
                auprc: ap,
                auroc: auc,
            });
        }
        per_k.push(KMetrics {
            k,
            auprc: mean(&aps),
            auroc: mean(&aucs),
            precision: mean(&precs).unwrap_or(0.0),
            queries_used: aps.len(),
            queries_skipped: skipped,
        });
    }

    let (mut gap, mut gauc) = (Vec::new(), Vec::new());
    for (_, scores, labs) in &ranked {
        if let (Ok(a), Ok(b)) = (auprc(scores, labs), auroc(scores, labs)) {
            gap.push(a);
            gauc.push(b);
        }
    }
    let summary_auprc = mean(&per_k.iter().filter_map(|m| m.auprc).collect::<Vec<_>>());
    let summary_auroc = mean(&per_k.iter().filter_map(|m| m.auroc).collect::<Vec<_>>());
    Ok(MetricTable {
        per_k,
        summary_auprc,
        summary_auroc,
        global_auprc: mean(&gap),
        global_auroc: mean(&gauc),
        records,
    })
}

/// `μ ± δ` summary of a recall-mode and a predict-mode auPRC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedScore {
    pub mu: f64,
    pub delta: f64,
}

pub fn unified(recall: f64, predict: f64) -> UnifiedScore {
    UnifiedScore {
        mu: (recall + predict) / 2.0,
        delta: (recall - predict).abs() / 2.0,
    }
}
