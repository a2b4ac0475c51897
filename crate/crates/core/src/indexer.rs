//! Index construction, query pooling, and exhaustive scoring.
//!
//! Work is spread over the ambient rayon pool; every result is collected in
//! input order and ranked with a fixed tie-break, so outputs do not depend on
//! the thread count.

use rayon::prelude::*;

use crate::datamodel::{InfluenceIndex, ModelReadout, RiseConfig, SampleRecord, SampleSignature};
use crate::error::{invalid, Result, RiseError};
use crate::features::{sketch_aggregate, SketchFamilies};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub sample_id: u64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Full descending ranking of a pool plus the scoring cost in multiply-adds.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub candidates: Vec<ScoredCandidate>,
    pub multiply_adds: u64,
}

/// Ranking of the pool against one individual query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRanking {
    pub query_id: u64,
    pub ranking: Vec<ScoredCandidate>,
}

/// Componentwise mean of query signatures, tagged with their config fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSignature {
    pub fingerprint: u64,
    pub phi_rh: Vec<f64>,
    pub phi_gh: Vec<f64>,
}

impl PooledSignature {
    pub fn from_signature(sig: &SampleSignature, fingerprint: u64) -> Self {
        PooledSignature {
            fingerprint,
            phi_rh: sig.phi_rh.iter().map(|&x| x as f64).collect(),
            phi_gh: sig.phi_gh.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.phi_rh
            .iter_mut()
            .chain(self.phi_gh.iter_mut())
            .for_each(|x| *x *= c);
    }
}

/// Featurizes samples in parallel; output order follows input order.
pub fn featurize(records: &[SampleRecord], readout: &ModelReadout, cfg: &RiseConfig) -> Result<Vec<SampleSignature>> {
    cfg.validate()?;
    let fams = SketchFamilies::new(&cfg.sketch, readout.vocab_size(), readout.hidden_dim())?;
    records
        .par_iter()
        .map(|rec| sketch_aggregate(rec, readout, cfg, &fams))
        .collect()
}

/// Featurizes a pool (or query set) into an index stamped with the config fingerprint.
pub fn build_index(records: &[SampleRecord], readout: &ModelReadout, cfg: &RiseConfig) -> Result<InfluenceIndex> {
    let signatures = featurize(records, readout, cfg)?;
    let index = InfluenceIndex {
        fingerprint: cfg.fingerprint(readout.vocab_size(), readout.hidden_dim()),
        sketch: cfg.sketch,
        normalize_sample: cfg.weights.normalize_sample,
        signatures,
    };
    index.validate()?;
    Ok(index)
}

/// `φ̄_Q = (1/|Q|) Σ φ(x_q)`.
pub fn mean_query_signature(queries: &InfluenceIndex) -> Result<PooledSignature> {
    if queries.is_empty() {
        return invalid("cannot pool an empty query set");
    }
    queries.validate()?;
    let n = queries.len() as f64;
    let mut rh = vec![0.0f64; queries.rh_len()];
    let mut gh = vec![0.0f64; queries.gh_len()];
    for sig in &queries.signatures {
        rh.iter_mut().zip(&sig.phi_rh).for_each(|(a, &x)| *a += x as f64);
        gh.iter_mut().zip(&sig.phi_gh).for_each(|(a, &x)| *a += x as f64);
    }
    rh.iter_mut().chain(gh.iter_mut()).for_each(|x| *x /= n);
    Ok(PooledSignature {
        fingerprint: queries.fingerprint,
        phi_rh: rh,
        phi_gh: gh,
    })
}

fn dot(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y).sum()
}

/// Sorts by score descending, ties by ascending sample id, and assigns ranks.
pub fn rank_scores(mut scored: Vec<(u64, f64)>) -> Vec<ScoredCandidate> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (sample_id, score))| ScoredCandidate {
            sample_id,
            score,
            rank: i + 1,
        })
        .collect()
}

/// Scores every indexed sample as `φ_RH·φ̄_RH + φ_GH·φ̄_GH` and ranks them.
pub fn score_all(index: &InfluenceIndex, pooled: &PooledSignature) -> Result<Ranking> {
    if pooled.fingerprint != index.fingerprint {
        return Err(RiseError::ConfigMismatch {
            expected: index.fingerprint,
            found: pooled.fingerprint,
        });
    }
    if pooled.phi_rh.len() != index.rh_len() || pooled.phi_gh.len() != index.gh_len() {
        return Err(RiseError::DimensionMismatch {
            what: "pooled query signature",
            expected: index.rh_len() + index.gh_len(),
            found: pooled.phi_rh.len() + pooled.phi_gh.len(),
        });
    }
    let scored: Vec<(u64, f64)> = index
        .signatures
        .par_iter()
        .map(|s| {
            (
                s.sample_id,
                dot(&s.phi_rh, &pooled.phi_rh) + dot(&s.phi_gh, &pooled.phi_gh),
            )
        })
        .collect();
    let multiply_adds = (index.len() * (index.rh_len() + index.gh_len())) as u64;
    Ok(Ranking {
        candidates: rank_scores(scored),
        multiply_adds,
    })
}

/// Ranks the pool against each query separately (the per-query score matrix).
pub fn per_query_rankings(index: &InfluenceIndex, queries: &InfluenceIndex) -> Result<Vec<QueryRanking>> {
    queries
        .signatures
        .iter()
        .map(|q| {
            let pooled = PooledSignature::from_signature(q, queries.fingerprint);
            Ok(QueryRanking {
                query_id: q.sample_id,
                ranking: score_all(index, &pooled)?.candidates,
            })
        })
        .collect()
}

fn check_k(ranking: &[ScoredCandidate], k: usize) -> Result<()> {
    if k == 0 || k > ranking.len() {
        return invalid(format!("K must lie in [1, {}], got {k}", ranking.len()));
    }
    Ok(())
}

/// First `k` entries of the ranking.
pub fn topk(ranking: &[ScoredCandidate], k: usize) -> Result<&[ScoredCandidate]> {
    check_k(ranking, k)?;
    Ok(&ranking[..k])
}

/// Last `k` entries of the ranking.
pub fn bottomk(ranking: &[ScoredCandidate], k: usize) -> Result<&[ScoredCandidate]> {
    check_k(ranking, k)?;
    Ok(&ranking[ranking.len() - k..])
}
