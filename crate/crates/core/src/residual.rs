//! Truncated softmax, adaptive sparse support, and the sparse residual / GH
//! semantic error of a single prediction position.

use std::cmp::Ordering;

use crate::datamodel::{ModelReadout, TokenRecord, TruncationConfig};
use crate::error::{invalid, Result, RiseError};

/// Restricted softmax over the capped candidate set `C_t`, ordered by
/// probability descending with ties broken by ascending token id.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDist {
    pub ids: Vec<u32>,
    pub probs: Vec<f64>,
}

/// Sparse support `S_t` with renormalized probabilities `p̃` (same order as `ids`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSupport {
    pub ids: Vec<u32>,
    pub probs: Vec<f64>,
}

/// Everything the featurizer needs from one position.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedResidual {
    pub support: Vec<u32>,
    pub probs: Vec<f64>,
    /// `r̃(v) = p̃(v) − 1[v = y]`, aligned with `support`.
    pub residual: Vec<f64>,
    /// `g̃ = Σ_{v∈S} p̃(v) W_v − W_y`.
    pub gh: Vec<f64>,
}

fn desc_then_id(pa: f64, a: u32, pb: f64, b: u32) -> Ordering {
    pb.total_cmp(&pa).then(a.cmp(&b))
}

/// Softmax of `z/τ` restricted to the top-`k_max` stored candidates, with the
/// target inserted (via its stored logit) when it is not among them.
pub fn candidate_softmax(tok: &TokenRecord, temperature: f64, k_max: usize) -> Result<CandidateDist> {
    if temperature.is_nan() || temperature <= 0.0 {
        return invalid(format!("temperature must be > 0, got {temperature}"));
    }
    if k_max == 0 {
        return invalid("K_max must be >= 1");
    }
    if tok.candidate_ids.len() != tok.candidate_logits.len() {
        return Err(RiseError::DimensionMismatch {
            what: "candidate logits",
            expected: tok.candidate_ids.len(),
            found: tok.candidate_logits.len(),
        });
    }
    let mut cands: Vec<(u32, f64)> = tok
        .candidate_ids
        .iter()
        .zip(&tok.candidate_logits)
        .map(|(&id, &z)| (id, z as f64 / temperature))
        .collect();
    let by_logit = |a: &(u32, f64), b: &(u32, f64)| desc_then_id(a.1, a.0, b.1, b.0);
    if cands.len() > k_max {
        cands.select_nth_unstable_by(k_max - 1, by_logit);
        cands.truncate(k_max);
    }
    if !cands.iter().any(|&(id, _)| id == tok.target_id) {
        cands.push((tok.target_id, tok.target_logit as f64 / temperature));
    }
    cands.sort_unstable_by(by_logit);

    let max = cands[0].1;
    let exps: Vec<f64> = cands.iter().map(|&(_, z)| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(CandidateDist {
        ids: cands.iter().map(|&(id, _)| id).collect(),
        probs: exps.iter().map(|e| e / total).collect(),
    })
}

/// Keeps the smallest probability-ordered prefix whose cumulative mass reaches
/// `rho_cum` (never fewer than `min(min_top_l, |C|)` entries), adds the target,
/// and renormalizes on the kept set.
pub fn adaptive_support(dist: &CandidateDist, target: u32, rho_cum: f64, min_top_l: usize) -> Result<SparseSupport> {
    if dist.ids.len() != dist.probs.len() || dist.ids.is_empty() {
        return invalid("candidate distribution must be non-empty with matching lengths");
    }
    if !(rho_cum > 0.0 && rho_cum <= 1.0) {
        return invalid(format!("rho_cum must lie in (0, 1], got {rho_cum}"));
    }
    let mut order: Vec<usize> = (0..dist.ids.len()).collect();
    order.sort_by(|&a, &b| desc_then_id(dist.probs[a], dist.ids[a], dist.probs[b], dist.ids[b]));
    if !dist.ids.contains(&target) {
        return Err(RiseError::Contract(format!(
            "target {target} is not in the candidate set"
        )));
    }

    let floor = min_top_l.min(order.len());
    let mut keep = order.len();
    let mut cum = 0.0;
    for (s, &i) in order.iter().enumerate() {
        cum += dist.probs[i];
        if cum >= rho_cum {
            keep = s + 1;
            break;
        }
    }
    let keep = keep.max(floor);

    let mut kept: Vec<usize> = order[..keep].to_vec();
    if !kept.iter().any(|&i| dist.ids[i] == target) {
        let yi = order
            .iter()
            .copied()
            .find(|&i| dist.ids[i] == target)
            .expect("target present");
        kept.push(yi);
    }
    let mass: f64 = kept.iter().map(|&i| dist.probs[i]).sum();
    Ok(SparseSupport {
        ids: kept.iter().map(|&i| dist.ids[i]).collect(),
        probs: kept.iter().map(|&i| dist.probs[i] / mass).collect(),
    })
}

/// `r̃(v) = p̃(v) − 1[v = y]` on the support.
pub fn sparse_residual(support: &SparseSupport, target: u32) -> Result<Vec<f64>> {
    if !support.ids.contains(&target) {
        return Err(RiseError::Contract(format!("target {target} is not in the support")));
    }
    Ok(support
        .ids
        .iter()
        .zip(&support.probs)
        .map(|(&id, &p)| if id == target { p - 1.0 } else { p })
        .collect())
}

/// `g̃ = Σ_{v∈S} p̃(v) W_v − W_y`, the expected support embedding minus the target embedding.
pub fn gh_projection(support: &SparseSupport, target: u32, readout: &ModelReadout) -> Result<Vec<f64>> {
    let v = readout.vocab_size();
    if let Some(&bad) = support
        .ids
        .iter()
        .chain(std::iter::once(&target))
        .find(|&&id| id as usize >= v)
    {
        return invalid(format!("token id {bad} out of range for V={v}"));
    }
    let mut g = vec![0.0f64; readout.hidden_dim()];
    for (&id, &p) in support.ids.iter().zip(&support.probs) {
        for (gi, &w) in g.iter_mut().zip(readout.row(id as usize)) {
            *gi += p * w as f64;
        }
    }
    for (gi, &w) in g.iter_mut().zip(readout.row(target as usize)) {
        *gi -= w as f64;
    }
    Ok(g)
}

/// Runs the full per-position pipeline under `trunc`.
pub fn truncate_token(
    tok: &TokenRecord,
    trunc: &TruncationConfig,
    readout: &ModelReadout,
) -> Result<TruncatedResidual> {
    let dist = candidate_softmax(tok, trunc.temperature, trunc.k_max)?;
    let support = adaptive_support(&dist, tok.target_id, trunc.rho_cum, trunc.min_top_l)?;
    let residual = sparse_residual(&support, tok.target_id)?;
    let gh = gh_projection(&support, tok.target_id, readout)?;
    Ok(TruncatedResidual {
        support: support.ids,
        probs: support.probs,
        residual,
        gh,
    })
}

/// Dense length-`dim` vector with `vals` placed at `ids`.
pub fn scatter(ids: &[u32], vals: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (&i, &v) in ids.iter().zip(vals) {
        out[i as usize] += v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(ids: &[u32], logits: &[f32], target: u32, target_logit: f32) -> TokenRecord {
        TokenRecord {
            target_id: target,
            target_logit,
            candidate_ids: ids.to_vec(),
            candidate_logits: logits.to_vec(),
            hidden: vec![1.0],
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn singleton_softmax() {
        let d = candidate_softmax(&tok(&[5], &[3.0], 5, 3.0), 1.0, 4).unwrap();
        assert_eq!(d.ids, vec![5]);
        assert_eq!(d.probs, vec![1.0]);
    }

    #[test]
    fn ln2_softmax() {
        let ln2 = std::f64::consts::LN_2 as f32;
        let d = candidate_softmax(&tok(&[0, 1, 2], &[ln2, 0.0, 0.0], 0, ln2), 1.0, 8).unwrap();
        assert_eq!(d.ids, vec![0, 1, 2]);
        assert!(close(&d.probs, &[0.5, 0.25, 0.25], 1e-7));
    }

    #[test]
    fn temperature_halves_gaps() {
        let d = candidate_softmax(&tok(&[0, 1], &[2.0, 0.0], 1, 0.0), 2.0, 8).unwrap();
        let e = std::f64::consts::E;
        assert!(close(&d.probs, &[e / (e + 1.0), 1.0 / (e + 1.0)], 1e-12));
        assert!((d.probs[0] - 0.7311).abs() < 1e-4);
        assert!(candidate_softmax(&tok(&[0], &[0.0], 0, 0.0), 0.0, 8).is_err());
    }

    #[test]
    fn target_outside_candidates_is_inserted() {
        let d = candidate_softmax(&tok(&[3, 4, 5], &[5.0, 4.0, 3.0], 9, -1.0), 1.0, 2).unwrap();
        assert_eq!(d.ids, vec![3, 4, 9]);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prefix_rule_example() {
        let dist = CandidateDist {
            ids: vec![0, 1, 2, 3],
            probs: vec![0.6, 0.3, 0.08, 0.02],
        };
        let s = adaptive_support(&dist, 3, 0.85, 1).unwrap();
        assert_eq!(s.ids, vec![0, 1, 3]);
        assert!(close(&s.probs, &[0.6 / 0.92, 0.3 / 0.92, 0.02 / 0.92], 1e-12));
        assert!(close(&s.probs, &[0.6522, 0.3261, 0.0217], 1e-4));
    }

    #[test]
    fn full_mass_keeps_everything() {
        let dist = CandidateDist {
            ids: vec![0, 1, 2, 3],
            probs: vec![0.6, 0.3, 0.08, 0.02],
        };
        let s = adaptive_support(&dist, 2, 1.0, 1).unwrap();
        assert_eq!(s.ids, vec![0, 1, 2, 3]);
        assert!(close(&s.probs, &dist.probs, 1e-12));
    }

    #[test]
    fn min_top_l_floor() {
        let dist = CandidateDist {
            ids: (0..8).collect(),
            probs: vec![0.125; 8],
        };
        let s = adaptive_support(&dist, 7, 0.1, 4).unwrap();
        assert_eq!(s.ids, vec![0, 1, 2, 3, 7]);
        // Ties fall back to ascending token id.
        let s = adaptive_support(&dist, 1, 0.1, 1).unwrap();
        assert_eq!(s.ids, vec![0, 1]);
    }

    #[test]
    fn residual_examples() {
        let s = SparseSupport {
            ids: vec![0, 1, 2],
            probs: vec![0.5, 0.25, 0.25],
        };
        assert!(close(&sparse_residual(&s, 1).unwrap(), &[0.5, -0.75, 0.25], 1e-15));
        let one_hot = SparseSupport {
            ids: vec![4],
            probs: vec![1.0],
        };
        assert_eq!(sparse_residual(&one_hot, 4).unwrap(), vec![0.0]);
        assert!(matches!(sparse_residual(&s, 9).unwrap_err(), RiseError::Contract(_)));
    }

    #[test]
    fn gh_with_identity_readout() {
        let w = ModelReadout::identity(3).unwrap();
        let s = SparseSupport {
            ids: vec![0, 1, 2],
            probs: vec![0.5, 0.25, 0.25],
        };
        assert!(close(&gh_projection(&s, 0, &w).unwrap(), &[-0.5, 0.25, 0.25], 1e-15));
        let one_hot = SparseSupport {
            ids: vec![1],
            probs: vec![1.0],
        };
        assert!(close(&gh_projection(&one_hot, 1, &w).unwrap(), &[0.0; 3], 1e-15));
        let bad = SparseSupport {
            ids: vec![3],
            probs: vec![1.0],
        };
        assert!(gh_projection(&bad, 3, &w).is_err());
    }

    fn logits_strategy() -> impl Strategy<Value = (Vec<f32>, u32, usize, f64, usize)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-8.0f32..8.0, n),
                0..n as u32,
                1usize..=n,
                0.05f64..=1.0,
                1usize..6,
            )
        })
    }

    proptest! {
        #[test]
        fn truncation_invariants((logits, y, k_max, rho, min_l) in logits_strategy(), tau in 0.3f64..3.0) {
            let n = logits.len();
            let ids: Vec<u32> = (0..n as u32).collect();
            let t = tok(&ids, &logits, y, logits[y as usize]);
            let cfg = TruncationConfig { temperature: tau, rho_cum: rho, min_top_l: min_l.min(k_max), k_max };
            let w = ModelReadout::new(n.max(2), 1, vec![1.0; n.max(2)]).unwrap();
            let tr = truncate_token(&t, &cfg, &w).unwrap();
            let psum: f64 = tr.probs.iter().sum();
            let rsum: f64 = tr.residual.iter().sum();
            prop_assert!((psum - 1.0).abs() < 1e-6);
            prop_assert!(rsum.abs() < 1e-6);
            prop_assert!(tr.support.contains(&y));
            prop_assert!(tr.support.len() <= k_max + 1);
            for (&id, &r) in tr.support.iter().zip(&tr.residual) {
                prop_assert!((-1.0..=1.0).contains(&r));
                if id == y { prop_assert!(r <= 0.0) } else { prop_assert!(r >= 0.0) }
            }
        }
    }
}
