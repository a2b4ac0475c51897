use rise_core::datamodel::synth::{gen_synthetic, PlantedSpec, SyntheticParams};
use rise_core::indexer::{build_index, mean_query_signature, per_query_rankings, score_all, PooledSignature};
use rise_core::{InfluenceIndex, RiseConfig, RiseError, SketchSpec};

fn setup() -> (InfluenceIndex, InfluenceIndex) {
    let data = gen_synthetic(&SyntheticParams {
        n_samples: 200,
        tokens_per_sample: 6,
        vocab_size: 400,
        hidden_dim: 24,
        k_store: 32,
        seed: 9,
        n_queries: 5,
        planted: Some(PlantedSpec {
            n_positive: 20,
            strength: 0.6,
        }),
    })
    .unwrap();
    let cfg = RiseConfig {
        sketch: SketchSpec::new(64, 8, 64, 42),
        ..RiseConfig::default()
    };
    (
        build_index(&data.pool, &data.readout, &cfg).unwrap(),
        build_index(&data.queries, &data.readout, &cfg).unwrap(),
    )
}

fn brute_scores(index: &InfluenceIndex, queries: &InfluenceIndex) -> Vec<(u64, f64)> {
    let nq = queries.len() as f64;
    index
        .signatures
        .iter()
        .map(|s| {
            let mut total = 0.0;
            for (i, &x) in s.phi_rh.iter().enumerate() {
                let q: f64 = queries.signatures.iter().map(|q| q.phi_rh[i] as f64).sum::<f64>() / nq;
                total += x as f64 * q;
            }
            for (i, &x) in s.phi_gh.iter().enumerate() {
                let q: f64 = queries.signatures.iter().map(|q| q.phi_gh[i] as f64).sum::<f64>() / nq;
                total += x as f64 * q;
            }
            (s.sample_id, total)
        })
        .collect()
}

#[test]
fn ranking_matches_brute_force() {
    let (index, queries) = setup();
    let ranking = score_all(&index, &mean_query_signature(&queries).unwrap()).unwrap();
    let mut want = brute_scores(&index, &queries);
    want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    assert_eq!(ranking.candidates.len(), 200);
    for (i, (c, w)) in ranking.candidates.iter().zip(&want).enumerate() {
        assert_eq!(c.sample_id, w.0, "position {i}");
        assert!((c.score - w.1).abs() < 1e-12);
        assert_eq!(c.rank, i + 1);
    }
    assert_eq!(ranking.multiply_adds, 200 * (64 * 8 + 64 * 8));
}

#[test]
fn pooled_score_is_mean_of_query_scores() {
    let (index, queries) = setup();
    let pooled = score_all(&index, &mean_query_signature(&queries).unwrap()).unwrap();
    let per_query = per_query_rankings(&index, &queries).unwrap();
    for c in &pooled.candidates {
        let mean = per_query
            .iter()
            .map(|q| q.ranking.iter().find(|x| x.sample_id == c.sample_id).unwrap().score)
            .sum::<f64>()
            / per_query.len() as f64;
        assert!((mean - c.score).abs() < 1e-12);
    }
}

#[test]
fn scaling_and_symmetry() {
    let (index, queries) = setup();
    let mut pooled = mean_query_signature(&queries).unwrap();
    let base: Vec<u64> = score_all(&index, &pooled)
        .unwrap()
        .candidates
        .iter()
        .map(|c| c.sample_id)
        .collect();
    pooled.scale(3.5);
    let scaled: Vec<u64> = score_all(&index, &pooled)
        .unwrap()
        .candidates
        .iter()
        .map(|c| c.sample_id)
        .collect();
    assert_eq!(base, scaled);

    let fp = index.fingerprint;
    let (a, b) = (&index.signatures[3], &index.signatures[17]);
    let single = |s| InfluenceIndex {
        signatures: vec![s],
        ..index.clone()
    };
    let ab = score_all(&single(a.clone()), &PooledSignature::from_signature(b, fp))
        .unwrap()
        .candidates[0]
        .score;
    let ba = score_all(&single(b.clone()), &PooledSignature::from_signature(a, fp))
        .unwrap()
        .candidates[0]
        .score;
    assert_eq!(ab, ba);
}

#[test]
fn foreign_query_config_is_rejected() {
    let (index, queries) = setup();
    let mut pooled = mean_query_signature(&queries).unwrap();
    pooled.fingerprint ^= 1;
    assert!(matches!(
        score_all(&index, &pooled).unwrap_err(),
        RiseError::ConfigMismatch { .. }
    ));
}
