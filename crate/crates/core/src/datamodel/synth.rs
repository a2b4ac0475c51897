//! Seeded synthetic readouts and dumps with an optional planted positive class.
//!
//! Every token draws a Gaussian hidden state `n`; logits are `W·h` plus a little
//! noise, candidates are the true top-`K_store` logits, and targets are sampled
//! from the softmax. Planted samples (positives and queries) mix a shared hidden
//! direction into `h` and, with probability `strength`, draw their target from a
//! shared small token distribution instead.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ModelReadout, SampleRecord, TokenRecord};
use crate::error::{invalid, Result};

/// Query ids start here so they never collide with pool ids.
pub const QUERY_ID_BASE: u64 = 1 << 32;

const READOUT_SCALE: f64 = 2.5;
const LOGIT_NOISE: f64 = 0.5;
const PLANTED_VOCAB: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub n_positive: usize,
    /// Mixing strength in `[0, 1]`; 0 makes positives indistinguishable.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n_samples: usize,
    pub tokens_per_sample: usize,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub k_store: usize,
    pub seed: u64,
    pub n_queries: usize,
    pub planted: Option<PlantedSpec>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub readout: ModelReadout,
    pub pool: Vec<SampleRecord>,
    /// Parallel to `pool`: true for planted positives.
    pub labels: Vec<bool>,
    /// Drawn from the planted distribution (or the background one when nothing is planted).
    pub queries: Vec<SampleRecord>,
    pub planted_direction: Vec<f32>,
    pub planted_tokens: Vec<u32>,
}

struct Shared {
    readout: ModelReadout,
    direction: Vec<f64>,
    tokens: Vec<u32>,
    token_cdf: Vec<f64>,
}

pub fn gen_synthetic(params: &SyntheticParams) -> Result<SyntheticData> {
    let SyntheticParams {
        n_samples,
        tokens_per_sample: t_len,
        vocab_size: v,
        hidden_dim: d,
        k_store,
        seed,
        n_queries,
        planted,
    } = *params;
    if k_store > v {
        return invalid(format!("K_store ({k_store}) must not exceed V ({v})"));
    }
    if k_store == 0 || t_len == 0 || d == 0 || v < 2 {
        return invalid("synthetic generator needs K_store, T, d >= 1 and V >= 2");
    }
    if let Some(p) = planted {
        if !(0.0..=1.0).contains(&p.strength) {
            return invalid(format!("planted strength must lie in [0, 1], got {}", p.strength));
        }
        if p.n_positive > n_samples {
            return invalid(format!(
                "cannot plant {} positives in a pool of {n_samples}",
                p.n_positive
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = shared_structure(&mut rng, v, d)?;

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![false; n_samples];
    let (n_pos, strength) = planted.map_or((0, 0.0), |p| (p.n_positive, p.strength));
    for &i in &order[..n_pos] {
        labels[i] = true;
    }

    let mut scratch = vec![0.0f64; v];
    let pool = (0..n_samples)
        .map(|i| {
            let s = if labels[i] { strength } else { 0.0 };
            gen_sample(&mut rng, &shared, i as u64, t_len, k_store, s, &mut scratch)
        })
        .collect();
    let queries = (0..n_queries)
        .map(|q| {
            let id = QUERY_ID_BASE + q as u64;
            gen_sample(&mut rng, &shared, id, t_len, k_store, strength, &mut scratch)
        })
        .collect();

    Ok(SyntheticData {
        planted_direction: shared.direction.iter().map(|&x| x as f32).collect(),
        planted_tokens: shared.tokens.clone(),
        readout: shared.readout,
        pool,
        labels,
        queries,
    })
}

fn shared_structure(rng: &mut ChaCha8Rng, v: usize, d: usize) -> Result<Shared> {
    let scale = READOUT_SCALE / (d as f64).sqrt();
    let weights: Vec<f32> = (0..v * d)
        .map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let readout = ModelReadout::new(v, d, weights)?;

    let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|x| *x /= norm);

    let mut ids: Vec<u32> = (0..v as u32).collect();
    ids.shuffle(rng);
    let tokens: Vec<u32> = ids.into_iter().take(PLANTED_VOCAB.min(v)).collect();
    let weights: Vec<f64> = tokens.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let token_cdf = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    Ok(Shared {
        readout,
        direction,
        tokens,
        token_cdf,
    })
}

fn gen_sample(
    rng: &mut ChaCha8Rng,
    shared: &Shared,
    sample_id: u64,
    t_len: usize,
    k_store: usize,
    strength: f64,
    logits: &mut [f64],
) -> SampleRecord {
    let d = shared.readout.hidden_dim();
    let v = shared.readout.vocab_size();
    let sqrt_d = (d as f64).sqrt();
    let tokens = (0..t_len)
        .map(|_| {
            let hidden: Vec<f64> = shared
                .direction
                .iter()
                .map(|&u| {
                    let n: f64 = rng.sample(StandardNormal);
                    (1.0 - 0.5 * strength) * n + strength * sqrt_d * u
                })
                .collect();
            for (vi, z) in logits.iter_mut().enumerate() {
                let row = shared.readout.row(vi);
                let dot: f64 = row.iter().zip(&hidden).map(|(&w, &h)| w as f64 * h).sum();
                let noise: f64 = rng.sample(StandardNormal);
                // Round through f32 so stored logits and sampling agree exactly.
                *z = (dot + LOGIT_NOISE * noise) as f32 as f64;
            }
            let target = if strength > 0.0 && rng.random_bool(strength) {
                let u: f64 = rng.random();
                let k = shared
                    .token_cdf
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(shared.tokens.len() - 1);
                shared.tokens[k] as usize
            } else {
                sample_softmax(rng, logits)
            };

            let mut ranked: Vec<u32> = (0..v as u32).collect();
            let by_logit_desc = |a: &u32, b: &u32| logits[*b as usize].total_cmp(&logits[*a as usize]).then(a.cmp(b));
            if k_store < v {
                ranked.select_nth_unstable_by(k_store, by_logit_desc);
                ranked.truncate(k_store);
            }
            ranked.sort_unstable_by(by_logit_desc);
            TokenRecord {
                target_id: target as u32,
                target_logit: logits[target] as f32,
                candidate_logits: ranked.iter().map(|&c| logits[c as usize] as f32).collect(),
                candidate_ids: ranked,
                hidden: hidden.into_iter().map(|x| x as f32).collect(),
            }
        })
        .collect();
    SampleRecord { sample_id, tokens }
}

fn sample_softmax(rng: &mut ChaCha8Rng, logits: &[f64]) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let mut u: f64 = rng.random::<f64>() * total;
    for (i, z) in logits.iter().enumerate() {
        u -= (z - max).exp();
        if u <= 0.0 {
            return i;
        }
    }
    logits.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::format::write_dump_to;

    fn params(seed: u64, planted: Option<PlantedSpec>) -> SyntheticParams {
        SyntheticParams {
            n_samples: 40,
            tokens_per_sample: 3,
            vocab_size: 50,
            hidden_dim: 6,
            k_store: 10,
            seed,
            n_queries: 4,
            planted,
        }
    }

    #[test]
    fn same_seed_gives_identical_dumps() {
        let p = params(
            7,
            Some(PlantedSpec {
                n_positive: 5,
                strength: 0.8,
            }),
        );
        let a = gen_synthetic(&p).unwrap();
        let b = gen_synthetic(&p).unwrap();
        let (mut da, mut db) = (Vec::new(), Vec::new());
        write_dump_to(&mut da, 6, 10, &a.pool).unwrap();
        write_dump_to(&mut db, 6, 10, &b.pool).unwrap();
        assert_eq!(da, db);
        assert_eq!(a.readout, b.readout);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.labels.iter().filter(|&&l| l).count(), 5);
        let c = gen_synthetic(&params(8, None)).unwrap();
        assert_ne!(c.readout, a.readout);
    }

    #[test]
    fn candidates_are_true_top_logits() {
        let mut p = params(3, None);
        p.k_store = p.vocab_size;
        let full = gen_synthetic(&p).unwrap();
        p.k_store = 10;
        let top = gen_synthetic(&p).unwrap();
        for (fs, ts) in full.pool.iter().zip(&top.pool) {
            for (ft, tt) in fs.tokens.iter().zip(&ts.tokens) {
                assert_eq!(&ft.candidate_ids[..10], &tt.candidate_ids[..]);
                assert!(tt.candidate_logits.windows(2).all(|w| w[0] >= w[1]));
                let pos = ft.candidate_ids.iter().position(|&c| c == ft.target_id).unwrap();
                assert_eq!(ft.candidate_logits[pos], ft.target_logit);
                tt.validate().unwrap();
            }
        }
    }

    #[test]
    fn rejects_k_store_above_vocab() {
        let mut p = params(1, None);
        p.k_store = 51;
        assert!(gen_synthetic(&p).is_err());
    }
}
