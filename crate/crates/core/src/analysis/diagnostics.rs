use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::full_token;
use crate::datamodel::{ModelReadout, SampleRecord, TruncationConfig};
use crate::error::{invalid, Result, RiseError};
use crate::hashing::derive_seed;
use crate::oracle::{dense_residual, Oracle};
use crate::residual::truncate_token;

/// How much of the full softmax / residual a support retains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyProfile {
    /// `Σ_{v∈S} p(v)`.
    pub prob_mass: f64,
    /// `Σ_{v∈S} r(v)² / ‖r‖²`.
    pub full_energy: f64,
    /// `(1 − p(y))² / ‖r‖²`.
    pub gt_energy: f64,
    /// `Σ_{v∈S∖{y}} p(v)² / Σ_{v≠y} p(v)²`.
    pub tail_energy: f64,
}

/// Energy ratios of `support` under `softmax(z/τ)`. Ratios with a zero
/// denominator (perfect prediction, empty tail) are reported as 1.
pub fn energy_profile(full_logits: &[f64], target: usize, temperature: f64, support: &[u32]) -> Result<EnergyProfile> {
    if !support.iter().any(|&v| v as usize == target) {
        return Err(RiseError::Contract(format!("target {target} is not in the support")));
    }
    let v = full_logits.len();
    if let Some(&bad) = support.iter().find(|&&s| s as usize >= v) {
        return invalid(format!("support id {bad} out of range for V={v}"));
    }
    let (p, r) = dense_residual(full_logits, target, temperature)?;
    let mut in_s = vec![false; v];
    support.iter().for_each(|&s| in_s[s as usize] = true);

    let r_total: f64 = r.iter().map(|x| x * x).sum();
    let tail_total: f64 = p
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, x)| x * x)
        .sum();
    let mass: f64 = (0..v).filter(|&i| in_s[i]).map(|i| p[i]).sum();
    let r_kept: f64 = (0..v).filter(|&i| in_s[i]).map(|i| r[i] * r[i]).sum();
    let tail_kept: f64 = (0..v).filter(|&i| in_s[i] && i != target).map(|i| p[i] * p[i]).sum();
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).min(1.0) } else { 1.0 };
    Ok(EnergyProfile {
        prob_mass: mass.min(1.0),
        full_energy: ratio(r_kept, r_total),
        gt_energy: ratio((1.0 - p[target]).powi(2), r_total),
        tail_energy: ratio(tail_kept, tail_total),
    })
}

/// Fixed-control support rule: top-`k` by logit plus the target, renormalized.
pub fn fixed_topk(k: usize, temperature: f64) -> TruncationConfig {
    TruncationConfig {
        temperature,
        rho_cum: 1.0,
        min_top_l: 1,
        k_max: k,
    }
}

/// Cosine between the dense GH error `Wᵀr` and the sparse `g̃` built on the
/// support chosen by `trunc`. `None` when the dense error is zero.
pub fn gh_fidelity(
    full_logits: &[f64],
    target: usize,
    trunc: &TruncationConfig,
    readout: &ModelReadout,
) -> Result<Option<f64>> {
    if full_logits.len() != readout.vocab_size() {
        return Err(RiseError::DimensionMismatch {
            what: "full logits",
            expected: readout.vocab_size(),
            found: full_logits.len(),
        });
    }
    let (_, r) = dense_residual(full_logits, target, trunc.temperature)?;
    let dense = Oracle::unbounded(readout).project(&r);
    let tok = full_token(full_logits, target, readout.hidden_dim());
    let sparse = truncate_token(&tok, trunc, readout)?.gh;
    Ok(cosine(&dense, &sparse))
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(c.clamp(-1.0, 1.0))
}

/// Population variance of `cos(v_i, v_j)` over all pairs `i ≠ j`.
pub fn discriminativeness(vectors: &[Vec<f64>]) -> Result<f64> {
    if vectors.len() < 2 {
        return invalid("discriminativeness needs at least two vectors");
    }
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return invalid("discriminativeness needs nonzero vectors");
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return invalid("all vectors must share one dimension");
    }
    let n = vectors.len();
    let (sum, sum_sq) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut s, mut s2) = (0.0, 0.0);
            for j in i + 1..n {
                let c = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum::<f64>() / (norms[i] * norms[j]);
                s += c;
                s2 += c * c;
            }
            (s, s2)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let pairs = (n * (n - 1) / 2) as f64;
    let mean = sum / pairs;
    Ok((sum_sq / pairs - mean * mean).max(0.0))
}

/// One peaked synthetic next-token distribution: Gaussian logits divided by
/// `logit_temperature`, rounded to f32, with the target sampled from the softmax.
pub fn peaked_draw<R: Rng>(rng: &mut R, vocab_size: usize, logit_temperature: f64) -> (Vec<f64>, usize) {
    let logits: Vec<f64> = (0..vocab_size)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) / logit_temperature) as f32 as f64)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut target = vocab_size - 1;
    for (i, z) in logits.iter().enumerate() {
        u -= (z - max).exp();
        if u <= 0.0 {
            target = i;
            break;
        }
    }
    (logits, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakedParams {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub draws: usize,
    pub ks: Vec<usize>,
    pub temperature: f64,
    pub logit_temperature: f64,
    pub seed: u64,
}

impl Default for PeakedParams {
    fn default() -> Self {
        PeakedParams {
            vocab_size: 10_000,
            hidden_dim: 64,
            draws: 1000,
            ks: vec![8, 16, 32, 64, 128],
            temperature: 1.0,
            logit_temperature: 0.5,
            seed: 42,
        }
    }
}

/// Means over draws at one candidate count.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub k: usize,
    pub draws: usize,
    pub prob_mass: f64,
    pub full_energy: f64,
    pub gt_energy: f64,
    pub tail_energy: f64,
    pub gh_cosine: f64,
    /// Mean `|S| / V`.
    pub support_fraction: f64,
    /// Draws with a zero dense GH error, excluded from `gh_cosine`.
    pub gh_skipped: usize,
}

struct DrawStats {
    profile: EnergyProfile,
    cosine: Option<f64>,
    support: usize,
}

fn stats_for(logits: &[f64], target: usize, k: usize, temperature: f64, readout: &ModelReadout) -> Result<DrawStats> {
    let trunc = fixed_topk(k, temperature);
    let tok = full_token(logits, target, readout.hidden_dim());
    let tr = truncate_token(&tok, &trunc, readout)?;
    Ok(DrawStats {
        profile: energy_profile(logits, target, temperature, &tr.support)?,
        cosine: gh_fidelity(logits, target, &trunc, readout)?,
        support: tr.support.len(),
    })
}

fn summarize(k: usize, vocab: usize, stats: &[DrawStats]) -> DiagnosticsRow {
    let n = stats.len().max(1) as f64;
    let m = |f: &dyn Fn(&DrawStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    let cos: Vec<f64> = stats.iter().filter_map(|s| s.cosine).collect();
    DiagnosticsRow {
        k,
        draws: stats.len(),
        prob_mass: m(&|s| s.profile.prob_mass),
        full_energy: m(&|s| s.profile.full_energy),
        gt_energy: m(&|s| s.profile.gt_energy),
        tail_energy: m(&|s| s.profile.tail_energy),
        gh_cosine: if cos.is_empty() {
            f64::NAN
        } else {
            cos.iter().sum::<f64>() / cos.len() as f64
        },
        support_fraction: m(&|s| s.support as f64 / vocab as f64),
        gh_skipped: stats.len() - cos.len(),
    }
}

/// Fixed-control sweep over `params.ks` on peaked synthetic logits with a
/// random Gaussian readout.
pub fn run_peaked_diagnostics(params: &PeakedParams) -> Result<Vec<DiagnosticsRow>> {
    let PeakedParams {
        vocab_size: v,
        hidden_dim: d,
        draws,
        ref ks,
        temperature,
        logit_temperature,
        seed,
    } = *params;
    if draws == 0 || ks.is_empty() || v < 2 || d == 0 {
        return invalid("diagnostics need draws >= 1, at least one K, V >= 2 and d >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let scale = 1.0 / (d as f64).sqrt();
    let w: Vec<f32> = (0..v * d)
        .map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let readout = ModelReadout::new(v, d, w)?;

    let draws: Vec<(Vec<f64>, usize)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            peaked_draw(
                &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64)),
                v,
                logit_temperature,
            )
        })
        .collect();
    ks.iter()
        .map(|&k| {
            let stats = draws
                .par_iter()
                .map(|(z, y)| stats_for(z, *y, k, temperature, &readout))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(k, v, &stats))
        })
        .collect()
}

/// The same sweep over full-vocabulary records (K_store = V) and their readout.
pub fn diagnose_records(
    records: &[SampleRecord],
    readout: &ModelReadout,
    ks: &[usize],
    temperature: f64,
) -> Result<Vec<DiagnosticsRow>> {
    let oracle = Oracle::unbounded(readout);
    let positions: Vec<(Vec<f64>, usize)> = records
        .iter()
        .flat_map(|s| s.tokens.iter())
        .map(|t| Ok((oracle.full_logits(t)?, t.target_id as usize)))
        .collect::<Result<_>>()?;
    if positions.is_empty() {
        return invalid("no token positions to diagnose");
    }
    ks.iter()
        .map(|&k| {
            let stats = positions
                .par_iter()
                .map(|(z, y)| stats_for(z, *y, k, temperature, readout))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(k, readout.vocab_size(), &stats))
        })
        .collect()
}
