use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::diagnostics::peaked_draw;
use super::full_token;
use crate::datamodel::{ModelReadout, TruncationConfig};
use crate::error::{invalid, Result, RiseError};
use crate::hashing::derive_seed;
use crate::oracle::dense_residual;
use crate::residual::truncate_token;
use crate::sketch::{sketch_dense, sketch_sparse, ChannelTag, HashFamily};

fn check_pair(u: &[f64], v: &[f64], k: usize) -> Result<()> {
    if u.len() != v.len() {
        return Err(RiseError::DimensionMismatch {
            what: "projection input",
            expected: u.len(),
            found: v.len(),
        });
    }
    if k == 0 {
        return invalid("projection dimension must be at least 1");
    }
    Ok(())
}

/// `⟨Ru, Rv⟩` with `R_kj ~ N(0, 1/K)` drawn from `seed`.
pub fn gaussian_rp_estimate(u: &[f64], v: &[f64], k: usize, seed: u64) -> Result<f64> {
    check_pair(u, v, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    Ok(project_rows(u, v, k, || scale * rng.sample::<f64, _>(StandardNormal)))
}

/// Sign-flip variant: `R_kj = ±1/√K`.
pub fn rademacher_rp_estimate(u: &[f64], v: &[f64], k: usize, seed: u64) -> Result<f64> {
    check_pair(u, v, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    Ok(project_rows(
        u,
        v,
        k,
        || if rng.random::<bool>() { scale } else { -scale },
    ))
}

fn project_rows(u: &[f64], v: &[f64], k: usize, mut entry: impl FnMut() -> f64) -> f64 {
    let mut z = 0.0;
    for _ in 0..k {
        let (mut a, mut b) = (0.0, 0.0);
        for (x, y) in u.iter().zip(v) {
            let r = entry();
            a += r * x;
            b += r * y;
        }
        z += a * b;
    }
    z
}

/// Leading-term variance ratio (dense random projection over sketched head)
/// implied by a head energy fraction `gamma` and the truncation energy ratio
/// `‖r̃_q‖²‖r̃_i‖² / (‖r_q‖²‖r_i‖²)`.
pub fn variance_ratio_lower_bound(gamma: f64, truncation_ratio: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) || !(truncation_ratio > 0.0 && truncation_ratio <= 1.0) {
        return invalid("gamma and truncation ratio must lie in (0, 1]");
    }
    Ok(1.0 / (gamma * gamma * truncation_ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Rp,
    Cs,
    Factorized,
    FusionCov,
    TruncationL1,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Rp,
        Scenario::Cs,
        Scenario::Factorized,
        Scenario::FusionCov,
        Scenario::TruncationL1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Rp => "rp",
            Scenario::Cs => "cs",
            Scenario::Factorized => "factorized",
            Scenario::FusionCov => "fusion_cov",
            Scenario::TruncationL1 => "truncation_l1",
        }
    }

    fn estimator(self) -> &'static str {
        match self {
            Scenario::Rp => "gaussian random projection <Ru,Rv>",
            Scenario::Cs => "countsketch <Sx,Sy>",
            Scenario::Factorized => "factorized countsketch A*B",
            Scenario::FusionCov => "cov(A*B, C*B) with shared hidden sketch",
            Scenario::TruncationL1 => "| ||p - p~||_1 - 2(1 - rho) |",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = RiseError;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            RiseError::InvalidArgument(format!(
                "unknown scenario {s:?} (expected rp, cs, factorized, fusion_cov or truncation_l1)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckKind {
    /// `|observed − reference| ≤ n·se`.
    WithinStdErrors { n: f64, se: f64 },
    /// `|observed − reference| ≤ tol·|reference|`.
    WithinRelative(f64),
    /// `observed ≤ factor·reference`.
    AtMostFactor(f64),
    /// `observed ≤ reference`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub observed: f64,
    pub reference: f64,
    pub kind: CheckKind,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, observed: f64, reference: f64, kind: CheckKind) -> Self {
        let pass = match kind {
            CheckKind::WithinStdErrors { n, se } => (observed - reference).abs() <= n * se,
            CheckKind::WithinRelative(tol) => (observed - reference).abs() <= tol * reference.abs(),
            CheckKind::AtMostFactor(f) => observed <= f * reference,
            CheckKind::AtMost => observed <= reference,
        };
        Check {
            name,
            observed,
            reference,
            kind,
            pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub scenario: Scenario,
    pub estimator: &'static str,
    pub trials: usize,
    pub seed: u64,
    /// Empirical mean and variance of the per-trial estimate.
    pub mean: f64,
    pub variance: f64,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= n);
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Exact CountSketch inner-product variance for fully random hashes.
fn cs_exact_var(x: &[f64], y: &[f64], k: usize) -> f64 {
    let cross: f64 = x.iter().zip(y).map(|(a, b)| a * a * b * b).sum();
    (sq(x) * sq(y) + dot(x, y).powi(2) - 2.0 * cross) / k as f64
}

/// Runs `trials` independent replicates of `scenario`, seeding trial `t` with
/// `derive_seed(seed, t)`. Results do not depend on the rayon pool size.
pub fn variance_bench(scenario: Scenario, trials: usize, seed: u64) -> Result<VarianceReport> {
    if trials < 2 {
        return invalid("variance bench needs at least two trials");
    }
    let mut setup = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let trial_seed = |t: usize| derive_seed(seed, t as u64);
    let (values, checks) = match scenario {
        Scenario::Rp => {
            const D: usize = 32;
            const K: usize = 8;
            let u = unit_gaussian(&mut setup, D);
            let vals = (0..trials)
                .into_par_iter()
                .map(|t| gaussian_rp_estimate(&u, &u, K, trial_seed(t)))
                .collect::<Result<Vec<_>>>()?;
            let (m, v) = mean_var(&vals);
            let se = (v / trials as f64).sqrt();
            let exact = (sq(&u) * sq(&u) + dot(&u, &u).powi(2)) / K as f64;
            (
                vals,
                vec![
                    Check::new("mean vs u.v", m, dot(&u, &u), CheckKind::WithinStdErrors { n: 4.0, se }),
                    Check::new("variance vs exact", v, exact, CheckKind::WithinRelative(0.10)),
                ],
            )
        }
        Scenario::Cs => {
            const D: usize = 512;
            const K: usize = 32;
            let x = unit_gaussian(&mut setup, D);
            let y = unit_gaussian(&mut setup, D);
            let vals = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let fam = HashFamily::keyed(D, K, trial_seed(t), ChannelTag::Custom(0))?;
                    Ok(dot(&sketch_dense(&x, &fam)?, &sketch_dense(&y, &fam)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (m, v) = mean_var(&vals);
            let se = (v / trials as f64).sqrt();
            (
                vals,
                vec![
                    Check::new("mean vs x.y", m, dot(&x, &y), CheckKind::WithinStdErrors { n: 4.0, se }),
                    Check::new(
                        "variance vs bound",
                        v,
                        sq(&x) * sq(&y) / K as f64,
                        CheckKind::AtMostFactor(1.1),
                    ),
                    Check::new(
                        "variance vs exact",
                        v,
                        cs_exact_var(&x, &y, K),
                        CheckKind::WithinRelative(0.10),
                    ),
                ],
            )
        }
        Scenario::Factorized => {
            let pair = ResidualPair::random(&mut setup, false)?;
            let (k_r, k_h) = (64, 16);
            let vals = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let s = trial_seed(t);
                    let fr = HashFamily::keyed(pair.vocab, k_r, s, ChannelTag::Residual)?;
                    let fh = HashFamily::keyed(pair.h_q.len(), k_h, s, ChannelTag::Hidden)?;
                    Ok(pair.a(&fr)? * pair.b(&fh)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let (m, v) = mean_var(&vals);
            let se = (v / trials as f64).sqrt();
            let (rq, ri) = (pair.r_q_dense(), pair.r_i_dense());
            let (alpha, beta) = (dot(&rq, &ri), dot(&pair.h_q, &pair.h_i));
            let var_a = sq(&rq) * sq(&ri) / k_r as f64;
            let var_b = sq(&pair.h_q) * sq(&pair.h_i) / k_h as f64;
            let bound = alpha * alpha * var_b + beta * beta * var_a + var_a * var_b;
            (
                vals,
                vec![
                    Check::new(
                        "mean vs alpha*beta",
                        m,
                        alpha * beta,
                        CheckKind::WithinStdErrors { n: 4.0, se },
                    ),
                    Check::new("variance vs three-term bound", v, bound, CheckKind::AtMostFactor(1.1)),
                ],
            )
        }
        Scenario::FusionCov => {
            let pair = ResidualPair::random(&mut setup, true)?;
            let (k_r, k_h, k_g) = (256, 4, 256);
            let abc = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let s = trial_seed(t);
                    let fr = HashFamily::keyed(pair.vocab, k_r, s, ChannelTag::Residual)?;
                    let fh = HashFamily::keyed(pair.h_q.len(), k_h, s, ChannelTag::Hidden)?;
                    let fg = HashFamily::keyed(pair.h_q.len(), k_g, s, ChannelTag::Gh)?;
                    Ok([pair.a(&fr)?, pair.b(&fh)?, pair.c(&fg)?])
                })
                .collect::<Result<Vec<_>>>()?;
            let ab: Vec<f64> = abc.iter().map(|x| x[0] * x[1]).collect();
            let cb: Vec<f64> = abc.iter().map(|x| x[2] * x[1]).collect();
            let bs: Vec<f64> = abc.iter().map(|x| x[1]).collect();
            let (m_ab, _) = mean_var(&ab);
            let (m_cb, _) = mean_var(&cb);
            let n = trials as f64;
            let cov = ab.iter().zip(&cb).map(|(x, y)| (x - m_ab) * (y - m_cb)).sum::<f64>() / (n - 1.0);
            let (_, var_b) = mean_var(&bs);
            let alpha = dot(&pair.r_q_dense(), &pair.r_i_dense());
            let gamma = dot(&pair.g_q, &pair.g_i);
            (
                ab,
                vec![Check::new(
                    "cov(AB,CB) vs alpha*gamma*var(B)",
                    cov,
                    alpha * gamma * var_b,
                    CheckKind::WithinRelative(0.15),
                )],
            )
        }
        Scenario::TruncationL1 => {
            const V: usize = 4096;
            let readout = ModelReadout::new(V, 1, vec![1.0; V])?;
            let trunc = TruncationConfig::default();
            let out = (0..trials)
                .into_par_iter()
                .map(|t| truncation_trial(&mut ChaCha8Rng::seed_from_u64(trial_seed(t)), &readout, &trunc))
                .collect::<Result<Vec<_>>>()?;
            let errs: Vec<f64> = out.iter().map(|o| o.0).collect();
            let worst_r = out.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
            let max_err = errs.iter().copied().fold(0.0, f64::max);
            (
                errs,
                vec![
                    Check::new("max |l1 - 2(1-rho)|", max_err, 1e-6, CheckKind::AtMost),
                    Check::new("max ||r - r~||_2 - 2(1-rho)", worst_r, 1e-12, CheckKind::AtMost),
                ],
            )
        }
    };
    let (mean, variance) = mean_var(&values);
    let verdict = if checks.iter().all(|c| c.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(VarianceReport {
        scenario,
        estimator: scenario.estimator(),
        trials,
        seed,
        mean,
        variance,
        checks,
        verdict,
    })
}

/// Returns `(|‖p − p̃‖₁ − 2(1−ρ)|, ‖r − r̃‖₂ − 2(1−ρ))` for one peaked draw.
fn truncation_trial(rng: &mut ChaCha8Rng, readout: &ModelReadout, trunc: &TruncationConfig) -> Result<(f64, f64)> {
    let v = readout.vocab_size();
    let (z, y) = peaked_draw(rng, v, 0.5);
    let (p, r) = dense_residual(&z, y, trunc.temperature)?;
    let tr = truncate_token(&full_token(&z, y, 1), trunc, readout)?;
    let mut p_t = vec![0.0; v];
    let mut r_t = vec![0.0; v];
    for ((&id, &pp), &rr) in tr.support.iter().zip(&tr.probs).zip(&tr.residual) {
        p_t[id as usize] = pp;
        r_t[id as usize] = rr;
    }
    let rho: f64 = tr.support.iter().map(|&id| p[id as usize]).sum();
    let l1: f64 = p.iter().zip(&p_t).map(|(a, b)| (a - b).abs()).sum();
    let l2 = r.iter().zip(&r_t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(((l1 - 2.0 * (1.0 - rho)).abs(), l2 - 2.0 * (1.0 - rho)))
}

/// A query/train token pair: truncated residuals, hidden states, GH errors.
struct ResidualPair {
    vocab: usize,
    ids_q: Vec<u32>,
    r_q: Vec<f64>,
    ids_i: Vec<u32>,
    r_i: Vec<f64>,
    h_q: Vec<f64>,
    h_i: Vec<f64>,
    g_q: Vec<f64>,
    g_i: Vec<f64>,
}

impl ResidualPair {
    /// `aligned` makes the train token a small perturbation of the query token
    /// (same target), so `α`, `β`, `γ_g` are all far from zero.
    fn random(rng: &mut ChaCha8Rng, aligned: bool) -> Result<Self> {
        const V: usize = 512;
        const D: usize = 64;
        let scale = 1.0 / (D as f64).sqrt();
        let w: Vec<f32> = (0..V * D)
            .map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect();
        let readout = ModelReadout::new(V, D, w)?;
        let trunc = TruncationConfig {
            k_max: 64,
            ..TruncationConfig::default()
        };

        let (z_q, y_q) = peaked_draw(rng, V, 0.5);
        let (z_i, y_i) = if aligned {
            let z: Vec<f64> = z_q
                .iter()
                .map(|z| (z + 0.1 * rng.sample::<f64, _>(StandardNormal)) as f32 as f64)
                .collect();
            (z, y_q)
        } else {
            peaked_draw(rng, V, 0.5)
        };
        let h_q: Vec<f64> = (0..D).map(|_| rng.sample(StandardNormal)).collect();
        let h_i: Vec<f64> = if aligned {
            h_q.iter()
                .map(|h| h + 0.3 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            (0..D).map(|_| rng.sample(StandardNormal)).collect()
        };
        let tq = truncate_token(&full_token(&z_q, y_q, D), &trunc, &readout)?;
        let ti = truncate_token(&full_token(&z_i, y_i, D), &trunc, &readout)?;
        Ok(ResidualPair {
            vocab: V,
            ids_q: tq.support,
            r_q: tq.residual,
            ids_i: ti.support,
            r_i: ti.residual,
            h_q,
            h_i,
            g_q: tq.gh,
            g_i: ti.gh,
        })
    }

    fn r_q_dense(&self) -> Vec<f64> {
        crate::residual::scatter(&self.ids_q, &self.r_q, self.vocab)
    }

    fn r_i_dense(&self) -> Vec<f64> {
        crate::residual::scatter(&self.ids_i, &self.r_i, self.vocab)
    }

    fn a(&self, fam: &HashFamily) -> Result<f64> {
        Ok(dot(
            &sketch_sparse(&self.ids_q, &self.r_q, fam)?,
            &sketch_sparse(&self.ids_i, &self.r_i, fam)?,
        ))
    }

    fn b(&self, fam: &HashFamily) -> Result<f64> {
        Ok(dot(&sketch_dense(&self.h_q, fam)?, &sketch_dense(&self.h_i, fam)?))
    }

    fn c(&self, fam: &HashFamily) -> Result<f64> {
        Ok(dot(&sketch_dense(&self.g_q, fam)?, &sketch_dense(&self.g_i, fam)?))
    }
}
