//! Per-sample signature construction.
//!
//! For each position the truncated residual `r̃`, hidden state `h`, and GH error
//! `g̃` are CountSketched and ℓ2-normalized; the outer products `r̂⊗ĥ` and
//! `ĝ⊗ĥ` are summed over positions with channel weights applied, and the
//! concatenated signature is optionally ℓ2-normalized at the end.

use crate::datamodel::{ModelReadout, RiseConfig, SampleRecord, SampleSignature, SketchSpec};
use crate::error::{Result, RiseError};
use crate::residual::truncate_token;
use crate::sketch::{sketch_dense_into, sketch_sparse_into, ChannelTag, HashFamily};

/// The three CountSketch operators: residual (V→K_r), hidden (d→K_h), GH (d→K_g).
#[derive(Debug, Clone)]
pub struct SketchFamilies {
    pub residual: HashFamily,
    pub hidden: HashFamily,
    pub gh: HashFamily,
}

impl SketchFamilies {
    /// Keyed families derived from `spec.seed`, one channel tag each.
    pub fn new(spec: &SketchSpec, vocab_size: usize, hidden_dim: usize) -> Result<Self> {
        spec.validate()?;
        Ok(SketchFamilies {
            residual: HashFamily::keyed(vocab_size, spec.k_r, spec.seed, ChannelTag::Residual)?,
            hidden: HashFamily::keyed(hidden_dim, spec.k_h, spec.seed, ChannelTag::Hidden)?,
            gh: HashFamily::keyed(hidden_dim, spec.k_g, spec.seed, ChannelTag::Gh)?,
        })
    }

    /// Injective families (signed coordinate embeddings); needs K_r ≥ V and K_h, K_g ≥ d.
    pub fn injective(spec: &SketchSpec, vocab_size: usize, hidden_dim: usize) -> Result<Self> {
        Ok(SketchFamilies {
            residual: HashFamily::injective(vocab_size, spec.k_r, spec.seed, ChannelTag::Residual)?,
            hidden: HashFamily::injective(hidden_dim, spec.k_h, spec.seed, ChannelTag::Hidden)?,
            gh: HashFamily::injective(hidden_dim, spec.k_g, spec.seed, ChannelTag::Gh)?,
        })
    }

    fn check(&self, readout: &ModelReadout) -> Result<()> {
        let (v, d) = (readout.vocab_size(), readout.hidden_dim());
        for (what, fam, want) in [
            ("residual family input", &self.residual, v),
            ("hidden family input", &self.hidden, d),
            ("GH family input", &self.gh, d),
        ] {
            if fam.input_dim() != want {
                return Err(RiseError::DimensionMismatch {
                    what,
                    expected: want,
                    found: fam.input_dim(),
                });
            }
        }
        Ok(())
    }
}

/// How each sketched factor is scaled before the outer product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorNorm {
    /// ℓ2-normalize each sketched factor (the zero vector stays zero).
    #[default]
    Unit,
    /// Keep raw sketches; the channel inner products are then unbiased
    /// estimates of the dense truncated ones.
    Raw,
}

pub fn sketch_aggregate(
    sample: &SampleRecord,
    readout: &ModelReadout,
    cfg: &RiseConfig,
    fams: &SketchFamilies,
) -> Result<SampleSignature> {
    sketch_aggregate_with(sample, readout, cfg, fams, FactorNorm::Unit)
}

pub fn sketch_aggregate_with(
    sample: &SampleRecord,
    readout: &ModelReadout,
    cfg: &RiseConfig,
    fams: &SketchFamilies,
    norm: FactorNorm,
) -> Result<SampleSignature> {
    fams.check(readout)?;
    let (k_r, k_h, k_g) = (
        fams.residual.output_dim(),
        fams.hidden.output_dim(),
        fams.gh.output_dim(),
    );
    let (lam_rh, lam_gh) = (cfg.weights.lambda_rh, cfg.weights.lambda_gh);
    let mut phi_rh = vec![0.0f64; k_r * k_h];
    let mut phi_gh = vec![0.0f64; k_g * k_h];
    let mut r_sk = vec![0.0f64; k_r];
    let mut h_sk = vec![0.0f64; k_h];
    let mut g_sk = vec![0.0f64; k_g];

    for tok in &sample.tokens {
        if tok.hidden.len() != readout.hidden_dim() {
            return Err(RiseError::DimensionMismatch {
                what: "sample hidden state",
                expected: readout.hidden_dim(),
                found: tok.hidden.len(),
            });
        }
        let tr = truncate_token(tok, &cfg.trunc, readout)?;
        r_sk.fill(0.0);
        h_sk.fill(0.0);
        g_sk.fill(0.0);
        sketch_sparse_into(&tr.support, &tr.residual, &fams.residual, &mut r_sk)?;
        sketch_dense_into(&tok.hidden, &fams.hidden, &mut h_sk)?;
        sketch_dense_into(&tr.gh, &fams.gh, &mut g_sk)?;
        if norm == FactorNorm::Unit {
            normalize(&mut r_sk);
            normalize(&mut h_sk);
            normalize(&mut g_sk);
        }
        accumulate_outer(&mut phi_rh, lam_rh, &r_sk, &h_sk);
        accumulate_outer(&mut phi_gh, lam_gh, &g_sk, &h_sk);
    }

    if cfg.weights.normalize_sample {
        let n = phi_rh.iter().chain(&phi_gh).map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            phi_rh.iter_mut().chain(phi_gh.iter_mut()).for_each(|x| *x /= n);
        }
    }
    Ok(SampleSignature {
        sample_id: sample.sample_id,
        phi_rh: phi_rh.into_iter().map(|x| x as f32).collect(),
        phi_gh: phi_gh.into_iter().map(|x| x as f32).collect(),
    })
}

/// ℓ2-normalizes in place; the zero vector maps to zero.
fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// `phi += lambda · vec(a ⊗ b)`, row-major with `a` as the major axis.
fn accumulate_outer(phi: &mut [f64], lambda: f64, a: &[f64], b: &[f64]) {
    if lambda == 0.0 {
        return;
    }
    for (row, &ai) in phi.chunks_exact_mut(b.len()).zip(a) {
        if ai == 0.0 {
            continue;
        }
        let s = lambda * ai;
        for (p, &bj) in row.iter_mut().zip(b) {
            *p += s * bj;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureDims {
    pub rh_len: usize,
    pub gh_len: usize,
    /// Float payload plus the 8-byte sample id of an index record.
    pub bytes_per_sample: usize,
}

impl SignatureDims {
    pub fn total_floats(&self) -> usize {
        self.rh_len + self.gh_len
    }
}

pub fn signature_dims(spec: &SketchSpec) -> SignatureDims {
    let rh_len = spec.k_r * spec.k_h;
    let gh_len = spec.k_g * spec.k_h;
    SignatureDims {
        rh_len,
        gh_len,
        bytes_per_sample: 4 * (rh_len + gh_len) + 8,
    }
}
