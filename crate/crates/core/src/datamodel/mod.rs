//! Domain types shared by every stage of the pipeline, plus the binary file
//! formats ([`format`]) and the seeded synthetic generator ([`synth`]).

pub mod format;
pub mod synth;

use std::collections::HashSet;

use crate::error::{invalid, Result, RiseError};
use crate::hashing::Fnv64;

/// The LM-head matrix `W` (V×d, row-major). Row `v` is the output embedding of token `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReadout {
    vocab_size: usize,
    hidden_dim: usize,
    weights: Vec<f32>,
}

impl ModelReadout {
    pub fn new(vocab_size: usize, hidden_dim: usize, weights: Vec<f32>) -> Result<Self> {
        if vocab_size < 2 {
            return invalid(format!("readout vocab_size must be >= 2, got {vocab_size}"));
        }
        if hidden_dim < 1 {
            return invalid("readout hidden_dim must be >= 1");
        }
        if weights.len() != vocab_size * hidden_dim {
            return Err(RiseError::DimensionMismatch {
                what: "readout weights",
                expected: vocab_size * hidden_dim,
                found: weights.len(),
            });
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite()) {
            return Err(RiseError::Format(format!(
                "readout row {} contains a non-finite weight",
                pos / hidden_dim
            )));
        }
        Ok(ModelReadout {
            vocab_size,
            hidden_dim,
            weights,
        })
    }

    /// Identity readout (V = d), handy for tests where `g = r`.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut w = vec![0.0f32; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, w)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[f32] {
        &self.weights[v * self.hidden_dim..(v + 1) * self.hidden_dim]
    }
}

/// Forward-pass record of one prediction position.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub target_id: u32,
    /// Logit of the target, stored even when the target is not among the candidates.
    pub target_logit: f32,
    pub candidate_ids: Vec<u32>,
    pub candidate_logits: Vec<f32>,
    pub hidden: Vec<f32>,
}

impl TokenRecord {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_ids.len() != self.candidate_logits.len() {
            return Err(RiseError::DimensionMismatch {
                what: "candidate logits",
                expected: self.candidate_ids.len(),
                found: self.candidate_logits.len(),
            });
        }
        let mut seen = HashSet::with_capacity(self.candidate_ids.len());
        if !self.candidate_ids.iter().all(|id| seen.insert(*id)) {
            return invalid("candidate_ids must be distinct");
        }
        let finite = self.target_logit.is_finite()
            && self.candidate_logits.iter().all(|z| z.is_finite())
            && self.hidden.iter().all(|h| h.is_finite());
        if !finite {
            return invalid("token record contains non-finite values");
        }
        Ok(())
    }
}

/// One pool or query example as a sequence of per-position records.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub tokens: Vec<TokenRecord>,
}

/// CountSketch output dimensions and the seed that fixes all three hash families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchSpec {
    pub k_r: usize,
    pub k_h: usize,
    pub k_g: usize,
    pub seed: u64,
}

impl Default for SketchSpec {
    fn default() -> Self {
        SketchSpec {
            k_r: 128,
            k_h: 24,
            k_g: 128,
            seed: 42,
        }
    }
}

impl SketchSpec {
    pub fn new(k_r: usize, k_h: usize, k_g: usize, seed: u64) -> Self {
        SketchSpec { k_r, k_h, k_g, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_r == 0 || self.k_h == 0 || self.k_g == 0 {
            return invalid("sketch dimensions K_r, K_h, K_g must all be >= 1");
        }
        Ok(())
    }
}

/// Softmax temperature and adaptive top-L truncation knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    pub temperature: f64,
    pub rho_cum: f64,
    pub min_top_l: usize,
    pub k_max: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            temperature: 1.0,
            rho_cum: 0.92,
            min_top_l: 4,
            k_max: 256,
        }
    }
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return invalid(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.rho_cum > 0.0 && self.rho_cum <= 1.0) {
            return invalid(format!("rho_cum must lie in (0, 1], got {}", self.rho_cum));
        }
        if self.min_top_l == 0 {
            return invalid("min_topL must be >= 1");
        }
        if self.min_top_l > self.k_max {
            return invalid(format!(
                "min_topL ({}) must not exceed K_max ({})",
                self.min_top_l, self.k_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWeights {
    pub lambda_rh: f64,
    pub lambda_gh: f64,
    /// Jointly ℓ2-normalize `[φ_RH; φ_GH]` after aggregation.
    pub normalize_sample: bool,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        ChannelWeights {
            lambda_rh: 0.7,
            lambda_gh: 1.0,
            normalize_sample: true,
        }
    }
}

impl ChannelWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_rh >= 0.0
            && self.lambda_gh >= 0.0
            && self.lambda_rh.is_finite()
            && self.lambda_gh.is_finite()
            && self.lambda_rh + self.lambda_gh > 0.0;
        if !ok {
            return invalid(format!(
                "channel weights must be nonnegative with positive sum, got ({}, {})",
                self.lambda_rh, self.lambda_gh
            ));
        }
        Ok(())
    }
}

/// Full featurization configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RiseConfig {
    pub sketch: SketchSpec,
    pub trunc: TruncationConfig,
    pub weights: ChannelWeights,
}

impl RiseConfig {
    pub fn validate(&self) -> Result<()> {
        self.sketch.validate()?;
        self.trunc.validate()?;
        self.weights.validate()
    }

    /// 64-bit hash over every config field plus the readout shape. Index and
    /// query signatures are only comparable when their fingerprints agree.
    pub fn fingerprint(&self, vocab_size: usize, hidden_dim: usize) -> u64 {
        let mut h = Fnv64::new();
        h.bytes(b"rise-config-v1")
            .u64(self.sketch.k_r as u64)
            .u64(self.sketch.k_h as u64)
            .u64(self.sketch.k_g as u64)
            .u64(self.sketch.seed)
            .f64(self.trunc.temperature)
            .f64(self.trunc.rho_cum)
            .u64(self.trunc.min_top_l as u64)
            .u64(self.trunc.k_max as u64)
            .f64(self.weights.lambda_rh)
            .f64(self.weights.lambda_gh)
            .u64(self.weights.normalize_sample as u64)
            .u64(vocab_size as u64)
            .u64(hidden_dim as u64);
        h.finish()
    }
}

/// Aggregated dual-channel features of one sample. `phi_rh` is row-major over
/// (residual bucket, hidden bucket); `phi_gh` over (GH bucket, hidden bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSignature {
    pub sample_id: u64,
    pub phi_rh: Vec<f32>,
    pub phi_gh: Vec<f32>,
}

impl SampleSignature {
    pub fn norm(&self) -> f64 {
        self.phi_rh
            .iter()
            .chain(&self.phi_gh)
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Persisted pool signatures with the fingerprint of the config that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceIndex {
    pub fingerprint: u64,
    pub sketch: SketchSpec,
    pub normalize_sample: bool,
    pub signatures: Vec<SampleSignature>,
}

impl InfluenceIndex {
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn rh_len(&self) -> usize {
        self.sketch.k_r * self.sketch.k_h
    }

    pub fn gh_len(&self) -> usize {
        self.sketch.k_g * self.sketch.k_h
    }

    /// Checks the dimension and id-uniqueness invariants.
    pub fn validate(&self) -> Result<()> {
        let (rh, gh) = (self.rh_len(), self.gh_len());
        let mut ids = HashSet::with_capacity(self.signatures.len());
        for sig in &self.signatures {
            if sig.phi_rh.len() != rh {
                return Err(RiseError::DimensionMismatch {
                    what: "phi_rh",
                    expected: rh,
                    found: sig.phi_rh.len(),
                });
            }
            if sig.phi_gh.len() != gh {
                return Err(RiseError::DimensionMismatch {
                    what: "phi_gh",
                    expected: gh,
                    found: sig.phi_gh.len(),
                });
            }
            if !ids.insert(sig.sample_id) {
                return invalid(format!("duplicate sample_id {} in index", sig.sample_id));
            }
        }
        Ok(())
    }
}
