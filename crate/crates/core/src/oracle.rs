//! Dense brute-force references for the identities the sketched path relies
//! on. Everything here is O(V·d) or worse per token, so construction is gated
//! to small vocabularies unless explicitly overridden.

use crate::datamodel::{ModelReadout, SampleRecord, TokenRecord, TruncationConfig};
use crate::error::{invalid, Result, RiseError};
use crate::residual::{scatter, truncate_token};

pub const ORACLE_MAX_VOCAB: usize = 4096;

/// Full softmax `p = softmax(z/τ)` and residual `r = p − e_y`.
pub fn dense_residual(full_logits: &[f64], target: usize, temperature: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if temperature.is_nan() || temperature <= 0.0 {
        return invalid(format!("temperature must be > 0, got {temperature}"));
    }
    if target >= full_logits.len() {
        return invalid(format!("target {target} out of range for V={}", full_logits.len()));
    }
    let max = full_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = full_logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    let p: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut r = p.clone();
    r[target] -= 1.0;
    Ok((p, r))
}

/// A dense `rows × cols` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHeadGradient {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseHeadGradient {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseHeadGradient {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self += a ⊗ b`.
    pub fn add_outer<T: Copy + Into<f64>>(&mut self, a: &[f64], b: &[T]) {
        assert_eq!((a.len(), b.len()), (self.rows, self.cols), "outer product shape");
        for (row, &ai) in self.data.chunks_exact_mut(self.cols).zip(a) {
            for (x, &bj) in row.iter_mut().zip(b) {
                *x += ai * bj.into();
            }
        }
    }

    pub fn frobenius_inner(&self, other: &DenseHeadGradient) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shape");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_inner(self)
    }
}

/// Brute-force evaluator bound to one readout.
#[derive(Debug, Clone, Copy)]
pub struct Oracle<'a> {
    readout: &'a ModelReadout,
}

impl<'a> Oracle<'a> {
    /// Fails for vocabularies above [`ORACLE_MAX_VOCAB`].
    pub fn new(readout: &'a ModelReadout) -> Result<Self> {
        if readout.vocab_size() > ORACLE_MAX_VOCAB {
            return invalid(format!(
                "oracle limited to V <= {ORACLE_MAX_VOCAB} (got {}); use Oracle::unbounded to override",
                readout.vocab_size()
            ));
        }
        Ok(Oracle { readout })
    }

    pub fn unbounded(readout: &'a ModelReadout) -> Self {
        Oracle { readout }
    }

    /// Recovers the full logit vector from a full-vocabulary record (K_store = V).
    pub fn full_logits(&self, tok: &TokenRecord) -> Result<Vec<f64>> {
        let v = self.readout.vocab_size();
        if tok.candidate_ids.len() != v {
            return Err(RiseError::Contract(format!(
                "dense oracle needs a full-vocabulary record (K_store = V = {v}), got K_store = {}",
                tok.candidate_ids.len()
            )));
        }
        let mut z = vec![f64::NAN; v];
        for (&id, &l) in tok.candidate_ids.iter().zip(&tok.candidate_logits) {
            let slot = z
                .get_mut(id as usize)
                .ok_or_else(|| RiseError::InvalidArgument(format!("token id {id} out of range")))?;
            *slot = l as f64;
        }
        if z.iter().any(|x| x.is_nan()) {
            return Err(RiseError::Contract("full-vocabulary record has repeated ids".into()));
        }
        Ok(z)
    }

    fn check_hidden(&self, tok: &TokenRecord) -> Result<()> {
        if tok.hidden.len() != self.readout.hidden_dim() {
            return Err(RiseError::DimensionMismatch {
                what: "sample hidden state",
                expected: self.readout.hidden_dim(),
                found: tok.hidden.len(),
            });
        }
        Ok(())
    }

    /// Residual per token: dense `r_t`, or the scattered `r̃_t` when `trunc` is given.
    fn token_residual(
        &self,
        tok: &TokenRecord,
        temperature: f64,
        trunc: Option<&TruncationConfig>,
    ) -> Result<Vec<f64>> {
        let v = self.readout.vocab_size();
        match trunc {
            None => Ok(dense_residual(&self.full_logits(tok)?, tok.target_id as usize, temperature)?.1),
            Some(t) => {
                self.full_logits(tok)?;
                let cfg = TruncationConfig { temperature, ..*t };
                let tr = truncate_token(tok, &cfg, self.readout)?;
                Ok(scatter(&tr.support, &tr.residual, v))
            }
        }
    }

    /// `Σ_t r_t ⊗ h_t`, the LM-head gradient of the summed token losses.
    pub fn dense_head_gradient(&self, sample: &SampleRecord, temperature: f64) -> Result<DenseHeadGradient> {
        self.head_gradient(sample, temperature, None)
    }

    /// Head gradient with optional truncation of every residual.
    pub fn head_gradient(
        &self,
        sample: &SampleRecord,
        temperature: f64,
        trunc: Option<&TruncationConfig>,
    ) -> Result<DenseHeadGradient> {
        let mut g = DenseHeadGradient::zeros(self.readout.vocab_size(), self.readout.hidden_dim());
        for tok in &sample.tokens {
            self.check_hidden(tok)?;
            let r = self.token_residual(tok, temperature, trunc)?;
            g.add_outer(&r, &tok.hidden);
        }
        Ok(g)
    }

    /// `Σ_t (Wᵀ r_t) ⊗ h_t` (d×d), the GH analogue of the head gradient.
    pub fn gh_gradient(
        &self,
        sample: &SampleRecord,
        temperature: f64,
        trunc: Option<&TruncationConfig>,
    ) -> Result<DenseHeadGradient> {
        let d = self.readout.hidden_dim();
        let mut g = DenseHeadGradient::zeros(d, d);
        for tok in &sample.tokens {
            self.check_hidden(tok)?;
            let r = self.token_residual(tok, temperature, trunc)?;
            g.add_outer(&self.project(&r), &tok.hidden);
        }
        Ok(g)
    }

    /// `Wᵀ r` for a dense residual.
    pub fn project(&self, r: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.readout.hidden_dim()];
        for (v, &rv) in r.iter().enumerate() {
            if rv != 0.0 {
                for (gi, &w) in g.iter_mut().zip(self.readout.row(v)) {
                    *gi += rv * w as f64;
                }
            }
        }
        g
    }

    /// `⟨∇_W ℓ(x_i), ∇_W ℓ(x_q)⟩_F`, optionally on truncated residuals.
    pub fn dense_influence(
        &self,
        sample_i: &SampleRecord,
        sample_q: &SampleRecord,
        temperature: f64,
        trunc: Option<&TruncationConfig>,
    ) -> Result<f64> {
        let gi = self.head_gradient(sample_i, temperature, trunc)?;
        let gq = self.head_gradient(sample_q, temperature, trunc)?;
        Ok(gi.frobenius_inner(&gq))
    }

    /// Both sides of `⟨Wᵀr_q, Wᵀr_i⟩ = r_qᵀ (W Wᵀ) r_i`, the right side via the
    /// explicit V×V kernel.
    pub fn gh_kernel_check(&self, r_q: &[f64], r_i: &[f64]) -> Result<(f64, f64)> {
        let v = self.readout.vocab_size();
        for r in [r_q, r_i] {
            if r.len() != v {
                return Err(RiseError::DimensionMismatch {
                    what: "residual",
                    expected: v,
                    found: r.len(),
                });
            }
        }
        let lhs: f64 = self
            .project(r_q)
            .iter()
            .zip(self.project(r_i))
            .map(|(a, b)| a * b)
            .sum();
        let mut kernel = vec![0.0f64; v * v];
        for a in 0..v {
            for b in 0..v {
                kernel[a * v + b] = self
                    .readout
                    .row(a)
                    .iter()
                    .zip(self.readout.row(b))
                    .map(|(&x, &y)| x as f64 * y as f64)
                    .sum();
            }
        }
        let mut rhs = 0.0;
        for a in 0..v {
            for b in 0..v {
                rhs += r_q[a] * kernel[a * v + b] * r_i[b];
            }
        }
        Ok((lhs, rhs))
    }
}
