//! CountSketch operators.
//!
//! `CS(x)_j = Σ_{i: η(i) = j} s(i) x_i`, with bucket map `η: [D) → [K)` and sign
//! map `s: [D) → {−1, +1}`. Keyed families evaluate both maps on the fly from a
//! 64-bit mixer keyed by `(seed, channel)`, so sparse application touches only
//! the nonzero coordinates and never materializes a D-sized table.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result, RiseError};
use crate::hashing::{derive_seed, mix64};

/// Salts one user seed into independent per-channel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelTag {
    /// Vocabulary-space residual.
    Residual,
    /// Hidden state.
    Hidden,
    /// Residual projected through the LM head.
    Gh,
    Custom(u64),
}

impl ChannelTag {
    fn salt(self) -> u64 {
        match self {
            ChannelTag::Residual => u64::from(b'r'),
            ChannelTag::Hidden => u64::from(b'h'),
            ChannelTag::Gh => u64::from(b'g'),
            ChannelTag::Custom(x) => mix64(x ^ 0x5bd1_e995_0000_0000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Maps {
    Keyed { bucket_key: u64, sign_key: u64 },
    Table { buckets: Vec<u32>, signs: Vec<i8> },
}

/// A bucket/sign hash pair for one CountSketch operator `R^D → R^K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    input_dim: usize,
    output_dim: usize,
    maps: Maps,
}

/// Builds the keyed family for `(D, K, seed, tag)`.
pub fn make_family(input_dim: usize, output_dim: usize, seed: u64, tag: ChannelTag) -> Result<HashFamily> {
    HashFamily::keyed(input_dim, output_dim, seed, tag)
}

impl HashFamily {
    pub fn keyed(input_dim: usize, output_dim: usize, seed: u64, tag: ChannelTag) -> Result<Self> {
        check_dims(input_dim, output_dim)?;
        let salt = tag.salt();
        Ok(HashFamily {
            input_dim,
            output_dim,
            maps: Maps::Keyed {
                bucket_key: derive_seed(seed, salt.wrapping_mul(2)),
                sign_key: derive_seed(seed, salt.wrapping_mul(2) + 1),
            },
        })
    }

    /// A seeded family whose bucket map is injective (requires `K >= D`), so the
    /// sketch is a signed coordinate embedding and preserves inner products exactly.
    pub fn injective(input_dim: usize, output_dim: usize, seed: u64, tag: ChannelTag) -> Result<Self> {
        check_dims(input_dim, output_dim)?;
        if output_dim < input_dim {
            return invalid(format!(
                "injective family needs K >= D, got D={input_dim}, K={output_dim}"
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag.salt() ^ 0x1f1f));
        let mut slots: Vec<u32> = (0..output_dim as u32).collect();
        slots.shuffle(&mut rng);
        slots.truncate(input_dim);
        let signs = (0..input_dim)
            .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
            .collect();
        Self::from_tables(output_dim, slots, signs)
    }

    /// Explicit tables; `signs` entries must be ±1.
    pub fn from_tables(output_dim: usize, buckets: Vec<u32>, signs: Vec<i8>) -> Result<Self> {
        check_dims(buckets.len(), output_dim)?;
        if signs.len() != buckets.len() {
            return Err(RiseError::DimensionMismatch {
                what: "sign table",
                expected: buckets.len(),
                found: signs.len(),
            });
        }
        if buckets.iter().any(|&b| b as usize >= output_dim) {
            return invalid("bucket table entry out of range");
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return invalid("sign table entries must be +1 or -1");
        }
        Ok(HashFamily {
            input_dim: buckets.len(),
            output_dim,
            maps: Maps::Table { buckets, signs },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `η(i)`. Caller guarantees `i < D`.
    #[inline]
    pub fn bucket(&self, i: usize) -> usize {
        match &self.maps {
            Maps::Keyed { bucket_key, .. } => {
                let h = mix64(bucket_key ^ mix64(i as u64));
                ((h as u128 * self.output_dim as u128) >> 64) as usize
            }
            Maps::Table { buckets, .. } => buckets[i] as usize,
        }
    }

    /// `s(i)` as ±1.0. Caller guarantees `i < D`.
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        match &self.maps {
            Maps::Keyed { sign_key, .. } => {
                if mix64(sign_key ^ mix64(!(i as u64))) >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Maps::Table { signs, .. } => signs[i] as f64,
        }
    }
}

fn check_dims(input_dim: usize, output_dim: usize) -> Result<()> {
    if input_dim == 0 || output_dim == 0 {
        return invalid(format!("sketch dims must be >= 1, got D={input_dim}, K={output_dim}"));
    }
    Ok(())
}

/// Sketches a dense D-vector.
pub fn sketch_dense<T: Copy + Into<f64>>(x: &[T], fam: &HashFamily) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fam.output_dim];
    sketch_dense_into(x, fam, &mut out)?;
    Ok(out)
}

/// Accumulates `CS(x)` into `out` (which is not cleared).
pub fn sketch_dense_into<T: Copy + Into<f64>>(x: &[T], fam: &HashFamily, out: &mut [f64]) -> Result<()> {
    if x.len() != fam.input_dim {
        return Err(RiseError::DimensionMismatch {
            what: "sketch input",
            expected: fam.input_dim,
            found: x.len(),
        });
    }
    check_out(out, fam)?;
    for (i, &xi) in x.iter().enumerate() {
        out[fam.bucket(i)] += fam.sign(i) * xi.into();
    }
    Ok(())
}

/// Sketches the sparse vector with nonzeros `vals` at `ids`.
pub fn sketch_sparse(ids: &[u32], vals: &[f64], fam: &HashFamily) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fam.output_dim];
    sketch_sparse_into(ids, vals, fam, &mut out)?;
    Ok(out)
}

/// Scatter-adds the sparse vector into `out`; returns the number of accumulations.
pub fn sketch_sparse_into(ids: &[u32], vals: &[f64], fam: &HashFamily, out: &mut [f64]) -> Result<usize> {
    if ids.len() != vals.len() {
        return Err(RiseError::DimensionMismatch {
            what: "sparse values",
            expected: ids.len(),
            found: vals.len(),
        });
    }
    check_out(out, fam)?;
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= fam.input_dim) {
        return invalid(format!("sparse id {bad} out of range for D={}", fam.input_dim));
    }
    let mut count = 0;
    for (&id, &v) in ids.iter().zip(vals) {
        let i = id as usize;
        out[fam.bucket(i)] += fam.sign(i) * v;
        count += 1;
    }
    Ok(count)
}

fn check_out(out: &[f64], fam: &HashFamily) -> Result<()> {
    if out.len() != fam.output_dim {
        return Err(RiseError::DimensionMismatch {
            what: "sketch output",
            expected: fam.output_dim,
            found: out.len(),
        });
    }
    Ok(())
}
