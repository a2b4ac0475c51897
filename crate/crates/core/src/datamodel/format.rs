//! Little-endian binary layouts for readouts, activation dumps, and indexes.
//!
//! Readout: `"RISEMDL1"`, u32 V, u32 d, then V·d f32 row-major.
//!
//! Dump: `"RISEDMP1"`, u32 version (=1), u32 d, u32 K_store, u64 n_samples;
//! per sample u64 sample_id, u32 T; per token u32 target_id, f32 target_logit,
//! K_store×u32 candidate_ids, K_store×f32 candidate_logits, d×f32 hidden.
//!
//! Index: `"RISEIDX1"`, u64 fingerprint, u32 K_r, u32 K_h, u32 K_g, u64 seed,
//! u32 flags (bit0 = normalize_sample), u64 n; per sample u64 sample_id,
//! (K_r·K_h)×f32 phi_rh, (K_g·K_h)×f32 phi_gh.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{InfluenceIndex, ModelReadout, SampleRecord, SampleSignature, SketchSpec, TokenRecord};
use crate::error::{Result, RiseError};

pub const READOUT_MAGIC: &[u8; 8] = b"RISEMDL1";
pub const DUMP_MAGIC: &[u8; 8] = b"RISEDMP1";
pub const INDEX_MAGIC: &[u8; 8] = b"RISEIDX1";
pub const DUMP_VERSION: u32 = 1;

pub const READOUT_HEADER_LEN: u64 = 16;
pub const DUMP_HEADER_LEN: u64 = 28;
pub const INDEX_HEADER_LEN: u64 = 48;

const FLAG_NORMALIZE_SAMPLE: u32 = 1;

pub fn readout_file_len(vocab_size: usize, hidden_dim: usize) -> u64 {
    READOUT_HEADER_LEN + 4 * (vocab_size as u64) * (hidden_dim as u64)
}

pub fn dump_token_len(k_store: usize, hidden_dim: usize) -> u64 {
    8 + 8 * k_store as u64 + 4 * hidden_dim as u64
}

pub fn dump_sample_len(tokens: usize, k_store: usize, hidden_dim: usize) -> u64 {
    12 + tokens as u64 * dump_token_len(k_store, hidden_dim)
}

pub fn index_record_len(sketch: &SketchSpec) -> u64 {
    8 + 4 * (sketch.k_h as u64) * (sketch.k_r as u64 + sketch.k_g as u64)
}

pub fn index_file_len(n: usize, sketch: &SketchSpec) -> u64 {
    INDEX_HEADER_LEN + n as u64 * index_record_len(sketch)
}

// --- primitive readers -------------------------------------------------------

fn fill<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => RiseError::Corrupt(format!("unexpected end of file in {what}")),
        _ => RiseError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    fill(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    fill(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R, what: &str) -> Result<f32> {
    Ok(f32::from_bits(read_u32(r, what)?))
}

fn read_f32_vec<R: Read>(r: &mut R, n: usize, scratch: &mut Vec<u8>, what: &str) -> Result<Vec<f32>> {
    scratch.resize(4 * n, 0);
    fill(r, scratch, what)?;
    Ok(scratch
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_u32_vec<R: Read>(r: &mut R, n: usize, scratch: &mut Vec<u8>, what: &str) -> Result<Vec<u32>> {
    scratch.resize(4 * n, 0);
    fill(r, scratch, what)?;
    Ok(scratch
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 8], kind: &str) -> Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => RiseError::Format(format!("{kind} file too short for magic")),
        _ => RiseError::Io(e),
    })?;
    if &m != magic {
        return Err(RiseError::Format(format!(
            "bad {kind} magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R, kind: &str) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(RiseError::Corrupt(format!("trailing bytes after {kind} payload"))),
    }
}

fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| RiseError::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

// --- readout -----------------------------------------------------------------

pub fn write_readout_to<W: Write>(w: &mut W, readout: &ModelReadout) -> Result<u64> {
    w.write_all(READOUT_MAGIC)?;
    w.write_all(&to_u32(readout.vocab_size(), "vocab_size")?.to_le_bytes())?;
    w.write_all(&to_u32(readout.hidden_dim(), "hidden_dim")?.to_le_bytes())?;
    write_f32s(w, readout.weights())?;
    Ok(readout_file_len(readout.vocab_size(), readout.hidden_dim()))
}

pub fn read_readout_from<R: Read>(r: &mut R) -> Result<ModelReadout> {
    check_magic(r, READOUT_MAGIC, "readout")?;
    let v = read_u32(r, "readout header")? as usize;
    let d = read_u32(r, "readout header")? as usize;
    let want = v
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| RiseError::Format(format!("readout dims {v}x{d} overflow")))?;
    let mut payload = Vec::new();
    r.take(want as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() != want {
        return Err(RiseError::Corrupt(format!(
            "readout payload is {} bytes, header {v}x{d} requires {want}",
            payload.len()
        )));
    }
    let weights = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ModelReadout::new(v, d, weights).map_err(|e| match e {
        RiseError::InvalidArgument(m) => RiseError::Format(m),
        other => other,
    })
}

pub fn write_readout(path: impl AsRef<Path>, readout: &ModelReadout) -> Result<u64> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_readout_to(&mut w, readout)?;
    w.flush()?;
    Ok(n)
}

pub fn read_readout(path: impl AsRef<Path>) -> Result<ModelReadout> {
    read_readout_from(&mut BufReader::new(File::open(path)?))
}

// --- dump --------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub hidden_dim: usize,
    pub k_store: usize,
    pub n_samples: u64,
}

/// Streaming writer. The sample count is fixed up front so the header can be
/// written before any record.
pub struct DumpWriter<W: Write> {
    inner: W,
    header: DumpHeader,
    written: u64,
    bytes: u64,
}

impl<W: Write> DumpWriter<W> {
    pub fn new(mut inner: W, header: DumpHeader) -> Result<Self> {
        inner.write_all(DUMP_MAGIC)?;
        inner.write_all(&DUMP_VERSION.to_le_bytes())?;
        inner.write_all(&to_u32(header.hidden_dim, "hidden_dim")?.to_le_bytes())?;
        inner.write_all(&to_u32(header.k_store, "k_store")?.to_le_bytes())?;
        inner.write_all(&header.n_samples.to_le_bytes())?;
        Ok(DumpWriter {
            inner,
            header,
            written: 0,
            bytes: DUMP_HEADER_LEN,
        })
    }

    pub fn write_sample(&mut self, sample: &SampleRecord) -> Result<()> {
        let DumpHeader {
            hidden_dim: d,
            k_store: k,
            n_samples,
        } = self.header;
        if self.written >= n_samples {
            return Err(RiseError::InvalidArgument(format!(
                "dump header declares {n_samples} samples; refusing to write more"
            )));
        }
        if sample.tokens.is_empty() {
            return Err(RiseError::Format(format!("sample {} has T=0", sample.sample_id)));
        }
        for tok in &sample.tokens {
            if tok.hidden.len() != d {
                return Err(RiseError::Format(format!(
                    "sample {} hidden dim {} disagrees with header d={d}",
                    sample.sample_id,
                    tok.hidden.len()
                )));
            }
            if tok.candidate_ids.len() != k || tok.candidate_logits.len() != k {
                return Err(RiseError::Format(format!(
                    "sample {} stores {} candidates, header K_store={k}",
                    sample.sample_id,
                    tok.candidate_ids.len()
                )));
            }
        }
        let w = &mut self.inner;
        w.write_all(&sample.sample_id.to_le_bytes())?;
        w.write_all(&to_u32(sample.tokens.len(), "T")?.to_le_bytes())?;
        for tok in &sample.tokens {
            w.write_all(&tok.target_id.to_le_bytes())?;
            w.write_all(&tok.target_logit.to_le_bytes())?;
            for id in &tok.candidate_ids {
                w.write_all(&id.to_le_bytes())?;
            }
            write_f32s(w, &tok.candidate_logits)?;
            write_f32s(w, &tok.hidden)?;
        }
        self.written += 1;
        self.bytes += dump_sample_len(sample.tokens.len(), k, d);
        Ok(())
    }

    /// Flushes and returns the total number of bytes written.
    pub fn finish(mut self) -> Result<u64> {
        if self.written != self.header.n_samples {
            return Err(RiseError::InvalidArgument(format!(
                "dump header declares {} samples but {} were written",
                self.header.n_samples, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.bytes)
    }
}

/// Writes `records` with the given `(d, K_store)`; returns the byte count.
pub fn write_dump_to<W: Write>(w: W, hidden_dim: usize, k_store: usize, records: &[SampleRecord]) -> Result<u64> {
    let header = DumpHeader {
        hidden_dim,
        k_store,
        n_samples: records.len() as u64,
    };
    let mut writer = DumpWriter::new(w, header)?;
    for rec in records {
        writer.write_sample(rec)?;
    }
    writer.finish()
}

pub fn write_dump(path: impl AsRef<Path>, hidden_dim: usize, k_store: usize, records: &[SampleRecord]) -> Result<u64> {
    write_dump_to(BufWriter::new(File::create(path)?), hidden_dim, k_store, records)
}

/// Streaming reader yielding one [`SampleRecord`] at a time.
pub struct DumpReader<R: Read> {
    inner: R,
    header: DumpHeader,
    remaining: u64,
    scratch: Vec<u8>,
}

impl<R: Read> DumpReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        check_magic(&mut inner, DUMP_MAGIC, "dump")?;
        let version = read_u32(&mut inner, "dump header")?;
        if version != DUMP_VERSION {
            return Err(RiseError::Format(format!("unsupported dump version {version}")));
        }
        let hidden_dim = read_u32(&mut inner, "dump header")? as usize;
        let k_store = read_u32(&mut inner, "dump header")? as usize;
        let n_samples = read_u64(&mut inner, "dump header")?;
        if hidden_dim == 0 {
            return Err(RiseError::Format("dump header declares d=0".into()));
        }
        Ok(DumpReader {
            inner,
            header: DumpHeader {
                hidden_dim,
                k_store,
                n_samples,
            },
            remaining: n_samples,
            scratch: Vec::new(),
        })
    }

    pub fn header(&self) -> DumpHeader {
        self.header
    }

    fn read_sample(&mut self) -> Result<SampleRecord> {
        let DumpHeader {
            hidden_dim: d,
            k_store: k,
            ..
        } = self.header;
        let r = &mut self.inner;
        let sample_id = read_u64(r, "sample header")?;
        let t = read_u32(r, "sample header")? as usize;
        if t == 0 {
            return Err(RiseError::Format(format!("sample {sample_id} declares T=0")));
        }
        let mut tokens = Vec::with_capacity(t.min(1 << 16));
        for _ in 0..t {
            let target_id = read_u32(r, "token record")?;
            let target_logit = read_f32(r, "token record")?;
            let candidate_ids = read_u32_vec(r, k, &mut self.scratch, "candidate ids")?;
            let candidate_logits = read_f32_vec(r, k, &mut self.scratch, "candidate logits")?;
            let hidden = read_f32_vec(r, d, &mut self.scratch, "hidden state")?;
            tokens.push(TokenRecord {
                target_id,
                target_logit,
                candidate_ids,
                candidate_logits,
                hidden,
            });
        }
        Ok(SampleRecord { sample_id, tokens })
    }

    /// Consumes the reader, failing on any bytes past the declared samples.
    pub fn finish(mut self) -> Result<()> {
        if self.remaining != 0 {
            return Err(RiseError::InvalidArgument(format!(
                "{} samples left unread",
                self.remaining
            )));
        }
        expect_eof(&mut self.inner, "dump")
    }
}

impl<R: Read> Iterator for DumpReader<R> {
    type Item = Result<SampleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let res = self.read_sample();
        if res.is_err() {
            self.remaining = 0;
        }
        Some(res)
    }
}

pub fn open_dump(path: impl AsRef<Path>) -> Result<DumpReader<BufReader<File>>> {
    DumpReader::new(BufReader::new(File::open(path)?))
}

pub fn read_dump_from<R: Read>(r: R) -> Result<(DumpHeader, Vec<SampleRecord>)> {
    let mut reader = DumpReader::new(r)?;
    let header = reader.header();
    let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
    reader.finish()?;
    Ok((header, records))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<(DumpHeader, Vec<SampleRecord>)> {
    read_dump_from(BufReader::new(File::open(path)?))
}

// --- index -------------------------------------------------------------------

pub fn write_index_to<W: Write>(w: &mut W, index: &InfluenceIndex) -> Result<u64> {
    index.validate()?;
    let s = &index.sketch;
    w.write_all(INDEX_MAGIC)?;
    w.write_all(&index.fingerprint.to_le_bytes())?;
    w.write_all(&to_u32(s.k_r, "K_r")?.to_le_bytes())?;
    w.write_all(&to_u32(s.k_h, "K_h")?.to_le_bytes())?;
    w.write_all(&to_u32(s.k_g, "K_g")?.to_le_bytes())?;
    w.write_all(&s.seed.to_le_bytes())?;
    let flags = if index.normalize_sample {
        FLAG_NORMALIZE_SAMPLE
    } else {
        0
    };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(index.len() as u64).to_le_bytes())?;
    for sig in &index.signatures {
        w.write_all(&sig.sample_id.to_le_bytes())?;
        write_f32s(w, &sig.phi_rh)?;
        write_f32s(w, &sig.phi_gh)?;
    }
    Ok(index_file_len(index.len(), s))
}

pub fn read_index_from<R: Read>(r: &mut R) -> Result<InfluenceIndex> {
    check_magic(r, INDEX_MAGIC, "index")?;
    let fingerprint = read_u64(r, "index header")?;
    let k_r = read_u32(r, "index header")? as usize;
    let k_h = read_u32(r, "index header")? as usize;
    let k_g = read_u32(r, "index header")? as usize;
    let seed = read_u64(r, "index header")?;
    let flags = read_u32(r, "index header")?;
    let n = read_u64(r, "index header")?;
    if flags & !FLAG_NORMALIZE_SAMPLE != 0 {
        return Err(RiseError::Format(format!("unknown index flags {flags:#x}")));
    }
    let sketch = SketchSpec { k_r, k_h, k_g, seed };
    sketch.validate().map_err(|e| RiseError::Format(e.to_string()))?;
    let (rh, gh) = (k_r * k_h, k_g * k_h);
    let mut scratch = Vec::new();
    let mut signatures = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let sample_id = read_u64(r, "index record")?;
        let phi_rh = read_f32_vec(r, rh, &mut scratch, "phi_rh")?;
        let phi_gh = read_f32_vec(r, gh, &mut scratch, "phi_gh")?;
        signatures.push(SampleSignature {
            sample_id,
            phi_rh,
            phi_gh,
        });
    }
    expect_eof(r, "index")?;
    let index = InfluenceIndex {
        fingerprint,
        sketch,
        normalize_sample: flags & FLAG_NORMALIZE_SAMPLE != 0,
        signatures,
    };
    index.validate().map_err(|e| RiseError::Format(e.to_string()))?;
    Ok(index)
}

pub fn write_index(path: impl AsRef<Path>, index: &InfluenceIndex) -> Result<u64> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_index_to(&mut w, index)?;
    w.flush()?;
    Ok(n)
}

pub fn read_index(path: impl AsRef<Path>) -> Result<InfluenceIndex> {
    read_index_from(&mut BufReader::new(File::open(path)?))
}
