use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rise_core::{ChannelWeights, RiseConfig, SketchSpec, TruncationConfig};

#[derive(Debug, Parser)]
#[command(name = "rise", version, about = "Sketch-based training-data influence estimation")]
pub struct Cli {
    /// Worker threads for featurization, scoring and benches (default: all cores).
    #[arg(long, global = true, env = "RISE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic readout, pool dump, query dump and labels.
    GenSynthetic(GenArgs),
    /// Featurize a dump into a signature index.
    BuildIndex(BuildArgs),
    /// Score a pool index against a query index.
    Query(QueryArgs),
    /// Per-K auPRC/auROC of per-query scores against labels.
    Eval(EvalArgs),
    /// Residual-energy and GH-fidelity sweep over candidate counts.
    Diagnose(DiagnoseArgs),
    /// Monte-Carlo check of an estimator's mean and variance.
    Varbench(VarbenchArgs),
    /// Summarize an index file.
    IndexStats(IndexStatsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Pool size.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Tokens per sample.
    #[arg(long, default_value_t = 8)]
    pub t: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = 1000)]
    pub v: usize,
    /// Hidden dimension.
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    /// Stored candidates per position.
    #[arg(long, default_value_t = 64)]
    pub kstore: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Planted positives as COUNT:STRENGTH, e.g. 50:1.0.
    #[arg(long, value_parser = parse_planted)]
    pub planted: Option<(usize, f64)>,
    /// Number of query samples.
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_planted(s: &str) -> Result<(usize, f64), String> {
    let (n, st) = s.split_once(':').ok_or("expected COUNT:STRENGTH")?;
    let n = n.parse().map_err(|e| format!("bad count {n:?}: {e}"))?;
    let st = st.parse().map_err(|e| format!("bad strength {st:?}: {e}"))?;
    Ok((n, st))
}

/// Featurization hyperparameters.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Residual sketch width K_r.
    #[arg(long, default_value_t = 128)]
    pub kr: usize,
    /// Hidden sketch width K_h.
    #[arg(long, default_value_t = 24)]
    pub kh: usize,
    /// GH sketch width K_g.
    #[arg(long, default_value_t = 128)]
    pub kg: usize,
    /// Hash seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Softmax temperature τ.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Cumulative-mass threshold ρ_cum.
    #[arg(long, default_value_t = 0.92)]
    pub rho: f64,
    /// Minimum kept candidates.
    #[arg(long, default_value_t = 4)]
    pub min_top_l: usize,
    /// Candidate cap K_max.
    #[arg(long, default_value_t = 256)]
    pub kmax: usize,
    /// RH channel weight λ_rh.
    #[arg(long, default_value_t = 0.7)]
    pub lambda_rh: f64,
    /// GH channel weight λ_gh.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_gh: f64,
    /// Skip the final per-sample ℓ2 normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

impl ConfigArgs {
    pub fn to_config(&self) -> RiseConfig {
        RiseConfig {
            sketch: SketchSpec::new(self.kr, self.kh, self.kg, self.seed),
            trunc: TruncationConfig {
                temperature: self.tau,
                rho_cum: self.rho,
                min_top_l: self.min_top_l,
                k_max: self.kmax,
            },
            weights: ChannelWeights {
                lambda_rh: self.lambda_rh,
                lambda_gh: self.lambda_gh,
                normalize_sample: !self.no_normalize,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Readout file (RISEMDL1).
    pub readout: PathBuf,
    /// Activation dump (RISEDMP1).
    pub dump: PathBuf,
    /// Index file to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Pool index.
    pub index: PathBuf,
    /// Query index built with the same configuration.
    pub queries: PathBuf,
    /// Output directory for scores.tsv, ranking.tsv and the top/bottom lists.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Write the K highest-scoring pool samples to topk.tsv.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Write the K lowest-scoring pool samples to bottomk.tsv.
    #[arg(long)]
    pub bottomk: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Per-query scores (query_id, sample_id, score).
    pub scores: PathBuf,
    /// Labels (sample_id, 0/1).
    pub labels: PathBuf,
    /// Evaluation set sizes K (top-K ∪ bottom-K).
    #[arg(long, value_delimiter = ',', default_value = "5,10,50")]
    pub ks: Vec<usize>,
    /// Scores of a second (predict-mode) run; adds the unified μ ± δ summary.
    #[arg(long)]
    pub predict_scores: Option<PathBuf>,
    /// Metrics file (JSON lines); stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Readout file; needs a full-vocabulary dump (K_store = V).
    #[arg(requires = "dump", conflicts_with = "peaked")]
    pub readout: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    /// Use peaked synthetic logits instead of a dump.
    #[arg(long)]
    pub peaked: bool,
    /// Candidate counts for the fixed top-K sweep.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    pub ks: Vec<usize>,
    /// Softmax temperature τ.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Synthetic vocabulary size.
    #[arg(long, default_value_t = 10_000)]
    pub vocab: usize,
    /// Synthetic hidden dimension.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Synthetic draws.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Synthetic logit temperature (smaller is more peaked).
    #[arg(long, default_value_t = 0.5)]
    pub logit_temperature: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Report file (JSON lines); stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarbenchArgs {
    /// One of rp, cs, factorized, fusion_cov, truncation_l1.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Report file (JSON lines); stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexStatsArgs {
    pub index: PathBuf,
}
