use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use rise_core::analysis::{
    diagnose_records, run_peaked_diagnostics, variance_bench, DiagnosticsRow, PeakedParams, Scenario,
};
use rise_core::datamodel::format::{
    index_file_len, open_dump, read_dump, read_index, read_readout, write_dump, write_index, write_readout,
};
use rise_core::datamodel::synth::{gen_synthetic, PlantedSpec, SyntheticParams};
use rise_core::indexer::{
    bottomk, build_index, mean_query_signature, per_query_rankings, score_all, topk, ScoredCandidate,
};
use rise_core::metrics::{per_k_eval, unified, MetricTable};
use rise_core::{signature_dims, ModelReadout, RiseConfig, RiseError, SampleRecord};

use crate::args::{BuildArgs, DiagnoseArgs, EvalArgs, GenArgs, IndexStatsArgs, QueryArgs, VarbenchArgs};
use crate::manifest::{beside, ManifestBuilder};
use crate::tsv::{read_labels, read_scores};

fn config_json(cfg: &RiseConfig) -> serde_json::Value {
    json!({
        "k_r": cfg.sketch.k_r,
        "k_h": cfg.sketch.k_h,
        "k_g": cfg.sketch.k_g,
        "seed": cfg.sketch.seed,
        "temperature": cfg.trunc.temperature,
        "rho_cum": cfg.trunc.rho_cum,
        "min_top_l": cfg.trunc.min_top_l,
        "k_max": cfg.trunc.k_max,
        "lambda_rh": cfg.weights.lambda_rh,
        "lambda_gh": cfg.weights.lambda_gh,
        "normalize_sample": cfg.weights.normalize_sample,
    })
}

/// JSON-lines sink: a file when given, stdout otherwise.
fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(w: &mut dyn Write, rec: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn gen_synthetic_cmd(a: &GenArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("gen-synthetic");
    let params = SyntheticParams {
        n_samples: a.n,
        tokens_per_sample: a.t,
        vocab_size: a.v,
        hidden_dim: a.d,
        k_store: a.kstore,
        seed: a.seed,
        n_queries: a.queries,
        planted: a
            .planted
            .map(|(n_positive, strength)| PlantedSpec { n_positive, strength }),
    };
    m.config = json!({
        "n": a.n, "t": a.t, "v": a.v, "d": a.d, "kstore": a.kstore, "seed": a.seed, "queries": a.queries,
        "planted": a.planted.map(|(n, s)| json!({"n_positive": n, "strength": s})),
    });
    let data = gen_synthetic(&params)?;
    fs::create_dir_all(&a.output)?;
    let out = |name: &str| a.output.join(name);

    write_readout(out("readout.bin"), &data.readout)?;
    write_dump(out("pool.dump"), a.d, a.kstore, &data.pool)?;
    write_dump(out("queries.dump"), a.d, a.kstore, &data.queries)?;
    let mut labels = BufWriter::new(File::create(out("labels.tsv"))?);
    writeln!(labels, "sample_id\tlabel")?;
    for (s, &l) in data.pool.iter().zip(&data.labels) {
        writeln!(labels, "{}\t{}", s.sample_id, l as u8)?;
    }
    labels.flush()?;
    for name in ["readout.bin", "pool.dump", "queries.dump", "labels.tsv"] {
        m.output(out(name));
    }
    m.finish(Some(&out("manifest.json")))
}

fn check_dims(records: &[SampleRecord], dump_d: usize, readout: &ModelReadout) -> Result<(), RiseError> {
    if dump_d != readout.hidden_dim() {
        return Err(RiseError::DimensionMismatch {
            what: "hidden dimension d (dump vs readout)",
            expected: readout.hidden_dim(),
            found: dump_d,
        });
    }
    let v = readout.vocab_size();
    let max_id = records
        .iter()
        .flat_map(|s| &s.tokens)
        .flat_map(|t| t.candidate_ids.iter().chain(std::iter::once(&t.target_id)))
        .max();
    if let Some(&id) = max_id {
        if id as usize >= v {
            return Err(RiseError::DimensionMismatch {
                what: "vocabulary size V (dump token ids vs readout)",
                expected: v,
                found: id as usize + 1,
            });
        }
    }
    Ok(())
}

pub fn build_index_cmd(a: &BuildArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("build-index");
    let cfg = a.config.to_config();
    cfg.validate()?;
    m.config = config_json(&cfg);
    m.input(&a.readout)?;
    m.input(&a.dump)?;
    let readout = read_readout(&a.readout).with_context(|| format!("reading {}", a.readout.display()))?;
    let (header, records) = read_dump(&a.dump).with_context(|| format!("reading {}", a.dump.display()))?;
    check_dims(&records, header.hidden_dim, &readout)?;
    let index = build_index(&records, &readout, &cfg)?;
    write_index(&a.output, &index)?;
    m.output(&a.output);
    m.finish(Some(&beside(&a.output)))
}

fn write_ranking(path: &Path, rows: &[ScoredCandidate]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rank\tsample_id\tscore")?;
    for c in rows {
        writeln!(w, "{}\t{}\t{}", c.rank, c.sample_id, c.score)?;
    }
    w.flush()?;
    Ok(())
}

pub fn query_cmd(a: &QueryArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("query");
    m.input(&a.index)?;
    m.input(&a.queries)?;
    m.config = json!({ "topk": a.topk, "bottomk": a.bottomk });
    let index = read_index(&a.index).with_context(|| format!("reading {}", a.index.display()))?;
    let queries = read_index(&a.queries).with_context(|| format!("reading {}", a.queries.display()))?;
    let pooled = score_all(&index, &mean_query_signature(&queries)?)?;
    let per_query = per_query_rankings(&index, &queries)?;
    let top = a.topk.map(|k| topk(&pooled.candidates, k)).transpose()?;
    let bottom = a.bottomk.map(|k| bottomk(&pooled.candidates, k)).transpose()?;

    fs::create_dir_all(&a.output)?;
    let out = |name: &str| a.output.join(name);
    let mut w = BufWriter::new(File::create(out("scores.tsv"))?);
    writeln!(w, "query_id\tsample_id\tscore")?;
    for q in &per_query {
        for c in &q.ranking {
            writeln!(w, "{}\t{}\t{}", q.query_id, c.sample_id, c.score)?;
        }
    }
    w.flush()?;
    m.output(out("scores.tsv"));
    write_ranking(&out("ranking.tsv"), &pooled.candidates)?;
    m.output(out("ranking.tsv"));
    if let Some(rows) = top {
        write_ranking(&out("topk.tsv"), rows)?;
        m.output(out("topk.tsv"));
    }
    if let Some(rows) = bottom {
        write_ranking(&out("bottomk.tsv"), rows)?;
        m.output(out("bottomk.tsv"));
    }
    m.finish(Some(&out("manifest.json")))
}

#[derive(Serialize)]
struct Summary<'a> {
    metric: &'a str,
    value: Option<f64>,
}

fn table_for(scores: &Path, labels: &HashMap<u64, bool>, ks: &[usize]) -> Result<MetricTable> {
    let rankings = read_scores(scores).with_context(|| format!("reading {}", scores.display()))?;
    Ok(per_k_eval(&rankings, labels, ks)?)
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("eval");
    m.config = json!({ "ks": a.ks, "predict_scores": a.predict_scores });
    m.input(&a.scores)?;
    m.input(&a.labels)?;
    let labels = read_labels(&a.labels)?;
    let table = table_for(&a.scores, &labels, &a.ks)?;

    let mut w = sink(a.output.as_deref())?;
    for r in &table.records {
        write_jsonl(
            &mut *w,
            &json!({ "query_id": r.query_id, "k": r.k, "auprc": r.auprc, "auroc": r.auroc }),
        )?;
    }
    let mut summaries: Vec<(String, Option<f64>)> = Vec::new();
    for k in &table.per_k {
        summaries.push((format!("auprc@{}", k.k), k.auprc));
        summaries.push((format!("auroc@{}", k.k), k.auroc));
        summaries.push((format!("precision@{}", k.k), Some(k.precision)));
        summaries.push((format!("queries_used@{}", k.k), Some(k.queries_used as f64)));
        summaries.push((format!("queries_skipped@{}", k.k), Some(k.queries_skipped as f64)));
    }
    summaries.push(("auprc_mean_over_k".into(), table.summary_auprc));
    summaries.push(("auroc_mean_over_k".into(), table.summary_auroc));
    summaries.push(("global_auprc".into(), table.global_auprc));
    summaries.push(("global_auroc".into(), table.global_auroc));
    if let Some(p) = &a.predict_scores {
        m.input(p)?;
        let predict = table_for(p, &labels, &a.ks)?;
        if let (Some(r), Some(q)) = (table.summary_auprc, predict.summary_auprc) {
            let u = unified(r, q);
            summaries.push(("predict_auprc_mean_over_k".into(), Some(q)));
            summaries.push(("unified_mu".into(), Some(u.mu)));
            summaries.push(("unified_delta".into(), Some(u.delta)));
        }
    }
    for (metric, value) in &summaries {
        write_jsonl(&mut *w, &Summary { metric, value: *value })?;
    }
    w.flush()?;
    drop(w);
    if let Some(o) = &a.output {
        m.output(o);
    }
    m.finish(a.output.as_deref().map(beside).as_deref())
}

fn row_json(r: &DiagnosticsRow) -> serde_json::Value {
    json!({
        "k": r.k,
        "draws": r.draws,
        "prob_mass": r.prob_mass,
        "full_energy": r.full_energy,
        "gt_energy": r.gt_energy,
        "tail_energy": r.tail_energy,
        "gh_cosine": r.gh_cosine,
        "support_fraction": r.support_fraction,
        "gh_skipped": r.gh_skipped,
    })
}

pub fn diagnose_cmd(a: &DiagnoseArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("diagnose");
    let rows = match (&a.readout, &a.dump) {
        (Some(ro), Some(dp)) => {
            m.config = json!({ "ks": a.ks, "tau": a.tau });
            m.input(ro)?;
            m.input(dp)?;
            let readout = read_readout(ro)?;
            let header = open_dump(dp)?.header();
            if header.k_store != readout.vocab_size() {
                return Err(RiseError::InvalidArgument(format!(
                    "diagnose needs a full-vocabulary dump (K_store = V = {}), got K_store = {}",
                    readout.vocab_size(),
                    header.k_store
                ))
                .into());
            }
            let (_, records) = read_dump(dp)?;
            check_dims(&records, header.hidden_dim, &readout)?;
            diagnose_records(&records, &readout, &a.ks, a.tau)?
        }
        _ if a.peaked => {
            let p = PeakedParams {
                vocab_size: a.vocab,
                hidden_dim: a.hidden,
                draws: a.draws,
                ks: a.ks.clone(),
                temperature: a.tau,
                logit_temperature: a.logit_temperature,
                seed: a.seed,
            };
            m.config = json!({
                "peaked": true, "vocab": a.vocab, "hidden": a.hidden, "draws": a.draws, "ks": a.ks,
                "tau": a.tau, "logit_temperature": a.logit_temperature, "seed": a.seed,
            });
            run_peaked_diagnostics(&p)?
        }
        _ => return Err(RiseError::InvalidArgument("give READOUT DUMP or --peaked".into()).into()),
    };
    let mut w = sink(a.output.as_deref())?;
    for r in &rows {
        write_jsonl(&mut *w, &row_json(r))?;
    }
    w.flush()?;
    drop(w);
    if let Some(o) = &a.output {
        m.output(o);
    }
    m.finish(a.output.as_deref().map(beside).as_deref())
}

pub fn varbench_cmd(a: &VarbenchArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("varbench");
    m.config = json!({ "scenario": a.scenario, "trials": a.trials, "seed": a.seed });
    let scenario: Scenario = a.scenario.parse()?;
    let r = variance_bench(scenario, a.trials, a.seed)?;
    let checks: Vec<_> = r
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "observed": c.observed, "reference": c.reference, "kind": format!("{:?}", c.kind), "pass": c.pass }))
        .collect();
    let rec = json!({
        "scenario": r.scenario.name(),
        "estimator": r.estimator,
        "trials": r.trials,
        "seed": r.seed,
        "mean": r.mean,
        "variance": r.variance,
        "checks": checks,
        "verdict": r.verdict.to_string(),
    });
    let mut w = sink(a.output.as_deref())?;
    write_jsonl(&mut *w, &rec)?;
    w.flush()?;
    drop(w);
    if let Some(o) = &a.output {
        m.output(o);
    }
    m.finish(a.output.as_deref().map(beside).as_deref())
}

pub fn index_stats_cmd(a: &IndexStatsArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("index-stats");
    m.input(&a.index)?;
    let index = read_index(&a.index)?;
    let dims = signature_dims(&index.sketch);
    let norms: Vec<f64> = index.signatures.iter().map(|s| s.norm()).collect();
    let mean_norm = if norms.is_empty() {
        None
    } else {
        Some(norms.iter().sum::<f64>() / norms.len() as f64)
    };
    let rec = json!({
        "samples": index.len(),
        "k_r": index.sketch.k_r,
        "k_h": index.sketch.k_h,
        "k_g": index.sketch.k_g,
        "seed": index.sketch.seed,
        "fingerprint": format!("{:016x}", index.fingerprint),
        "normalize_sample": index.normalize_sample,
        "floats_per_sample": dims.total_floats(),
        "bytes_per_sample": dims.bytes_per_sample,
        "file_bytes": fs::metadata(&a.index)?.len(),
        "expected_file_bytes": index_file_len(index.len(), &index.sketch),
        "mean_signature_norm": mean_norm,
    });
    println!("{}", serde_json::to_string_pretty(&rec)?);
    m.finish(None)
}
