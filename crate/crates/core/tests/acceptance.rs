//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rise_core::analysis::{run_peaked_diagnostics, variance_bench, PeakedParams, Scenario, Verdict};
use rise_core::datamodel::format::{
    index_file_len, read_dump, read_index, read_readout, write_dump, write_index, write_index_to, write_readout,
};
use rise_core::datamodel::synth::{gen_synthetic, PlantedSpec, SyntheticParams};
use rise_core::features::{signature_dims, sketch_aggregate_with, FactorNorm, SketchFamilies};
use rise_core::indexer::{build_index, per_query_rankings};
use rise_core::metrics::per_k_eval;
use rise_core::oracle::{dense_residual, Oracle};
use rise_core::{ChannelWeights, ModelReadout, RiseConfig, SketchSpec};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            pass = false;
            detail.push_str(&format!(
                "; runtime {:.2}s over budget {:.0}s",
                elapsed.as_secs_f64(),
                b.as_secs_f64()
            ));
        }
    }
    Outcome {
        name,
        pass,
        detail,
        elapsed,
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn bench_line(scenario: Scenario, trials: usize) -> (bool, String) {
    let r = variance_bench(scenario, trials, 42).expect("bench runs");
    let checks: Vec<String> = r
        .checks
        .iter()
        .map(|c| {
            format!(
                "{}: {:.6e} vs {:.6e} [{}]",
                c.name,
                c.observed,
                c.reference,
                if c.pass { "ok" } else { "fail" }
            )
        })
        .collect();
    (
        r.verdict == Verdict::Pass,
        format!(
            "trials={trials} mean={:.6} var={:.6}; {}",
            r.mean,
            r.variance,
            checks.join("; ")
        ),
    )
}

fn truncation_identity() -> (bool, String) {
    bench_line(Scenario::TruncationL1, 1000)
}

fn countsketch_moments() -> (bool, String) {
    bench_line(Scenario::Cs, 20_000)
}

fn gaussian_rp_variance() -> (bool, String) {
    bench_line(Scenario::Rp, 100_000)
}

fn fusion_covariance() -> (bool, String) {
    bench_line(Scenario::FusionCov, 100_000)
}

fn oracle_exactness() -> (bool, String) {
    let (v, d) = (32, 8);
    let data = gen_synthetic(&SyntheticParams {
        n_samples: 40,
        tokens_per_sample: 6,
        vocab_size: v,
        hidden_dim: d,
        k_store: v,
        seed: 11,
        n_queries: 0,
        planted: None,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pool = data.pool.clone();
    for s in &mut pool {
        let t = rng.random_range(1..=6);
        s.tokens.truncate(t);
    }
    let cfg = RiseConfig {
        sketch: SketchSpec::new(v, d, d, 5),
        weights: ChannelWeights {
            lambda_rh: 1.0,
            lambda_gh: 1.0,
            normalize_sample: false,
        },
        ..RiseConfig::default()
    };
    let fams = SketchFamilies::injective(&cfg.sketch, v, d).unwrap();
    let oracle = Oracle::new(&data.readout).unwrap();
    let tau = cfg.trunc.temperature;
    let mut worst: f64 = 0.0;
    for pair in 0..20 {
        let (si, sq) = (&pool[2 * pair], &pool[2 * pair + 1]);
        let fi = sketch_aggregate_with(si, &data.readout, &cfg, &fams, FactorNorm::Raw).unwrap();
        let fq = sketch_aggregate_with(sq, &data.readout, &cfg, &fams, FactorNorm::Raw).unwrap();
        let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum::<f64>();
        let rh = oracle
            .head_gradient(si, tau, Some(&cfg.trunc))
            .unwrap()
            .frobenius_inner(&oracle.head_gradient(sq, tau, Some(&cfg.trunc)).unwrap());
        let gh = oracle
            .gh_gradient(si, tau, Some(&cfg.trunc))
            .unwrap()
            .frobenius_inner(&oracle.gh_gradient(sq, tau, Some(&cfg.trunc)).unwrap());
        for (sk, dense) in [(dot(&fi.phi_rh, &fq.phi_rh), rh), (dot(&fi.phi_gh, &fq.phi_gh), gh)] {
            worst = worst.max((sk - dense).abs() / dense.abs());
        }
    }

    let mut kernel_worst: f64 = 0.0;
    for inst in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let w: Vec<f32> = (0..v * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
            .collect();
        let readout = ModelReadout::new(v, d, w).unwrap();
        let z_q: Vec<f64> = (0..v).map(|_| rng.sample(StandardNormal)).collect();
        let z_i: Vec<f64> = (0..v).map(|_| rng.sample(StandardNormal)).collect();
        let r_q = dense_residual(&z_q, rng.random_range(0..v), 1.0).unwrap().1;
        let r_i = dense_residual(&z_i, rng.random_range(0..v), 1.0).unwrap().1;
        let (lhs, rhs) = Oracle::new(&readout).unwrap().gh_kernel_check(&r_q, &r_i).unwrap();
        kernel_worst = kernel_worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    (
        worst <= 1e-4 && kernel_worst <= 1e-9,
        format!("max channel rel err {worst:.3e} (<= 1e-4) over 20 pairs; max kernel err {kernel_worst:.3e} (<= 1e-9) over 1000 instances"),
    )
}

fn planted_params() -> SyntheticParams {
    SyntheticParams {
        n_samples: 500,
        tokens_per_sample: 8,
        vocab_size: 1000,
        hidden_dim: 32,
        k_store: 64,
        seed: 42,
        n_queries: 20,
        planted: Some(PlantedSpec {
            n_positive: 50,
            strength: 1.0,
        }),
    }
}

fn planted_retrieval() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let params = planted_params();
    let data = gen_synthetic(&params).unwrap();
    write_readout(p("readout.bin"), &data.readout).unwrap();
    write_dump(p("pool.dump"), params.hidden_dim, params.k_store, &data.pool).unwrap();
    write_dump(p("queries.dump"), params.hidden_dim, params.k_store, &data.queries).unwrap();

    let cfg = RiseConfig::default();
    let readout = read_readout(p("readout.bin")).unwrap();
    let (_, pool) = read_dump(p("pool.dump")).unwrap();
    let (_, queries) = read_dump(p("queries.dump")).unwrap();
    write_index(p("pool.idx"), &build_index(&pool, &readout, &cfg).unwrap()).unwrap();
    write_index(p("queries.idx"), &build_index(&queries, &readout, &cfg).unwrap()).unwrap();
    let rankings = per_query_rankings(
        &read_index(p("pool.idx")).unwrap(),
        &read_index(p("queries.idx")).unwrap(),
    )
    .unwrap();
    let labels: HashMap<u64, bool> = data.labels.iter().enumerate().map(|(i, &l)| (i as u64, l)).collect();
    let table = per_k_eval(&rankings, &labels, &[50]).unwrap();
    let ap = table.per_k[0].auprc.unwrap_or(0.0);
    (
        ap >= 0.9,
        format!(
            "macro auPRC@50 = {ap:.4} (>= 0.9; random baseline ~0.1), queries used {}",
            table.per_k[0].queries_used
        ),
    )
}

fn storage_accounting() -> (bool, String) {
    let floats = signature_dims(&SketchSpec::new(256, 256, 256, 42)).total_floats();
    let params = SyntheticParams {
        planted: None,
        n_queries: 0,
        ..planted_params()
    };
    let data = gen_synthetic(&params).unwrap();
    let cfg = RiseConfig {
        sketch: SketchSpec::new(64, 64, 64, 42),
        ..RiseConfig::default()
    };
    let index = build_index(&data.pool, &data.readout, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_index(dir.path().join("pool.idx"), &index).unwrap();
    let on_disk = std::fs::metadata(dir.path().join("pool.idx")).unwrap().len();
    let expected = 48 + 500 * (8 + 2 * 64 * 64 * 4);
    (
        floats == 131_072 && on_disk == expected && written == expected && index_file_len(500, &cfg.sketch) == expected,
        format!("floats/sample at K=256: {floats} (131072); index bytes {on_disk} vs arithmetic {expected}"),
    )
}

fn determinism() -> (bool, String) {
    let data = gen_synthetic(&planted_params()).unwrap();
    let again = gen_synthetic(&planted_params()).unwrap();
    let cfg = RiseConfig::default();
    let bytes = |threads: usize,
                 pool: &[rise_core::SampleRecord],
                 queries: &[rise_core::SampleRecord],
                 readout: &ModelReadout| {
        let tp = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        tp.install(|| {
            let idx = build_index(pool, readout, &cfg).unwrap();
            let q = build_index(queries, readout, &cfg).unwrap();
            let mut buf = Vec::new();
            write_index_to(&mut buf, &idx).unwrap();
            (buf, per_query_rankings(&idx, &q).unwrap())
        })
    };
    let (b1, r1) = bytes(1, &data.pool, &data.queries, &data.readout);
    let (b2, r2) = bytes(4, &again.pool, &again.queries, &again.readout);
    let (b3, r3) = bytes(4, &data.pool, &data.queries, &data.readout);
    let same_bytes = b1 == b2 && b2 == b3;
    let same_rank = r1 == r2 && r2 == r3;
    (
        same_bytes && same_rank,
        format!("index bytes identical: {same_bytes}; rankings identical (1 vs 4 threads): {same_rank}"),
    )
}

fn diagnostics_trend() -> (bool, String) {
    let rows = run_peaked_diagnostics(&PeakedParams::default()).unwrap();
    let at128 = rows.iter().find(|r| r.k == 128).unwrap();
    let monotone = rows.windows(2).all(|w| w[1].gh_cosine >= w[0].gh_cosine);
    let cos: Vec<String> = rows.iter().map(|r| format!("K={}:{:.4}", r.k, r.gh_cosine)).collect();
    (
        at128.tail_energy > at128.prob_mass && monotone,
        format!(
            "K=128 E_tail {:.4} vs M {:.4}; GH cosine {}",
            at128.tail_energy,
            at128.prob_mass,
            cos.join(" ")
        ),
    )
}

fn main() {
    let outcomes = vec![
        run("truncation identity", secs(5), truncation_identity),
        run("countsketch unbiasedness and variance", secs(30), countsketch_moments),
        run("gaussian projection variance", secs(30), gaussian_rp_variance),
        run("fusion covariance", secs(60), fusion_covariance),
        run("oracle exactness", secs(10), oracle_exactness),
        run("planted retrieval", secs(60), planted_retrieval),
        run("storage accounting", None, storage_accounting),
        run("determinism", None, determinism),
        run("diagnostics trend", None, diagnostics_trend),
    ];
    for o in &outcomes {
        println!(
            "{} {} ({:.2}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
