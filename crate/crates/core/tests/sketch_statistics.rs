use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rise_core::sketch::{sketch_dense, ChannelTag, HashFamily};

#[test]
fn pair_collision_rate_matches_one_over_k() {
    let (d, k) = (10_000, 64);
    let fam = HashFamily::keyed(d, k, 42, ChannelTag::Residual).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = 200_000;
    let mut hits = 0usize;
    for _ in 0..m {
        let i = rng.random_range(0..d);
        let mut j = rng.random_range(0..d - 1);
        if j >= i {
            j += 1;
        }
        hits += (fam.bucket(i) == fam.bucket(j)) as usize;
    }
    let p = 1.0 / k as f64;
    let sigma = (p * (1.0 - p) / m as f64).sqrt();
    let rate = hits as f64 / m as f64;
    assert!(
        (rate - p).abs() <= 3.0 * sigma,
        "collision rate {rate} vs {p} ± {}",
        3.0 * sigma
    );
}

#[test]
fn signs_are_balanced() {
    let d = 10_000;
    for (seed, tag) in [
        (42, ChannelTag::Residual),
        (7, ChannelTag::Hidden),
        (42, ChannelTag::Gh),
    ] {
        let fam = HashFamily::keyed(d, 64, seed, tag).unwrap();
        let mean = (0..d).map(|i| fam.sign(i)).sum::<f64>() / d as f64;
        assert!(mean.abs() <= 4.0 / (d as f64).sqrt(), "sign mean {mean}");
    }
}

#[test]
fn channel_buckets_are_independent() {
    // Pearson chi-square on the 8×8 joint bucket table; 85.35 is the 0.999
    // quantile of chi-square with 49 degrees of freedom.
    let (n, k) = (100_000, 8);
    let fr = HashFamily::keyed(n, k, 42, ChannelTag::Residual).unwrap();
    let fh = HashFamily::keyed(n, k, 42, ChannelTag::Hidden).unwrap();
    let mut table = vec![[0f64; 8]; 8];
    for i in 0..n {
        table[fr.bucket(i)][fh.bucket(i)] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..k).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut chi2 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let e = rows[a] * cols[b] / n as f64;
            chi2 += (table[a][b] - e).powi(2) / e;
        }
    }
    assert!(chi2 < 85.35, "chi-square {chi2}");
}

#[test]
fn inner_product_unbiased_with_bounded_variance() {
    let (d, k, seeds) = (512, 32, 20_000u64);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut unit = || {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let (x, y) = (unit(), unit());
    let truth: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let est: Vec<f64> = (0..seeds)
        .map(|s| {
            let fam = HashFamily::keyed(d, k, s, ChannelTag::Custom(3)).unwrap();
            let (sx, sy) = (sketch_dense(&x, &fam).unwrap(), sketch_dense(&y, &fam).unwrap());
            sx.iter().zip(&sy).map(|(a, b)| a * b).sum()
        })
        .collect();
    let n = est.len() as f64;
    let mean = est.iter().sum::<f64>() / n;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - truth).abs() <= 4.0 * (var / n).sqrt(), "mean {mean} vs {truth}");
    assert!(var <= 1.1 / k as f64, "variance {var}");
}

#[test]
fn seeds_and_tags_change_families() {
    let a = HashFamily::keyed(1000, 64, 1, ChannelTag::Residual).unwrap();
    let b = HashFamily::keyed(1000, 64, 2, ChannelTag::Residual).unwrap();
    let c = HashFamily::keyed(1000, 64, 1, ChannelTag::Gh).unwrap();
    let same = |f: &HashFamily, g: &HashFamily| (0..1000).filter(|&i| f.bucket(i) == g.bucket(i)).count();
    assert!(same(&a, &b) < 60);
    assert!(same(&a, &c) < 60);
}
