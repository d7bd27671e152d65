//! Metric oracles: PSNR/SSIM closed forms, Fréchet closed forms, Monte-Carlo
//! FID agreement, and report behavior.

use tcvc_core::evaluation::{
    evaluate_frames, fid, frechet_distance, psnr, ssim, Conditioning, EvalReport,
    FeatureAccumulator, GaussianStats, SeededFeatures,
};
use tcvc_core::imaging::{Frame, Space};
use tcvc_core::rng::{normal, stream};
use tcvc_core::tensor::Tensor;

fn constant_frame(c: usize, h: usize, w: usize, v: f64) -> Frame<f64> {
    Frame::constant(c, h, w, v, Space::Storage).unwrap()
}

fn random_frame(seed: u64, c: usize, h: usize, w: usize) -> Frame<f64> {
    let mut rng = stream(seed, &[3]);
    let mut t = Tensor::zeros(&[c, h, w]);
    for v in t.data_mut() {
        *v = (0.5 + 0.2 * normal::<f64, _>(&mut rng)).clamp(0.0, 1.0);
    }
    Frame::new(t, Space::Storage).unwrap()
}

#[test]
fn psnr_closed_forms() {
    let a = constant_frame(3, 16, 16, 0.0);
    assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());

    let b = constant_frame(3, 16, 16, 0.5);
    let v = psnr(&a, &b, 1.0).unwrap();
    // 10 log10(1 / 0.25)
    let expect = 10.0 * (1.0f64 / 0.25).log10();
    assert!((v - expect).abs() < 1e-3, "{v} vs {expect}");
    assert!((v - 6.0206).abs() < 1e-3);
}

#[test]
fn psnr_decreases_with_noise_amplitude() {
    let base = random_frame(1, 3, 16, 16);
    // one fixed noise pattern, scaled up step by step
    let pattern: Vec<f64> = {
        let mut rng = stream(99, &[7]);
        (0..base.tensor().len())
            .map(|_| 2.0 * rng_unit(&mut rng) - 1.0)
            .collect()
    };
    let mut last = f64::INFINITY;
    for amp_step in 1..=5 {
        let amp = amp_step as f64 * 0.05;
        let mut noisy_t = base.tensor().clone();
        for (v, p) in noisy_t.data_mut().iter_mut().zip(pattern.iter()) {
            *v = (*v + amp * p).clamp(0.0, 1.0);
        }
        let noisy = Frame::new(noisy_t, Space::Storage).unwrap();
        let v = psnr(&noisy, &base, 1.0).unwrap();
        assert!(v < last, "psnr must fall as noise grows: {v} !< {last}");
        last = v;
    }
}

fn rng_unit(rng: &mut impl rand::Rng) -> f64 {
    rng.gen::<f64>()
}

#[test]
fn ssim_closed_forms() {
    let a = random_frame(2, 3, 16, 16);
    let v = ssim(&a, &a).unwrap();
    assert!((v - 1.0).abs() < 1e-9, "{v}");

    // constant 0 vs constant 1: C1 / (1 + C1)
    let zero = constant_frame(1, 16, 16, 0.0);
    let one = constant_frame(1, 16, 16, 1.0);
    let v = ssim(&zero, &one).unwrap();
    let c1 = 1e-4;
    let expect = c1 / (1.0 + c1);
    assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
    assert!((v - 9.999e-5).abs() < 1e-6);
}

#[test]
fn ssim_is_symmetric_and_rejects_small_frames() {
    let a = random_frame(4, 3, 16, 16);
    let b = random_frame(5, 3, 16, 16);
    let ab = ssim(&a, &b).unwrap();
    let ba = ssim(&b, &a).unwrap();
    assert!((ab - ba).abs() < 1e-12);

    let tiny = constant_frame(1, 8, 8, 0.5);
    assert!(ssim(&tiny, &tiny).is_err());
}

#[test]
fn metrics_never_nan_on_random_pairs() {
    for seed in 0..1000u64 {
        let a = random_frame(1000 + seed, 1, 12, 12);
        let b = random_frame(2000 + seed, 1, 12, 12);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!(!p.is_nan());
        // 12x12 is too small for the 11x11 window mean? No: one valid row/col band
        let s = ssim(&a, &b).unwrap();
        assert!(!s.is_nan());
    }
}

fn diag_stats(d: usize, mean_val: f64, var: f64) -> GaussianStats<f64> {
    let mut cov = Tensor::zeros(&[d, d]);
    for i in 0..d {
        cov.data_mut()[i * d + i] = var;
    }
    GaussianStats {
        mean: vec![mean_val; d],
        cov,
        count: 100,
    }
}

#[test]
fn frechet_closed_forms() {
    // identical gaussians
    let a = diag_stats(6, 0.3, 1.0);
    let v = frechet_distance(&a, &a).unwrap();
    assert!(v.abs() < 1e-6, "{v}");

    // equal covariance, unit mean shift: trace term cancels
    let mut b = diag_stats(6, 0.3, 1.0);
    b.mean[2] += 1.0;
    let v = frechet_distance(&a, &b).unwrap();
    assert!((v - 1.0).abs() < 1e-6, "{v}");

    // I vs 4I with equal means: d * (1 + 4 - 2*2) = d
    for d in [3usize, 8, 16] {
        let a = diag_stats(d, 0.0, 1.0);
        let b = diag_stats(d, 0.0, 4.0);
        let v = frechet_distance(&a, &b).unwrap();
        assert!((v - d as f64).abs() < 1e-6, "d={d}: {v}");
    }
}

#[test]
fn frechet_is_symmetric_and_nonnegative() {
    let mut rng = stream(11, &[1]);
    for _ in 0..5 {
        let rows_a: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| normal::<f64, _>(&mut rng)).collect())
            .collect();
        let rows_b: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| 0.5 + 2.0 * normal::<f64, _>(&mut rng)).collect())
            .collect();
        let a = GaussianStats::fit(&rows_a).unwrap();
        let b = GaussianStats::fit(&rows_b).unwrap();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
        assert!(ab >= -1e-6);
    }
}

#[test]
fn fid_basics() {
    let mut rng = stream(12, &[2]);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..5).map(|_| normal::<f64, _>(&mut rng)).collect())
        .collect();
    // same set twice
    let v = fid(&rows, &rows).unwrap();
    assert!(v.abs() < 1e-6, "{v}");

    // permutation invariance
    let mut shuffled = rows.clone();
    shuffled.reverse();
    shuffled.swap(3, 40);
    let other: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..5).map(|_| 1.0 + normal::<f64, _>(&mut rng)).collect())
        .collect();
    let a = fid(&rows, &other).unwrap();
    let b = fid(&shuffled, &other).unwrap();
    assert!((a - b).abs() < 1e-9);

    // too few rows
    assert!(fid(&rows[..1], &other).is_err());
}

#[test]
fn monte_carlo_fid_matches_closed_form() {
    // two known diagonal gaussians, d=8, n=10_000 each
    let d = 8usize;
    let n = 10_000usize;
    let mu_a = 0.0;
    let mu_b = 0.7;
    let sd_a = 1.0;
    let sd_b = 1.5;
    let mut rng = stream(77, &[5]);
    let sample = |rng: &mut rand_chacha::ChaCha12Rng, mu: f64, sd: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| mu + sd * normal::<f64, _>(rng)).collect())
            .collect()
    };
    let rows_a = sample(&mut rng, mu_a, sd_a);
    let rows_b = sample(&mut rng, mu_b, sd_b);
    let estimate = fid(&rows_a, &rows_b).unwrap();
    // closed form for diagonal: d * ((mu_a-mu_b)^2 + (sd_a - sd_b)^2)
    let exact = d as f64 * ((mu_a - mu_b).powi(2) + (sd_a - sd_b).powi(2));
    let rel = (estimate - exact).abs() / exact;
    assert!(rel < 0.05, "estimate {estimate}, exact {exact}, rel {rel}");
}

#[test]
fn accumulator_sharding_is_deterministic_and_consistent() {
    let mut rng = stream(13, &[6]);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..4).map(|_| normal::<f64, _>(&mut rng)).collect())
        .collect();
    let full = GaussianStats::fit(&rows).unwrap();

    let shard = |range: std::ops::Range<usize>| {
        let mut acc = FeatureAccumulator::new(4);
        for row in &rows[range] {
            acc.push(row);
        }
        acc
    };
    let mut merged = shard(0..77);
    merged.merge(&shard(77..200));
    let merged_stats = merged.finalize().unwrap();
    let mut merged2 = shard(0..77);
    merged2.merge(&shard(77..200));
    let merged2_stats = merged2.finalize().unwrap();
    assert_eq!(merged_stats.mean, merged2_stats.mean, "deterministic merge");
    assert_eq!(merged_stats.cov.data(), merged2_stats.cov.data());
    for (a, b) in full.mean.iter().zip(merged_stats.mean.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(full.cov.max_abs_diff(&merged_stats.cov) < 1e-10);
}

#[test]
fn fid_separates_same_corpus_halves_from_different_sources() {
    // disjoint halves of one corpus vs a differently-built corpus
    let mut features = SeededFeatures::<f64>::new(6, 3);
    use tcvc_core::evaluation::ImageFeatures;
    let corpus_a: Vec<Frame<f64>> = (0..40).map(|i| random_frame(5000 + i, 3, 16, 16)).collect();
    let corpus_b: Vec<Frame<f64>> = (0..20)
        .map(|i| {
            // different source: strong vertical structure
            let mut t = Tensor::zeros(&[3, 16, 16]);
            for c in 0..3 {
                for y in 0..16 {
                    for x in 0..16 {
                        let v = if (x + i as usize) % 4 < 2 { 0.9 } else { 0.1 };
                        t.set3(c, y, x, v);
                    }
                }
            }
            Frame::new(t, Space::Storage).unwrap()
        })
        .collect();
    let rows = |frames: &[Frame<f64>], f: &mut SeededFeatures<f64>| -> Vec<Vec<f64>> {
        frames.iter().map(|fr| f.features(fr).unwrap()).collect()
    };
    let half1 = rows(&corpus_a[..20], &mut features);
    let half2 = rows(&corpus_a[20..], &mut features);
    let other = rows(&corpus_b, &mut features);
    let within = fid(&half1, &half2).unwrap();
    let across = fid(&half1, &other).unwrap();
    assert!(
        within < across,
        "within-corpus fid {within} should be below cross-corpus {across}"
    );
}

#[test]
fn report_renders_the_quantitative_table_layout() {
    let report = EvalReport {
        model_label: "ours".into(),
        mode_label: "greyscale".into(),
        conditioning: Conditioning::Chained,
        frame_count: 100,
        fid: 9.29,
        ssim_mean: 0.78,
        psnr_mean_db: Some(17.38),
        psnr_inf_count: 0,
        feature_source: "test".into(),
        per_frame: vec![],
    };
    let text = report.render_text();
    assert!(text.contains("ours/greyscale"));
    assert!(text.contains("FID       | 9.29"));
    assert!(text.contains("SSIM      | 0.78"));
    assert!(text.contains("PSNR      | 17.38"));
}

#[test]
fn self_evaluation_is_perfect() {
    let frames: Vec<Frame<f64>> = (0..6).map(|i| random_frame(900 + i, 3, 16, 16)).collect();
    let pairs: Vec<(String, usize, Frame<f64>, Frame<f64>)> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| ("e1".to_string(), i, f.clone(), f.clone()))
        .collect();
    let mut features = SeededFeatures::<f64>::new(4, 9);
    let report = evaluate_frames(
        &pairs,
        &mut features,
        "ground-truth",
        "lineart",
        Conditioning::GtPrev,
    )
    .unwrap();
    assert_eq!(report.frame_count, 6);
    assert!((report.ssim_mean - 1.0).abs() < 1e-9);
    assert_eq!(report.psnr_inf_count, 6, "all frames hit the +inf sentinel");
    assert!(report.psnr_mean_db.is_none());
    assert!(report.fid.abs() < 1e-6);
}
