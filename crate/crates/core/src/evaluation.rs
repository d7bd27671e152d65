//! Image-quality evaluation: PSNR, SSIM, Fréchet distance over feature
//! Gaussians, and the end-to-end model report.

use serde::Serialize;

use crate::dataset::{DatasetManifest, FrameStore};
use crate::error::{Error, Result};
use crate::imaging::{blank_frame, to_greyscale, Frame};
use crate::inference::{colorize_frame, colorize_sequence};
use crate::losses::FeatureExtractor;
use crate::networks::generator::Generator;
use crate::networks::layers::{Conv2d, Forward, Relu};
use crate::num::{real, Scalar};
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB; `T::infinity()` is the zero-MSE
/// sentinel.
pub fn psnr<T: Scalar>(pred: &Frame<T>, gt: &Frame<T>, max_val: f64) -> Result<T> {
    if pred.tensor().shape() != gt.tensor().shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            left: pred.tensor().shape().to_vec(),
            right: gt.tensor().shape().to_vec(),
        });
    }
    let pred = pred.to_storage();
    let gt = gt.to_storage();
    let n = real::<T>(pred.tensor().len() as f64);
    let mut mse = T::zero();
    for (&a, &b) in pred.tensor().iter().zip(gt.tensor().iter()) {
        let d = a - b;
        mse += d * d;
    }
    mse /= n;
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    let max2 = real::<T>(max_val * max_val);
    Ok(real::<T>(10.0) * (max2 / mse).log10())
}

/// SSIM window parameters: 11x11 Gaussian, sigma 1.5, K1=0.01, K2=0.03, L=1.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_window<T: Scalar>() -> Vec<T> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut taps = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    let mut sum = 0.0;
    for y in -r..=r {
        for x in -r..=r {
            let v = (-((y * y + x * x) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            taps.push(v);
            sum += v;
        }
    }
    taps.into_iter().map(|v| real::<T>(v / sum)).collect()
}

/// Mean local structural similarity. 3-channel input is converted to
/// luminance first; valid-window positions only.
pub fn ssim<T: Scalar>(pred: &Frame<T>, gt: &Frame<T>) -> Result<T> {
    if pred.tensor().shape() != gt.tensor().shape() {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            left: pred.tensor().shape().to_vec(),
            right: gt.tensor().shape().to_vec(),
        });
    }
    let to_grey = |f: &Frame<T>| -> Result<Frame<T>> {
        let f = f.to_storage();
        if f.channels() == 3 {
            to_greyscale(&f)
        } else {
            Ok(f)
        }
    };
    let a = to_grey(pred)?;
    let b = to_grey(gt)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            op: "ssim",
            height: h,
            width: w,
        });
    }
    let window = ssim_window::<T>();
    let r = SSIM_WINDOW / 2;
    let c1 = real::<T>(SSIM_C1);
    let c2 = real::<T>(SSIM_C2);
    let two = real::<T>(2.0);
    let mut total = T::zero();
    let mut count = 0usize;
    for cy in r..h - r {
        for cx in r..w - r {
            let mut mu1 = T::zero();
            let mut mu2 = T::zero();
            let mut m11 = T::zero();
            let mut m22 = T::zero();
            let mut m12 = T::zero();
            let mut k = 0usize;
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let wgt = window[k];
                    k += 1;
                    let x = a.tensor().at3(0, cy + dy - r, cx + dx - r);
                    let y = b.tensor().at3(0, cy + dy - r, cx + dx - r);
                    mu1 += wgt * x;
                    mu2 += wgt * y;
                    m11 += wgt * x * x;
                    m22 += wgt * y * y;
                    m12 += wgt * x * y;
                }
            }
            let var1 = m11 - mu1 * mu1;
            let var2 = m22 - mu2 * mu2;
            let cov = m12 - mu1 * mu2;
            let v = ((two * mu1 * mu2 + c1) * (two * cov + c2))
                / ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2));
            total += v;
            count += 1;
        }
    }
    Ok(total / real::<T>(count as f64))
}

/// Gaussian moments of a feature set.
#[derive(Debug, Clone)]
pub struct GaussianStats<T> {
    pub mean: Vec<T>,
    /// Unbiased covariance, symmetric [d, d].
    pub cov: Tensor<T>,
    pub count: usize,
}

/// Single-pass mergeable moment accumulator; shards combine
/// deterministically in merge order.
#[derive(Debug, Clone)]
pub struct FeatureAccumulator<T> {
    dim: usize,
    count: usize,
    sum: Vec<T>,
    cross: Tensor<T>, // sum of outer products
}

impl<T: Scalar> FeatureAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        FeatureAccumulator {
            dim,
            count: 0,
            sum: vec![T::zero(); dim],
            cross: Tensor::zeros(&[dim, dim]),
        }
    }

    pub fn push(&mut self, row: &[T]) {
        assert_eq!(row.len(), self.dim, "feature dimension");
        self.count += 1;
        for (s, &v) in self.sum.iter_mut().zip(row.iter()) {
            *s += v;
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.cross.data_mut()[i * self.dim + j] += row[i] * row[j];
            }
        }
    }

    pub fn merge(&mut self, other: &FeatureAccumulator<T>) {
        assert_eq!(self.dim, other.dim);
        self.count += other.count;
        for (s, &v) in self.sum.iter_mut().zip(other.sum.iter()) {
            *s += v;
        }
        self.cross.add_assign(&other.cross);
    }

    pub fn finalize(&self) -> Result<GaussianStats<T>> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples(self.count));
        }
        let n = real::<T>(self.count as f64);
        let mean: Vec<T> = self.sum.iter().map(|&s| s / n).collect();
        let mut cov = Tensor::zeros(&[self.dim, self.dim]);
        let denom = real::<T>((self.count - 1) as f64);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let c = (self.cross.data()[i * self.dim + j] - n * mean[i] * mean[j]) / denom;
                cov.data_mut()[i * self.dim + j] = c;
            }
        }
        // enforce exact symmetry against accumulation rounding
        for i in 0..self.dim {
            for j in 0..i {
                let v = (cov.data()[i * self.dim + j] + cov.data()[j * self.dim + i])
                    * real::<T>(0.5);
                cov.data_mut()[i * self.dim + j] = v;
                cov.data_mut()[j * self.dim + i] = v;
            }
        }
        Ok(GaussianStats {
            mean,
            cov,
            count: self.count,
        })
    }
}

impl<T: Scalar> GaussianStats<T> {
    pub fn fit(rows: &[Vec<T>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientSamples(rows.len()));
        }
        let mut acc = FeatureAccumulator::new(rows[0].len());
        for row in rows {
            acc.push(row);
        }
        acc.finalize()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

mod linalg {
    use super::*;

    /// Cyclic Jacobi eigendecomposition of a symmetric matrix.
    /// Returns (eigenvalues, eigenvectors as columns).
    pub fn jacobi_eigh<T: Scalar>(m: &Tensor<T>) -> (Vec<T>, Tensor<T>) {
        let d = m.shape()[0];
        let mut a = m.clone();
        let mut v = Tensor::zeros(&[d, d]);
        for i in 0..d {
            v.data_mut()[i * d + i] = T::one();
        }
        let tol = real::<T>(1e-14);
        for _sweep in 0..100 {
            let mut off = T::zero();
            for p in 0..d {
                for q in (p + 1)..d {
                    off += a.data()[p * d + q] * a.data()[p * d + q];
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a.data()[p * d + q];
                    if apq == T::zero() {
                        continue;
                    }
                    let app = a.data()[p * d + p];
                    let aqq = a.data()[q * d + q];
                    let tau = (aqq - app) / (real::<T>(2.0) * apq);
                    let t = if tau >= T::zero() {
                        T::one() / (tau + (T::one() + tau * tau).sqrt())
                    } else {
                        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    // rotate rows/columns p and q
                    for k in 0..d {
                        let akp = a.data()[k * d + p];
                        let akq = a.data()[k * d + q];
                        a.data_mut()[k * d + p] = c * akp - s * akq;
                        a.data_mut()[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a.data()[p * d + k];
                        let aqk = a.data()[q * d + k];
                        a.data_mut()[p * d + k] = c * apk - s * aqk;
                        a.data_mut()[q * d + k] = s * apk + c * aqk;
                    }
                    for k in 0..d {
                        let vkp = v.data()[k * d + p];
                        let vkq = v.data()[k * d + q];
                        v.data_mut()[k * d + p] = c * vkp - s * vkq;
                        v.data_mut()[k * d + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let eig = (0..d).map(|i| a.data()[i * d + i]).collect();
        (eig, v)
    }

    pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let d = a.shape()[0];
        let k = a.shape()[1];
        let n = b.shape()[1];
        assert_eq!(b.shape()[0], k);
        let mut out = Tensor::zeros(&[d, n]);
        for i in 0..d {
            for j in 0..n {
                let mut acc = T::zero();
                for l in 0..k {
                    acc += a.data()[i * k + l] * b.data()[l * n + j];
                }
                out.data_mut()[i * n + j] = acc;
            }
        }
        out
    }

    /// Symmetric PSD square root via eigendecomposition; eigenvalues below
    /// zero are clipped, with a warning when they dip beyond `-1e-3`.
    pub fn sqrtm_psd<T: Scalar>(m: &Tensor<T>, context: &str) -> Tensor<T> {
        let d = m.shape()[0];
        let (eig, v) = jacobi_eigh(m);
        let warn_at = real::<T>(-1e-3);
        let mut root = Tensor::zeros(&[d, d]);
        for (i, &lambda) in eig.iter().enumerate() {
            if lambda < warn_at {
                eprintln!(
                    "warning: {context}: clipping negative eigenvalue {lambda} to 0"
                );
            }
            let s = if lambda > T::zero() {
                lambda.sqrt()
            } else {
                T::zero()
            };
            root.data_mut()[i * d + i] = s;
        }
        // V * diag(sqrt) * V^T
        let mut vt = Tensor::zeros(&[d, d]);
        for i in 0..d {
            for j in 0..d {
                vt.data_mut()[i * d + j] = v.data()[j * d + i];
            }
        }
        matmul(&matmul(&v, &root), &vt)
    }
}

/// Fréchet distance between two Gaussians:
/// `||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2})`, with the matrix
/// square root evaluated on the symmetrized product `Sa^{1/2} Sb Sa^{1/2}`.
/// The linear algebra always runs in f64 so the clipping tolerance holds
/// even for f32 feature pipelines.
pub fn frechet_distance<T: Scalar>(a: &GaussianStats<T>, b: &GaussianStats<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            op: "frechet_distance",
            left: vec![a.dim()],
            right: vec![b.dim()],
        });
    }
    let finite = a.mean.iter().all(|v| v.is_finite())
        && b.mean.iter().all(|v| v.is_finite())
        && a.cov.all_finite()
        && b.cov.all_finite();
    if !finite {
        return Err(Error::NonFinite {
            what: "gaussian stats".into(),
            step: 0,
        });
    }
    let d = a.dim();
    let mean_a: Vec<f64> = a.mean.iter().map(|v| v.to_f64().unwrap()).collect();
    let mean_b: Vec<f64> = b.mean.iter().map(|v| v.to_f64().unwrap()).collect();
    let cov_a = a.cov.cast::<f64>();
    let cov_b = b.cov.cast::<f64>();
    let mut mean_term = 0.0f64;
    for (&x, &y) in mean_a.iter().zip(mean_b.iter()) {
        let diff = x - y;
        mean_term += diff * diff;
    }
    let root_a = linalg::sqrtm_psd(&cov_a, "frechet covariance a");
    let inner = linalg::matmul(&linalg::matmul(&root_a, &cov_b), &root_a);
    let (eig, _) = linalg::jacobi_eigh(&inner);
    let mut tr_sqrt = 0.0f64;
    for &lambda in &eig {
        if lambda < -1e-3 {
            eprintln!("warning: frechet product: clipping negative eigenvalue {lambda} to 0");
        }
        if lambda > 0.0 {
            tr_sqrt += lambda.sqrt();
        }
    }
    let mut tr_a = 0.0f64;
    let mut tr_b = 0.0f64;
    for i in 0..d {
        tr_a += cov_a.data()[i * d + i];
        tr_b += cov_b.data()[i * d + i];
    }
    let raw = mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
    // numerically-zero negatives clip to 0; the window covers the stated
    // tolerance plus rounding proportional to the covariance scale
    let window = 1e-6f64.max(1e-9 * (tr_a + tr_b).abs());
    let value = if raw < 0.0 && raw >= -window { 0.0 } else { raw };
    Ok(real::<T>(value))
}

/// FID over two feature-row sets: fit Gaussians, take the Fréchet distance.
pub fn fid<T: Scalar>(features_pred: &[Vec<T>], features_real: &[Vec<T>]) -> Result<T> {
    let a = GaussianStats::fit(features_pred)?;
    let b = GaussianStats::fit(features_real)?;
    frechet_distance(&a, &b)
}

/// Pluggable image-feature source for FID.
pub trait ImageFeatures<T: Scalar> {
    fn features(&mut self, frame: &Frame<T>) -> Result<Vec<T>>;
    fn dim(&self) -> usize;
    fn source_name(&self) -> String;
}

/// Small seeded convolutional feature extractor: two strided convolutions
/// and a global average pool. The offline stand-in for the pretrained
/// pooled-feature network.
pub struct SeededFeatures<T> {
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
    relu: Relu<T>,
    dim: usize,
    seed: u64,
}

impl<T: Scalar> SeededFeatures<T> {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, &[tag::EVAL_FEATURES]);
        let mut conv1 = Conv2d::new(3, 8, 3, 2, 1, &mut rng);
        conv1.weight.scale(real::<T>(2.0));
        let mut conv2 = Conv2d::new(8, dim, 3, 2, 1, &mut rng);
        conv2.weight.scale(real::<T>(2.0));
        SeededFeatures {
            conv1,
            conv2,
            relu: Relu::new(),
            dim,
            seed,
        }
    }
}

impl<T: Scalar> ImageFeatures<T> for SeededFeatures<T> {
    fn features(&mut self, frame: &Frame<T>) -> Result<Vec<T>> {
        let f = frame.to_storage();
        let f = if f.channels() == 1 {
            crate::imaging::replicate_grey(&f)?
        } else {
            f
        };
        let (c, h, w) = (f.channels(), f.height(), f.width());
        let x = Tensor::from_vec(&[1, c, h, w], f.tensor().data().to_vec())?;
        let y = self.conv1.forward(&x, Forward::INFER);
        let y = self.relu.forward(&y, Forward::INFER);
        let y = self.conv2.forward(&y, Forward::INFER);
        // global average pool per channel
        let (oc, oh, ow) = (y.shape()[1], y.shape()[2], y.shape()[3]);
        let plane = oh * ow;
        let mut out = Vec::with_capacity(oc);
        for ch in 0..oc {
            let mut acc = T::zero();
            for &v in &y.data()[ch * plane..][..plane] {
                acc += v;
            }
            out.push(acc / real::<T>(plane as f64));
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn source_name(&self) -> String {
        format!("seeded-test-features(d={}, seed={})", self.dim, self.seed)
    }
}

/// Pooled activations of the last tap of a perceptual extractor; the
/// production feature source when a pretrained checkpoint is available.
pub struct PooledExtractorFeatures<T> {
    extractor: FeatureExtractor<T>,
    dim: usize,
    label: String,
}

impl<T: Scalar> PooledExtractorFeatures<T> {
    pub fn new(extractor: FeatureExtractor<T>, dim: usize, label: impl Into<String>) -> Self {
        PooledExtractorFeatures {
            extractor,
            dim,
            label: label.into(),
        }
    }
}

impl<T: Scalar> ImageFeatures<T> for PooledExtractorFeatures<T> {
    fn features(&mut self, frame: &Frame<T>) -> Result<Vec<T>> {
        let f = frame.to_model();
        let f3 = if f.channels() == 1 {
            crate::imaging::replicate_grey(&f)?
        } else {
            f
        };
        let (c, h, w) = (f3.channels(), f3.height(), f3.width());
        let x = Tensor::from_vec(&[1, c, h, w], f3.tensor().data().to_vec())?;
        let taps = self.extractor.forward_taps(&x, Forward::INFER);
        let last = taps.last().expect("extractor has taps");
        let (oc, oh, ow) = (last.shape()[1], last.shape()[2], last.shape()[3]);
        let plane = oh * ow;
        let mut out = Vec::with_capacity(oc);
        for ch in 0..oc {
            let mut acc = T::zero();
            for &v in &last.data()[ch * plane..][..plane] {
                acc += v;
            }
            out.push(acc / real::<T>(plane as f64));
        }
        if out.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "pooled feature dim {} != declared {}",
                out.len(),
                self.dim
            )));
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn source_name(&self) -> String {
        self.label.clone()
    }
}

/// Which previous frame conditions inference during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Chain on generated frames, the deployment protocol.
    Chained,
    /// Condition on the ground-truth previous frame (teacher forcing).
    GtPrev,
}

impl Conditioning {
    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Chained => "chained",
            Conditioning::GtPrev => "gt_prev",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chained" => Some(Conditioning::Chained),
            "gt_prev" => Some(Conditioning::GtPrev),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameScore {
    pub episode: String,
    pub index: usize,
    /// None marks the +inf PSNR sentinel (zero MSE).
    pub psnr_db: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model_label: String,
    pub mode_label: String,
    pub conditioning: Conditioning,
    pub frame_count: usize,
    pub fid: f64,
    pub ssim_mean: f64,
    /// Mean over finite per-frame values; None when every frame hit the
    /// infinity sentinel.
    pub psnr_mean_db: Option<f64>,
    /// How many frames were excluded from the PSNR mean as +inf.
    pub psnr_inf_count: usize,
    pub feature_source: String,
    pub per_frame: Vec<FrameScore>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::InvalidConfig("report with zero frames".into()));
        }
        if self.fid < -1e-6 {
            return Err(Error::InvalidConfig(format!(
                "fid {} below the clipping tolerance",
                self.fid
            )));
        }
        Ok(())
    }

    /// Quantitative-results table, one model column.
    pub fn render_text(&self) -> String {
        let psnr = match self.psnr_mean_db {
            Some(v) => format!("{v:.2}"),
            None => "inf".to_string(),
        };
        let psnr_note = if self.psnr_inf_count > 0 {
            format!(" ({} frames at +inf excluded)", self.psnr_inf_count)
        } else {
            String::new()
        };
        let label = format!("{}/{}", self.model_label, self.mode_label);
        let mut out = String::new();
        out.push_str(&format!("Statistic | {label}\n"));
        out.push_str("----------|------------\n");
        out.push_str(&format!("FID       | {:.2}\n", self.fid));
        out.push_str(&format!("SSIM      | {:.2}\n", self.ssim_mean));
        out.push_str(&format!("PSNR      | {psnr}{psnr_note}\n"));
        out.push_str(&format!(
            "({} frames, {} conditioning, features: {})\n",
            self.frame_count,
            self.conditioning.as_str(),
            self.feature_source
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Score a list of (predicted, ground-truth) frames.
pub fn evaluate_frames<T: Scalar>(
    pairs: &[(String, usize, Frame<T>, Frame<T>)],
    features: &mut dyn ImageFeatures<T>,
    model_label: &str,
    mode_label: &str,
    conditioning: Conditioning,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_frame = Vec::with_capacity(pairs.len());
    let mut pred_acc = FeatureAccumulator::new(features.dim());
    let mut real_acc = FeatureAccumulator::new(features.dim());
    let mut ssim_sum = 0.0;
    let mut psnr_sum = 0.0;
    let mut psnr_finite = 0usize;
    let mut psnr_inf = 0usize;
    for (episode, index, pred, gt) in pairs {
        let p = psnr(pred, gt, 1.0)?;
        let s = ssim(pred, gt)?.to_f64().unwrap_or(f64::NAN);
        let psnr_db = if p.is_infinite() {
            psnr_inf += 1;
            None
        } else {
            let v = p.to_f64().unwrap_or(f64::NAN);
            psnr_sum += v;
            psnr_finite += 1;
            Some(v)
        };
        ssim_sum += s;
        per_frame.push(FrameScore {
            episode: episode.clone(),
            index: *index,
            psnr_db,
            ssim: s,
        });
        pred_acc.push(&features.features(pred)?);
        real_acc.push(&features.features(gt)?);
    }
    let fid_value = frechet_distance(&pred_acc.finalize()?, &real_acc.finalize()?)?
        .to_f64()
        .unwrap_or(f64::NAN);
    let report = EvalReport {
        model_label: model_label.to_string(),
        mode_label: mode_label.to_string(),
        conditioning,
        frame_count: pairs.len(),
        fid: fid_value,
        ssim_mean: ssim_sum / pairs.len() as f64,
        psnr_mean_db: if psnr_finite > 0 {
            Some(psnr_sum / psnr_finite as f64)
        } else {
            None
        },
        psnr_inf_count: psnr_inf,
        feature_source: features.source_name(),
        per_frame,
    };
    report.validate()?;
    Ok(report)
}

/// Run inference over a manifest under the requested conditioning regime and
/// score the results against ground truth.
pub fn evaluate<T: Scalar>(
    gen: &mut Generator<T>,
    manifest: &DatasetManifest,
    store: &FrameStore,
    conditioning: Conditioning,
    features: &mut dyn ImageFeatures<T>,
    model_label: &str,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pairs = Vec::with_capacity(manifest.len());
    // contiguous episode runs
    let mut start = 0usize;
    while start < manifest.len() {
        let episode = manifest.entries[start].episode.clone();
        let mut end = start + 1;
        while end < manifest.len() && manifest.entries[end].episode == episode {
            end += 1;
        }
        let inputs: Result<Vec<Frame<T>>> = (start..end)
            .map(|i| store.input_frame::<T>(manifest, i))
            .collect();
        let inputs = inputs?;
        let preds: Vec<Frame<T>> = match conditioning {
            Conditioning::Chained => colorize_sequence(gen, &inputs)?,
            Conditioning::GtPrev => {
                let mut preds = Vec::with_capacity(inputs.len());
                for (offset, input) in inputs.iter().enumerate() {
                    let i = start + offset;
                    let condition = if manifest.is_episode_first(i) {
                        blank_frame::<T>(3, input.height(), input.width())?
                    } else {
                        store.color_frame::<T>(manifest, i - 1)?.to_model()
                    };
                    preds.push(colorize_frame(gen, input, &condition)?);
                }
                preds
            }
        };
        for (offset, pred) in preds.into_iter().enumerate() {
            let i = start + offset;
            let gt = store.color_frame::<T>(manifest, i)?;
            pairs.push((episode.clone(), i, pred.to_storage(), gt));
        }
        start = end;
    }
    evaluate_frames(
        &pairs,
        features,
        model_label,
        manifest.mode.as_str(),
        conditioning,
    )
}
