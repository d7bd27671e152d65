//! Adversarial training loop: one discriminator update then one generator
//! update per step, Adam for both with the discriminator at a tenth of the
//! generator's learning rate, per-epoch derived shuffle order, CSV loss log,
//! and bitwise-resumable checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_sample, DatasetManifest, FrameStore, Mode, Sample};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss_d_grad, adversarial_loss_g_grad, joint_generator_loss, l1_loss_grad,
    perceptual_losses, FeatureExtractor, LossComponents, LossWeights,
};
use crate::networks::checkpoint::Archive;
use crate::networks::generator::{concat_channels, Generator};
use crate::networks::layers::Forward;
use crate::networks::{
    build_discriminator, build_generator, Discriminator, DiscriminatorSpec,
    GeneratorSpec,
};
use crate::num::{real, Scalar};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ours,
    UnetBaseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ours => "ours",
            ModelKind::UnetBaseline => "unet_baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ours" => Some(ModelKind::Ours),
            "unet_baseline" => Some(ModelKind::UnetBaseline),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Generator learning rate.
    pub lr_g: f64,
    /// Discriminator learning rate; `None` keeps the one-tenth rule.
    pub lr_d: Option<f64>,
    pub adam_betas: (f64, f64),
    pub seed: u64,
    pub mode: Mode,
    pub model: ModelKind,
    /// Checkpoint every this many steps; 0 checkpoints only at the end.
    pub checkpoint_every: u64,
    pub weights: LossWeights,
    pub blank_probability: f64,
    pub base_width: usize,
    pub disc_base_width: usize,
    pub image_size: usize,
    /// Global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
    /// Feed the line art to the discriminator as a third condition group;
    /// off by default.
    pub disc_condition_on_lineart: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 35,
            lr_g: 1e-4,
            lr_d: None,
            adam_betas: (0.9, 0.999),
            seed: 0,
            mode: Mode::Lineart,
            model: ModelKind::Ours,
            checkpoint_every: 0,
            weights: LossWeights::default(),
            blank_probability: 0.5,
            base_width: 64,
            disc_base_width: 64,
            image_size: 256,
            grad_clip: None,
            disc_condition_on_lineart: false,
        }
    }
}

impl TrainConfig {
    /// Discriminator learning rate: one tenth of the generator's unless
    /// explicitly overridden.
    pub fn lr_d(&self) -> f64 {
        self.lr_d.unwrap_or(self.lr_g / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        if self.lr_g <= 0.0 || self.lr_d() <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.blank_probability) {
            return Err(Error::InvalidConfig(
                "blank probability must be in [0, 1]".into(),
            ));
        }
        self.weights.validate()?;
        self.generator_spec().validate()?;
        self.discriminator_spec().validate()?;
        if self.weights.lambda_adv > 0.0
            && self.discriminator_spec().patch_map_size(self.image_size) == 0
        {
            return Err(Error::InvalidConfig(format!(
                "image size {} is too small for the patch discriminator; \
                 use at least 24 or train with lambda_adv = 0",
                self.image_size
            )));
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        match self.model {
            ModelKind::Ours => GeneratorSpec {
                base_width: self.base_width,
                image_size: self.image_size,
                ..GeneratorSpec::residual()
            },
            ModelKind::UnetBaseline => GeneratorSpec {
                base_width: self.base_width,
                image_size: self.image_size,
                ..GeneratorSpec::unet_baseline()
            },
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        match self.model {
            ModelKind::Ours => DiscriminatorSpec {
                base_width: self.disc_base_width,
                input_channels: if self.disc_condition_on_lineart { 7 } else { 6 },
                condition_on_lineart: self.disc_condition_on_lineart,
                ..Default::default()
            },
            // the baseline discriminator is conditioned on line art alone
            ModelKind::UnetBaseline => DiscriminatorSpec {
                base_width: self.disc_base_width,
                ..DiscriminatorSpec::baseline()
            },
        }
    }

    fn adam_g(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_g,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: 1e-8,
        }
    }

    fn adam_d(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_d(),
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: 1e-8,
        }
    }

    /// Content and style apply to the full model only; the baseline trains
    /// on the adversarial and l1 terms alone.
    fn perceptual_weights<T: Scalar>(&self) -> (T, T) {
        match self.model {
            ModelKind::Ours => (
                real::<T>(self.weights.effective_content(self.mode)),
                real::<T>(self.weights.lambda_style),
            ),
            ModelKind::UnetBaseline => (T::zero(), T::zero()),
        }
    }
}

/// One CSV row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: u64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub content: f64,
    pub style: f64,
    pub l1: f64,
    pub total: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,adv_g,adv_d,content,style,l1,total";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.adv_g, self.adv_d, self.content, self.style, self.l1, self.total
        )
    }
}

/// Everything that evolves during training.
pub struct TrainState<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub config: TrainConfig,
    pub epoch: u64,
    pub step_in_epoch: u64,
    pub global_step: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = build_generator(&config.generator_spec(), config.seed)?;
        let discriminator = build_discriminator(&config.discriminator_spec(), config.seed)?;
        Ok(TrainState {
            generator,
            discriminator,
            opt_g: Adam::new(config.adam_g()),
            opt_d: Adam::new(config.adam_d()),
            config,
            epoch: 0,
            step_in_epoch: 0,
            global_step: 0,
        })
    }
}

/// Stack per-sample frames into [n, c, h, w] batch tensors.
fn stack_batch<T: Scalar>(samples: &[Sample<T>]) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let n = samples.len();
    let stack = |get: &dyn Fn(&Sample<T>) -> &Tensor<T>| -> Tensor<T> {
        let shape = get(&samples[0]).shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let mut out = Tensor::zeros(&[n, c, h, w]);
        let plane = c * h * w;
        for (i, s) in samples.iter().enumerate() {
            out.data_mut()[i * plane..][..plane].copy_from_slice(get(s).data());
        }
        out
    };
    (
        stack(&|s| s.input.tensor()),
        stack(&|s| s.condition.tensor()),
        stack(&|s| s.target.tensor()),
    )
}

fn concat_batch<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!(&a.shape()[1..], &b.shape()[1..]);
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&shape, data).unwrap()
}

fn split_batch<T: Scalar>(x: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let mut shape_a = x.shape().to_vec();
    let mut shape_b = x.shape().to_vec();
    shape_a[0] = first;
    shape_b[0] -= first;
    let per = x.len() / x.shape()[0];
    let a = Tensor::from_vec(&shape_a, x.data()[..first * per].to_vec()).unwrap();
    let b = Tensor::from_vec(&shape_b, x.data()[first * per..].to_vec()).unwrap();
    (a, b)
}

/// First three channels of each sample: the candidate-frame gradient slice
/// of a discriminator input gradient.
fn candidate_grad_slice<T: Scalar>(gx: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (gx.shape()[0], gx.shape()[1], gx.shape()[2], gx.shape()[3]);
    let mut out = Tensor::zeros(&[n, 3, h, w]);
    let plane = h * w;
    for b in 0..n {
        let src = &gx.data()[b * c * plane..][..3 * plane];
        out.data_mut()[b * 3 * plane..][..3 * plane].copy_from_slice(src);
    }
    out
}

fn clip_gradients<T: Scalar>(visit: &mut dyn FnMut(&mut dyn FnMut(&mut Tensor<T>)), max_norm: f64) {
    let mut sq = T::zero();
    visit(&mut |g: &mut Tensor<T>| {
        for &v in g.data() {
            sq += v * v;
        }
    });
    let norm = sq.sqrt();
    let max = real::<T>(max_norm);
    if norm > max {
        let scale = max / norm;
        visit(&mut |g: &mut Tensor<T>| g.scale(scale));
    }
}

/// The discriminator phase: one update on (real, detached fake) patch maps.
/// The generated frames enter as plain tensors, so no gradient can reach
/// the generator from here.
pub fn discriminator_step<T: Scalar>(
    state: &mut TrainState<T>,
    pred_detached: &Tensor<T>,
    targets: &Tensor<T>,
    d_cond: &Tensor<T>,
) -> Result<f64> {
    let n = targets.shape()[0];
    let d_real_in = concat_channels(targets, d_cond);
    let d_fake_in = concat_channels(pred_detached, d_cond);
    let d_all = state
        .discriminator
        .forward(&concat_batch(&d_real_in, &d_fake_in), Forward::TRAIN);
    let (d_real, d_fake) = split_batch(&d_all, n);
    let (adv_d, g_real, g_fake) = adversarial_loss_d_grad(&d_real, &d_fake)?;
    state.discriminator.backward(&concat_batch(&g_real, &g_fake));
    if let Some(clip) = state.config.grad_clip {
        let disc = &mut state.discriminator;
        clip_gradients(
            &mut |f: &mut dyn FnMut(&mut Tensor<T>)| disc.visit_params(&mut |_, _, g| f(g)),
            clip,
        );
    }
    state.opt_d.begin_step();
    {
        let opt = &mut state.opt_d;
        state
            .discriminator
            .visit_params(&mut |name, value, grad| opt.update(&name, value, grad));
    }
    state.discriminator.zero_grads();
    Ok(adv_d.to_f64().unwrap_or(f64::NAN))
}

/// One optimization step: a discriminator update on (real, detached fake)
/// followed by a generator update on the joint objective.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &[Sample<T>],
    extractor: Option<&mut FeatureExtractor<T>>,
) -> Result<LossRecord> {
    assert!(!batch.is_empty(), "empty batch");
    let config = state.config.clone();
    let (inputs, conds, targets) = stack_batch(batch);

    // generator forward
    let g_in = match config.model {
        ModelKind::Ours => concat_channels(&inputs, &conds),
        ModelKind::UnetBaseline => inputs.clone(),
    };
    let pred = state.generator.forward(&g_in, Forward::TRAIN);

    // the discriminator condition group: previous color frame for the full
    // model (optionally plus the line art), the line art itself for the
    // baseline
    let d_cond = match config.model {
        ModelKind::Ours if config.disc_condition_on_lineart => {
            concat_channels(&conds, &inputs)
        }
        ModelKind::Ours => conds.clone(),
        ModelKind::UnetBaseline => inputs.clone(),
    };

    // with a zero adversarial weight the discriminator plays no part
    // (the spec's l1-only smoke regime); skip both of its passes
    let adversarial_active = config.weights.lambda_adv > 0.0;
    let adv_d = if adversarial_active {
        discriminator_step(state, &pred, &targets, &d_cond)?
    } else {
        0.0
    };

    // --- generator update on the joint objective ---
    let (adv_g, grad_adv) = if adversarial_active {
        let d_fake2 = state
            .discriminator
            .forward(&concat_channels(&pred, &d_cond), Forward::TRAIN);
        let (adv_g, g_d_fake) = adversarial_loss_g_grad(&d_fake2)?;
        let d_input_grad = state.discriminator.backward(&g_d_fake);
        state.discriminator.zero_grads(); // this pass trains only G
        (adv_g, candidate_grad_slice(&d_input_grad))
    } else {
        (T::zero(), Tensor::zeros(pred.shape()))
    };

    let (w_content, w_style) = config.perceptual_weights::<T>();
    let (content, style, grad_perceptual) = if w_content > T::zero() || w_style > T::zero() {
        let ex = extractor.ok_or_else(|| {
            Error::ExtractorUnavailable(
                "content/style weights are positive but no feature extractor was supplied".into(),
            )
        })?;
        let out = perceptual_losses(ex, &pred, &targets, Some((w_content, w_style)))?;
        (out.content, out.style, out.grad_pred)
    } else if let Some(ex) = extractor {
        // log the values even when they carry no gradient weight
        if config.model == ModelKind::Ours {
            let out = perceptual_losses(ex, &pred, &targets, None)?;
            (out.content, out.style, None)
        } else {
            (T::zero(), T::zero(), None)
        }
    } else {
        (T::zero(), T::zero(), None)
    };

    let (l1, grad_l1) = l1_loss_grad(&pred, &targets)?;

    let mut grad_pred = Tensor::zeros(pred.shape());
    grad_pred.add_scaled(&grad_adv, real::<T>(config.weights.lambda_adv));
    if let Some(gp) = &grad_perceptual {
        grad_pred.add_assign(gp); // already weighted
    }
    grad_pred.add_scaled(&grad_l1, real::<T>(config.weights.lambda_l1));

    state.generator.backward(&grad_pred);
    if let Some(clip) = config.grad_clip {
        let gen = &mut state.generator;
        clip_gradients(
            &mut |f: &mut dyn FnMut(&mut Tensor<T>)| gen.visit_params(&mut |_, _, g| f(g)),
            clip,
        );
    }
    state.opt_g.begin_step();
    {
        let opt = &mut state.opt_g;
        state
            .generator
            .visit_params(&mut |name, value, grad| opt.update(&name, value, grad));
    }
    state.generator.zero_grads();

    let components = LossComponents {
        adv: adv_g,
        content,
        style,
        l1,
    };
    let (total, breakdown) = joint_generator_loss(&config.weights, components, config.mode)?;

    state.global_step += 1;
    state.step_in_epoch += 1;
    let record = LossRecord {
        step: state.global_step,
        adv_g: breakdown.adv.to_f64().unwrap_or(f64::NAN),
        adv_d,
        content: breakdown.content.to_f64().unwrap_or(f64::NAN),
        style: breakdown.style.to_f64().unwrap_or(f64::NAN),
        l1: breakdown.l1.to_f64().unwrap_or(f64::NAN),
        total: total.to_f64().unwrap_or(f64::NAN),
    };
    if !record.total.is_finite() || !record.adv_d.is_finite() {
        return Err(Error::NonFinite {
            what: format!("loss record {record:?}"),
            step: record.step,
        });
    }
    Ok(record)
}

/// Deterministic sample order for one epoch.
pub fn epoch_order(seed: u64, epoch: u64, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = stream(seed, &[tag::EPOCH_SHUFFLE, epoch]);
    order.shuffle(&mut rng);
    order
}

pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub records: Vec<LossRecord>,
}

/// Full training loop over a manifest. Appends to `train_log.csv` inside
/// `run_dir` and writes `ckpt_<step>` archives there.
pub fn train<T: Scalar>(
    state: &mut TrainState<T>,
    manifest: &DatasetManifest,
    store: &FrameStore,
    mut extractor: Option<&mut FeatureExtractor<T>>,
    run_dir: &Path,
) -> Result<TrainOutcome> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    std::fs::create_dir_all(run_dir)?;
    let log_path = run_dir.join("train_log.csv");
    let fresh = state.global_step == 0;
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(&log_path)?;
    if fresh {
        writeln!(log, "{}", LossRecord::CSV_HEADER)?;
    }

    let config = state.config.clone();
    let mut records = Vec::new();
    while state.epoch < config.epochs as u64 {
        let order = epoch_order(config.seed, state.epoch, manifest.len());
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        let start_batch = state.step_in_epoch as usize;
        for batch_indices in batches.iter().skip(start_batch) {
            let mut samples = Vec::with_capacity(batch_indices.len());
            for &idx in batch_indices.iter() {
                samples.push(make_sample::<T>(
                    store,
                    manifest,
                    idx,
                    config.seed,
                    state.epoch,
                    config.blank_probability,
                )?);
            }
            let record = train_step(state, &samples, extractor.as_deref_mut())?;
            writeln!(log, "{}", record.csv_line())?;
            records.push(record);
            if config.checkpoint_every > 0 && state.global_step % config.checkpoint_every == 0 {
                log.flush()?;
                save_checkpoint(state, &checkpoint_path(run_dir, state.global_step))?;
            }
        }
        state.epoch += 1;
        state.step_in_epoch = 0;
    }
    log.flush()?;
    let final_path = checkpoint_path(run_dir, state.global_step);
    save_checkpoint(state, &final_path)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        records,
    })
}

pub fn checkpoint_path(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(format!("ckpt_{step}"))
}

/// Serialize the entire training state into one archive: both models, the
/// spectral-norm estimates, both optimizers, counters, and the config echo.
pub fn save_checkpoint<T: Scalar>(state: &mut TrainState<T>, path: &Path) -> Result<()> {
    let meta = serde_json::json!({
        "kind": "train_checkpoint",
        "format_version": 1,
        "config": serde_json::to_value(&state.config)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?,
        "generator_spec": serde_json::to_value(state.generator.spec())
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?,
        "discriminator_spec": serde_json::to_value(&state.discriminator.spec)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?,
        "epoch": state.epoch,
        "step_in_epoch": state.step_in_epoch,
        "global_step": state.global_step,
        "opt_g_step": state.opt_g.step_count(),
        "opt_d_step": state.opt_d.step_count(),
    });
    let mut archive = Archive::new(meta);
    state
        .generator
        .visit_params(&mut |name, value, _| archive.push(name, value.clone()));
    state
        .discriminator
        .visit_params(&mut |name, value, _| archive.push(name, value.clone()));
    state.discriminator.visit_state(&mut |name, data| {
        archive.push(name, Tensor::from_vec(&[data.len()], data.to_vec()).unwrap());
    });
    let (_, g_entries) = state.opt_g.export_state();
    for (name, m, v) in g_entries {
        archive.push(format!("opt_g.m.{name}"), m);
        archive.push(format!("opt_g.v.{name}"), v);
    }
    let (_, d_entries) = state.opt_d.export_state();
    for (name, m, v) in d_entries {
        archive.push(format!("opt_d.m.{name}"), m);
        archive.push(format!("opt_d.v.{name}"), v);
    }
    archive.write(path)
}

fn meta_u64(meta: &serde_json::Value, key: &str) -> Result<u64> {
    meta.get(key)
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CheckpointFormat(format!("missing {key} in checkpoint meta")))
}

/// Restore a full training state; resuming from it reproduces the
/// uninterrupted run bitwise.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TrainState<T>> {
    let archive = Archive::<T>::read(path)?;
    let config: TrainConfig = serde_json::from_value(
        archive
            .meta
            .get("config")
            .cloned()
            .ok_or_else(|| Error::CheckpointFormat("missing config in checkpoint".into()))?,
    )
    .map_err(|e| Error::CheckpointFormat(format!("bad config: {e}")))?;
    let mut state = TrainState::<T>::new(config)?;
    state.epoch = meta_u64(&archive.meta, "epoch")?;
    state.step_in_epoch = meta_u64(&archive.meta, "step_in_epoch")?;
    state.global_step = meta_u64(&archive.meta, "global_step")?;

    let mut failure: Option<Error> = None;
    let mut fill = |name: String, value: &mut Tensor<T>| {
        if failure.is_none() {
            if let Err(e) = archive.take_into(&name, value) {
                failure = Some(e);
            }
        }
    };
    state
        .generator
        .visit_params(&mut |name, value, _| fill(name, value));
    state
        .discriminator
        .visit_params(&mut |name, value, _| fill(name, value));
    if let Some(e) = failure {
        return Err(e);
    }
    let mut failure: Option<Error> = None;
    state.discriminator.visit_state(&mut |name, data| {
        if failure.is_some() {
            return;
        }
        match archive.get(&name) {
            Some(t) if t.len() == data.len() => data.copy_from_slice(t.data()),
            Some(t) => {
                failure = Some(Error::CheckpointShape {
                    name,
                    expected: vec![data.len()],
                    got: t.shape().to_vec(),
                })
            }
            None => failure = Some(Error::CheckpointFormat(format!("missing entry {name}"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let restore_opt = |prefix: &str, step: u64, model_names: &[String]| -> Result<Vec<(String, Tensor<T>, Tensor<T>)>> {
        let mut entries = Vec::new();
        for name in model_names {
            let m = archive.get(&format!("{prefix}.m.{name}"));
            let v = archive.get(&format!("{prefix}.v.{name}"));
            if let (Some(m), Some(v)) = (m, v) {
                entries.push((name.clone(), m.clone(), v.clone()));
            } else if step > 0 {
                return Err(Error::CheckpointFormat(format!(
                    "missing optimizer state for {name}"
                )));
            }
        }
        Ok(entries)
    };
    let g_step = meta_u64(&archive.meta, "opt_g_step")?;
    let d_step = meta_u64(&archive.meta, "opt_d_step")?;
    let mut g_names = Vec::new();
    state
        .generator
        .visit_params(&mut |name, _, _| g_names.push(name));
    let mut d_names = Vec::new();
    state
        .discriminator
        .visit_params(&mut |name, _, _| d_names.push(name));
    state
        .opt_g
        .import_state(g_step, restore_opt("opt_g", g_step, &g_names)?);
    state
        .opt_d
        .import_state(d_step, restore_opt("opt_d", d_step, &d_names)?);
    Ok(state)
}
