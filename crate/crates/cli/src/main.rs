//! Command-line pipeline: `prepare` builds manifests and the line-art cache,
//! `train` runs the adversarial loop, `colorize` chains a trained generator
//! over a frame sequence, `evaluate` scores a model against ground truth.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tcvc_core::dataset::{
    build_manifest, ordered_pngs, DatasetManifest, FrameStore, Mode, SplitSpec,
};
use tcvc_core::evaluation::{
    evaluate, evaluate_frames, Conditioning, ImageFeatures, PooledExtractorFeatures,
    SeededFeatures,
};
use tcvc_core::imaging::{load_png, resize, save_png, synthesize_lineart, to_greyscale, CannyParams};
use tcvc_core::inference::{colorize_sequence, emit_contact_sheet};
use tcvc_core::losses::{tiny_test_extractor, vgg19_extractor, FeatureExtractor, LossWeights};
use tcvc_core::networks::checkpoint::load_generator;
use tcvc_core::trainer::{load_checkpoint, train, ModelKind, TrainConfig, TrainState};

/// Working float width of the command-line pipeline.
type Real = f32;

#[derive(Parser)]
#[command(name = "tcvc", version, about = "Temporally coherent line-art colorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a frame directory, write split manifests and the line-art cache.
    Prepare(PrepareArgs),
    /// Train a colorization model on a prepared dataset.
    Train(TrainArgs),
    /// Colorize an ordered directory of line-art frames.
    Colorize(ColorizeArgs),
    /// Score a trained model (PSNR, SSIM, FID) against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Input style: lineart or greyscale.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset root: <root>/<episode>/<frame>.png
    #[arg(long)]
    root: Option<PathBuf>,
    /// Output directory for manifests and cache (default <root>/prepared).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training resolution.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Prepared directory holding the split manifests.
    #[arg(long)]
    prepared: Option<PathBuf>,
    /// Run directory for logs and checkpoints.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Model kind: ours or unet_baseline.
    #[arg(long)]
    model: Option<String>,
    /// Resume from a training checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct ColorizeArgs {
    /// Generator weights archive (training checkpoint or exported weights).
    #[arg(long)]
    weights: PathBuf,
    /// Directory of numerically ordered line-art PNG frames.
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also render a row-major contact sheet of the outputs.
    #[arg(long)]
    contact_sheet: bool,
    #[arg(long, default_value_t = 8)]
    sheet_columns: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Generator weights archive; optional with --self-eval.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Manifest file of the split to score.
    #[arg(long)]
    manifest: PathBuf,
    /// Dataset root the manifest paths are relative to.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Previous-frame source: chained or gt_prev.
    #[arg(long, default_value = "chained")]
    conditioning: String,
    /// Report output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model label used in the report.
    #[arg(long, default_value = "ours")]
    label: String,
    /// Score ground truth against itself (pipeline check).
    #[arg(long)]
    self_eval: bool,
}

/// Human-editable configuration; every field has a default except the
/// dataset root, and unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    dataset_root: Option<PathBuf>,
    prepared_dir: Option<PathBuf>,
    run_dir: PathBuf,
    mode: Mode,
    model: ModelKind,
    seed: u64,
    image_size: usize,
    batch_size: usize,
    epochs: usize,
    lr_g: f64,
    lr_d: Option<f64>,
    adam_betas: (f64, f64),
    base_width: usize,
    disc_base_width: usize,
    checkpoint_every: u64,
    blank_probability: f64,
    grad_clip: Option<f64>,
    disc_condition_on_lineart: bool,
    weights: LossWeights,
    canny: CannyParams,
    /// Perceptual extractor policy: auto, vgg19, or seeded.
    extractor: String,
    /// Explicit VGG-19 archive path; otherwise $TCVC_CACHE/vgg19.tcvc.
    extractor_checkpoint: Option<PathBuf>,
    /// FID feature dimension of the seeded stand-in source.
    fid_feature_dim: usize,
    /// Episode lists per split; when empty, `fractions` applies.
    splits: BTreeMap<String, Vec<String>>,
    /// Fractional split sizes, assigned over sorted split names.
    fractions: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_root: None,
            prepared_dir: None,
            run_dir: PathBuf::from("runs/default"),
            mode: Mode::Lineart,
            model: ModelKind::Ours,
            seed: 0,
            image_size: 256,
            batch_size: 16,
            epochs: 35,
            lr_g: 1e-4,
            lr_d: None,
            adam_betas: (0.9, 0.999),
            base_width: 64,
            disc_base_width: 64,
            checkpoint_every: 0,
            blank_probability: 0.5,
            grad_clip: None,
            disc_condition_on_lineart: false,
            weights: LossWeights::default(),
            canny: CannyParams::default(),
            extractor: "auto".into(),
            extractor_checkpoint: None,
            fid_feature_dim: 16,
            splits: BTreeMap::new(),
            fractions: BTreeMap::new(),
        }
    }
}

#[derive(Debug)]
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<tcvc_core::Error> for CliError {
    fn from(e: tcvc_core::Error) -> Self {
        use tcvc_core::Error as E;
        let code = match &e {
            E::Io(_)
            | E::Image { .. }
            | E::ManifestParse { .. }
            | E::EmptyEpisode(_)
            | E::EmptyDataset
            | E::UnparsableFrameName(_)
            | E::InvalidConfig(_)
            | E::InvalidSize(_)
            | E::CheckpointFormat(_)
            | E::CheckpointShape { .. }
            | E::ExtractorUnavailable(_)
            | E::InsufficientSamples(_)
            | E::IndexOutOfRange { .. } => 2,
            E::NonFinite { .. }
            | E::ShapeMismatch { .. }
            | E::OutOfRange { .. }
            | E::WrongSpace { .. }
            | E::NegativeWeight(_)
            | E::TooSmall { .. }
            | E::InvalidChannels { .. } => 1,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            message: e.to_string(),
            code: 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => cmd_train(args),
        Command::Colorize(args) => cmd_colorize(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = &common.mode {
        config.mode =
            Mode::parse(mode).ok_or_else(|| CliError::usage(format!("unknown mode {mode:?}")))?;
    }
    Ok(config)
}

fn split_spec(config: &RunConfig) -> SplitSpec {
    if !config.splits.is_empty() {
        SplitSpec::Episodes(config.splits.clone())
    } else if !config.fractions.is_empty() {
        SplitSpec::Fractions(
            config
                .fractions
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    } else {
        SplitSpec::Fractions(vec![("train".into(), 0.8), ("val".into(), 0.2)])
    }
}

fn manifest_path(prepared: &Path, split: &str) -> PathBuf {
    prepared.join(format!("{split}.manifest"))
}

fn cmd_prepare(args: PrepareArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.common)?;
    if let Some(root) = args.root {
        config.dataset_root = Some(root);
    }
    if let Some(size) = args.size {
        config.image_size = size;
    }
    let root = config
        .dataset_root
        .clone()
        .ok_or_else(|| CliError::usage("no dataset root: pass --root or set dataset_root"))?;
    if !root.is_dir() {
        return Err(CliError::usage(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let out = args
        .out
        .or(config.prepared_dir.clone())
        .unwrap_or_else(|| root.join("prepared"));

    let manifests = build_manifest(&root, &split_spec(&config), config.mode, config.image_size)?;
    std::fs::create_dir_all(&out)?;
    let store = FrameStore::new(&root);
    let mut cached = 0usize;
    for manifest in &manifests {
        manifest.save(&manifest_path(&out, &manifest.split))?;
        if config.mode == Mode::Lineart {
            for (i, entry) in manifest.entries.iter().enumerate() {
                let frame = store.color_frame::<Real>(manifest, i)?;
                let lineart = synthesize_lineart(&frame, &config.canny)?;
                save_png(&lineart, &out.join("lineart").join(&entry.relative_path))?;
                cached += 1;
            }
        }
        println!(
            "split {}: {} frames ({} episodes)",
            manifest.split,
            manifest.len(),
            manifest
                .entries
                .iter()
                .map(|e| e.episode.as_str())
                .collect::<std::collections::BTreeSet<_>>()
                .len()
        );
    }
    println!(
        "prepared {} splits into {} ({} line-art frames cached)",
        manifests.len(),
        out.display(),
        cached
    );
    Ok(())
}

/// Perceptual extractor per the configured policy. `auto` prefers a VGG-19
/// checkpoint (explicit path, then $TCVC_CACHE/vgg19.tcvc) and falls back to
/// the seeded stand-in.
fn resolve_extractor(config: &RunConfig) -> Result<FeatureExtractor<Real>, CliError> {
    let checkpoint = config.extractor_checkpoint.clone().or_else(|| {
        std::env::var_os("TCVC_CACHE").map(|dir| PathBuf::from(dir).join("vgg19.tcvc"))
    });
    match config.extractor.as_str() {
        "seeded" => Ok(tiny_test_extractor::<Real>(config.seed)),
        "vgg19" => {
            let path = checkpoint.ok_or_else(|| {
                CliError::usage("extractor = \"vgg19\" needs extractor_checkpoint or $TCVC_CACHE")
            })?;
            Ok(vgg19_extractor::<Real>(&path)?)
        }
        "auto" => match checkpoint {
            Some(path) if path.exists() => Ok(vgg19_extractor::<Real>(&path)?),
            _ => {
                eprintln!(
                    "note: no pretrained extractor checkpoint found; using the seeded stand-in"
                );
                Ok(tiny_test_extractor::<Real>(config.seed))
            }
        },
        other => Err(CliError::usage(format!(
            "unknown extractor policy {other:?}"
        ))),
    }
}

fn train_config(config: &RunConfig) -> TrainConfig {
    TrainConfig {
        batch_size: config.batch_size,
        epochs: config.epochs,
        lr_g: config.lr_g,
        lr_d: config.lr_d,
        adam_betas: config.adam_betas,
        seed: config.seed,
        mode: config.mode,
        model: config.model,
        checkpoint_every: config.checkpoint_every,
        weights: config.weights,
        blank_probability: config.blank_probability,
        base_width: config.base_width,
        disc_base_width: config.disc_base_width,
        image_size: config.image_size,
        grad_clip: config.grad_clip,
        disc_condition_on_lineart: config.disc_condition_on_lineart,
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.common)?;
    if let Some(root) = args.root {
        config.dataset_root = Some(root);
    }
    if let Some(prepared) = args.prepared {
        config.prepared_dir = Some(prepared);
    }
    if let Some(run_dir) = args.run_dir {
        config.run_dir = run_dir;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = batch;
    }
    if let Some(model) = &args.model {
        config.model = ModelKind::parse(model)
            .ok_or_else(|| CliError::usage(format!("unknown model {model:?}")))?;
    }
    let root = config
        .dataset_root
        .clone()
        .ok_or_else(|| CliError::usage("no dataset root: pass --root or set dataset_root"))?;
    if !root.is_dir() {
        return Err(CliError::usage(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    let prepared = config
        .prepared_dir
        .clone()
        .unwrap_or_else(|| root.join("prepared"));
    let manifest_file = manifest_path(&prepared, "train");
    if !manifest_file.exists() {
        return Err(CliError::usage(format!(
            "no train manifest at {} (run `tcvc prepare` first)",
            manifest_file.display()
        )));
    }
    let manifest = DatasetManifest::load(&manifest_file)?;
    if manifest.mode != config.mode || manifest.image_size != config.image_size {
        return Err(CliError::usage(format!(
            "manifest was prepared as {}/{} but the config asks for {}/{}; re-run prepare",
            manifest.mode, manifest.image_size, config.mode, config.image_size
        )));
    }

    let mut store = FrameStore::new(&root);
    store.canny = config.canny;
    let cache = prepared.join("lineart");
    if cache.is_dir() {
        store = store.with_lineart_cache(cache);
    }

    std::fs::create_dir_all(&config.run_dir)?;
    // config echo for provenance
    let echo = toml::to_string_pretty(&config)
        .map_err(|e| CliError::usage(format!("config echo failed: {e}")))?;
    std::fs::write(config.run_dir.join("config.toml"), echo)?;

    let tc = train_config(&config);
    let mut state = match &args.resume {
        Some(path) => {
            let mut st = load_checkpoint::<Real>(path)?;
            st.config.epochs = tc.epochs; // allow extending the budget
            st
        }
        None => TrainState::<Real>::new(tc)?,
    };

    let needs_extractor = config.model == ModelKind::Ours
        && (config.weights.effective_content(config.mode) > 0.0
            || config.weights.lambda_style > 0.0);
    let mut extractor = if needs_extractor {
        Some(resolve_extractor(&config)?)
    } else {
        None
    };

    let outcome = train(
        &mut state,
        &manifest,
        &store,
        extractor.as_mut(),
        &config.run_dir,
    )?;
    println!(
        "trained {} steps; final checkpoint {}",
        outcome.records.len(),
        outcome.final_checkpoint.display()
    );
    Ok(())
}

fn cmd_colorize(args: ColorizeArgs) -> Result<(), CliError> {
    if !args.weights.exists() {
        return Err(CliError::usage(format!(
            "weights file {} does not exist",
            args.weights.display()
        )));
    }
    let mut gen = load_generator::<Real>(&args.weights)?;
    let size = gen.spec().image_size;
    let files = ordered_pngs(&args.input_dir)?;
    if files.is_empty() {
        return Err(CliError::usage(format!(
            "no PNG frames in {}",
            args.input_dir.display()
        )));
    }
    let mut inputs = Vec::with_capacity(files.len());
    for path in &files {
        let frame = load_png::<Real>(path)?;
        let frame = if frame.channels() == 3 {
            to_greyscale(&frame)?
        } else {
            frame
        };
        inputs.push(resize(&frame, size, size)?);
    }
    let outputs = colorize_sequence(&mut gen, &inputs)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for (path, frame) in files.iter().zip(outputs.iter()) {
        let name = path.file_name().expect("png file name");
        save_png(frame, &args.out_dir.join(name))?;
    }
    if args.contact_sheet {
        emit_contact_sheet(
            &outputs,
            args.sheet_columns.max(1),
            &args.out_dir.join("contact_sheet.png"),
        )?;
    }
    println!(
        "colorized {} frames into {}",
        outputs.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let config = load_config(&args.common)?;
    let conditioning = Conditioning::parse(&args.conditioning)
        .ok_or_else(|| CliError::usage(format!("unknown conditioning {:?}", args.conditioning)))?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let root = args
        .root
        .clone()
        .or(config.dataset_root.clone())
        .ok_or_else(|| CliError::usage("no dataset root: pass --root or set dataset_root"))?;
    let mut store = FrameStore::new(&root);
    store.canny = config.canny;

    // FID feature source: pooled pretrained features when a checkpoint is
    // available, the seeded stand-in otherwise
    let checkpoint = config.extractor_checkpoint.clone().or_else(|| {
        std::env::var_os("TCVC_CACHE").map(|dir| PathBuf::from(dir).join("vgg19.tcvc"))
    });
    let mut features: Box<dyn ImageFeatures<Real>> = match checkpoint {
        Some(path) if path.exists() && config.extractor != "seeded" => Box::new(
            PooledExtractorFeatures::new(vgg19_extractor::<Real>(&path)?, 512, "vgg19-pooled"),
        ),
        _ => Box::new(SeededFeatures::<Real>::new(
            config.fid_feature_dim,
            config.seed,
        )),
    };

    let report = if args.self_eval {
        let mut pairs = Vec::with_capacity(manifest.len());
        for i in 0..manifest.len() {
            let gt = store.color_frame::<Real>(&manifest, i)?;
            pairs.push((manifest.entries[i].episode.clone(), i, gt.clone(), gt));
        }
        evaluate_frames(
            &pairs,
            features.as_mut(),
            "ground-truth",
            manifest.mode.as_str(),
            conditioning,
        )?
    } else {
        let weights = args
            .weights
            .clone()
            .ok_or_else(|| CliError::usage("pass --weights (or --self-eval)"))?;
        if !weights.exists() {
            return Err(CliError::usage(format!(
                "weights file {} does not exist",
                weights.display()
            )));
        }
        let mut gen = load_generator::<Real>(&weights)?;
        evaluate(
            &mut gen,
            &manifest,
            &store,
            conditioning,
            features.as_mut(),
            &args.label,
        )?
    };

    let text = report.render_text();
    print!("{text}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.txt"), &text)?;
        std::fs::write(out.join("report.json"), report.to_json())?;
        println!("report written to {}", out.display());
    }
    Ok(())
}
