//! Training-loop behavior: schedule, determinism, isolation of the
//! discriminator update, overfit smoke test, and bitwise checkpoint resume.

use std::path::{Path, PathBuf};

use tcvc_core::dataset::{build_manifest, make_sample, FrameStore, Mode, SplitSpec};
use tcvc_core::imaging::{save_png, Frame, Space};
use tcvc_core::losses::{tiny_test_extractor, LossWeights};
use tcvc_core::tensor::Tensor;
use tcvc_core::trainer::{
    discriminator_step, load_checkpoint, train, train_step, ModelKind, TrainConfig, TrainState,
};

fn write_clip(root: &Path, episode: &str, frames: usize, size: usize) {
    for i in 0..frames {
        let mut t = Tensor::zeros(&[3, size, size]);
        for y in 0..size {
            for x in 0..size {
                let fx = x as f64 / (size - 1) as f64;
                let fy = y as f64 / (size - 1) as f64;
                let phase = i as f64 / frames as f64;
                t.set3(0, y, x, (0.3 + 0.6 * fx * (1.0 - phase)).clamp(0.0, 1.0));
                t.set3(1, y, x, (0.2 + 0.7 * fy).clamp(0.0, 1.0));
                t.set3(2, y, x, (0.8 - 0.5 * fx * fy + 0.1 * phase).clamp(0.0, 1.0));
            }
        }
        let f = Frame::new(t, Space::Storage).unwrap();
        save_png(&f, &root.join(episode).join(format!("{i:02}.png"))).unwrap();
    }
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tcvc_train_{name}_{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn toy_config(size: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        epochs: 1,
        seed: 7,
        base_width: 4,
        disc_base_width: 4,
        image_size: size,
        ..TrainConfig::default()
    }
}

fn manifest_for(root: &Path, size: usize) -> (tcvc_core::dataset::DatasetManifest, FrameStore) {
    let spec = SplitSpec::Episodes(
        [("train".to_string(), vec!["e1".to_string()])]
            .into_iter()
            .collect(),
    );
    let m = build_manifest(root, &spec, Mode::Lineart, size)
        .unwrap()
        .remove(0);
    (m, FrameStore::new(root))
}

#[test]
fn learning_rates_follow_the_one_tenth_rule() {
    let config = TrainConfig::default();
    assert_eq!(config.lr_g, 1e-4);
    assert_eq!(config.lr_d(), 1e-5);
    let state = TrainState::<f32>::new(toy_config(32)).unwrap();
    assert_eq!(state.opt_g.lr(), 1e-4);
    assert_eq!(state.opt_d.lr(), 1e-5);

    let overridden = TrainConfig {
        lr_d: Some(3e-4),
        ..TrainConfig::default()
    };
    assert_eq!(overridden.lr_d(), 3e-4);
}

#[test]
fn one_epoch_over_four_samples_batch_two_logs_two_steps() {
    let root = tmpdir("steps");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);
    let mut state = TrainState::<f32>::new(toy_config(32)).unwrap();
    let mut ex = tiny_test_extractor::<f32>(1);
    let run = root.join("run");
    let out = train(&mut state, &manifest, &store, Some(&mut ex), &run).unwrap();
    assert_eq!(out.records.len(), 2);
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3, "header + 2 rows");
    assert_eq!(lines[0], "step,adv_g,adv_d,content,style,l1,total");
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn identical_runs_produce_identical_records() {
    let root = tmpdir("determinism");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);
    let run_once = |run_name: &str| {
        let mut state = TrainState::<f32>::new(toy_config(32)).unwrap();
        let mut ex = tiny_test_extractor::<f32>(1);
        train(
            &mut state,
            &manifest,
            &store,
            Some(&mut ex),
            &root.join(run_name),
        )
        .unwrap()
    };
    let a = run_once("run_a");
    let b = run_once("run_b");
    assert_eq!(a.records, b.records);
    let log_a = std::fs::read(root.join("run_a/train_log.csv")).unwrap();
    let log_b = std::fs::read(root.join("run_b/train_log.csv")).unwrap();
    assert_eq!(log_a, log_b, "logs must be byte-identical");
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn discriminator_update_leaves_generator_untouched() {
    let root = tmpdir("isolation");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);
    let mut state = TrainState::<f32>::new(toy_config(32)).unwrap();

    let samples: Vec<_> = (0..2)
        .map(|i| make_sample::<f32>(&store, &manifest, i, 7, 0, 0.5).unwrap())
        .collect();
    // forward by hand, mirroring the step assembly
    let mut pred_parts = Vec::new();
    for s in &samples {
        let joined = tcvc_core::networks::generator::concat_channels(
            &Tensor::from_vec(
                &[1, 1, 32, 32],
                s.input.tensor().data().to_vec(),
            )
            .unwrap(),
            &Tensor::from_vec(
                &[1, 3, 32, 32],
                s.condition.tensor().data().to_vec(),
            )
            .unwrap(),
        );
        pred_parts.push(
            state
                .generator
                .forward(&joined, tcvc_core::networks::Forward::INFER),
        );
    }
    let mut pred = Tensor::zeros(&[2, 3, 32, 32]);
    let plane = 3 * 32 * 32;
    for (i, p) in pred_parts.iter().enumerate() {
        pred.data_mut()[i * plane..][..plane].copy_from_slice(p.data());
    }
    let mut targets = Tensor::zeros(&[2, 3, 32, 32]);
    let mut conds = Tensor::zeros(&[2, 3, 32, 32]);
    for (i, s) in samples.iter().enumerate() {
        targets.data_mut()[i * plane..][..plane].copy_from_slice(s.target.tensor().data());
        conds.data_mut()[i * plane..][..plane].copy_from_slice(s.condition.tensor().data());
    }

    let before = state.generator.snapshot();
    let disc_before = state.discriminator.snapshot();
    discriminator_step(&mut state, &pred, &targets, &conds).unwrap();
    let after = state.generator.snapshot();
    for ((name, b), (_, a)) in before.iter().zip(after.iter()) {
        assert_eq!(b.data(), a.data(), "{name} changed during the D step");
    }
    // and the discriminator did move
    let moved = disc_before
        .iter()
        .zip(state.discriminator.snapshot().iter())
        .any(|((_, b), (_, a))| b.data() != a.data());
    assert!(moved, "discriminator parameters should change");
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn l1_only_overfit_halves_the_loss() {
    // single repeated 16x16 sample, l1-weight-only objective
    let root = tmpdir("overfit");
    write_clip(&root, "e1", 1, 16);
    let (manifest, store) = manifest_for(&root, 16);
    let config = TrainConfig {
        batch_size: 1,
        epochs: 1,
        lr_g: 2e-3,
        seed: 3,
        base_width: 4,
        disc_base_width: 4,
        image_size: 16,
        blank_probability: 0.0,
        weights: LossWeights {
            lambda_adv: 0.0,
            lambda_content: 0.0,
            lambda_style: 0.0,
            lambda_l1: 10.0,
        },
        ..TrainConfig::default()
    };
    let mut state = TrainState::<f32>::new(config).unwrap();
    let sample = make_sample::<f32>(&store, &manifest, 0, 3, 0, 0.0).unwrap();
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..200 {
        let rec = train_step(&mut state, std::slice::from_ref(&sample), None).unwrap();
        first.get_or_insert(rec.l1);
        last = rec.l1;
    }
    let first = first.unwrap();
    assert!(
        last <= 0.5 * first,
        "l1 {first} -> {last}, expected at least a 50% reduction"
    );
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn baseline_trains_without_error_and_logs_no_perceptual_terms() {
    let root = tmpdir("baseline");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);
    let config = TrainConfig {
        model: ModelKind::UnetBaseline,
        ..toy_config(32)
    };
    let mut state = TrainState::<f32>::new(config).unwrap();
    let run = root.join("run");
    let out = train(&mut state, &manifest, &store, None, &run).unwrap();
    assert_eq!(out.records.len(), 2);
    for rec in &out.records {
        assert_eq!(rec.content, 0.0, "baseline must not train content loss");
        assert_eq!(rec.style, 0.0, "baseline must not train style loss");
        assert!(rec.total.is_finite());
    }
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn checkpoint_resume_is_bitwise() {
    let root = tmpdir("resume");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);

    // uninterrupted run: 4 epochs x 2 steps
    let full_config = TrainConfig {
        epochs: 4,
        ..toy_config(32)
    };
    let mut full_state = TrainState::<f32>::new(full_config.clone()).unwrap();
    let mut ex = tiny_test_extractor::<f32>(1);
    let full = train(
        &mut full_state,
        &manifest,
        &store,
        Some(&mut ex),
        &root.join("full"),
    )
    .unwrap();
    assert_eq!(full.records.len(), 8);

    // interrupted run stops after 2 epochs
    let half_config = TrainConfig {
        epochs: 2,
        ..full_config.clone()
    };
    let mut half_state = TrainState::<f32>::new(half_config).unwrap();
    let mut ex = tiny_test_extractor::<f32>(1);
    let half = train(
        &mut half_state,
        &manifest,
        &store,
        Some(&mut ex),
        &root.join("half"),
    )
    .unwrap();
    assert_eq!(half.records.len(), 4);
    assert_eq!(half.records[..], full.records[..4]);

    // resume and finish
    let mut resumed = load_checkpoint::<f32>(&half.final_checkpoint).unwrap();
    resumed.config.epochs = 4;
    let mut ex = tiny_test_extractor::<f32>(1);
    let rest = train(
        &mut resumed,
        &manifest,
        &store,
        Some(&mut ex),
        &root.join("rest"),
    )
    .unwrap();
    assert_eq!(rest.records.len(), 4);
    assert_eq!(
        rest.records[..],
        full.records[4..],
        "resumed losses must match the uninterrupted run bitwise"
    );
    std::fs::remove_dir_all(&root).ok();
}

#[test]
fn overfit_model_is_steered_by_its_condition() {
    // same line art, two conditions mapping to two distinct targets; after
    // overfitting, changing only the condition must change the output
    use tcvc_core::dataset::Sample;
    use tcvc_core::imaging::{blank_frame, Frame, Space};
    use tcvc_core::inference::colorize_frame;
    use tcvc_core::losses::l1_loss_frames;

    let size = 16usize;
    let mut line_t = Tensor::<f32>::full(&[1, size, size], 1.0);
    for i in 3..13 {
        line_t.set3(0, i, 8, 0.0);
        line_t.set3(0, 8, i, 0.0);
    }
    let line = Frame::new(line_t, Space::Storage).unwrap();

    let cond_a = blank_frame::<f32>(3, size, size).unwrap();
    let cond_b = Frame::<f32>::constant(3, size, size, 0.8, Space::Model).unwrap();
    let mut target_a_t = Tensor::<f32>::zeros(&[3, size, size]);
    for v in target_a_t.data_mut().iter_mut() {
        *v = 0.7; // warm flat color
    }
    let target_a = Frame::new(target_a_t, Space::Model).unwrap();
    let target_b = Frame::<f32>::constant(3, size, size, -0.6, Space::Model).unwrap();

    let config = TrainConfig {
        batch_size: 2,
        epochs: 1,
        lr_g: 2e-3,
        seed: 5,
        base_width: 4,
        disc_base_width: 4,
        image_size: size,
        weights: LossWeights {
            lambda_adv: 0.0,
            lambda_content: 0.0,
            lambda_style: 0.0,
            lambda_l1: 10.0,
        },
        ..TrainConfig::default()
    };
    let mut state = TrainState::<f32>::new(config).unwrap();
    let batch = vec![
        Sample {
            input: line.to_model(),
            condition: cond_a.clone(),
            target: target_a.clone(),
            index: 0,
        },
        Sample {
            input: line.to_model(),
            condition: cond_b.clone(),
            target: target_b.clone(),
            index: 1,
        },
    ];
    for _ in 0..400 {
        train_step(&mut state, &batch, None).unwrap();
    }

    let out_a = colorize_frame(&mut state.generator, &line, &cond_a).unwrap();
    let out_b = colorize_frame(&mut state.generator, &line, &cond_b).unwrap();
    let diff = l1_loss_frames(&out_a, &out_b).unwrap();
    assert!(diff > 0.1, "condition change moved the output by only {diff}");
    // and each lands near its own target
    assert!(l1_loss_frames(&out_a, &target_a).unwrap() < 0.3);
    assert!(l1_loss_frames(&out_b, &target_b).unwrap() < 0.3);

    // a first-frame artifact propagates: perturbing the generated frame 0
    // measurably shifts frame 1
    use tcvc_core::inference::colorize_sequence;
    let seq = vec![line.clone(), line.clone()];
    let outs = colorize_sequence(&mut state.generator, &seq).unwrap();
    let perturbed0 = Frame::new(
        outs[0].tensor().map(|v| (v + 0.5).clamp(-1.0, 1.0)),
        Space::Model,
    )
    .unwrap();
    let shifted1 = colorize_frame(&mut state.generator, &line, &perturbed0).unwrap();
    let drift = l1_loss_frames(&outs[1], &shifted1).unwrap();
    assert!(drift > 0.0, "perturbing frame 0 must shift frame 1");
}

#[test]
fn lineart_condition_group_for_the_discriminator_is_wired() {
    let root = tmpdir("dcond");
    write_clip(&root, "e1", 4, 32);
    let (manifest, store) = manifest_for(&root, 32);
    let config = TrainConfig {
        disc_condition_on_lineart: true,
        ..toy_config(32)
    };
    assert_eq!(config.discriminator_spec().input_channels, 7);
    let mut state = TrainState::<f32>::new(config).unwrap();
    let mut ex = tiny_test_extractor::<f32>(1);
    let out = train(&mut state, &manifest, &store, Some(&mut ex), &root.join("run")).unwrap();
    assert_eq!(out.records.len(), 2);
    assert!(out.records.iter().all(|r| r.total.is_finite()));
    std::fs::remove_dir_all(&root).ok();
}
