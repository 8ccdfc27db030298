use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use udae::degrade::{build_dataset, load_manifest, load_split, procedural_scene, Split};
use udae::eval::{self as eval, bench_throughput, hardware_description, restore_batch, EvalOptions, Identity, Restorer};
use udae::metrics::LossConfig;
use udae::train::{self as trainer, load_state, network_gradient_check, TrainConfig, TrainState};
use udae::unet::{build_model, checkpoint_id, load_weights, save_weights};
use udae::{Tensor, UNetConfig};

use crate::{BenchArgs, EvaluateArgs, GenDataArgs, GradcheckArgs, RestoreArgs, TrainArgs};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let m = build_dataset(a.clean_dir.as_deref(), &a.out, a.count, a.size, a.preset, a.seed)?;
    let count = |s: Split| m.split(s).count();
    println!(
        "wrote {} pairs to {} (train {}, val {}, test {}; {} inputs skipped)",
        m.entries.len(),
        a.out.display(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        m.skipped.len()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        adam_beta1: a.adam_beta1,
        adam_beta2: a.adam_beta2,
        adam_eps: a.adam_eps,
        batch_size: a.batch_size,
        epochs: a.epochs,
        alpha: a.alpha,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
        image_size: manifest.size,
        checkpoint_dir: Some(a.out.join("checkpoints")),
    };
    cfg.validate()?;
    let (weights, state) = match &a.resume {
        Some(path) => {
            let w = load_weights(path).with_context(|| format!("loading {}", path.display()))?;
            let sidecar = path.with_extension("udas");
            let s = load_state(&sidecar, &w).with_context(|| format!("loading {}", sidecar.display()))?;
            log::info!("resuming after epoch {} from {}", s.epoch, path.display());
            (w, s)
        }
        None => {
            let w = build_model(UNetConfig::new(a.depth, a.base)?, a.seed)?;
            let s = TrainState::new(&w);
            (w, s)
        }
    };
    let run_record = serde_json::json!({ "model": weights.config, "train": cfg });
    write_text(&a.out.join("train_config.json"), &(serde_json::to_string_pretty(&run_record)? + "\n"))?;
    let model_path = a.out.join("model.udae");
    if cfg.epochs <= state.epoch {
        save_weights(&weights, &model_path)?;
        trainer::LossHistory::default().write_epochs_csv(a.out.join("loss.csv"))?;
        println!("no epochs to run; wrote {} ({})", model_path.display(), checkpoint_id(&weights));
        return Ok(ExitCode::SUCCESS);
    }
    let train_pairs = load_split(&a.data, Split::Train)?;
    let val_pairs = load_split(&a.data, Split::Val)?;
    log::info!(
        "training depth {} base {} ({} parameters) on {} pairs, validating on {}",
        weights.config.depth,
        weights.config.base_channels,
        weights.param_count(),
        train_pairs.len(),
        val_pairs.len()
    );
    let out = trainer::train_from(weights, state, &train_pairs, &val_pairs, &cfg)?;
    save_weights(&out.weights, &model_path)?;
    out.history.write_epochs_csv(a.out.join("loss.csv"))?;
    out.history.write_steps_csv(a.out.join("steps.csv"))?;
    let last = out.history.epochs.last().expect("at least one epoch ran");
    println!(
        "trained to epoch {} ({} steps), train loss {:.5}; wrote {}",
        last.epoch,
        last.step,
        last.train_loss,
        model_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn restore(a: RestoreArgs) -> Result<ExitCode> {
    let model = load_weights(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let index = restore_batch(&model, &a.input, &a.out)?;
    println!(
        "{} images processed, {} skipped; results in {}",
        index.outputs.len(),
        index.skipped.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn evaluate_with(a: &EvaluateArgs, model: &dyn Restorer) -> Result<()> {
    let pairs = load_split(&a.data, a.split)?;
    let opts = EvalOptions {
        loss: LossConfig::new(a.alpha)?,
        timing: a.timing,
        ..Default::default()
    };
    let report = eval::evaluate(model, &pairs, &opts)?;
    report.write(Some(&a.out.join("metrics.json")), Some(&a.out.join("metrics.csv")))?;
    println!(
        "{} {} images: MSE {:.5}, SSIM {:.4}, MS-SSIM-L1 {:.4} ({} skipped)",
        a.split,
        report.count,
        report.mean_mse,
        report.mean_ssim,
        report.mean_ms_ssim_l1,
        report.skipped.len()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    match &a.model {
        Some(path) => {
            let m = load_weights(path).with_context(|| format!("loading {}", path.display()))?;
            evaluate_with(&a, &m)?;
        }
        None => evaluate_with(&a, &Identity)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn bench(a: BenchArgs) -> Result<ExitCode> {
    let model = match &a.model {
        Some(path) => load_weights(path).with_context(|| format!("loading {}", path.display()))?,
        None => build_model(UNetConfig::new(a.depth, a.base)?, a.seed)?,
    };
    if a.images == 0 {
        bail!("--images must be at least 1");
    }
    let images = (0..a.images)
        .map(|i| procedural_scene(a.seed.wrapping_add(i as u64), a.size, a.size))
        .collect::<udae::Result<Vec<Tensor>>>()?;
    let hardware = a.hardware.clone().unwrap_or_else(hardware_description);
    let report = bench_throughput(&model, &images, a.warmup, a.repeat, &hardware)?;
    if let Some(path) = &a.out {
        write_text(path, &report.to_json()?)?;
    }
    println!(
        "{}x{}: mean {:.4} s/image, median {:.4} s/image, {:.2} fps, CV {:.1}% over {} runs",
        a.size,
        a.size,
        report.mean_seconds_per_image,
        report.median_seconds_per_image,
        report.fps,
        100.0 * report.coefficient_of_variation,
        report.repeat
    );
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let cfg = UNetConfig::new(a.depth, a.base)?;
    let report = network_gradient_check(cfg, a.size, a.alpha, a.step, a.seed)?;
    println!(
        "max relative error {:.3e} over {} parameters, {} excluded at ties (worst index {}: analytic {:.6e}, numeric {:.6e})",
        report.max_relative_error,
        report.checked,
        report.excluded,
        report.worst_index,
        report.analytic,
        report.numeric
    );
    if report.max_relative_error < a.tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: gradient check failed (tolerance {:.1e})", a.tolerance);
        Ok(ExitCode::FAILURE)
    }
}
