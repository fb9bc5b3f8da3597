use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bpr_core::bpr::{pretrain, EncoderManifest, PretrainConfig};
use bpr_core::io::{fmt_f64, write_atomic};

use crate::args::PretrainArgs;
use crate::commands::gen_data::load_or_generate;
use crate::config::{output_root, ExperimentConfig};
use crate::failure::usage;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// `<checkpoint>.loss.csv`.
pub fn loss_trace_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".loss.csv");
    PathBuf::from(name)
}

pub fn run(args: &PretrainArgs, root: Option<&Path>) -> Result<PathBuf> {
    let mut cfg = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if let Some(p) = &args.dataset {
        cfg.dataset.path = Some(p.clone());
    }
    let mut pc = cfg.pretrain.clone().unwrap_or_default();
    if let Some(v) = args.steps {
        pc.steps = v;
    }
    if let Some(v) = args.batch_size {
        pc.batch_size = v;
    }
    if let Some(v) = args.seed {
        pc.seed = v;
    }
    if let Some(v) = args.repr_dim {
        pc.repr_dim = v;
    }
    if let Some(v) = &args.encoder_hidden {
        pc.encoder_hidden = v.clone();
    }
    if let Some(v) = args.predictor_hidden {
        pc.predictor_hidden = v;
    }
    if let Some(v) = args.lr {
        pc.learning_rate = v;
    }
    validate(&pc)?;
    if let Some(p) = &cfg.dataset.path {
        if !p.exists() {
            return Err(usage(format!("dataset: {} does not exist", p.display())));
        }
    }
    let dataset = load_or_generate(cfg.task, &cfg.dataset)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| output_root(&cfg, root).join(format!("encoder-s{}.ckpt", pc.seed)));

    let outcome = pretrain(&dataset, &pc).context("pretraining")?;
    let manifest = EncoderManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        repr_dim: pc.repr_dim,
        state_dim: dataset.state_dim(),
        pretrain_steps: pc.steps,
        seed: pc.seed,
        final_loss: outcome.loss_trace.last().copied(),
        dataset_hash: dataset.content_hash()?,
    };
    outcome.encoder.save(&out, &manifest)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, fmt_f64(*l)));
    }
    write_atomic(&loss_trace_path(&out), csv.as_bytes())?;
    println!(
        "pretrained {} steps (final loss {}), encoder {} written to {}",
        pc.steps,
        manifest.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6}")),
        outcome.encoder.param_hash(),
        out.display()
    );
    Ok(out)
}

fn validate(pc: &PretrainConfig) -> Result<()> {
    if pc.batch_size == 0 {
        return Err(usage("pretrain.batch_size: must be positive"));
    }
    if pc.repr_dim == 0 {
        return Err(usage("pretrain.repr_dim: must be positive"));
    }
    if pc.encoder_hidden.contains(&0) || pc.predictor_hidden == 0 {
        return Err(usage("pretrain.encoder_hidden: widths must be positive"));
    }
    if !(pc.learning_rate > 0.0 && pc.learning_rate.is_finite()) {
        return Err(usage("pretrain.learning_rate: must be positive"));
    }
    Ok(())
}
