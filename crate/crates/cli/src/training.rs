//! The training loop: shuffled batches in a seed-determined order, cosine
//! learning-rate decay, periodic validation, JSONL logging, and best/last
//! checkpoints. Resuming from the last checkpoint continues the trajectory
//! exactly (the batch order is a pure function of seed and step).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use neuflow_core::checkpoint::{self, OptimizerSnapshot};
use neuflow_core::loss::LossWeights;
use neuflow_core::optim::{cosine_lr, AdamW, OptState};
use neuflow_core::train::{batch_at_step, train_step};
use neuflow_core::{FlowSample, NeuFlow};

use crate::evalbench::{evaluate, Resolution};

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub val_every: u64,
    pub out_dir: PathBuf,
    /// Stop early once the training-set EPE (full resolution) drops below
    /// this value.
    pub target_epe: Option<f64>,
    /// Pause after this absolute step (checkpoint and return); the schedule
    /// still spans `steps`, so a resumed run continues identically.
    pub stop_after: Option<u64>,
    pub loss_weights: LossWeights,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            steps: 2000,
            batch_size: 4,
            lr: 4e-4,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            val_every: 100,
            out_dir: PathBuf::from("runs/train"),
            target_epe: None,
            stop_after: None,
            loss_weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub steps_run: u64,
    pub final_total_loss: f64,
    pub best_val_epe: Option<f64>,
    pub final_train_epe: Option<f64>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Optimizer state restored from a training checkpoint.
pub struct ResumeState {
    pub opt_state: OptState<f32>,
    pub best_val_epe: Option<f64>,
}

pub fn save_train_checkpoint(
    path: &Path,
    model: &NeuFlow<f32>,
    opt_state: &OptState<f32>,
    best_val_epe: Option<f64>,
) -> Result<()> {
    let snap = OptimizerSnapshot {
        step: opt_state.step,
        best_val_epe,
        m: opt_state.m.clone(),
        v: opt_state.v.clone(),
    };
    let bytes = checkpoint::encode_train(model.config(), model.params(), &snap);
    atomic_write(path, &bytes)
}

/// Loads a model checkpoint; training checkpoints also yield the optimizer
/// state.
pub fn load_checkpoint(path: &Path) -> Result<(NeuFlow<f32>, Option<ResumeState>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let decoded = checkpoint::decode(&bytes)?;
    let optimizer = decoded.optimizer;
    let mut model = NeuFlow::new(decoded.config.clone())
        .map_err(|e| anyhow::anyhow!("checkpoint config: {e}"))?;
    checkpoint::install_weights(model.params_mut(), decoded.weights)?;
    let resume = optimizer.map(|snap| ResumeState {
        opt_state: OptState {
            step: snap.step,
            m: snap.m,
            v: snap.v,
        },
        best_val_epe: snap.best_val_epe,
    });
    Ok((model, resume))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Runs the training loop. With `steps == 0` the model is returned untouched
/// and no checkpoint is written.
pub fn fit(
    model: &mut NeuFlow<f32>,
    train_set: &[FlowSample<f32>],
    val_set: &[FlowSample<f32>],
    cfg: &FitConfig,
    resume: Option<ResumeState>,
) -> Result<FitSummary> {
    if train_set.is_empty() {
        bail!("training dataset is empty");
    }
    let optimizer = AdamW {
        weight_decay: cfg.weight_decay,
        clip_norm: (cfg.clip_norm > 0.0).then_some(cfg.clip_norm),
        ..AdamW::default()
    };
    let (mut opt_state, mut best_val_epe) = match resume {
        Some(r) => (r.opt_state, r.best_val_epe),
        None => (OptState::new(model.params()), None),
    };
    if cfg.steps == 0 {
        return Ok(FitSummary {
            steps_run: 0,
            final_total_loss: f64::NAN,
            best_val_epe,
            final_train_epe: None,
            last_checkpoint: None,
            best_checkpoint: None,
        });
    }

    fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join("train.log");
    let mut log_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let last_path = cfg.out_dir.join("last.bin");
    let best_path = cfg.out_dir.join("best.bin");

    let data_seed = model.config().seed;
    let mut last_total = f64::NAN;
    let mut wrote_best = false;
    let start = opt_state.step;
    let mut final_train_epe = None;

    let mut step = start;
    let limit = cfg.stop_after.map_or(cfg.steps, |s| s.min(cfg.steps));
    while step < limit {
        let lr = cosine_lr(cfg.lr, step, cfg.steps);
        let idx = batch_at_step(data_seed, step, train_set.len(), cfg.batch_size);
        let batch: Vec<FlowSample<f32>> = idx.iter().map(|&i| train_set[i].clone()).collect();
        let breakdown = train_step(
            model,
            &optimizer,
            &mut opt_state,
            lr,
            &batch,
            cfg.loss_weights,
        )?;
        last_total = breakdown.total;
        step = opt_state.step;

        let at_val_point = step % cfg.val_every == 0 || step == cfg.steps;
        let mut val_epe_cell = serde_json::Value::Null;
        if at_val_point {
            let probe_set = if val_set.is_empty() { train_set } else { val_set };
            let report = evaluate(model, "val", probe_set, Resolution::Full);
            if let Some(epe) = report.mean_epe {
                val_epe_cell = serde_json::json!(epe);
                if best_val_epe.map_or(true, |b| epe < b) {
                    best_val_epe = Some(epe);
                    let bytes = model.to_checkpoint_bytes();
                    atomic_write(&best_path, &bytes)?;
                    wrote_best = true;
                }
                if val_set.is_empty() {
                    final_train_epe = Some(epe);
                }
                log::info!("step={step} lr={lr:.3e} loss={:.5} val_epe={epe:.4}", breakdown.total);
                if let Some(target) = cfg.target_epe {
                    let train_epe = if val_set.is_empty() {
                        epe
                    } else {
                        evaluate(model, "train", train_set, Resolution::Full)
                            .mean_epe
                            .unwrap_or(f64::INFINITY)
                    };
                    if train_epe < target {
                        log::info!("step={step} train_epe={train_epe:.4} below target {target}; stopping");
                        writeln!(
                            log_file,
                            "{}",
                            serde_json::json!({
                                "step": step, "l16": breakdown.l16, "l8": breakdown.l8,
                                "lfull": breakdown.lfull, "total": breakdown.total,
                                "lr": lr, "val_epe": train_epe,
                            })
                        )?;
                        break;
                    }
                }
            }
        } else if step % 25 == 0 {
            log::info!("step={step} lr={lr:.3e} loss={:.5}", breakdown.total);
        }
        writeln!(
            log_file,
            "{}",
            serde_json::json!({
                "step": step, "l16": breakdown.l16, "l8": breakdown.l8,
                "lfull": breakdown.lfull, "total": breakdown.total,
                "lr": lr, "val_epe": val_epe_cell,
            })
        )?;
    }

    save_train_checkpoint(&last_path, model, &opt_state, best_val_epe)?;
    if final_train_epe.is_none() {
        final_train_epe = evaluate(model, "train", train_set, Resolution::Full).mean_epe;
    }
    Ok(FitSummary {
        steps_run: opt_state.step - start,
        final_total_loss: last_total,
        best_val_epe,
        final_train_epe,
        last_checkpoint: Some(last_path),
        best_checkpoint: wrote_best.then_some(best_path),
    })
}
