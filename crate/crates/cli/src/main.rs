use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use neuflow_cli::config_file::resolve_config;
use neuflow_cli::data_io::{
    load_dataset, load_image, read_flo, save_image, write_chairs_layout, write_flo, DatasetSpec,
    Layout,
};
use neuflow_cli::evalbench::{append_scatter_csv, benchmark, evaluate, Resolution};
use neuflow_cli::training::{fit, load_checkpoint, FitConfig};
use neuflow_core::color::flow_to_color;
use neuflow_core::synthetic::{generate_synthetic, Motion};
use neuflow_core::NeuFlow;

#[derive(Parser)]
#[command(
    name = "neuflow",
    version,
    about = "Global-to-local optical flow: train, evaluate, benchmark, infer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Configuration preset: "default" (full-size) or "tiny".
    #[arg(long, default_value = "default")]
    preset: String,
    /// TOML configuration file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flat key=value configuration overrides (TOML values).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ModelArgs {
    fn build(&self) -> Result<NeuFlow<f32>> {
        let cfg = resolve_config(&self.preset, self.config.as_deref(), &self.overrides)?;
        NeuFlow::new(cfg).map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset directory, or "synthetic" for the in-memory generator.
    #[arg(long)]
    data: String,
    /// Layout: auto, chairs, sintel-clean, sintel-final.
    #[arg(long, default_value = "auto")]
    layout: String,
    /// Use only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Synthetic generator: sample count.
    #[arg(long, default_value_t = 16)]
    syn_count: usize,
    /// Synthetic generator: square frame size.
    #[arg(long, default_value_t = 128)]
    syn_size: usize,
    /// Synthetic generator: seed.
    #[arg(long, default_value_t = 7)]
    syn_seed: u64,
}

impl DataArgs {
    fn spec(&self) -> Result<DatasetSpec> {
        if self.data == "synthetic" {
            return Ok(DatasetSpec::Synthetic {
                seed: self.syn_seed,
                count: self.limit.unwrap_or(self.syn_count),
                size: self.syn_size,
                motion: Motion::Mixed,
            });
        }
        let root = PathBuf::from(&self.data);
        let layout = match self.layout.as_str() {
            "auto" => DatasetSpec::detect_layout(&root),
            "chairs" => Layout::Chairs,
            "sintel-clean" => Layout::SintelClean,
            "sintel-final" => Layout::SintelFinal,
            other => bail!("unknown layout {other:?}"),
        };
        Ok(DatasetSpec::OnDisk {
            root,
            layout,
            limit: self.limit,
        })
    }
}

fn parse_resolution(s: &str) -> Result<Resolution> {
    match s {
        "full" => Ok(Resolution::Full),
        "eighth" | "1/8" => Ok(Resolution::Eighth),
        other => bail!("unknown resolution {other:?}; expected full or eighth"),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic training pairs with exact ground truth.
    Gen {
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Square frame size, multiple of 16.
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Motion family: translation, affine, or mixed.
        #[arg(long, default_value = "mixed")]
        motion: String,
        /// Output directory (FlyingChairs triple layout).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Validation dataset directory (defaults to the training set).
        #[arg(long)]
        val_data: Option<String>,
        #[arg(long, default_value_t = 2000)]
        steps: u64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 4e-4)]
        lr: f64,
        #[arg(long, default_value_t = 1e-4)]
        weight_decay: f64,
        /// Global gradient-norm clip; 0 disables.
        #[arg(long, default_value_t = 1.0)]
        clip: f64,
        #[arg(long, default_value_t = 100)]
        val_every: u64,
        /// Stop once training EPE falls below this value.
        #[arg(long)]
        target_epe: Option<f64>,
        /// Pause after this absolute step (checkpoint and exit); resuming
        /// with the same --steps continues the identical trajectory.
        #[arg(long)]
        stop_after: Option<u64>,
        /// Output directory for checkpoints and the training log.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Resume from a training checkpoint (last.bin).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate end-point error on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Evaluation resolution: full or eighth.
        #[arg(long, default_value = "full")]
        res: String,
        /// Write the per-sample report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate flow for one image pair.
    Infer {
        /// Weight checkpoint; omit to run a freshly initialized model.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        img1: PathBuf,
        #[arg(long)]
        img2: PathBuf,
        /// Output `.flo` path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a color visualization PNG here.
        #[arg(long)]
        viz: Option<PathBuf>,
        /// Output resolution: full or eighth.
        #[arg(long, default_value = "full")]
        res: String,
    },
    /// Measure forward-pass latency.
    Bench {
        /// Input size as WIDTHxHEIGHT.
        #[arg(long, default_value = "512x384")]
        size: String,
        /// Path to time: full, eighth, or both.
        #[arg(long, default_value = "both")]
        res: String,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Weight checkpoint; omit to benchmark a freshly initialized model.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Append EPE-vs-latency scatter rows to this CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Optional dataset for the EPE column of the scatter CSV.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Render a `.flo` file as a color-wheel PNG.
    Viz {
        #[arg(long)]
        flo: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Saturation radius in pixels (default: max observed magnitude).
        #[arg(long)]
        max_radius: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help/--version are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}

fn check_device() -> Result<()> {
    if let Ok(device) = std::env::var("NEUFLOW_DEVICE") {
        if device != "cpu" {
            bail!("NEUFLOW_DEVICE={device} is not available; this build is CPU-only");
        }
    }
    Ok(())
}

fn load_model(ckpt: &Option<PathBuf>, model_args: &ModelArgs) -> Result<NeuFlow<f32>> {
    match ckpt {
        Some(path) => {
            let (model, _) = load_checkpoint(path)?;
            Ok(model)
        }
        None => {
            log::warn!("no checkpoint given; using freshly initialized weights");
            model_args.build()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    check_device()?;
    match cli.command {
        Command::Gen {
            count,
            size,
            seed,
            motion,
            out,
        } => {
            let motion = match motion.as_str() {
                "translation" => Motion::Translation,
                "affine" => Motion::Affine,
                "mixed" => Motion::Mixed,
                other => bail!("unknown motion family {other:?}"),
            };
            let samples = generate_synthetic::<f32>(seed, count, size, motion);
            write_chairs_layout(&out, &samples)?;
            log::info!(
                "command=gen count={count} size={size} seed={seed} out={}",
                out.display()
            );
            println!("wrote {count} samples to {}", out.display());
            Ok(())
        }
        Command::Train {
            model,
            data,
            val_data,
            steps,
            batch_size,
            lr,
            weight_decay,
            clip,
            val_every,
            target_epe,
            stop_after,
            out,
            resume,
        } => {
            let loaded = load_dataset(&data.spec()?)?;
            for skip in &loaded.skipped {
                log::warn!("skipped sample: {skip}");
            }
            let val_samples = match &val_data {
                Some(dir) => {
                    let spec = DataArgs {
                        data: dir.clone(),
                        ..data.clone()
                    };
                    load_dataset(&spec.spec()?)?.samples
                }
                None => Vec::new(),
            };
            let (mut net, resume_state) = match &resume {
                Some(path) => {
                    let (net, state) = load_checkpoint(path)?;
                    (net, state)
                }
                None => (model.build()?, None),
            };
            log::info!(
                "command=train samples={} steps={steps} batch={batch_size} lr={lr} params={}",
                loaded.samples.len(),
                net.parameter_count()
            );
            let cfg = FitConfig {
                steps,
                batch_size,
                lr,
                weight_decay,
                clip_norm: clip,
                val_every,
                out_dir: out,
                target_epe,
                stop_after,
                loss_weights: Default::default(),
            };
            let summary = fit(&mut net, &loaded.samples, &val_samples, &cfg, resume_state)?;
            let epe_txt = summary
                .final_train_epe
                .map_or("missing".to_string(), |v| format!("{v:.4}"));
            println!(
                "trained {} steps, final loss {:.5}, train EPE {epe_txt}",
                summary.steps_run, summary.final_total_loss
            );
            if let Some(p) = &summary.last_checkpoint {
                println!("last checkpoint: {}", p.display());
            }
            if let Some(p) = &summary.best_checkpoint {
                println!("best checkpoint: {}", p.display());
            }
            Ok(())
        }
        Command::Eval {
            ckpt,
            data,
            res,
            report,
        } => {
            let resolution = parse_resolution(&res)?;
            let (model, _) = load_checkpoint(&ckpt)?;
            let spec = data.spec()?;
            let loaded = load_dataset(&spec)?;
            if loaded.samples.is_empty() {
                bail!("dataset {} is empty", spec.label());
            }
            let rep = evaluate(&model, &spec.label(), &loaded.samples, resolution);
            match &report {
                Some(path) => {
                    let f = std::fs::File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    rep.write_text(f)?;
                    println!(
                        "mean EPE ({resolution}): {}",
                        rep.mean_epe.map_or("missing".into(), |v| format!("{v:.6}"))
                    );
                }
                None => rep.write_text(std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Infer {
            ckpt,
            model,
            img1,
            img2,
            out,
            viz,
            res,
        } => {
            let resolution = parse_resolution(&res)?;
            let net = load_model(&ckpt, &model)?;
            let a = load_image(&img1)?;
            let b = load_image(&img2)?;
            let pred = net
                .forward(&a, &b, resolution == Resolution::Full)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let flow = match resolution {
                Resolution::Full => pred.flow_full.unwrap(),
                Resolution::Eighth => pred.flow8,
            };
            write_flo(&out, &flow)?;
            log::info!(
                "command=infer img1={} img2={} out={} mean_mag={:.3}",
                img1.display(),
                img2.display(),
                out.display(),
                flow.mean_magnitude()
            );
            if let Some(viz_path) = viz {
                save_image(&viz_path, &flow_to_color(&flow, None))?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Bench {
            size,
            res,
            runs,
            warmup,
            ckpt,
            model,
            csv,
            data,
            limit,
        } => {
            let (w, h) = size
                .split_once('x')
                .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
                .with_context(|| format!("bad --size {size:?}; expected WIDTHxHEIGHT"))?;
            let net = load_model(&ckpt, &model)?;
            let modes: Vec<Resolution> = match res.as_str() {
                "both" => vec![Resolution::Eighth, Resolution::Full],
                other => vec![parse_resolution(other)?],
            };
            let eval_samples = match &data {
                Some(dir) => {
                    let spec = DataArgs {
                        data: dir.clone(),
                        layout: "auto".into(),
                        limit,
                        syn_count: 16,
                        syn_size: 128,
                        syn_seed: 7,
                    };
                    load_dataset(&spec.spec()?)?.samples
                }
                None => Vec::new(),
            };
            for mode in modes {
                let rep = benchmark(&net, h, w, mode == Resolution::Full, runs, warmup);
                rep.write_text(std::io::stdout().lock())?;
                let mean_epe = if eval_samples.is_empty() {
                    None
                } else {
                    evaluate(&net, "bench", &eval_samples, mode).mean_epe
                };
                if let Some(csv_path) = &csv {
                    append_scatter_csv(csv_path, "neuflow", mode, mean_epe, &rep)?;
                }
            }
            Ok(())
        }
        Command::Viz {
            flo,
            out,
            max_radius,
        } => {
            let flow = read_flo(&flo)?;
            save_image(&out, &flow_to_color(&flow, max_radius))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
