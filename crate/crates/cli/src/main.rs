use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pgs_cli::batch::{self, expand_inputs, run_batch};
use pgs_cli::bench::{bench_image, synthetic_subject, toy_step_cost};
use pgs_cli::config::{KernelChoice, MaskArgs, Settings};
use pgs_cli::debug;
use pgs_core::contrastive::{train_toy, MaskingMode, TrainConfig};
use pgs_core::otn::{PositiveKernel, SinkhornConfig};
use pgs_core::PgsConfig;

#[derive(Parser)]
#[command(name = "pgs", version, about = "Similarity-guided patch masking with edge retention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Overlay,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Masking {
    None,
    Random,
    Pgs,
}

#[derive(Subcommand)]
enum Command {
    /// Mask a batch of PPM/PNG images; one JSON line per image.
    Mask {
        /// Files or glob patterns.
        inputs: Vec<String>,
        /// JSONL destination; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Where overlays go for `--format overlay|both`.
        #[arg(long, default_value = "overlays")]
        overlay_dir: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[command(flatten)]
        mask: MaskArgs,
    },
    /// Render the mask of one image; prints its JSON record.
    Visualize {
        input: PathBuf,
        /// Overlay image (.png or .ppm).
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the edge map here.
        #[arg(long)]
        edge_map: Option<PathBuf>,
        #[command(flatten)]
        mask: MaskArgs,
    },
    /// Time each pipeline stage on one image (a synthetic 224x224 one by default).
    Bench {
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = 21)]
        repeat: usize,
        /// Toy training steps used to measure masking's share of a step; 0 skips it.
        #[arg(long, default_value_t = 10)]
        toy_steps: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        mask: MaskArgs,
    },
    /// Train the toy dual encoder on synthetic shape/caption pairs.
    ToyTrain {
        #[arg(long, value_enum, default_value = "pgs")]
        masking: Masking,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        heldout: Option<usize>,
        #[arg(long)]
        steps_per_epoch: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        learnable_temperature: bool,
        /// Loss curve as CSV: step,loss,mask_ratio.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// JSON report; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        mask: MaskArgs,
    },
    /// Balance a square matrix from CSV or JSON (`-` reads stdin).
    SinkhornDebug {
        input: PathBuf,
        #[arg(long)]
        sinkhorn_iters: Option<usize>,
        #[arg(long)]
        sinkhorn_tol: Option<f64>,
        #[arg(long, value_enum)]
        sinkhorn_kernel: Option<KernelChoice>,
        #[arg(long, default_value_t = 0.05)]
        sinkhorn_epsilon: f64,
    },
}

/// Errors carrying this context exit with code 2.
const CONFIG_TAG: &str = "invalid configuration";

fn resolve(mask: &MaskArgs, base: &PgsConfig) -> Result<Settings> {
    mask.resolve(base).context(CONFIG_TAG)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn cmd_mask(
    inputs: &[String],
    output: Option<&Path>,
    format: Format,
    overlay_dir: &Path,
    threads: usize,
    settings: &Settings,
) -> Result<bool> {
    let paths = expand_inputs(inputs)?;
    if paths.is_empty() {
        eprintln!("warning: no input images matched");
    }
    let records = format != Format::Overlay;
    let overlays = (format != Format::Json).then_some(overlay_dir);
    let outcome = run_batch(&paths, settings, threads, overlays, records)?;
    if records {
        let mut text = outcome.lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        emit(output, &text)?;
    }
    for (path, err) in &outcome.failures {
        eprintln!("error: {}: {err}", path.display());
    }
    if !outcome.failures.is_empty() {
        eprintln!("{} of {} images failed", outcome.failures.len(), paths.len());
    }
    Ok(outcome.failures.is_empty())
}

fn cmd_visualize(input: &Path, output: &Path, edge_map: Option<&Path>, settings: &Settings) -> Result<()> {
    let image = batch::read_image(input)?;
    let m = batch::mask_image(input, image, settings, &batch::projection_for(settings))?;
    batch::write_image(output, &batch::overlay(&m)?)?;
    if let Some(p) = edge_map {
        batch::write_image(p, &batch::edge_image(&batch::edge_map(&m.image, settings)?))?;
    }
    emit(None, &(batch::record_line(&m, &settings.echo())? + "\n"))
}

fn cmd_bench(
    input: Option<&Path>,
    warmup: usize,
    repeat: usize,
    toy_steps: usize,
    output: Option<&Path>,
    settings: &Settings,
) -> Result<()> {
    let (id, bytes) = match input {
        Some(p) => (p.display().to_string(), std::fs::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => ("synthetic-224".to_string(), synthetic_subject(settings.seed)),
    };
    let mut report = bench_image(&id, &bytes, settings, warmup, repeat)?;
    if toy_steps > 0 {
        report.toy_step = Some(toy_step_cost(toy_steps, settings.seed)?);
    }
    emit(output, &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Mask { inputs, output, format, overlay_dir, threads, mask } => {
            let settings = resolve(&mask, &PgsConfig::default())?;
            cmd_mask(&inputs, output.as_deref(), format, &overlay_dir, threads, &settings)
        }
        Command::Visualize { input, output, edge_map, mask } => {
            let settings = resolve(&mask, &PgsConfig::default())?;
            cmd_visualize(&input, &output, edge_map.as_deref(), &settings).map(|_| true)
        }
        Command::Bench { input, warmup, repeat, toy_steps, output, mask } => {
            let settings = resolve(&mask, &PgsConfig::default())?;
            cmd_bench(input.as_deref(), warmup, repeat, toy_steps, output.as_deref(), &settings).map(|_| true)
        }
        Command::ToyTrain {
            masking,
            steps,
            batch_size,
            lr,
            heldout,
            steps_per_epoch,
            image_size,
            temperature,
            learnable_temperature,
            csv,
            output,
            mask,
        } => {
            let mut cfg = TrainConfig::default();
            let settings = resolve(&mask, &cfg.pgs)?;
            cfg.pgs = settings.pgs.clone();
            cfg.seed = settings.seed;
            cfg.masking = match masking {
                Masking::None => MaskingMode::None,
                Masking::Random => MaskingMode::Random,
                Masking::Pgs => MaskingMode::Pgs,
            };
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.learning_rate = lr.unwrap_or(cfg.learning_rate);
            cfg.heldout = heldout.unwrap_or(cfg.heldout);
            cfg.steps_per_epoch = steps_per_epoch.unwrap_or(cfg.steps_per_epoch);
            cfg.image_size = image_size.unwrap_or(cfg.image_size);
            cfg.contrastive.temperature = temperature.unwrap_or(cfg.contrastive.temperature);
            cfg.contrastive.learnable_temperature = learnable_temperature;
            if !(cfg.contrastive.temperature > 0.0) {
                bail!("{CONFIG_TAG}: temperature must be positive");
            }
            let report = train_toy(&cfg)?;
            if let Some(p) = csv {
                let mut text = String::from("step,loss,mask_ratio\n");
                for (i, (l, r)) in report.losses.iter().zip(&report.mask_ratios).enumerate() {
                    text.push_str(&format!("{i},{l},{r}\n"));
                }
                std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            let json = serde_json::json!({ "config": cfg, "report": report });
            emit(output.as_deref(), &(serde_json::to_string_pretty(&json)? + "\n")).map(|_| true)
        }
        Command::SinkhornDebug { input, sinkhorn_iters, sinkhorn_tol, sinkhorn_kernel, sinkhorn_epsilon } => {
            let mut cfg = SinkhornConfig::default();
            cfg.max_iters = sinkhorn_iters.unwrap_or(cfg.max_iters);
            cfg.tol = sinkhorn_tol.unwrap_or(cfg.tol);
            if sinkhorn_kernel == Some(KernelChoice::Entropic) {
                cfg.kernel = PositiveKernel::Entropic { epsilon: sinkhorn_epsilon };
            }
            cfg.validate().map_err(|e| anyhow::Error::new(e).context(CONFIG_TAG))?;
            let text = read_input(&input)?;
            let m = debug::parse_matrix(&text).with_context(|| format!("parsing {}", input.display()))?;
            let out = debug::run(&m, &cfg)?;
            emit(None, &(serde_json::to_string_pretty(&out)? + "\n")).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e.chain().any(|c| c.to_string().starts_with(CONFIG_TAG));
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}
