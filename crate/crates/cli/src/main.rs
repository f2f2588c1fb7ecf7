use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use dpm_core::distill::{synth_scene, ALPHA_GRID, SIGMA_GRID};
use dpm_core::io::{
    read_config, read_depth, read_dpm, render_csv, write_depth, write_dpm, write_report, ReportFormat, RunConfig,
    Table,
};
use dpm_core::losses::{baseline_losses, combined_loss};
use dpm_core::metrics::crop_top_mask;
use dpm_core::{
    decode, distill_run, eigen_metrics, encode, encode_with_stats, sweep, DepthMap, Error, EvalPolicy, SceneKind,
    SweepAxis,
};
use ndarray::Array2;

#[derive(Parser)]
#[command(name = "dpm", version, about = "Depth probability maps: encode, decode, losses, metrics and toy distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a depth map (PNG16 or PFM) into a DPM file.
    Encode {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Decode a DPM file into a depth map (PFM exact, PNG16 quantized).
    Decode {
        #[arg(long)]
        dpm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distillation loss and baseline losses between two depth maps.
    Loss {
        #[arg(long)]
        student_depth: PathBuf,
        #[arg(long)]
        teacher_depth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report here (.csv or .json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Depth metrics of a prediction against a reference map.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Exclude this many top rows (110 for teacher-student similarity).
        #[arg(long)]
        crop_top: Option<usize>,
        #[arg(long)]
        min_depth: Option<f64>,
        #[arg(long)]
        max_depth: Option<f64>,
        /// Evaluate raw predictions instead of clamping them to the depth range.
        #[arg(long)]
        no_clamp: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill a synthetic teacher scene into a free logit field.
    Distill {
        #[command(flatten)]
        run: RunArgs,
        /// Per-checkpoint history (.csv or .json).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Decoded student depth (.pfm or .png).
        #[arg(long)]
        student_out: Option<PathBuf>,
        /// Teacher depth (.pfm or .png).
        #[arg(long)]
        teacher_out: Option<PathBuf>,
    },
    /// Repeat the distillation over a grid of alpha or sigma values.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values; defaults to the standard grid for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "disk")]
    scene: SceneKind,
    /// Scene size as HxW.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    peak_lr: Option<f64>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    Ok(match path {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    })
}

fn emit(table: &Table, out: Option<&Path>) -> anyhow::Result<()> {
    print!("{}", render_csv(table)?);
    if let Some(path) = out {
        write_report(table, path, ReportFormat::from_path(path))?;
    }
    Ok(())
}

fn cmd_encode(depth: &Path, out: &Path, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let dm = read_depth(depth)?;
    let (dpm, stats) = encode_with_stats(&dm, &cfg.distill.partition, &cfg.loss)?;
    write_dpm(&dpm, out)?;
    println!(
        "pixels {} valid {} clamped {} bins {} mode {}",
        stats.pixels,
        stats.valid,
        stats.clamped,
        dpm.bins(),
        cfg.loss.norm_mode
    );
    Ok(())
}

fn cmd_decode(dpm: &Path, out: &Path) -> anyhow::Result<()> {
    let dm = decode(&read_dpm(dpm)?);
    let ext = out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if ext.as_deref() == Some("png") {
        log::warn!("PNG output is quantized to 1/256 m");
    }
    write_depth(&dm, out)?;
    println!("decoded {}x{} to {}", dm.height(), dm.width(), out.display());
    Ok(())
}

fn loss_mask(student: &DepthMap, teacher: &DepthMap, crop: usize) -> anyhow::Result<Array2<bool>> {
    if student.dim() != teacher.dim() {
        bail!(Error::ShapeMismatch(format!("student {:?} vs teacher {:?}", student.dim(), teacher.dim())));
    }
    let (h, w) = teacher.dim();
    if crop >= h {
        bail!(Error::EmptyMask);
    }
    let mut mask = crop_top_mask(h, w, crop)?;
    mask.zip_mut_with(teacher.valid(), |m, &v| *m &= v);
    mask.zip_mut_with(student.valid(), |m, &v| *m &= v);
    if !mask.iter().any(|&m| m) {
        bail!(Error::EmptyMask);
    }
    Ok(mask)
}

fn cmd_loss(student: &Path, teacher: &Path, config: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let ds = read_depth(student)?;
    let dt = read_depth(teacher)?;
    let mask = loss_mask(&ds, &dt, cfg.eval.crop_top_rows)?;
    let partition = &cfg.distill.partition;
    let ps = encode(&ds, partition, &cfg.loss)?;
    let pt = encode(&dt, partition, &cfg.loss)?;
    let breakdown = combined_loss(&ps, &pt, &ds, &dt, &mask, &cfg.loss)?;
    let baselines = baseline_losses(&ds, &dt, &mask, &cfg.loss.ssim)?;
    let table = Table::from_loss(&breakdown, &baselines)
        .with_meta("alpha", cfg.loss.alpha)
        .with_meta("beta", cfg.loss.beta)
        .with_meta("sigma", cfg.loss.sigma)
        .with_meta("norm_mode", cfg.loss.norm_mode)
        .with_meta("crop_top_rows", cfg.eval.crop_top_rows);
    emit(&table, out)
}

struct EvalFlags {
    crop_top: Option<usize>,
    min_depth: Option<f64>,
    max_depth: Option<f64>,
    no_clamp: bool,
}

fn cmd_eval(pred: &Path, reference: &Path, config: Option<&Path>, flags: EvalFlags, out: Option<&Path>) -> anyhow::Result<()> {
    let mut policy = match config {
        Some(p) => read_config(p)?.eval,
        None => EvalPolicy::default(),
    };
    if let Some(c) = flags.crop_top {
        policy.crop_top_rows = c;
    }
    if let Some(v) = flags.min_depth {
        policy.min_eval_depth = v;
    }
    if let Some(v) = flags.max_depth {
        policy.max_eval_depth = v;
    }
    if flags.no_clamp {
        policy.clamp_pred = false;
    }
    let p = read_depth(pred)?;
    let r = read_depth(reference)?;
    let m = eigen_metrics(&p, &r, &policy)?;
    let table = Table::from_metrics(&m)
        .with_meta("crop_top_rows", policy.crop_top_rows)
        .with_meta("min_eval_depth", policy.min_eval_depth)
        .with_meta("max_eval_depth", policy.max_eval_depth)
        .with_meta("clamp_pred", policy.clamp_pred);
    emit(&table, out)
}

fn run_setup(run: &RunArgs) -> anyhow::Result<(DepthMap, dpm_core::DistillConfig)> {
    let cfg = load_config(run.config.as_deref())?;
    let mut distill = cfg.distill;
    if let Some(steps) = run.steps {
        distill = distill.with_steps(steps);
    }
    if let Some(seed) = run.seed {
        distill.seed = seed;
    }
    if let Some(lr) = run.peak_lr {
        distill.schedule.peak_lr = lr;
    }
    distill.validate()?;
    let (h, w) = run.size;
    let teacher = synth_scene(h, w, run.scene, distill.seed)?;
    Ok((teacher, distill))
}

fn cmd_distill(run: &RunArgs, history: Option<&Path>, student_out: Option<&Path>, teacher_out: Option<&Path>) -> anyhow::Result<()> {
    let (teacher, cfg) = run_setup(run)?;
    let (student, hist) = distill_run(&teacher, &cfg)?;
    if let Some(path) = history {
        let table = Table::from_history(&hist)
            .with_meta("alpha", cfg.loss.alpha)
            .with_meta("beta", cfg.loss.beta)
            .with_meta("sigma", cfg.loss.sigma)
            .with_meta("norm_mode", cfg.loss.norm_mode)
            .with_meta("peak_lr", cfg.schedule.peak_lr)
            .with_meta("steps", cfg.steps)
            .with_meta("seed", cfg.seed);
        write_report(&table, path, ReportFormat::from_path(path))?;
    }
    let student_depth = decode(&student.softmax(&cfg.partition)?);
    if let Some(path) = student_out {
        write_depth(&student_depth, path)?;
    }
    if let Some(path) = teacher_out {
        write_depth(&teacher, path)?;
    }
    let policy = EvalPolicy {
        max_eval_depth: cfg.partition.max_depth() + 1.0,
        ..EvalPolicy::default()
    };
    let m = eigen_metrics(&student_depth, &teacher, &policy)?;
    let last = hist.last().expect("a run records its final state");
    let table = Table::from_metrics(&m)
        .with_meta("steps", cfg.steps)
        .with_meta("l_dpm", last.loss.l_dpm)
        .with_meta("l_depth", last.loss.l_depth)
        .with_meta("total", last.loss.total);
    emit(&table, None)
}

fn cmd_sweep(axis: SweepAxis, values: Option<&[f64]>, run: &RunArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let (teacher, cfg) = run_setup(run)?;
    let values = values.unwrap_or(match axis {
        SweepAxis::Alpha => &ALPHA_GRID,
        SweepAxis::Sigma => &SIGMA_GRID,
    });
    let rows = sweep(&teacher, &cfg, axis, values)?;
    let table = Table::from_sweep(axis, &rows)
        .with_meta("steps", cfg.steps)
        .with_meta("seed", cfg.seed)
        .with_meta("norm_mode", cfg.loss.norm_mode);
    emit(&table, out)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode { depth, out, config } => cmd_encode(&depth, &out, config.as_deref()),
        Command::Decode { dpm, out } => cmd_decode(&dpm, &out),
        Command::Loss { student_depth, teacher_depth, config, out } => {
            cmd_loss(&student_depth, &teacher_depth, config.as_deref(), out.as_deref())
        }
        Command::Eval { pred, reference, config, crop_top, min_depth, max_depth, no_clamp, out } => cmd_eval(
            &pred,
            &reference,
            config.as_deref(),
            EvalFlags { crop_top, min_depth, max_depth, no_clamp },
            out.as_deref(),
        ),
        Command::Distill { run, history, student_out, teacher_out } => {
            cmd_distill(&run, history.as_deref(), student_out.as_deref(), teacher_out.as_deref())
        }
        Command::Sweep { axis, values, run, out } => cmd_sweep(axis, values.as_deref(), &run, out.as_deref()),
    }
}

/// 2 missing or unreadable input, 3 malformed file, 4 nothing to evaluate,
/// 5 numerical abort, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io { .. }) => 2,
        Some(Error::Image(image::ImageError::IoError(_))) => 2,
        Some(
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::Malformed(_)
            | Error::UnknownKey(_)
            | Error::Config { .. }
            | Error::NotNormalized { .. }
            | Error::InvalidProbability { .. }
            | Error::Image(_),
        ) => 3,
        Some(Error::EmptyEvaluation | Error::EmptyMask) => 4,
        Some(Error::NumericalAbort { .. }) => 5,
        _ => 1,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("DPM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|e| anyhow!("DPM_THREADS={raw:?}: {e}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
