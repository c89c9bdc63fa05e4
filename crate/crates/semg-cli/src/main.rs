//! `semg` — command-line front end for the sEMG gesture pipeline.
//!
//! Subcommands cover the whole flow: synthesize or validate recordings,
//! preprocess streams, slice windows, augment, train, evaluate, and run the
//! ablation suite. Every stochastic command requires an explicit seed and
//! every run writes a manifest beside its outputs; rerunning a command with
//! the arguments recorded in a manifest reproduces the artifacts byte for
//! byte. Exit codes: 0 success, 1 data/validation failure, 2 usage error.

mod manifest;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manifest::ManifestBuilder;
use semg_core::augment::AugmentConfig;
use semg_core::checkpoint;
use semg_core::data::{
    load_csv, sniff_channels, synth_recording, write_csv, DatasetSpec, Recording,
};
use semg_core::dsp::{moving_average, FilterSpec, SmootherSpec};
use semg_core::model::{build, AblationVariant, ModelConfig};
use semg_core::pipeline;
use semg_core::tensor::Tensor2;
use semg_core::train::{evaluate_windows, train_loop, RangerConfig, TrainConfig};
use semg_core::windowing::{read_windows, write_windows, WindowSet};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "semg", version, about = "sEMG gesture classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic recording as exchange-format CSV.
    Synth(SynthArgs),
    /// Check a CSV recording against the exchange format and label rules.
    Validate(ValidateArgs),
    /// Rectify, high-pass filter, and smooth a whole recording.
    Preprocess(PreprocessArgs),
    /// Split by repetition and slice into preprocessed windows.
    Window(WindowArgs),
    /// One SNR-noise augmentation pass over window files.
    Augment(AugmentArgs),
    /// Train a model on windowed data.
    Train(TrainArgs),
    /// Evaluate a checkpoint on windowed data.
    Eval(EvalArgs),
    /// Train and compare every ablation variant.
    Ablate(AblateArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Number of non-rest gesture classes.
    #[arg(long)]
    classes: usize,
    /// Repetitions of each gesture.
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    file: PathBuf,
    /// Total class count including rest; inferred from the data when absent.
    #[arg(long)]
    classes: Option<usize>,
    /// Largest allowed repetition label.
    #[arg(long, default_value_t = 6)]
    max_rep: usize,
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
}

#[derive(Args, Serialize)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Smoothing kernel length in samples, or `auto` for dataset defaults.
    #[arg(long, default_value = "auto")]
    kernel: String,
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
}

#[derive(Args, Serialize)]
struct WindowArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for train/val/test window files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 260.0)]
    window_ms: f64,
    #[arg(long, default_value_t = 235.0)]
    overlap_ms: f64,
    #[arg(long, default_value_t = 3)]
    val_rep: usize,
    #[arg(long, default_value_t = 5)]
    test_rep: usize,
    /// Skip the split; write a single all.windows file.
    #[arg(long)]
    no_split: bool,
    #[arg(long, default_value_t = 20.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value = "auto")]
    kernel: String,
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    /// Directory of .windows files.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    snr_min: u32,
    #[arg(long, default_value_t = 30)]
    snr_max: u32,
    #[arg(long)]
    seed: u64,
    /// Use the conventional noise-power rule (P_n = P_s - SNR) instead of
    /// the verbatim one.
    #[arg(long)]
    corrected_snr: bool,
    #[arg(long, default_value_t = 0)]
    rest_label: usize,
}

#[derive(Args, Serialize, Clone)]
struct TrainArgs {
    /// Directory containing train.windows and val.windows.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the checkpoint and history.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Architecture: full or an ablation name (conv1d, frozen,
    /// no-expansion, raffel, temporal-sum, small-classifier, no-classifier,
    /// no-layernorm, relu).
    #[arg(long, default_value = "full")]
    arch: String,
    /// Expanded channel count E.
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 55)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_end: f64,
    #[arg(long, default_value_t = 5)]
    warm: usize,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Total class count including rest; inferred from labels when absent.
    #[arg(long)]
    classes: Option<usize>,
    /// Disable per-epoch SNR augmentation.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value_t = 1)]
    snr_min: u32,
    #[arg(long, default_value_t = 30)]
    snr_max: u32,
    #[arg(long)]
    corrected_snr: bool,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory containing <split>.windows.
    #[arg(long)]
    data: PathBuf,
    /// Which window file to score.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Directory for attention heatmap CSVs of the first few windows.
    #[arg(long)]
    dump_attention: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AblateArgs {
    /// Suite name; `table3` runs every studied variant.
    #[arg(long, default_value = "table3")]
    suite: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 55)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    corrected_snr: bool,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Window(args) => cmd_window(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    if let Err(err) = result {
        eprintln!("error: {:#}", err);
        std::process::exit(1);
    }
}

fn spec_for(path: &Path, rate: f64, classes: Option<usize>) -> Result<(DatasetSpec, Recording)> {
    let (channels, _) = sniff_channels(path)?;
    // First pass with a permissive class bound to read the labels, then
    // tighten to the requested or observed count.
    let mut spec = DatasetSpec {
        num_classes: usize::MAX / 2,
        channels,
        sample_rate_hz: rate,
        window_ms: 260.0,
        overlap_ms: 235.0,
    };
    let rec = load_csv(path, &spec)?;
    spec.num_classes =
        classes.unwrap_or_else(|| rec.gesture.iter().copied().max().unwrap_or(0) + 1);
    rec.validate(&spec)?;
    Ok((spec, rec))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = DatasetSpec {
        num_classes: args.classes + 1,
        channels: args.channels,
        sample_rate_hz: args.rate,
        window_ms: 260.0,
        overlap_ms: 235.0,
    };
    let rec = synth_recording(&spec, args.classes, args.reps, args.seed)?;
    write_csv(&rec, &args.out)?;
    let mut mb = ManifestBuilder::new("synth", serde_json::to_value(&args)?, Some(args.seed));
    mb.output(&args.out);
    mb.write(&args.out)?;
    println!(
        "wrote {} ({} rows, {} channels)",
        args.out.display(),
        rec.len(),
        rec.channels()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let (spec, rec) = spec_for(&args.file, args.rate, args.classes)?;
    rec.check_repetition_range(args.max_rep)?;
    let classes_seen = rec.gesture.iter().copied().max().unwrap_or(0) + 1;
    println!(
        "OK {}: {} rows, {} sEMG channels, {} IMU channels, labels < {}, reps {:?}",
        args.file.display(),
        rec.len(),
        spec.channels,
        rec.imu.as_ref().map_or(0, Tensor2::cols),
        classes_seen,
        rec.repetition_labels(),
    );
    Ok(())
}

fn parse_kernel(kernel: &str, rate: f64, input_len: usize) -> Result<SmootherSpec> {
    if kernel == "auto" {
        Ok(SmootherSpec::auto_for(rate, input_len))
    } else {
        let k: usize = kernel
            .parse()
            .map_err(|_| anyhow!("--kernel must be `auto` or a positive integer"))?;
        Ok(SmootherSpec::new(k))
    }
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let (_, rec) = spec_for(&args.input, args.rate, None)?;
    let filter = FilterSpec {
        cutoff_hz: args.cutoff,
        order: args.order,
    };
    let smoother = parse_kernel(&args.kernel, args.rate, rec.len())?;

    let rectified = semg_core::dsp::rectify(&rec.samples);
    let filtered = semg_core::dsp::butterworth_highpass(&rectified, &filter, args.rate)?;
    let smoothed = moving_average(&filtered, &smoother)?;
    // The valid-mode smoother drops kernel-1 trailing rows; labels align
    // with each output row's first source sample.
    let n = smoothed.rows();
    let out_rec = Recording {
        samples: smoothed,
        sample_rate_hz: rec.sample_rate_hz,
        gesture: rec.gesture[..n].to_vec(),
        repetition: rec.repetition[..n].to_vec(),
        imu: rec.imu.as_ref().map(|imu| {
            Tensor2::from_fn(n, imu.cols(), |r, c| imu[(r, c)])
        }),
    };
    write_csv(&out_rec, &args.out)?;
    let mut mb = ManifestBuilder::new("preprocess", serde_json::to_value(&args)?, None);
    mb.input(&args.input).output(&args.out);
    mb.write(&args.out)?;
    println!("wrote {} ({} rows)", args.out.display(), n);
    Ok(())
}

fn cmd_window(args: WindowArgs) -> Result<()> {
    let (mut spec, rec) = spec_for(&args.input, args.rate, None)?;
    spec.window_ms = args.window_ms;
    spec.overlap_ms = args.overlap_ms;
    spec.validate().map_err(|e| anyhow!("{}", e))?;
    let filter = FilterSpec {
        cutoff_hz: args.cutoff,
        order: args.order,
    };
    let smoother = parse_kernel(&args.kernel, args.rate, spec.window_samples())?;

    std::fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::new("window", serde_json::to_value(&args)?, None);
    mb.input(&args.input);

    if args.no_split {
        let ws = pipeline::slice_and_preprocess(&rec, &spec, &filter, &smoother)?;
        warn_if_short(&ws);
        let path = args.out.join("all.windows");
        write_windows(&ws, &path)?;
        mb.output(&path);
        println!("wrote {} ({} windows)", path.display(), ws.len());
    } else {
        let (train, val, test) = pipeline::prepare_splits(
            &rec,
            &spec,
            &filter,
            &smoother,
            args.val_rep,
            args.test_rep,
        )?;
        for (name, ws) in [("train", &train), ("val", &val), ("test", &test)] {
            warn_if_short(ws);
            let path = args.out.join(format!("{}.windows", name));
            write_windows(ws, &path)?;
            mb.output(&path);
            println!("wrote {} ({} windows)", path.display(), ws.len());
        }
    }
    mb.write(&args.out)?;
    Ok(())
}

fn warn_if_short(ws: &WindowSet) {
    if let Some(warning) = &ws.warning {
        eprintln!("warning: {}", warning);
    }
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let cfg_base = AugmentConfig {
        snr_min_db: args.snr_min,
        snr_max_db: args.snr_max,
        rest_label: args.rest_label,
        corrected_snr: args.corrected_snr,
        seed: args.seed,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "windows"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .windows files in {}", args.input.display());
    }
    std::fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::new("augment", serde_json::to_value(&args)?, Some(args.seed));
    for (i, path) in files.iter().enumerate() {
        let ws = read_windows(path)?;
        // Per-file stream so adding files never shifts existing noise.
        let cfg = AugmentConfig {
            seed: semg_core::rng::derive(args.seed, i as u64),
            ..cfg_base
        };
        let out = pipeline::augment_set(&ws, &cfg)?;
        let dest = args.out.join(path.file_name().unwrap());
        write_windows(&out, &dest)?;
        mb.input(path).output(&dest);
        println!("augmented {} -> {}", path.display(), dest.display());
    }
    mb.write(&args.out)?;
    Ok(())
}

/// Window geometry plus the label ceiling across the given sets.
fn inspect_sets(sets: &[&WindowSet]) -> Result<(usize, usize, usize)> {
    let first = sets
        .iter()
        .flat_map(|ws| ws.windows.first())
        .next()
        .ok_or_else(|| anyhow!("no windows found"))?;
    let (t_len, channels) = first.data.shape();
    let mut max_label = 0;
    for ws in sets {
        for w in &ws.windows {
            if w.data.shape() != (t_len, channels) {
                bail!(
                    "inconsistent window shapes: {}x{} vs {}x{}",
                    w.data.rows(),
                    w.data.cols(),
                    t_len,
                    channels
                );
            }
            max_label = max_label.max(w.label);
        }
    }
    Ok((t_len, channels, max_label + 1))
}

fn train_once(
    data: &Path,
    arch: &str,
    width: usize,
    classes: Option<usize>,
    epochs: usize,
    batch: usize,
    lr: f64,
    lr_end: f64,
    warm: usize,
    gamma: f64,
    seed: u64,
    augment: Option<AugmentConfig>,
) -> Result<(semg_core::model::ModelParams, semg_core::train::TrainHistory)> {
    let train_ws = read_windows(&data.join("train.windows"))
        .with_context(|| format!("reading {}/train.windows", data.display()))?;
    let val_ws = read_windows(&data.join("val.windows"))
        .with_context(|| format!("reading {}/val.windows", data.display()))?;
    let (t_len, channels, inferred_classes) = inspect_sets(&[&train_ws, &val_ws])?;
    let num_classes = classes.unwrap_or(inferred_classes);

    let variant = AblationVariant::from_name(arch)
        .ok_or_else(|| anyhow!("unknown architecture `{}`", arch))?;
    let mut cfg = ModelConfig::full(t_len, channels, num_classes);
    cfg.expanded_channels = width;
    let cfg = variant.apply(&cfg);

    let mut params = build(&cfg, seed)?;
    let tc = TrainConfig {
        epochs,
        batch_size: batch,
        lr_start: lr,
        lr_end,
        warm_epochs: warm,
        focal_gamma: gamma,
        ranger: RangerConfig::default(),
        seed,
    };
    let history = train_loop(&mut params, &train_ws, &val_ws, &tc, augment.as_ref())?;
    Ok((params, history))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let augment = (!args.no_augment).then_some(AugmentConfig {
        snr_min_db: args.snr_min,
        snr_max_db: args.snr_max,
        rest_label: 0,
        corrected_snr: args.corrected_snr,
        seed: semg_core::rng::derive(args.seed, 0x41_55_47),
    });
    let (params, history) = train_once(
        &args.data,
        &args.arch,
        args.width,
        args.classes,
        args.epochs,
        args.batch,
        args.lr,
        args.lr_end,
        args.warm,
        args.gamma,
        args.seed,
        augment,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let ckpt_path = args.out.join("model.ckpt");
    checkpoint::save(&ckpt_path, &params, None)?;
    let history_path = args.out.join("history.csv");
    std::fs::write(&history_path, history.to_csv())?;

    let mut mb = ManifestBuilder::new("train", serde_json::to_value(&args)?, Some(args.seed));
    mb.input(&args.data.join("train.windows"))
        .input(&args.data.join("val.windows"))
        .output(&ckpt_path)
        .output(&history_path);
    mb.write(&args.out)?;

    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} epochs: val acc {:.4}, balanced {:.4}, mcc {:.4}",
            history.epochs.len(),
            last.val_accuracy,
            last.val_balanced_accuracy,
            last.val_mcc
        );
    }
    for w in &history.warnings {
        eprintln!("warning: {}", w);
    }
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (params, _) = checkpoint::load(&args.ckpt)?;
    let data_path = args.data.join(format!("{}.windows", args.split));
    let ws = read_windows(&data_path)
        .with_context(|| format!("reading {}", data_path.display()))?;
    let report = evaluate_windows(&params, &ws)?;

    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
    let mut mb = ManifestBuilder::new("eval", serde_json::to_value(&args)?, None);
    mb.input(&args.ckpt).input(&data_path).output(&args.report);

    if let Some(confusion) = &args.confusion {
        std::fs::write(confusion, report.confusion.to_csv())?;
        mb.output(confusion);
    }
    if let Some(dir) = &args.dump_attention {
        std::fs::create_dir_all(dir)?;
        for (i, w) in ws.windows.iter().take(8).enumerate() {
            let alpha = semg_core::model::attention_matrix(&params, &w.data)?;
            let mut csv = String::new();
            for r in 0..alpha.rows() {
                let row: Vec<String> = alpha.row(r).iter().map(f64::to_string).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            let path = dir.join(format!("alpha_{:03}_label{}.csv", i, w.label));
            std::fs::write(&path, csv)?;
            mb.output(&path);
        }
    }
    mb.write(&args.report)?;
    println!(
        "{}: accuracy {:.4}, balanced {:.4}, mcc {:.4} ({} windows)",
        args.split,
        report.accuracy,
        report.balanced_accuracy,
        report.mcc,
        ws.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    name: String,
    parameters: usize,
    accuracy: f64,
    balanced_accuracy: f64,
    mcc: f64,
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    if args.suite != "table3" {
        bail!("unknown suite `{}` (expected `table3`)", args.suite);
    }
    let test_path = args.data.join("test.windows");
    let test_ws = read_windows(&test_path)
        .with_context(|| format!("reading {}", test_path.display()))?;

    std::fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    for variant in AblationVariant::all() {
        let augment = (!args.no_augment).then_some(AugmentConfig {
            corrected_snr: args.corrected_snr,
            seed: semg_core::rng::derive(args.seed, 0x41_55_47),
            ..AugmentConfig::new(0)
        });
        let (mut params, _) = train_once(
            &args.data,
            variant.name(),
            args.width,
            args.classes,
            args.epochs,
            args.batch,
            1e-3,
            1e-5,
            5.min(args.epochs.saturating_sub(1)),
            2.0,
            args.seed,
            augment,
        )?;
        let report = evaluate_windows(&params, &test_ws)?;
        println!(
            "{:18} params {:>9} acc {:.4} bal {:.4} mcc {:.4}",
            variant.name(),
            params.trainable_param_count(),
            report.accuracy,
            report.balanced_accuracy,
            report.mcc
        );
        rows.push(AblationRow {
            name: variant.name().to_string(),
            parameters: params.trainable_param_count(),
            accuracy: report.accuracy,
            balanced_accuracy: report.balanced_accuracy,
            mcc: report.mcc,
        });
    }

    let json_path = args.out.join("ablation.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&rows)?)?;
    let csv_path = args.out.join("ablation.csv");
    let mut csv = String::from("name,parameters,accuracy,balanced_accuracy,mcc\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name, r.parameters, r.accuracy, r.balanced_accuracy, r.mcc
        ));
    }
    std::fs::write(&csv_path, csv)?;

    let mut mb = ManifestBuilder::new("ablate", serde_json::to_value(&args)?, Some(args.seed));
    mb.input(&test_path).output(&json_path).output(&csv_path);
    mb.write(&args.out)?;
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}
