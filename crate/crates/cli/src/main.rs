//! `sasr`: phantom synthesis, training, inference and evaluation from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or I/O error, 3 a
//! verification step (gradient check) failed.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sasr_core::evaluation::{evaluate_sample, psnr, ssim_metric, write_report, EvalOptions, ReportFormat};
use sasr_core::gradsuite::{run_suite, SuiteOptions, TOLERANCE};
use sasr_core::imaging::{degrade_to_synthetic_lr, read_pgm, write_pgm, BinaryMask, ImageGray};
use sasr_core::training::{
    read_corpus, synthesize_corpus, write_corpus, Checkpoint, TrainConfig, Trainer, HR_SUFFIX,
    REAL_SUFFIX, SYNTH_SUFFIX, VESSEL_SUFFIX,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sasr", version, about = "Domain-adaptive x2 super-resolution for angiography images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a phantom corpus of HR / synthetic-LR / realistic-LR triples plus vessel masks.
    Synth {
        #[arg(long)]
        count: usize,
        /// HR side length in pixels (even).
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Bicubic half-resolution downsample of a PGM image or a directory of them.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a corpus directory written by `synth`.
    Train {
        /// Key = value configuration file; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Receives `checkpoint.bin` and `loss_log.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Train with the reconstruction loss only; no discriminator.
        #[arg(long)]
        supervised_only: bool,
        /// Continue from `<out>/checkpoint.bin`. A given config may only change `epochs`.
        #[arg(long)]
        resume: bool,
    },
    /// Super-resolve a PGM image or a directory of them with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions against references; writes CSV, or JSON for a `.json` path.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        ref_dir: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Ground-truth vessel masks; enables segmentation scores.
        #[arg(long)]
        mask_dir: Option<PathBuf>,
    },
    /// Print PSNR and SSIM between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Finite-difference check of every differentiable operation and network component.
    Gradcheck {
        /// Fewer seeds and sampled coordinates.
        #[arg(long)]
        quick: bool,
    },
}

/// A check ran to completion and reported failure.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<VerificationFailed>() => {
            eprintln!("verification failed: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(2)
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    e.chain().map(|c| c.to_string().replace('\n', " ")).collect::<Vec<_>>().join(": ")
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { count, size, seed, out_dir } => {
            if count == 0 {
                bail!("--count must be positive");
            }
            let samples = synthesize_corpus(count, size, seed)?;
            write_corpus(&out_dir, &samples)?;
            println!("wrote {count} samples to {}", out_dir.display());
        }
        Command::Degrade { input, out } => {
            let n = map_images(&input, &out, |img| Ok(degrade_to_synthetic_lr(img)?))?;
            println!("degraded {n} image(s)");
        }
        Command::Train { config, data, out, supervised_only, resume } => train(config, &data, &out, supervised_only, resume)?,
        Command::Infer { checkpoint, input, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut gen = Trainer::from_checkpoint(&ckpt)?.gen;
            let n = map_images(&input, &out, |img| Ok(ImageGray::from_tensor(&gen.infer(&img.to_tensor())?)?))?;
            println!("reconstructed {n} image(s)");
        }
        Command::Eval { pred_dir, ref_dir, report, mask_dir } => evaluate(&pred_dir, &ref_dir, &report, mask_dir.as_deref())?,
        Command::Metrics { a, b } => {
            let (a, b) = (read_pgm(&a)?, read_pgm(&b)?);
            println!("psnr={:.4} ssim={:.6}", psnr(&a, &b)?, ssim_metric(&a, &b)?);
        }
        Command::Gradcheck { quick } => {
            let opts = if quick {
                SuiteOptions { op_seeds: 2, model_seeds: 1, param_samples: 3 }
            } else {
                SuiteOptions::default()
            };
            let cases = run_suite(opts)?;
            let failed: Vec<_> = cases.iter().filter(|c| !c.passed()).collect();
            for c in &cases {
                println!("{:<4} {:<48} {:.3e}", if c.passed() { "ok" } else { "FAIL" }, c.name, c.max_rel_error);
            }
            println!("{} cases, {} failed, tolerance {TOLERANCE:e}", cases.len(), failed.len());
            if !failed.is_empty() {
                let names: Vec<_> = failed.iter().map(|c| c.name.as_str()).collect();
                return Err(VerificationFailed(format!("gradient check exceeded tolerance for {}", names.join(", "))).into());
            }
        }
    }
    Ok(())
}

fn train(config: Option<PathBuf>, data: &Path, out: &Path, supervised_only: bool, resume: bool) -> Result<()> {
    let file_cfg = match &config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(TrainConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let corpus = read_corpus(data)?;
    let mut trainer = if resume {
        let ckpt = Checkpoint::load(&out.join("checkpoint.bin"))?;
        let mut t = Trainer::from_checkpoint(&ckpt)?;
        if let Some(cfg) = file_cfg {
            let same = TrainConfig { epochs: t.cfg.epochs, ..cfg.clone() };
            if same != t.cfg {
                bail!("config differs from the checkpoint in more than `epochs`");
            }
            t.cfg.epochs = cfg.epochs;
        }
        if supervised_only && !t.cfg.supervised_only {
            bail!("--supervised-only conflicts with the checkpoint's configuration");
        }
        t
    } else {
        let mut cfg = file_cfg.unwrap_or_default();
        cfg.supervised_only |= supervised_only;
        Trainer::new(cfg)?
    };
    let start = trainer.epoch;
    let log = trainer.train(&corpus, Some(out))?;
    let last = log.last().map(|r| r.total(&trainer.cfg));
    println!(
        "trained epochs {}..{} ({} steps) on {} samples; last generator loss {}",
        start,
        trainer.epoch,
        log.len(),
        corpus.len(),
        last.map_or("n/a".to_string(), |v| format!("{v:.5}"))
    );
    Ok(())
}

/// Applies `f` to one PGM file, or to every `.pgm` in a directory (same names in `out`).
fn map_images(input: &Path, out: &Path, mut f: impl FnMut(&ImageGray) -> Result<ImageGray>) -> Result<usize> {
    if !input.is_dir() {
        let img = f(&read_pgm(input)?)?;
        write_pgm(out, &img)?;
        return Ok(1);
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let files = pgm_files(input)?;
    for path in &files {
        let img = f(&read_pgm(path)?).with_context(|| path.display().to_string())?;
        write_pgm(out.join(path.file_name().expect("listed file")), &img)?;
    }
    Ok(files.len())
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .pgm files in {}", dir.display());
    }
    Ok(files)
}

/// Sample id of a file name: the stem with any corpus suffix removed.
fn sample_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [SYNTH_SUFFIX, REAL_SUFFIX, HR_SUFFIX, VESSEL_SUFFIX] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name.strip_suffix(".pgm").unwrap_or(&name).to_string()
}

/// `<id>.pgm` if present, else the corpus name `<id><suffix>`.
fn companion(dir: &Path, id: &str, suffix: &str) -> Result<PathBuf> {
    let plain = dir.join(format!("{id}.pgm"));
    if plain.is_file() {
        return Ok(plain);
    }
    let corpus = dir.join(format!("{id}{suffix}"));
    if corpus.is_file() {
        return Ok(corpus);
    }
    bail!("no match for sample `{id}` in {}", dir.display())
}

fn evaluate(pred_dir: &Path, ref_dir: &Path, report: &Path, mask_dir: Option<&Path>) -> Result<()> {
    let opts = EvalOptions::default();
    let mut rows = Vec::new();
    for path in pred_dir_files(pred_dir)? {
        let id = sample_id(&path);
        let pred = read_pgm(&path)?;
        let reference = read_pgm(companion(ref_dir, &id, HR_SUFFIX)?)?;
        let truth = match mask_dir {
            Some(dir) => Some(BinaryMask::threshold(&read_pgm(companion(dir, &id, VESSEL_SUFFIX)?)?, 0.5)),
            None => None,
        };
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(id);
        rows.push(evaluate_sample(&label, &pred, &reference, truth.as_ref(), &opts).with_context(|| path.display().to_string())?);
    }
    write_report(&rows, report, ReportFormat::from_path(report))?;
    println!("evaluated {} sample(s); report at {}", rows.len(), report.display());
    Ok(())
}

fn pred_dir_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    pgm_files(dir)
}
