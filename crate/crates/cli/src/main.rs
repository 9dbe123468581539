use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use partswap_core::blend::BlendParams;
use partswap_core::fit::FitParams;
use partswap_core::landmarks::save_landmarks;
use partswap_core::manifest::{execute_manifest, Manifest};
use partswap_core::model::{load_model, save_model, ModelFormat, MorphableModel, Part};
use partswap_core::pipeline::{run_swap, ImageBundle, Side, SwapJob, SwapOutcome, SwapStatus};
use partswap_core::synth::{generate_synthetic_model, synthetic_sample};
use serde_json::json;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NOTHING_SWAPPED: u8 = 3;

#[derive(Parser)]
#[command(name = "partswap", version, about = "Swap facial parts between two photographs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Swap parts from a source face into a target face.
    Swap(SwapArgs),
    /// Run every job of a JSON manifest.
    SwapBatch(BatchArgs),
    /// Write a synthetic morphable model (.json for text, anything else binary).
    SynthModel(SynthModelArgs),
    /// Render synthetic faces with landmarks and masks.
    SynthCorpus(SynthCorpusArgs),
}

#[derive(Args)]
struct SwapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    source_landmarks: PathBuf,
    #[arg(long)]
    target_landmarks: PathBuf,
    #[arg(long)]
    source_mask: Option<PathBuf>,
    #[arg(long)]
    target_mask: Option<PathBuf>,
    /// Comma-separated subset of eyes, nose, mouth; or full.
    #[arg(long, value_delimiter = ',', required = true)]
    parts: Vec<Part>,
    #[arg(long, default_value_t = FitParams::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = FitParams::default().n_iterations)]
    iters: usize,
    #[arg(long, default_value_t = BlendParams::default().tol)]
    blend_tol: f64,
    #[arg(long)]
    debug_dir: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Jobs run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Model file; overrides the manifest's `model`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SynthModelArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    vertices: usize,
    #[arg(long, default_value_t = 20)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthCorpusArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
}

fn load(path: &Path) -> Result<MorphableModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn summary(outcome: &SwapOutcome) -> serde_json::Value {
    let s = &outcome.stats;
    json!({
        "status": status_name(outcome.status),
        "valid_pairs": s.valid_pairs,
        "candidate_triangles": s.candidate_triangles,
        "valid_pair_fraction": s.valid_pair_fraction(),
        "region_pixels": s.region_pixels,
        "blend_residual": s.blend_residual,
    })
}

fn status_name(status: SwapStatus) -> &'static str {
    match status {
        SwapStatus::Swapped => "swapped",
        SwapStatus::NothingSwapped => "nothing-swapped",
    }
}

fn swap(args: SwapArgs) -> Result<u8> {
    let model = load(&args.model)?;
    let source = ImageBundle::load(&args.source, &args.source_landmarks, args.source_mask.as_deref(), Side::Source)?;
    let target = ImageBundle::load(&args.target, &args.target_landmarks, args.target_mask.as_deref(), Side::Target)?;
    let mut job = SwapJob::new(source, target, args.parts);
    job.fit_params = FitParams {
        lambda: args.lambda,
        n_iterations: args.iters,
    };
    job.blend_params.tol = args.blend_tol;
    job.debug_dir = args.debug_dir;

    let outcome = run_swap(&model, &job)?;
    outcome
        .image
        .save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    println!("{}", summary(&outcome));
    Ok(match outcome.status {
        SwapStatus::Swapped => EXIT_OK,
        SwapStatus::NothingSwapped => EXIT_NOTHING_SWAPPED,
    })
}

fn swap_batch(args: BatchArgs) -> Result<u8> {
    let manifest = Manifest::load(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let model_path = match (&args.model, &manifest.model) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => bail!("no model given: pass --model or set \"model\" in the manifest"),
    };
    let model = load(&model_path)?;
    let reports = execute_manifest(&model, &manifest, args.jobs);

    let (mut failed, mut nothing) = (0, 0);
    for (i, r) in reports.iter().enumerate() {
        let line = match &r.result {
            Ok(status) => {
                if *status == SwapStatus::NothingSwapped {
                    nothing += 1;
                }
                json!({ "job": i, "output": r.output, "status": status_name(*status) })
            }
            Err(e) => {
                failed += 1;
                log::error!("job {i}: {e}");
                json!({ "job": i, "output": r.output, "status": "error", "error": e.to_string() })
            }
        };
        println!("{line}");
    }
    Ok(if failed > 0 {
        EXIT_ERROR
    } else if !reports.is_empty() && nothing == reports.len() {
        EXIT_NOTHING_SWAPPED
    } else {
        EXIT_OK
    })
}

fn synth_model(args: SynthModelArgs) -> Result<u8> {
    let model = generate_synthetic_model(args.vertices, args.components, args.seed)?;
    save_model(&model, &args.output, ModelFormat::from_path(&args.output))
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(EXIT_OK)
}

fn synth_corpus(args: SynthCorpusArgs) -> Result<u8> {
    let model = load(&args.model)?;
    fs::create_dir_all(&args.out_dir)?;
    for i in 0..args.count {
        let sample = synthetic_sample(&model, args.seed.wrapping_add(i as u64), args.width, args.height);
        let stem = args.out_dir.join(format!("face_{i:03}"));
        sample.image.save(stem.with_extension("png"))?;
        sample.mask.save(args.out_dir.join(format!("face_{i:03}_mask.png")))?;
        save_landmarks(stem.with_extension("json"), &sample.landmarks)?;
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Swap(a) => swap(a),
        Command::SwapBatch(a) => swap_batch(a),
        Command::SynthModel(a) => synth_model(a),
        Command::SynthCorpus(a) => synth_corpus(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
