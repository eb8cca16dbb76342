//! Command-line pipeline driver: decode, initialize, merge, emit.
//!
//! `segment` writes four artifacts per input image: the dense label map
//! (`.labels.pgm`), the segmentation colored by region means
//! (`.seg.ppm`), a red boundary overlay (`.edges.ppm`), and the JSON run
//! report (`.report.json`). `eval` scores a label map against one or
//! more ground-truth boundary maps.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use drmseg::drm::{self, DrmConfig, EngineKind, MergePolicy};
use drmseg::eval::{boundary_of, match_prf, BoundaryMap};
use drmseg::render;
use drmseg::initseg::{self, InitMode, InitSegConfig};
use drmseg::pnm;
use drmseg::report::{
    degree_fraction_below, AuditSummary, ConfigEcho, PhaseTimings, RunReport, SCHEMA_VERSION,
};
use drmseg::sprt::SprtConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "drmseg", version, about = "Region-merging image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one or more PPM images.
    Segment(SegmentArgs),
    /// Score a segmentation against ground-truth boundary maps.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Watershed,
    Grid,
    External,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Baseline,
    Nng,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Level,
    GlobalMin,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input image(s), binary P6 PPM.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,

    /// Output path prefix. With several inputs, the input stem is
    /// appended: `<out>.<stem>`.
    #[arg(long = "out")]
    output: PathBuf,

    /// Initial segmentation mode.
    #[arg(long = "init", value_enum, default_value = "watershed")]
    init: InitArg,

    /// Label map for --init external (16-bit PGM).
    #[arg(long = "labels")]
    labels: Option<PathBuf>,

    /// Tile side for --init grid.
    #[arg(long = "grid-block", default_value_t = 16)]
    grid_block: u32,

    /// Median prefilter radius on the gradient (watershed init).
    #[arg(long = "median-radius", default_value_t = 1)]
    median_radius: u32,

    #[arg(long = "lambda1", default_value_t = 2.0)]
    lambda1: f64,

    #[arg(long = "lambda2", default_value_t = 1.0)]
    lambda2: f64,

    #[arg(long = "alpha", default_value_t = 0.05)]
    alpha: f64,

    #[arg(long = "beta", default_value_t = 0.05)]
    beta: f64,

    /// Truncation bound on consistency-test trials.
    #[arg(long = "n0", default_value_t = 10)]
    n0: u32,

    /// Probability clamp floor.
    #[arg(long = "prob-floor", default_value_t = 1e-6)]
    prob_floor: f64,

    /// Per-region sample cap of one trial.
    #[arg(long = "max-samples", default_value_t = 4096)]
    max_samples: usize,

    /// One all-pixel trial per test; fully deterministic.
    #[arg(long = "deterministic", default_value_t = false)]
    deterministic: bool,

    #[arg(long = "engine", value_enum, default_value = "nng")]
    engine: EngineArg,

    #[arg(long = "policy", value_enum, default_value = "global-min")]
    policy: PolicyArg,

    /// Random seed; overrides the DRM_SEED environment variable.
    #[arg(long = "seed")]
    seed: Option<u64>,

    /// Record one report entry per consistency test.
    #[arg(long = "verbose", default_value_t = false)]
    verbose: bool,

    /// Run this many images concurrently.
    #[arg(long = "jobs", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Detected label map (16-bit PGM).
    #[arg(long = "detected")]
    detected: PathBuf,

    /// Ground-truth boundary map(s), PGM with nonzero = boundary.
    #[arg(long = "truth", required = true, num_args = 1..)]
    truth: Vec<PathBuf>,

    /// Match tolerance in pixels.
    #[arg(long = "tolerance", default_value_t = 2.0)]
    tolerance: f64,

    /// Relative cost between precision and recall in the F-measure.
    #[arg(long = "alpha-f", default_value_t = 0.5)]
    alpha_f: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(args) => cmd_segment(&args),
        Command::Eval(args) => cmd_eval(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn effective_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("DRM_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow!("DRM_SEED must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    let base_seed = effective_seed(args.seed)?;
    let jobs = args.jobs.max(1);

    let mut tasks: Vec<(usize, PathBuf, PathBuf, u64)> = Vec::new();
    for (index, input) in args.input.iter().enumerate() {
        let out = if args.input.len() == 1 {
            args.output.clone()
        } else {
            let stem = input
                .file_stem()
                .ok_or_else(|| anyhow!("input {} has no file stem", input.display()))?
                .to_string_lossy();
            PathBuf::from(format!("{}.{stem}", args.output.display()))
        };
        tasks.push((index, input.clone(), out, base_seed + index as u64));
    }

    let results: Vec<Result<String>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in tasks.chunks(tasks.len().div_ceil(jobs)) {
            handles.push(scope.spawn(move || {
                chunk
                    .iter()
                    .map(|(_, input, out, seed)| segment_one(args, input, out, *seed))
                    .collect::<Vec<_>>()
            }));
        }
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut failed = false;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                failed = true;
                eprintln!("error: {e:#}");
            }
        }
    }
    if failed {
        bail!("one or more jobs failed");
    }
    Ok(())
}

fn segment_one(args: &SegmentArgs, input: &Path, out: &Path, seed: u64) -> Result<String> {
    let t = Instant::now();
    let bytes =
        std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let img = pnm::decode_ppm(&bytes).with_context(|| format!("decoding {}", input.display()))?;
    let decode_ms = t.elapsed().as_secs_f64() * 1e3;

    let init_cfg = InitSegConfig {
        mode: match args.init {
            InitArg::Watershed => InitMode::Watershed,
            InitArg::Grid => InitMode::Grid,
            InitArg::External => InitMode::External,
        },
        median_radius: args.median_radius,
        grid_block: args.grid_block,
        quant_levels: 256,
    };
    init_cfg.validate().map_err(|e| anyhow!(e))?;

    let t = Instant::now();
    let external = match args.init {
        InitArg::External => {
            let path = args
                .labels
                .as_ref()
                .ok_or_else(|| anyhow!("--init external requires --labels"))?;
            let bytes =
                std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            Some(pnm::decode_pgm16(&bytes).with_context(|| format!("decoding {}", path.display()))?)
        }
        _ => None,
    };
    let init_lm = initseg::initialize(&img, &init_cfg, external.as_ref())?;
    let init_ms = t.elapsed().as_secs_f64() * 1e3;

    let cfg = DrmConfig {
        sprt: SprtConfig {
            lambda1: args.lambda1,
            lambda2: args.lambda2,
            alpha: args.alpha,
            beta: args.beta,
            n0: args.n0,
            prob_floor: args.prob_floor,
            covar_regularizer: 1.0,
            max_samples_per_trial: args.max_samples,
            deterministic: args.deterministic,
        },
        policy: match args.policy {
            PolicyArg::Level => MergePolicy::Level,
            PolicyArg::GlobalMin => MergePolicy::GlobalMin,
        },
        engine: match args.engine {
            EngineArg::Baseline => EngineKind::Baseline,
            EngineArg::Nng => EngineKind::NngAccelerated,
        },
        seed,
        max_iterations: None,
        record_sprt_trace: args.verbose,
    };
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }

    let run = drm::run(&img, &init_lm, &cfg)?;

    let objective = drmseg::audit::objective_audit(&img, &init_lm, &run.trace);
    let termination = drmseg::audit::audit_termination(&img, &init_lm, &run.rag, &run.trace);
    let audit = AuditSummary {
        not_under_merged: termination.not_under_merged,
        not_over_merged: termination.not_over_merged,
        objective_replay_ok: objective.is_ok(),
        replay_reproduces_labels: termination.replay_reproduces_labels,
    };
    let f_total = objective.as_ref().map(|o| o.f_total).unwrap_or(f64::NAN);

    let t = Instant::now();
    let labels_path = with_suffix(out, "labels.pgm");
    let seg_path = with_suffix(out, "seg.ppm");
    let edges_path = with_suffix(out, "edges.ppm");
    let report_path = with_suffix(out, "report.json");
    std::fs::write(&labels_path, pnm::encode_pgm16(&run.labels)?)
        .with_context(|| format!("writing {}", labels_path.display()))?;
    std::fs::write(&seg_path, pnm::encode_ppm(&render::mean_color_image(&run.rag, &run.labels)))?;
    std::fs::write(&edges_path, pnm::encode_ppm(&render::boundary_overlay(&img, &run.labels)))?;
    let emit_ms = t.elapsed().as_secs_f64() * 1e3;

    let report = RunReport {
        schema: SCHEMA_VERSION,
        config: ConfigEcho {
            input: input.display().to_string(),
            output: out.display().to_string(),
            init: format!("{:?}", init_cfg.mode).to_lowercase(),
            labels: args.labels.as_ref().map(|p| p.display().to_string()),
            grid_block: args.grid_block,
            median_radius: args.median_radius,
            quant_levels: init_cfg.quant_levels,
            lambda1: args.lambda1,
            lambda2: args.lambda2,
            alpha: args.alpha,
            beta: args.beta,
            n0: args.n0,
            prob_floor: args.prob_floor,
            max_samples: args.max_samples,
            deterministic: args.deterministic,
            engine: match args.engine {
                EngineArg::Baseline => "baseline".into(),
                EngineArg::Nng => "nng".into(),
            },
            policy: match args.policy {
                PolicyArg::Level => "level".into(),
                PolicyArg::GlobalMin => "global-min".into(),
            },
            seed,
            verbose: args.verbose,
        },
        seed,
        initial_regions: run.initial_regions,
        final_regions: run.final_regions,
        merge_count: run.merge_count,
        blacklist_count: run.blacklist_count,
        f_total,
        audit,
        degree_below_15_fraction: degree_fraction_below(&run.degree_histogram, 15),
        degree_histogram: run.degree_histogram.clone(),
        sample_cap_hits: run.sample_cap_hits,
        iterations: run.counters.clone(),
        timings_ms: PhaseTimings {
            decode_ms,
            init_ms,
            build_ms: run.build_ms,
            merge_ms: run.merge_ms,
            emit_ms,
        },
        sprt_trace: args.verbose.then(|| run.sprt_trace.clone()),
    };
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;

    Ok(format!(
        "{}: {} -> {} regions, {} merges, {} boundaries, audits {}",
        input.display(),
        run.initial_regions,
        run.final_regions,
        run.merge_count,
        run.blacklist_count,
        if termination.all_pass() && objective.is_ok() { "pass" } else { "FAIL" },
    ))
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", out.display()))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let bytes = std::fs::read(&args.detected)
        .with_context(|| format!("reading {}", args.detected.display()))?;
    let lm = pnm::decode_pgm16(&bytes)
        .with_context(|| format!("decoding {}", args.detected.display()))?;
    let detected = boundary_of(&lm);

    let mut truths = Vec::new();
    for path in &args.truth {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (w, h, samples) =
            pnm::decode_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        truths.push(BoundaryMap::from_mask(w, h, samples.iter().map(|&s| s != 0).collect()));
    }

    let result = match_prf(&detected, &truths, args.tolerance, args.alpha_f)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
