//! surfhash command line: generate hashes, verify images, build attacked
//! corpora, and run the experiments.
//!
//! Exit codes are the machine contract: 0 success/authentic, 1 tampered,
//! 2 any error (including usage errors). Machine-readable output (JSON,
//! CSV) goes to stdout or files; human summaries go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use surfhash::attacks::{
    build_corpus, jpeg_compress, read_manifest, salt_pepper, tamper_patch, write_png,
    CorpusOptions, TamperMode, TamperSpec,
};
use surfhash::harness::{
    calibrate_from_distances, evaluate, pair_min_distance, sweep_k, write_calibration_csv,
    write_calibration_summary_csv, write_evaluation_csv, write_evaluation_summary_csv,
    write_sweep_csv, CalibrationResult,
};
use surfhash::hash::{decode_hash, encode_hash, generate_hash};
use surfhash::image_io::load_grayscale;
use surfhash::kmeans::KMeansConfig;
use surfhash::surf::DetectorConfig;
use surfhash::verify::{verify, Threshold, Verdict, DEFAULT_THRESHOLD};

#[derive(Parser)]
#[command(
    name = "surfhash",
    version,
    about = "Perceptual image hashing and tamper verification from clustered keypoint locations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the hash of an image and write it to a binary .ihsh file
    Hash(HashArgs),
    /// Verify an image against a hash file; prints a JSON report
    Verify(VerifyArgs),
    /// Apply one attack to an image and write the result as PNG
    Attack(AttackArgs),
    /// Corpus utilities
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Reproduce the experiments over a corpus manifest
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

/// Detector settings shared by every subcommand that detects keypoints.
/// They feed the configuration fingerprint embedded in hashes, so both ends
/// must pass the same values.
#[derive(Args, Clone)]
struct DetectorFlags {
    /// Scale-space octaves
    #[arg(long, default_value_t = 4)]
    octaves: usize,
    /// Filter sizes per octave
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Minimum area-normalized Hessian response
    #[arg(long, default_value_t = 1e-4)]
    response_threshold: f64,
    /// Keep only the strongest N keypoints
    #[arg(long)]
    max_keypoints: Option<usize>,
}

impl DetectorFlags {
    fn to_config(&self) -> DetectorConfig {
        DetectorConfig {
            octaves: self.octaves,
            levels_per_octave: self.levels,
            response_threshold: self.response_threshold,
            max_keypoints: self.max_keypoints,
            ..DetectorConfig::default()
        }
    }
}

#[derive(Args)]
struct HashArgs {
    /// Image to hash (PNG or JPEG)
    image: PathBuf,
    /// Output hash file
    #[arg(short, long)]
    output: PathBuf,
    /// Number of cluster centers in the hash
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Seed for the k-means++ initialization
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    detector: DetectorFlags,
    /// Also print the centers as text, one "x y" pair per line
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Image to verify
    image: PathBuf,
    /// Hash file produced by `surfhash hash`
    hashfile: PathBuf,
    /// Decision threshold on the minimum center distance, in pixels
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Must match the k the hash was generated with
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Solid,
    Noise,
    Splice,
}

impl From<ModeArg> for TamperMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Solid => TamperMode::SolidFill,
            ModeArg::Noise => TamperMode::NoiseFill,
            ModeArg::Splice => TamperMode::Splice,
        }
    }
}

#[derive(Args)]
#[command(group(
    ArgGroup::new("attack_kind").required(true).args(["jpeg", "saltpepper", "tamper"]),
))]
struct AttackArgs {
    /// Input image
    image: PathBuf,
    /// Output PNG
    #[arg(short, long)]
    output: PathBuf,
    /// JPEG round trip at this quality (1-100)
    #[arg(long)]
    jpeg: Option<u8>,
    /// Salt-and-pepper noise at this density (0-1)
    #[arg(long)]
    saltpepper: Option<f64>,
    /// Tamper patch covering this fraction of the image area (0-1)
    #[arg(long)]
    tamper: Option<f64>,
    /// Patch fill mode for --tamper
    #[arg(long, value_enum, default_value_t = ModeArg::Noise)]
    mode: ModeArg,
    /// Donor image for --mode splice
    #[arg(long)]
    donor: Option<PathBuf>,
    /// RNG seed for --saltpepper and --tamper
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Apply an attack grid to every image in a directory
    Build(CorpusBuildArgs),
}

#[derive(Args)]
struct CorpusBuildArgs {
    /// Directory of source PNG/JPEG images (non-recursive)
    srcdir: PathBuf,
    /// Directory for attacked outputs
    #[arg(short, long)]
    output: PathBuf,
    /// Manifest CSV to write
    #[arg(long)]
    manifest: PathBuf,
    /// JPEG qualities to apply
    #[arg(long, value_delimiter = ',', default_values_t = vec![90u8, 70, 50])]
    jpeg_qualities: Vec<u8>,
    /// Salt-and-pepper densities to apply
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.02, 0.05])]
    sp_densities: Vec<f64>,
    /// Tamper-patch area fractions to apply
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05])]
    tamper_fractions: Vec<f64>,
    /// Patch fill mode
    #[arg(long, value_enum, default_value_t = ModeArg::Noise)]
    mode: ModeArg,
    /// Base RNG seed; each output derives its own seed from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Average minimum distance per k over manifest pairs
    SweepK(SweepKArgs),
    /// Accuracy curves per attack kind and their crossing thresholds
    Calibrate(CalibrateArgs),
    /// Detection and false-alarm rates over a corpus at a fixed threshold
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
struct ExperimentCommonArgs {
    /// Corpus manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV
    #[arg(short, long)]
    output: PathBuf,
    /// Seed for the k-means++ initialization on the hashing side
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Args)]
struct SweepKArgs {
    #[command(flatten)]
    common: ExperimentCommonArgs,
    /// k values to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8, 16, 32])]
    k_values: Vec<usize>,
    /// Use only manifest rows with this label (original, tampered, all)
    #[arg(long, default_value = "all")]
    label: String,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: ExperimentCommonArgs,
    /// Number of clusters
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Threshold grid start
    #[arg(long, default_value_t = 0.0)]
    grid_min: f64,
    /// Threshold grid end (inclusive)
    #[arg(long, default_value_t = 10.0)]
    grid_max: f64,
    /// Threshold grid step
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ExperimentCommonArgs,
    /// Number of clusters
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Decision threshold
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Summary CSV with the aggregate rates (default: <output>_summary.csv)
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Hash(args) => run_hash(args),
        Command::Verify(args) => run_verify(args),
        Command::Attack(args) => run_attack(args),
        Command::Corpus(CorpusCommand::Build(args)) => run_corpus_build(args),
        Command::Experiment(cmd) => run_experiment(cmd),
    }
}

fn run_hash(args: HashArgs) -> anyhow::Result<ExitCode> {
    let img = load_grayscale(&args.image)?;
    let dcfg = args.detector.to_config();
    let kcfg = KMeansConfig {
        k: args.k,
        rng_seed: args.seed,
        ..KMeansConfig::default()
    };
    let hash = generate_hash(&img, &dcfg, &kcfg)?;
    std::fs::write(&args.output, encode_hash(&hash))
        .with_context(|| format!("writing {}", args.output.display()))?;
    if args.text {
        print!("{}", hash.to_text());
    }
    eprintln!(
        "hashed {} ({} keypoint clusters) -> {}",
        args.image.display(),
        hash.k(),
        args.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let img = load_grayscale(&args.image)?;
    let bytes = std::fs::read(&args.hashfile)
        .with_context(|| format!("reading {}", args.hashfile.display()))?;
    let received = decode_hash(&bytes)?;
    let dcfg = args.detector.to_config();
    let kcfg = KMeansConfig {
        k: args.k,
        ..KMeansConfig::default()
    };
    let threshold = Threshold::new(args.threshold)?;
    let report = verify(&img, &received, threshold, &dcfg, &kcfg)?;
    println!("{}", serde_json::to_string(&report)?);
    match report.verdict {
        Verdict::Authentic => Ok(ExitCode::SUCCESS),
        Verdict::Tampered => Ok(ExitCode::from(1)),
    }
}

fn run_attack(args: AttackArgs) -> anyhow::Result<ExitCode> {
    let img = load_grayscale(&args.image)?;
    let out = if let Some(q) = args.jpeg {
        jpeg_compress(&img, q)?
    } else if let Some(d) = args.saltpepper {
        salt_pepper(&img, d, args.seed)?
    } else if let Some(f) = args.tamper {
        let mode: TamperMode = args.mode.into();
        let donor = match (&args.donor, mode) {
            (Some(path), TamperMode::Splice) => Some(load_grayscale(path)?),
            (None, TamperMode::Splice) => {
                return Err(anyhow!("--mode splice requires --donor"));
            }
            _ => None,
        };
        let spec = TamperSpec {
            area_fraction: f,
            mode,
            rng_seed: args.seed,
        };
        let (out, region) = tamper_patch(&img, &spec, donor.as_ref())?;
        eprintln!(
            "patched ({},{})-({},{}) [{} px]",
            region.x0,
            region.y0,
            region.x1,
            region.y1,
            region.area()
        );
        out
    } else {
        unreachable!("clap enforces the attack group");
    };
    write_png(&out, &args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(ExitCode::SUCCESS)
}

fn run_corpus_build(args: CorpusBuildArgs) -> anyhow::Result<ExitCode> {
    let opts = CorpusOptions {
        jpeg_qualities: args.jpeg_qualities,
        saltpepper_densities: args.sp_densities,
        tamper_fractions: args.tamper_fractions,
        tamper_mode: args.mode.into(),
        base_seed: args.seed,
    };
    let rows = build_corpus(&args.srcdir, &args.output, &args.manifest, &opts)?;
    eprintln!(
        "built {} attacked images under {}; manifest at {}",
        rows.len(),
        args.output.display(),
        args.manifest.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_experiment(cmd: ExperimentCommand) -> anyhow::Result<ExitCode> {
    let common = match &cmd {
        ExperimentCommand::SweepK(a) => &a.common,
        ExperimentCommand::Calibrate(a) => &a.common,
        ExperimentCommand::Evaluate(a) => &a.common,
    };
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cmd {
        ExperimentCommand::SweepK(args) => run_sweep_k(args),
        ExperimentCommand::Calibrate(args) => run_calibrate(args),
        ExperimentCommand::Evaluate(args) => run_evaluate(args),
    }
}

fn run_sweep_k(args: SweepKArgs) -> anyhow::Result<ExitCode> {
    let manifest = read_manifest(&args.common.manifest)?;
    let rows: Vec<_> = manifest
        .iter()
        .filter(|r| args.label == "all" || r.label == args.label)
        .collect();
    if rows.is_empty() {
        return Err(anyhow!("no manifest rows match label {:?}", args.label));
    }
    let pairs = rows
        .iter()
        .map(|r| Ok((load_grayscale(&r.source_path)?, load_grayscale(&r.output_path)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let dcfg = args.common.detector.to_config();
    let kcfg = KMeansConfig {
        rng_seed: args.common.seed,
        ..KMeansConfig::default()
    };
    let sweep = sweep_k(&pairs, &args.k_values, &dcfg, &kcfg)?;
    write_sweep_csv(&args.common.output, &sweep)?;
    for row in &sweep {
        let skipped = row
            .per_image_min_distance
            .iter()
            .filter(|c| c.is_none())
            .count();
        match row.average_min_distance {
            Some(avg) => eprintln!("k = {:>3}: average min distance {avg:.6} ({skipped} skipped)", row.k),
            None => eprintln!("k = {:>3}: every pair skipped", row.k),
        }
    }
    eprintln!("wrote {}", args.common.output.display());
    Ok(ExitCode::SUCCESS)
}

fn run_calibrate(args: CalibrateArgs) -> anyhow::Result<ExitCode> {
    let manifest = read_manifest(&args.common.manifest)?;
    let dcfg = args.common.detector.to_config();
    let kcfg = KMeansConfig {
        k: args.k,
        rng_seed: args.common.seed,
        ..KMeansConfig::default()
    };

    if !(args.grid_step > 0.0 && args.grid_max > args.grid_min) {
        return Err(anyhow!("grid must satisfy min < max with a positive step"));
    }
    let mut grid = Vec::new();
    let mut t = args.grid_min;
    while t <= args.grid_max + 1e-12 {
        grid.push(t);
        t += args.grid_step;
    }

    // distance per manifest row, grouped by attack kind for the originals
    let mut kinds: Vec<String> = manifest
        .iter()
        .filter(|r| r.label == "original")
        .map(|r| r.kind.clone())
        .collect();
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(anyhow!("manifest has no original-labeled rows"));
    }
    let tampered_rows: Vec<_> = manifest.iter().filter(|r| r.label == "tampered").collect();
    if tampered_rows.is_empty() {
        return Err(anyhow!("manifest has no tampered-labeled rows"));
    }

    let distance_of = |rows: &[&surfhash::attacks::ManifestRow]| -> anyhow::Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let original = load_grayscale(&r.source_path)?;
                let processed = load_grayscale(&r.output_path)?;
                Ok(pair_min_distance(&original, &processed, &dcfg, &kcfg)?)
            })
            .collect()
    };
    let tampered_distances = distance_of(&tampered_rows)?;

    let mut results: Vec<CalibrationResult> = Vec::new();
    for kind in &kinds {
        let kind_rows: Vec<_> = manifest
            .iter()
            .filter(|r| r.label == "original" && &r.kind == kind)
            .collect();
        let original_distances = distance_of(&kind_rows)?;
        let res = calibrate_from_distances(kind, &original_distances, &tampered_distances, &grid)?;
        eprintln!(
            "{kind}: crossing at threshold {:.4} with accuracy {:.2}%",
            res.crossing_threshold,
            res.crossing_accuracy * 100.0
        );
        results.push(res);
    }
    let avg = results.iter().map(|r| r.crossing_threshold).sum::<f64>() / results.len() as f64;
    eprintln!("average threshold over {} attack kinds: {avg:.4}", results.len());

    write_calibration_csv(&args.common.output, &results)?;
    let summary_path = summary_path_for(&args.common.output);
    write_calibration_summary_csv(&summary_path, &results)?;
    eprintln!(
        "wrote {} and {}",
        args.common.output.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_evaluate(args: EvaluateArgs) -> anyhow::Result<ExitCode> {
    let manifest = read_manifest(&args.common.manifest)?;
    let dcfg = args.common.detector.to_config();
    let kcfg = KMeansConfig {
        k: args.k,
        rng_seed: args.common.seed,
        ..KMeansConfig::default()
    };
    let threshold = Threshold::new(args.threshold)?;
    let result = evaluate(&manifest, threshold, &dcfg, &kcfg)?;

    write_evaluation_csv(&args.common.output, &result)?;
    let summary_path = args
        .summary
        .unwrap_or_else(|| summary_path_for(&args.common.output));
    write_evaluation_summary_csv(&summary_path, &result)?;

    match result.accuracy {
        Some(a) => eprintln!(
            "detection rate {:.2}% ({}/{} tampered)",
            a * 100.0,
            result.tampered_detected,
            result.tampered_total
        ),
        None => eprintln!("no tampered rows"),
    }
    match result.false_alarm_rate {
        Some(f) => eprintln!(
            "false-alarm rate {:.2}% ({}/{} originals)",
            f * 100.0,
            result.false_alarms,
            result.original_total
        ),
        None => eprintln!("no original rows"),
    }
    if result.failures > 0 {
        eprintln!("{} rows failed and were excluded", result.failures);
    }
    eprintln!(
        "wrote {} and {}",
        args.common.output.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn summary_path_for(output: &std::path::Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    output.with_file_name(format!("{stem}_summary.csv"))
}
