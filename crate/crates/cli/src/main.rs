//! `nisr` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use nisr::eval::{CheckpointSet, EvalReport, SUCCESS_THRESHOLD};
use nisr::io::{read_checkpoints, MatchFile};
use nisr::log_gabor::index_map_gray;
use nisr::pipeline::analyze;
use nisr::sweep::{write_csv_file, Harness, SweepKind};
use nisr::synth::SyntheticSource;
use nisr::{load_image, match_pipeline, register_and_fuse, Error, GrayImage, PipelineConfig};

const EXIT_MATCH_FAILURE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "nisr", version, about = "Multimodal image matching and registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match two images and write the matches as JSON.
    Match(MatchArgs),
    /// Warp the sensed image into the reference frame and render a checkerboard fusion.
    Register(RegisterArgs),
    /// Score a match file against ground-truth checkpoints.
    Eval(EvalArgs),
    /// Run a synthetic rotation or scale sweep of an image against itself.
    Sweep(SweepArgs),
    /// Dump phase congruency, detection and index maps of every layer.
    DebugMaps(DebugMapsArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_template: bool,
    /// Disable secondary orientations.
    #[arg(long)]
    no_str1: bool,
    /// Disable the double index map.
    #[arg(long)]
    no_str2: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    orientations: Option<usize>,
    #[arg(long)]
    octaves: Option<usize>,
    /// Descriptor window side in pixels.
    #[arg(long)]
    window: Option<usize>,
    /// Descriptor subregions per side.
    #[arg(long)]
    subregions: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> nisr::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if self.no_template {
            cfg.template = false;
        }
        if self.no_str1 {
            cfg.str1 = false;
        }
        if self.no_str2 {
            cfg.str2 = false;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_features {
            cfg.max_features = v;
        }
        if let Some(v) = self.orientations {
            cfg.n_orients = v;
        }
        if let Some(v) = self.octaves {
            cfg.n_octaves = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.subregions {
            cfg.subregions = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MatchArgs {
    reference: PathBuf,
    sensed: PathBuf,
    /// Output file; JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RegisterArgs {
    reference: PathBuf,
    sensed: PathBuf,
    #[arg(long)]
    matches: PathBuf,
    #[arg(long)]
    out_registered: PathBuf,
    #[arg(long)]
    out_fusion: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    matches: PathBuf,
    #[arg(long)]
    checkpoints: PathBuf,
    /// RMSE in pixels above which the pair counts as a failure.
    #[arg(long, default_value_t = SUCCESS_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct SweepArgs {
    reference: PathBuf,
    #[arg(long, conflicts_with = "scale")]
    rotation: bool,
    #[arg(long)]
    scale: bool,
    /// Number of sweep steps; 24 rotations or 7 scales by default.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SUCCESS_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DebugMapsArgs {
    reference: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FeatureStageFailed(_) | Error::NotEnoughMatches(_) | Error::Degenerate(_) | Error::ImageTooSmall { .. } => {
            EXIT_MATCH_FAILURE
        }
        _ => EXIT_IO,
    }
}

fn run_match(args: &MatchArgs) -> nisr::Result<()> {
    let cfg = args.config.resolve()?;
    let reference = load_image(&args.reference)?;
    let sensed = load_image(&args.sensed)?;
    let out = match_pipeline(&reference, &sensed, &cfg)?;
    let file = MatchFile::new(&cfg, &out)?;
    match &args.out {
        Some(path) => file.write(path)?,
        None => println!("{}", file.to_json()?),
    }
    let t = &file.transform;
    eprintln!(
        "matches {} (feature {}, template {}); scale {:.4} rotation {:.3} deg translation ({:.2}, {:.2})",
        out.matches.len(),
        out.stats.feature_inliers,
        out.stats.template_inliers,
        t.scale,
        t.rotation_deg,
        t.tx,
        t.ty
    );
    Ok(())
}

fn run_register(args: &RegisterArgs) -> nisr::Result<()> {
    let reference = load_image(&args.reference)?;
    let sensed = load_image(&args.sensed)?;
    let m = MatchFile::read(&args.matches)?.transform.to_transform();
    let (registered, fusion) = register_and_fuse(&reference, &sensed, &m)?;
    registered.save_png(&args.out_registered)?;
    fusion.save_png(&args.out_fusion)
}

fn run_eval(args: &EvalArgs) -> nisr::Result<bool> {
    let file = MatchFile::read(&args.matches)?;
    let cps: CheckpointSet = read_checkpoints(&args.checkpoints)?;
    let m = file.transform.to_transform();
    let report = EvalReport::new(file.matches.len(), Some(&m), &cps, args.threshold)?;
    println!("nm {}", report.nm);
    println!("rmse {:.4}", report.rmse.unwrap_or(f64::NAN));
    println!("success {}", report.success);
    Ok(report.success)
}

fn run_sweep(args: &SweepArgs) -> nisr::Result<()> {
    let cfg = args.config.resolve()?;
    let kind = if args.scale { SweepKind::Scale } else { SweepKind::Rotation };
    let steps = args.steps.unwrap_or(match kind {
        SweepKind::Rotation => 24,
        SweepKind::Scale => 7,
    });
    let source = SyntheticSource::from_image(load_image(&args.reference)?);
    let harness = Harness::new(source, cfg, args.threshold)?;
    let rows = harness.sweep(kind, &kind.values(steps))?;
    for r in &rows {
        eprintln!(
            "{:8.2} nm {:6} rmse {:>8} {}",
            r.step_value,
            r.nm,
            r.rmse.map_or("-".into(), |v| format!("{v:.3}")),
            if r.success { "ok" } else { "FAIL" }
        );
    }
    write_csv_file(&rows, &args.out)
}

fn save(img: &GrayImage, dir: &Path, name: String) -> nisr::Result<()> {
    img.save_png(dir.join(name))
}

fn max_normalized(map: &Array2<f64>) -> GrayImage {
    let max = map.iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    GrayImage::from_array_clamped(map.mapv(|v| v * scale))
}

fn run_debug_maps(args: &DebugMapsArgs) -> nisr::Result<()> {
    let cfg = args.config.resolve()?;
    let img = load_image(&args.reference)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let analysis = analyze(&img, &cfg)?;
    for layer in &analysis.layers {
        let id = layer.layer_id;
        let mut pc_sum = layer.pc[0].clone();
        for p in &layer.pc[1..] {
            pc_sum += p;
        }
        save(&max_normalized(&pc_sum), &args.out_dir, format!("layer{id}_pc.png"))?;
        save(&max_normalized(&layer.weighted_moment), &args.out_dir, format!("layer{id}_w.png"))?;
        save(&index_map_gray(&layer.index_maps.odd, cfg.n_orients), &args.out_dir, format!("layer{id}_index_odd.png"))?;
        save(&index_map_gray(&layer.index_maps.even, cfg.n_orients), &args.out_dir, format!("layer{id}_index_even.png"))?;
    }
    eprintln!("{} layers, {} features", analysis.layers.len(), analysis.features.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_IO) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Match(a) => run_match(a).map(|_| true),
        Command::Register(a) => run_register(a).map(|_| true),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a).map(|_| true),
        Command::DebugMaps(a) => run_debug_maps(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_MATCH_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
