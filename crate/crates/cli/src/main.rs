use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use biatrium_core::geometry::{self, bbox_from_mask, BBox};
use biatrium_core::io::{
    read_label_map, read_placement, read_volume, wants_gzip, write_label_map, write_placement, write_volume,
};
use biatrium_core::loss::{default_classes, grad_check, volume_loss, AsymLossParams};
use biatrium_core::mclahe::{mclahe, MclaheParams};
use biatrium_core::metrics::{evaluate_case, PointMode};
use biatrium_core::phantom::{generate, PhantomSpec};
use biatrium_core::pipeline::{run_pipeline, PipelineConfig};
use biatrium_core::{ClassMap, Placement};

#[derive(Parser)]
#[command(name = "biatrium", version, about = "Multi-stage bi-atrial segmentation toolkit")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multidimensional CLAHE on a float volume; output lies in [0, 1].
    Enhance(EnhanceArgs),
    /// Pad/crop to a fixed grid about the centre and write the placement.
    Standardize(StandardizeArgs),
    /// Block-average a volume, or max-pool a mask with --labels.
    Downsample(DownsampleArgs),
    /// Print the foreground bounding box of a mask as JSON.
    Bbox(BboxArgs),
    /// Cut a fixed-size window around a centre and write the placement.
    CropRoi(CropArgs),
    /// Paste a mask back through one or more placements.
    Stitch(StitchArgs),
    /// Dice and HD95 per class as CSV.
    Evaluate(EvaluateArgs),
    /// Asymmetric loss of probability volumes, or the gradient self-check.
    Loss(LossArgs),
    /// Run the coarse-to-fine pipeline from a JSON config.
    Run(RunArgs),
    /// Write a synthetic two-atrium phantom and its ground truth.
    Phantom(PhantomArgs),
}

fn triple(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("`{s}` needs three comma-separated values"))
}

fn signed_triple(s: &str) -> Result<[i64; 3], String> {
    let v: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("`{s}` needs three comma-separated values"))
}

#[derive(Args)]
struct EnhanceArgs {
    input: PathBuf,
    output: PathBuf,
    /// Tile size x,y,z; default is an eighth of each axis.
    #[arg(long, value_parser = triple)]
    kernel: Option<[usize; 3]>,
    #[arg(long, default_value_t = 128)]
    bins: usize,
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
}

#[derive(Args)]
struct StandardizeArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_parser = triple, default_value = "576,576,48")]
    shape: [usize; 3],
    /// Placement sidecar path.
    #[arg(long)]
    placement: PathBuf,
    /// Treat the input as a label map.
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct DownsampleArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_parser = triple, default_value = "4,4,1")]
    factors: [usize; 3],
    /// Max-pool a mask (any nonzero voxel) instead of averaging.
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct BboxArgs {
    mask: PathBuf,
    /// Codes counted as foreground; default any nonzero.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u8>>,
    /// Scale the box by these factors (coarse grid to standard grid).
    #[arg(long, value_parser = triple)]
    scale: Option<[usize; 3]>,
    /// Grow the (scaled) box by this many voxels per side.
    #[arg(long, default_value_t = 0)]
    margin: usize,
}

#[derive(Args)]
struct CropArgs {
    input: PathBuf,
    output: PathBuf,
    /// Window centre x,y,z on the input grid.
    #[arg(long, value_parser = signed_triple, conflicts_with = "bbox", required_unless_present = "bbox")]
    center: Option<[i64; 3]>,
    /// JSON box from `biatrium bbox`; the window is centred on it.
    #[arg(long)]
    bbox: Option<PathBuf>,
    #[arg(long, value_parser = triple, default_value = "256,256,48")]
    window: [usize; 3],
    #[arg(long)]
    placement: PathBuf,
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct StitchArgs {
    child: PathBuf,
    output: PathBuf,
    /// Placement sidecars, innermost first.
    #[arg(long = "placement", required = true)]
    placements: Vec<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "case")]
    case_id: String,
    /// JSON object of class name to code.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Dice as a percentage.
    #[arg(long)]
    percent: bool,
    /// Use every class voxel instead of surface voxels for distances.
    #[arg(long)]
    region: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct LossArgs {
    #[command(subcommand)]
    check: Option<LossCmd>,
    /// One probability volume per class.
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    #[arg(long, required = true)]
    gt: Option<PathBuf>,
    /// Label code scored by each probability volume; default 0,1,2,...
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u8>>,
    #[arg(long, default_value_t = 1.0)]
    gamma_pos: f64,
    #[arg(long, default_value_t = 4.0)]
    gamma_neg: f64,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
}

#[derive(Subcommand)]
enum LossCmd {
    /// Compare the analytic gradient with central differences.
    GradCheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PhantomArgs {
    image: PathBuf,
    gt: PathBuf,
    /// JSON phantom description; default is a full-size scan geometry.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Uniform noise half-width.
    #[arg(long)]
    noise: Option<f64>,
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let v = read_volume(&a.input)?;
    let p = MclaheParams {
        kernel_size: a.kernel,
        n_bins: a.bins,
        clip_limit: a.clip,
    };
    write_volume(&mclahe(&v, &p)?, &a.output, wants_gzip(&a.output))?;
    Ok(())
}

fn standardize(a: StandardizeArgs) -> Result<()> {
    let gz = wants_gzip(&a.output);
    let placement = if a.labels {
        let (m, p) = geometry::standardize(&read_label_map(&a.input)?, a.shape, 0)?;
        write_label_map(&m, &a.output, gz)?;
        p
    } else {
        let (v, p) = geometry::standardize(&read_volume(&a.input)?, a.shape, 0.0)?;
        write_volume(&v, &a.output, gz)?;
        p
    };
    write_placement(&placement, &a.placement)?;
    Ok(())
}

fn downsample(a: DownsampleArgs) -> Result<()> {
    let gz = wants_gzip(&a.output);
    if a.labels {
        let m = geometry::downsample_any(&read_label_map(&a.input)?, a.factors, |v| v != 0)?;
        write_label_map(&m, &a.output, gz)?;
    } else {
        let v = geometry::downsample_mean(&read_volume(&a.input)?, a.factors)?;
        write_volume(&v, &a.output, gz)?;
    }
    Ok(())
}

fn bbox(a: BboxArgs) -> Result<()> {
    let m = read_label_map(&a.mask)?;
    let classes = a.classes.unwrap_or_else(|| (1..=255).collect());
    let mut b = bbox_from_mask(&m, &classes)?;
    let mut shape = m.shape();
    if let Some(f) = a.scale {
        b = b.scale(f);
        shape = std::array::from_fn(|k| shape[k] * f[k]);
    }
    println!("{}", serde_json::to_string_pretty(&b.expand(a.margin, shape))?);
    Ok(())
}

fn crop_roi(a: CropArgs) -> Result<()> {
    let center = match (a.center, &a.bbox) {
        (Some(c), _) => c,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let b: BBox = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            b.center()
        }
        (None, None) => bail!("--center or --bbox is required"),
    };
    let gz = wants_gzip(&a.output);
    let placement = if a.labels {
        let (m, p) = geometry::crop_window(&read_label_map(&a.input)?, center, a.window, 0)?;
        write_label_map(&m, &a.output, gz)?;
        p
    } else {
        let (v, p) = geometry::crop_window(&read_volume(&a.input)?, center, a.window, 0.0)?;
        write_volume(&v, &a.output, gz)?;
        p
    };
    write_placement(&placement, &a.placement)?;
    Ok(())
}

fn stitch(a: StitchArgs) -> Result<()> {
    let mut m = read_label_map(&a.child)?;
    for path in &a.placements {
        let p: Placement = read_placement(path)?;
        m = geometry::stitch(&m, &p).with_context(|| format!("stitching through {}", path.display()))?;
    }
    write_label_map(&m, &a.output, wants_gzip(&a.output))?;
    Ok(())
}

fn load_class_map(path: Option<&Path>) -> Result<ClassMap> {
    let Some(path) = path else {
        return Ok(ClassMap::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cm: ClassMap = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cm.validate()?;
    Ok(cm)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let pred = read_label_map(&a.pred)?;
    let gt = read_label_map(&a.gt)?;
    let classes = load_class_map(a.class_map.as_deref())?;
    let mode = if a.region { PointMode::Region } else { PointMode::Surface };
    let report = evaluate_case(&a.case_id, &pred, &gt, &classes, mode)?;
    match a.out {
        Some(path) => report.write_csv(path, a.percent)?,
        None => print!("{}", report.to_csv(a.percent)?),
    }
    Ok(())
}

fn loss(a: LossArgs) -> Result<bool> {
    if let Some(LossCmd::GradCheck { samples, seed }) = a.check {
        let r = grad_check(samples, seed)?;
        let w = r.worst().context("no samples drawn")?;
        println!(
            "{} samples, worst relative error {:.3e} (y={} p={} gamma+={} gamma-={} m={}), tolerance {:.0e}: {}",
            r.samples.len(),
            w.rel_error,
            w.y,
            w.p,
            w.params.gamma_pos,
            w.params.gamma_neg,
            w.params.margin,
            r.tolerance,
            if r.passed() { "ok" } else { "FAILED" }
        );
        return Ok(r.passed());
    }
    let gt = read_label_map(a.gt.as_ref().context("--gt is required")?)?;
    let probs = a.probs.iter().map(read_volume).collect::<Result<Vec<_>, _>>()?;
    let classes = a.classes.unwrap_or_else(|| default_classes(probs.len()));
    let params = AsymLossParams::new(a.gamma_pos, a.gamma_neg, a.margin)?;
    println!("{}", volume_loss(&probs, &gt, &classes, &params)?);
    Ok(true)
}

fn run(a: RunArgs) -> Result<bool> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if a.workers.is_some() {
        cfg.workers = a.workers;
        cfg.validate()?;
    }
    let res = run_pipeline(&cfg)?;
    for c in res.failed() {
        eprintln!("case {} failed: {}", c.case_id, c.error.as_deref().unwrap_or("unknown error"));
    }
    println!("{}", res.summary_path.display());
    Ok(res.all_ok())
}

fn phantom(a: PhantomArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<PhantomSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PhantomSpec::challenge_like(0),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(noise) = a.noise {
        spec.noise = noise;
    }
    let (img, gt) = generate(&spec)?;
    write_volume(&img, &a.image, wants_gzip(&a.image))?;
    write_label_map(&gt, &a.gt, wants_gzip(&a.gt))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.cmd {
        Cmd::Enhance(a) => enhance(a).map(|_| true),
        Cmd::Standardize(a) => standardize(a).map(|_| true),
        Cmd::Downsample(a) => downsample(a).map(|_| true),
        Cmd::Bbox(a) => bbox(a).map(|_| true),
        Cmd::CropRoi(a) => crop_roi(a).map(|_| true),
        Cmd::Stitch(a) => stitch(a).map(|_| true),
        Cmd::Evaluate(a) => evaluate(a).map(|_| true),
        Cmd::Loss(a) => loss(a),
        Cmd::Run(a) => run(a),
        Cmd::Phantom(a) => phantom(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
