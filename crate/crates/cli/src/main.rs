mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sceneflow::combine::density;
use sceneflow::eval::{count_outliers, Report, Split, Thresholds};
use sceneflow::flow::compute_flow;
use sceneflow::kitti::{self, quadruple_paths};
use sceneflow::pipeline::run_sceneflow;
use sceneflow::raster::Image;
use sceneflow::reconstruct::{scene_flow_vectors, CameraCalib};
use sceneflow::stereo::compute_disparity;
use sceneflow::viz::{self, ErrorMetric, RenderSpec};

use config::{Config, FlowArgs, SgmArgs};

/// Scene flow from two rectified stereo pairs: stereo disparity at both
/// time steps, optical flow between the left views, and their combination.
///
/// Every long option can also be set in a `key = value` config file passed
/// with --config (keys use underscores, e.g. `max_disparity = 64`).
/// Options given on the command line win over the file.
#[derive(Debug, Parser)]
#[command(name = "sceneflow", version)]
struct Cli {
    /// Config file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for the parallel stages [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Dataset root holding image_2/ and image_3/ (and ground truth for eval)
    #[arg(long, global = true, env = "SCENEFLOW_DATASET", value_name = "DIR")]
    dataset: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Disparity map of one rectified pair
    Stereo(StereoCmd),
    /// Optical flow between two frames
    Flow(FlowCmd),
    /// Full scene flow of one frame: two disparity maps, flow, combination
    Sceneflow(SceneflowCmd),
    /// Outlier statistics of stored results against ground truth
    Eval(EvalCmd),
    /// Color renderings of disparity, flow and error maps
    Viz(VizCmd),
    /// 3D motion vectors of a stored result as a PLY point cloud
    Reconstruct(ReconstructCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TimeStep {
    /// First frame, `{id}_10.png`
    T0,
    /// Second frame, `{id}_11.png`
    T1,
}

#[derive(Debug, clap::Args)]
struct StereoCmd {
    /// Frame id under the dataset root, e.g. 000008
    #[arg(long, conflicts_with_all = ["left", "right"])]
    frame: Option<String>,
    /// Which time step of --frame to use
    #[arg(long, value_enum, default_value = "t0")]
    time: TimeStep,
    /// Left image, instead of --frame
    #[arg(long, requires = "right")]
    left: Option<PathBuf>,
    /// Right image, instead of --frame
    #[arg(long, requires = "left")]
    right: Option<PathBuf>,
    /// Output disparity PNG
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    sgm: SgmArgs,
}

#[derive(Debug, clap::Args)]
struct FlowCmd {
    /// Frame id under the dataset root; flows from the left view at t to t+1
    #[arg(long, conflicts_with_all = ["first", "second"])]
    frame: Option<String>,
    /// First image, instead of --frame
    #[arg(long, requires = "second")]
    first: Option<PathBuf>,
    /// Second image, instead of --frame
    #[arg(long, requires = "first")]
    second: Option<PathBuf>,
    /// Write only the matches that pass the consistency check
    #[arg(long)]
    sparse: bool,
    /// Output flow PNG
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Debug, clap::Args)]
struct SceneflowCmd {
    /// Frame id under the dataset root
    #[arg(long)]
    frame: String,
    /// Result root; receives disp_0/, disp_1/ and flow/
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
    #[command(flatten)]
    sgm: SgmArgs,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Kv,
}

#[derive(Debug, clap::Args)]
struct EvalCmd {
    /// Result root written by `sceneflow sceneflow`
    #[arg(long, value_name = "DIR")]
    est: Option<PathBuf>,
    /// Ground-truth root [default: the dataset root]
    #[arg(long, value_name = "DIR")]
    gt: Option<PathBuf>,
    /// Frame ids, comma separated or repeated
    #[arg(long, required = true, value_delimiter = ',')]
    frame: Vec<String>,
    /// Report layout
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Debug, clap::Args)]
struct VizCmd {
    #[command(subcommand)]
    kind: VizKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    D1,
    D2,
    Fl,
    Sf,
}

impl From<MetricArg> for ErrorMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::D1 => ErrorMetric::D1,
            MetricArg::D2 => ErrorMetric::D2,
            MetricArg::Fl => ErrorMetric::Fl,
            MetricArg::Sf => ErrorMetric::Sf,
        }
    }
}

#[derive(Debug, Subcommand)]
enum VizKind {
    /// Rainbow rendering of a disparity PNG; gaps are black
    Disparity {
        input: PathBuf,
        /// Disparity mapped to the last color
        #[arg(long, default_value_t = 128.0)]
        max_display: f32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Color-wheel rendering of a flow PNG
    Flow {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Inliers green, outliers red, uncovered ground truth gray
    Error {
        #[arg(long, value_name = "DIR")]
        est: Option<PathBuf>,
        /// Ground-truth root [default: the dataset root]
        #[arg(long, value_name = "DIR")]
        gt: Option<PathBuf>,
        #[arg(long)]
        frame: String,
        #[arg(long, value_enum, default_value = "sf")]
        metric: MetricArg,
        /// Draw ground truth without an estimate black instead of gray
        #[arg(long)]
        no_shade: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct ReconstructCmd {
    /// Result root written by `sceneflow sceneflow`
    #[arg(long, value_name = "DIR")]
    est: Option<PathBuf>,
    #[arg(long)]
    frame: String,
    /// Calibration file with focal, cx, cy and baseline
    #[arg(long, value_name = "FILE")]
    calib: Option<PathBuf>,
    /// Output PLY file
    #[arg(short, long)]
    output: PathBuf,
}

struct Ctx {
    cfg: Config,
    dataset: Option<PathBuf>,
}

impl Ctx {
    fn dataset(&self) -> Result<PathBuf> {
        self.cfg
            .path(self.dataset.clone(), "dataset")?
            .ok_or_else(|| anyhow!("no dataset root: pass --dataset, set SCENEFLOW_DATASET, or add `dataset` to the config"))
    }

    fn output_root(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.cfg.path(flag, "output")?.ok_or_else(|| {
            anyhow!("no result root: pass --output/--est or add `output` to the config")
        })
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn read_pair(a: &Path, b: &Path) -> Result<(Image, Image)> {
    Ok((kitti::read_image(a)?, kitti::read_image(b)?))
}

fn stereo(ctx: &Ctx, cmd: StereoCmd) -> Result<()> {
    let params = cmd.sgm.resolve(&ctx.cfg)?;
    let (left, right) = match (cmd.left, cmd.right, cmd.frame) {
        (Some(l), Some(r), _) => read_pair(&l, &r)?,
        (_, _, Some(frame)) => {
            let [lt, rt, lt1, rt1] = quadruple_paths(&ctx.dataset()?, &frame);
            match cmd.time {
                TimeStep::T0 => read_pair(&lt, &rt)?,
                TimeStep::T1 => read_pair(&lt1, &rt1)?,
            }
        }
        _ => bail!("pass either --frame or --left and --right"),
    };
    let start = Instant::now();
    let disp = compute_disparity(&left, &right, &params)?;
    let elapsed = start.elapsed();
    kitti::write_disparity(&disp, &cmd.output)?;
    println!("width = {}", disp.width);
    println!("height = {}", disp.height);
    println!("max_disparity = {}", params.max_disparity);
    println!("cost_volume_depth = {}", params.max_disparity + 1);
    println!("valid_pct = {:.2}", 100.0 * disp.density());
    println!("stereo_ms = {:.3}", ms(elapsed));
    Ok(())
}

fn flow(ctx: &Ctx, cmd: FlowCmd) -> Result<()> {
    let params = cmd.flow.resolve(&ctx.cfg)?;
    let (a, b) = match (cmd.first, cmd.second, cmd.frame) {
        (Some(a), Some(b), _) => read_pair(&a, &b)?,
        (_, _, Some(frame)) => {
            let [lt, _, lt1, _] = quadruple_paths(&ctx.dataset()?, &frame);
            read_pair(&lt, &lt1)?
        }
        _ => bail!("pass either --frame or --first and --second"),
    };
    let start = Instant::now();
    let est = compute_flow(&a, &b, &params)?;
    let elapsed = start.elapsed();
    let field = if cmd.sparse { &est.sparse } else { &est.dense };
    kitti::write_flow(field, &cmd.output)?;
    println!("width = {}", field.width);
    println!("height = {}", field.height);
    println!("consistent_pct = {:.2}", 100.0 * est.sparse.density());
    println!("flow_ms = {:.3}", ms(elapsed));
    Ok(())
}

fn sceneflow(ctx: &Ctx, cmd: SceneflowCmd) -> Result<()> {
    let sgm = cmd.sgm.resolve(&ctx.cfg)?;
    let fp = cmd.flow.resolve(&ctx.cfg)?;
    let out = ctx.output_root(cmd.output)?;
    let q = kitti::load_quadruple(ctx.dataset()?, &cmd.frame)?;
    let r = run_sceneflow(&q, &sgm, &fp)?;
    kitti::write_sceneflow(&out, &cmd.frame, &r.scene_flow, &r.disp0, &r.flow.dense)?;
    for (name, d) in r.timings.stages() {
        println!("{name}_ms = {:.3}", ms(d));
    }
    println!("combine_share_pct = {:.4}", r.timings.combine_share());
    println!("density_pct = {:.2}", 100.0 * density(&r.scene_flow, None)?);
    Ok(())
}

fn eval(ctx: &Ctx, cmd: EvalCmd) -> Result<()> {
    let est_root = ctx.output_root(cmd.est)?;
    let gt_root = match cmd.gt {
        Some(p) => p,
        None => ctx.dataset()?,
    };
    let t = Thresholds::default();
    let mut report = Report::default();
    for frame in &cmd.frame {
        let est = kitti::read_sceneflow(&est_root, frame)?;
        let gt = kitti::load_ground_truth(&gt_root, frame)?;
        let noc =
            count_outliers(&est, &gt, Split::Noc, &t).with_context(|| format!("frame {frame}"))?;
        let occ =
            count_outliers(&est, &gt, Split::Occ, &t).with_context(|| format!("frame {frame}"))?;
        report.push(frame.clone(), noc, occ);
    }
    match cmd.format {
        ReportFormat::Table => print!("{}", report.table()),
        ReportFormat::Kv => print!("{}", report.key_values()),
    }
    Ok(())
}

fn viz(ctx: &Ctx, cmd: VizCmd) -> Result<()> {
    let (img, output) = match cmd.kind {
        VizKind::Disparity {
            input,
            max_display,
            output,
        } => {
            let spec = RenderSpec {
                max_display_value: max_display,
                ..Default::default()
            };
            (
                viz::render_disparity(&kitti::read_disparity(&input)?, &spec)?,
                output,
            )
        }
        VizKind::Flow { input, output } => (viz::render_flow(&kitti::read_flow(&input)?), output),
        VizKind::Error {
            est,
            gt,
            frame,
            metric,
            no_shade,
            output,
        } => {
            let est = kitti::read_sceneflow(ctx.output_root(est)?, &frame)?;
            let gt_root = match gt {
                Some(p) => p,
                None => ctx.dataset()?,
            };
            let gt = kitti::load_ground_truth(gt_root, &frame)?;
            let spec = RenderSpec {
                shade_oob: !no_shade,
                ..Default::default()
            };
            (viz::render_error(&est, &gt, metric.into(), &spec)?, output)
        }
    };
    kitti::write_image(&img, &output)?;
    println!("wrote = {}", output.display());
    Ok(())
}

fn reconstruct(ctx: &Ctx, cmd: ReconstructCmd) -> Result<()> {
    let calib_path = ctx
        .cfg
        .path(cmd.calib, "calib")?
        .ok_or_else(|| anyhow!("no calibration: pass --calib or add `calib` to the config"))?;
    let calib = CameraCalib::from_file(&calib_path)?;
    let sf = kitti::read_sceneflow(ctx.output_root(cmd.est)?, &cmd.frame)?;
    let rec = scene_flow_vectors(&sf, &calib)?;
    viz::export_pointcloud(&rec.vectors, &cmd.output)?;
    println!("vectors = {}", rec.vectors.len());
    println!("skipped = {}", rec.skipped);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_ref())?;
    let threads = cfg.pick(cli.threads, "threads")?;
    let ctx = Ctx {
        cfg,
        dataset: cli.dataset,
    };
    let dispatch = move || match cli.command {
        Command::Stereo(c) => stereo(&ctx, c),
        Command::Flow(c) => flow(&ctx, c),
        Command::Sceneflow(c) => sceneflow(&ctx, c),
        Command::Eval(c) => eval(&ctx, c),
        Command::Viz(c) => viz(&ctx, c),
        Command::Reconstruct(c) => reconstruct(&ctx, c),
    };
    match threads {
        None => dispatch(),
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the thread pool")?
            .install(dispatch),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
