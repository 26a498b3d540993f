//! The `streamsplat` command line. Every command is an ordinary function so
//! tests can drive it without spawning a process.
//!
//! Exit codes: 0 success, 1 computation error, 2 input or I/O error
//! (including argument errors).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::{self, DEFAULT_THRESHOLD};
use crate::gaussian::{GaussianScene, DEFAULT_VOXEL_SIZE};
use crate::geometry::{CameraPose, Intrinsics, Quat};
use crate::image::Mask;
use crate::io::features::write_features;
use crate::io::pnm::convert_to_png;
use crate::io::tum::{read_trajectory, records_from_poses, write_tum};
use crate::io::{read_ogs, read_pgm, read_ppm, read_queries, write_file, write_ogs, write_pgm, write_ppm};
use crate::io::{StreamConfig, StreamManifest};
use crate::net::{Network, WeightContainer};
use crate::pipeline::{FrameReport, Stream};
use crate::render::rasterize;
use crate::synth::{write_segmentation_fixture, write_stream_fixture, StreamFixtureOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "streamsplat",
    version,
    about = "Streaming Gaussian splatting with language features"
)]
pub struct Cli {
    /// Plain-text key = value stream configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; recorded in report headers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Network weight file (overrides the config).
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Fusion voxel edge (overrides config and manifest).
    #[arg(long, global = true)]
    pub voxel_size: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a manifest's frames; writes scene.ogs, trajectory.tum, report.csv.
    Reconstruct {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene to a PPM image, optionally with its feature planes.
    Render {
        scene: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered language features here.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Render features and write one PGM mask per query label.
    Query {
        scene: PathBuf,
        queries: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with ground truth; writes eval_<mode>.csv/.txt.
    Eval {
        #[arg(value_enum)]
        mode: EvalMode,
        /// Predicted images (nvs), one trajectory (pose) or masks (seg).
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        gt: Vec<PathBuf>,
        /// Frame spacing for RPE.
        #[arg(long, default_value_t = 1)]
        delta: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic fixtures.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = crate::gaussian::DEFAULT_LANG_DIM)]
        k: usize,
    },
    /// Convert a PPM or PGM file to PNG.
    Convert { input: PathBuf, output: PathBuf },
    /// Write seeded random weights for the configured network.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Nvs,
    Pose,
    Seg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Stream,
    Segmentation,
}

#[derive(Debug, Clone, Args)]
pub struct ViewArgs {
    /// `fx,fy,cx,cy,width,height`.
    #[arg(long, value_parser = parse_intrinsics)]
    pub intrinsics: Intrinsics,
    /// World-from-camera pose `tx,ty,tz,qx,qy,qz,qw`; identity by default.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub pose: Option<CameraPose>,
}

fn numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, found {}", v.len()));
    }
    Ok(v)
}

fn parse_intrinsics(s: &str) -> std::result::Result<Intrinsics, String> {
    let v = numbers(s, 6)?;
    if v[4].fract() != 0.0 || v[5].fract() != 0.0 || v[4] < 0.0 || v[5] < 0.0 {
        return Err("width and height must be whole numbers".into());
    }
    Intrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize).map_err(|e| e.to_string())
}

fn parse_pose(s: &str) -> std::result::Result<CameraPose, String> {
    let v = numbers(s, 7)?;
    let q = Quat::new(v[6], v[3], v[4], v[5])
        .normalized()
        .map_err(|e| e.to_string())?;
    CameraPose::from_quat(q, Vector3::new(v[0], v[1], v[2])).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the command,
/// reporting errors on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_COMPUTE
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        weights: cli.weights.clone(),
        voxel_size: cli.voxel_size,
    };
    let mut cfg = match &cli.config {
        Some(p) => StreamConfig::read(p)?,
        None => StreamConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    match &cli.command {
        Command::Reconstruct { manifest, out } => cmd_reconstruct(manifest, cfg, &overrides, out).map(|_| ()),
        Command::Render {
            scene,
            view,
            out,
            features,
        } => cmd_render(
            scene,
            &pose_or_identity(view),
            &view.intrinsics,
            out,
            features.as_deref(),
        ),
        Command::Query {
            scene,
            queries,
            view,
            threshold,
            out,
        } => cmd_query(
            scene,
            &pose_or_identity(view),
            &view.intrinsics,
            queries,
            *threshold,
            out,
            cfg.seed,
        )
        .map(|_| ()),
        Command::Eval {
            mode,
            pred,
            gt,
            delta,
            out,
        } => {
            let table = cmd_eval(*mode, pred, gt, *delta, cfg.seed, out)?;
            print!("{table}");
            Ok(())
        }
        Command::Synth {
            kind,
            out,
            frames,
            width,
            height,
            k,
        } => match kind {
            SynthKind::Stream => {
                let opts = StreamFixtureOptions {
                    frames: *frames,
                    width: *width,
                    height: *height,
                    k: *k,
                    seed: cfg.seed,
                    ..StreamFixtureOptions::default()
                };
                write_stream_fixture(out, &opts).map(|_| ())
            }
            SynthKind::Segmentation => write_segmentation_fixture(out, *k, *width, *height).map(|_| ()),
        },
        Command::Convert { input, output } => convert_to_png(input, output),
        Command::InitWeights { out } => cfg.net.random_weights(cfg.seed)?.write(out),
    }
}

fn pose_or_identity(v: &ViewArgs) -> CameraPose {
    v.pose.unwrap_or_else(CameraPose::identity)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// The network a configuration asks for: the weight file if one is named,
/// otherwise seeded random weights for the configured architecture.
pub fn load_network(cfg: &StreamConfig) -> Result<Network> {
    match &cfg.weights {
        Some(p) => {
            let w = WeightContainer::read(p)?;
            Network::from_container(&w).map_err(|e| Error::format(p, e.to_string()))
        }
        None => Network::random(cfg.net, cfg.seed),
    }
}

/// Paths written by [`cmd_reconstruct`].
#[derive(Debug, Clone)]
pub struct ReconstructOutputs {
    pub scene: PathBuf,
    pub trajectory: PathBuf,
    pub report: PathBuf,
    pub reports: Vec<FrameReport>,
}

pub fn report_csv(reports: &[FrameReport], seed: u64) -> String {
    let mut s = format!("# streamsplat reconstruct report v1\n# seed={seed}\n");
    s += "frame,primitives,merges,absorbed,appended,state_bytes,anchor_tokens,seconds\n";
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.6}",
            r.frame_index, r.primitives, r.merges, r.absorbed, r.appended, r.state_bytes, r.anchor_tokens, r.seconds
        );
    }
    s
}

/// Command-line settings that take precedence over config files and
/// manifests.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub weights: Option<PathBuf>,
    pub voxel_size: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut StreamConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.weights {
            cfg.weights = Some(w.clone());
        }
        if let Some(v) = self.voxel_size {
            cfg.voxel_size = v;
        }
        cfg.validate()
    }
}

pub fn cmd_reconstruct(
    manifest_path: &Path,
    mut cfg: StreamConfig,
    overrides: &Overrides,
    out: &Path,
) -> Result<ReconstructOutputs> {
    let manifest = StreamManifest::read(manifest_path)?;
    manifest.apply_overrides(&mut cfg, manifest_path)?;
    overrides.apply(&mut cfg)?;
    manifest.check_files()?;
    let (w, h) = (manifest.intrinsics.width, manifest.intrinsics.height);
    if cfg.width.is_some_and(|cw| cw != w) || cfg.height.is_some_and(|ch| ch != h) {
        return Err(Error::format(
            manifest_path,
            format!(
                "manifest frames are {w}x{h} but the configuration expects {:?}x{:?}",
                cfg.width, cfg.height
            ),
        ));
    }
    let net = load_network(&cfg)?;
    let mut stream = Stream::new(net, cfg.voxel_size)?;
    for path in manifest.frame_paths() {
        let img = read_ppm(&path)?;
        if img.width() != w || img.height() != h {
            return Err(Error::format(
                &path,
                format!("frame is {}x{}, manifest declares {w}x{h}", img.width(), img.height()),
            ));
        }
        stream.push_frame(&img)?;
    }
    let (scene, trajectory, reports) = stream.into_parts();
    create_dir(out)?;
    let outputs = ReconstructOutputs {
        scene: out.join("scene.ogs"),
        trajectory: out.join("trajectory.tum"),
        report: out.join("report.csv"),
        reports,
    };
    write_ogs(&outputs.scene, &scene)?;
    write_tum(&outputs.trajectory, &records_from_poses(&trajectory))?;
    write_file(&outputs.report, report_csv(&outputs.reports, cfg.seed).as_bytes())?;
    Ok(outputs)
}

fn load_scene(path: &Path) -> Result<GaussianScene> {
    read_ogs(path, DEFAULT_VOXEL_SIZE)
}

pub fn cmd_render(
    scene: &Path,
    pose: &CameraPose,
    intr: &Intrinsics,
    out: &Path,
    features: Option<&Path>,
) -> Result<()> {
    let scene = load_scene(scene)?;
    let target = rasterize(&scene, pose, intr);
    write_ppm(out, &target.to_image())?;
    if let Some(f) = features {
        write_features(f, &target.feature_map())?;
    }
    Ok(())
}

/// Outcome of one query label.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySummary {
    pub label: String,
    /// Mask and confidence statistics, or the error that stopped this label.
    pub result: std::result::Result<(Mask, f64, f64), String>,
}

pub fn cmd_query(
    scene: &Path,
    pose: &CameraPose,
    intr: &Intrinsics,
    queries: &Path,
    threshold: f64,
    out: &Path,
    seed: u64,
) -> Result<Vec<QuerySummary>> {
    if !threshold.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }
    let scene = load_scene(scene)?;
    let queries = read_queries(queries)?;
    if let Some(q) = queries.iter().find(|q| q.embedding.len() != scene.k()) {
        return Err(Error::invalid(format!(
            "query {:?} has {} components, scene features have {}",
            q.label,
            q.embedding.len(),
            scene.k()
        )));
    }
    let features = rasterize(&scene, pose, intr).feature_map();
    create_dir(out)?;
    let mut summaries = Vec::new();
    let mut csv = format!("# streamsplat query summary v1\n# seed={seed}\n# threshold={threshold}\n");
    csv += "label,status,pixels,coverage,mean_confidence,max_confidence\n";
    let n = intr.pixel_count().max(1) as f64;
    for q in &queries {
        let result = eval::segment_query(&features, q, threshold).map(|(mask, conf)| {
            let mean = conf.iter().sum::<f64>() / n;
            let max = conf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mask, mean, max)
        });
        match &result {
            Ok((mask, mean, max)) => {
                write_pgm(&out.join(format!("{}.pgm", q.label)), mask)?;
                let _ = writeln!(
                    csv,
                    "{},ok,{},{:.6},{:.6},{:.6}",
                    q.label,
                    mask.count(),
                    mask.count() as f64 / n,
                    mean,
                    max
                );
            }
            Err(e) => {
                eprintln!("query {:?}: {e}", q.label);
                let _ = writeln!(csv, "{},error: {},,,,", q.label, e.to_string().replace(',', ";"));
            }
        }
        summaries.push(QuerySummary {
            label: q.label.clone(),
            result: result.map_err(|e| e.to_string()),
        });
    }
    write_file(&out.join("summary.csv"), csv.as_bytes())?;
    Ok(summaries)
}

/// A metric table rendered both as CSV and as aligned text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn csv(&self, seed: u64) -> String {
        let mut s = format!("# {}\n# seed={seed}\n{}\n", self.title, self.header.join(","));
        for r in &self.rows {
            s += &r.join(",");
            s.push('\n');
        }
        s
    }

    pub fn text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut s = format!("{}\n", self.title);
        s += &line(&self.header);
        for r in &self.rows {
            s += &line(r);
        }
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn count_check(pred: &[PathBuf], gt: &[PathBuf]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} ground-truth files",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

pub fn eval_table(mode: EvalMode, pred: &[PathBuf], gt: &[PathBuf], delta: usize) -> Result<Table> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match mode {
        EvalMode::Nvs => {
            count_check(pred, gt)?;
            let mut rows = Vec::new();
            let (mut sp, mut ss) = (0.0, 0.0);
            for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
                let (a, b) = (read_ppm(p)?, read_ppm(g)?);
                let (ps, si) = (eval::psnr(&a, &b)?, eval::ssim(&a, &b)?);
                sp += ps;
                ss += si;
                rows.push(vec![i.to_string(), fmt(ps), fmt(si), "n/a".into()]);
            }
            let n = pred.len() as f64;
            rows.push(vec!["mean".into(), fmt(sp / n), fmt(ss / n), "n/a".into()]);
            Ok(Table {
                title: "streamsplat eval nvs v1".into(),
                header: s(&["view", "psnr", "ssim", "lpips"]),
                rows,
            })
        }
        EvalMode::Pose => {
            if pred.len() != 1 || gt.len() != 1 {
                return Err(Error::invalid(
                    "pose evaluation takes one predicted and one ground-truth trajectory",
                ));
            }
            let (p, g) = (read_trajectory(&pred[0])?, read_trajectory(&gt[0])?);
            if p.len() != g.len() {
                return Err(Error::invalid(format!(
                    "trajectories have {} and {} poses",
                    p.len(),
                    g.len()
                )));
            }
            let ate = eval::ate(&p, &g)?;
            let (rt, rr) = if p.len() > delta {
                let (t, r) = eval::rpe(&p, &g, delta)?;
                (fmt(t), fmt(r))
            } else {
                ("n/a".into(), "n/a".into())
            };
            Ok(Table {
                title: "streamsplat eval pose v1".into(),
                header: s(&["frames", "ate", "rpe_trans", "rpe_rot_deg"]),
                rows: vec![vec![p.len().to_string(), fmt(ate), rt, rr]],
            })
        }
        EvalMode::Seg => {
            count_check(pred, gt)?;
            let mut pm = Vec::new();
            let mut gm = Vec::new();
            for (p, g) in pred.iter().zip(gt) {
                pm.push(read_pgm(p)?);
                gm.push(read_pgm(g)?);
            }
            let (miou, macc) = eval::miou_macc(&pm, &gm)?;
            Ok(Table {
                title: "streamsplat eval seg v1".into(),
                header: s(&["labels", "miou", "macc"]),
                rows: vec![vec![pred.len().to_string(), fmt(miou), fmt(macc)]],
            })
        }
    }
}

/// Evaluates and writes `eval_<mode>.csv` and `eval_<mode>.txt` under `out`;
/// returns the text table.
pub fn cmd_eval(
    mode: EvalMode,
    pred: &[PathBuf],
    gt: &[PathBuf],
    delta: usize,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let table = eval_table(mode, pred, gt, delta)?;
    create_dir(out)?;
    let name = match mode {
        EvalMode::Nvs => "nvs",
        EvalMode::Pose => "pose",
        EvalMode::Seg => "seg",
    };
    write_file(&out.join(format!("eval_{name}.csv")), table.csv(seed).as_bytes())?;
    let text = table.text();
    write_file(&out.join(format!("eval_{name}.txt")), text.as_bytes())?;
    Ok(text)
}
