//! The `rti` command line.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};
use crate::eval::{evaluate, ptm_fit, sweep, Evaluation, SweepAxis};
use crate::geometry::{CameraIntrinsics, LightDirection, Point2};
use crate::marker::{detect_marker, MarkerDetection};
use crate::mlic::{build_mlic, LightRecord, LightSplit, Mlic};
use crate::pipeline::{compress, fit_model, with_threads, PipelineConfig};
use crate::pose::{estimate_homography, factor_homography, light_direction_at};
use crate::raster::RgbImage;
use crate::relight::RelightModel;
use crate::sync::{audio_offset, constant_rate_timestamps, pair_frames, read_timestamps, AudioTrack, FrameIndexMap};
use crate::synth::{synth_mlic, SceneSpec, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rti", version, about = "Smartphone reflectance transformation imaging pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// Seed for every random choice; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the audio offset between the two recordings and pair frames.
    Sync(SyncArgs),
    /// Detect the marker in every PNG frame of a directory (JSON lines).
    Detect(DetectArgs),
    /// Turn moving-camera marker detections into light directions.
    Pose(PoseArgs),
    /// Rectify static frames into a multi-light image collection.
    Extract(ExtractArgs),
    /// Choose held-out test lights.
    Split(SplitArgs),
    /// Fit the PCA basis on the training lights and write it as JSON.
    Compress(CompressArgs),
    /// Compress and train the relighting network.
    Train(TrainArgs),
    /// Render a model under one light direction.
    Relight(RelightArgs),
    /// Score a model on the held-out lights.
    Eval(EvalArgs),
    /// Repeat the pipeline over a range of one parameter.
    Sweep(SweepArgs),
    /// Render a synthetic collection with known ground truth.
    Synth(SynthArgs),
    /// Print model metadata.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
struct SyncArgs {
    /// Audio track of the static camera (WAV).
    #[arg(long)]
    static_audio: PathBuf,
    /// Audio track of the moving camera (WAV).
    #[arg(long)]
    moving_audio: PathBuf,
    /// Static frame timestamps, one per line in seconds.
    #[arg(long, conflicts_with = "static_fps")]
    static_timestamps: Option<PathBuf>,
    /// Moving frame timestamps, one per line in seconds.
    #[arg(long, conflicts_with = "moving_fps")]
    moving_timestamps: Option<PathBuf>,
    /// Constant static frame rate, used with --static-frames.
    #[arg(long, requires = "static_frames")]
    static_fps: Option<f64>,
    #[arg(long)]
    static_frames: Option<usize>,
    /// Constant moving frame rate, used with --moving-frames.
    #[arg(long, requires = "moving_frames")]
    moving_fps: Option<f64>,
    #[arg(long)]
    moving_frames: Option<usize>,
    /// Largest offset searched, in seconds.
    #[arg(long, default_value_t = 5.0)]
    max_lag: f64,
    /// Output frame pairing (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Directory of PNG frames, processed in file name order.
    #[arg(long)]
    frames: PathBuf,
    /// Write the JSON lines here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PoseArgs {
    /// Detections of the moving camera (JSON lines from `detect`).
    #[arg(long)]
    detections: PathBuf,
    /// Camera intrinsics as JSON `{fx, fy, cx, cy}`.
    #[arg(long)]
    intrinsics: PathBuf,
    /// Output `lights.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Frame pairing from `sync`.
    #[arg(long)]
    pairs: PathBuf,
    /// Directory of static PNG frames.
    #[arg(long)]
    frames: PathBuf,
    /// Detections of the static camera (JSON lines from `detect`).
    #[arg(long)]
    detections: PathBuf,
    /// Light directions from `pose`.
    #[arg(long)]
    lights: PathBuf,
    /// Output collection directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    mlic: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[arg(long)]
    mlic: PathBuf,
    /// Light split; drawn from the configuration when omitted.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Output `pca.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    mlic: PathBuf,
    /// Light split; drawn from the configuration when omitted.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the PCA basis here.
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Write per-epoch progress here instead of standard output.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RelightArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    lu: f64,
    #[arg(long, allow_hyphen_values = true)]
    lv: f64,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    mlic: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Also score the polynomial baseline fitted on the training lights.
    #[arg(long)]
    baseline: bool,
    /// Per-light CSV report.
    #[arg(long)]
    csv: PathBuf,
    /// JSON summary.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    mlic: PathBuf,
    /// `B`, `sigma` or `nLights`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Fixed light split; a fresh one per repeat when omitted.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output collection directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// `orbit` or `dome`.
    #[arg(long, default_value = "orbit")]
    trajectory: String,
    /// Number of training lights.
    #[arg(long, default_value_t = 300)]
    lights: usize,
    /// Orbit zenith in degrees.
    #[arg(long, default_value_t = 50.0)]
    zenith: f64,
    /// Orbit jitter standard deviation in degrees.
    #[arg(long, default_value_t = 20.0)]
    jitter: f64,
    /// Held-out dome lights appended after the training lights; a matching
    /// `split.json` is written when positive.
    #[arg(long, default_value_t = 20)]
    test_lights: usize,
    #[arg(long, default_value_t = 0.4)]
    ks: f64,
    #[arg(long, default_value_t = 32.0)]
    shininess: f64,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Parameters of a synthetic run, stored as `truth.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthTruth {
    scene: SceneSpec,
    train: Trajectory,
    test: Option<Trajectory>,
    seed: u64,
}

/// One line of `detect` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionLine {
    pub frame: usize,
    pub found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dot: Option<[f64; 2]>,
}

impl DetectionLine {
    fn new(frame: usize, det: Option<&MarkerDetection>) -> Self {
        Self {
            frame,
            found: det.is_some(),
            corners: det.map(|d| d.corners.map(|p| [p.x, p.y])),
            dot: det.map(|d| [d.dot.x, d.dot.y]),
        }
    }

    pub fn detection(&self) -> Option<MarkerDetection> {
        match (self.found, self.corners, self.dot) {
            (true, Some(c), Some(d)) => Some(MarkerDetection {
                corners: c.map(|[x, y]| Point2::new(x, y)),
                dot: Point2::new(d[0], d[1]),
            }),
            _ => None,
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cfg = match load_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("rti: configuration: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = with_threads(cfg.threads, || dispatch(cli.command, &cfg)).and_then(|r| r);
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("rti: {e}");
            EXIT_DOMAIN
        }
    }
}

fn load_config(g: &GlobalOpts) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(RtiError::invalid("--threads must be positive"));
        }
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn dispatch(cmd: Command, cfg: &PipelineConfig) -> Result<()> {
    match cmd {
        Command::Sync(a) => cmd_sync(a).map_err(|e| e.context("sync")),
        Command::Detect(a) => cmd_detect(a).map_err(|e| e.context("detect")),
        Command::Pose(a) => cmd_pose(a).map_err(|e| e.context("pose")),
        Command::Extract(a) => cmd_extract(a, cfg).map_err(|e| e.context("extract")),
        Command::Split(a) => cmd_split(a, cfg).map_err(|e| e.context("split")),
        Command::Compress(a) => cmd_compress(a, cfg).map_err(|e| e.context("compress")),
        Command::Train(a) => cmd_train(a, cfg).map_err(|e| e.context("train")),
        Command::Relight(a) => cmd_relight(a).map_err(|e| e.context("relight")),
        Command::Eval(a) => cmd_eval(a).map_err(|e| e.context("eval")),
        Command::Sweep(a) => cmd_sweep(a, cfg).map_err(|e| e.context("sweep")),
        Command::Synth(a) => cmd_synth(a, cfg).map_err(|e| e.context("synth")),
        Command::Info(a) => cmd_info(a).map_err(|e| e.context("info")),
    }
}

fn timestamps(file: Option<&Path>, fps: Option<f64>, frames: Option<usize>, which: &str) -> Result<Vec<f64>> {
    match (file, fps, frames) {
        (Some(p), _, _) => read_timestamps(p),
        (None, Some(fps), Some(n)) if fps > 0.0 => Ok(constant_rate_timestamps(n, fps)),
        _ => Err(RtiError::invalid(format!(
            "{which} frames need --{which}-timestamps or a positive --{which}-fps with --{which}-frames"
        ))),
    }
}

fn cmd_sync(a: SyncArgs) -> Result<()> {
    let ts_s = timestamps(a.static_timestamps.as_deref(), a.static_fps, a.static_frames, "static")?;
    let ts_m = timestamps(a.moving_timestamps.as_deref(), a.moving_fps, a.moving_frames, "moving")?;
    let sa = AudioTrack::load_wav(&a.static_audio)?;
    let ma = AudioTrack::load_wav(&a.moving_audio)?;
    let offset = audio_offset(&sa, &ma, a.max_lag)?;
    let map = pair_frames(&ts_s, &ts_m, offset)?;
    map.save(&a.out)?;
    println!("offset={offset:.3} pairs={}", map.len());
    Ok(())
}

/// PNG files of `dir` in file name order.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(RtiError::invalid(format!("no PNG frames in {}", dir.display())));
    }
    Ok(files)
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    use rayon::prelude::*;
    let files = list_frames(&a.frames)?;
    let lines = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let img = RgbImage::load(path).map_err(|e| e.context(format!("frame {i} ({})", path.display())))?;
            let det = detect_marker(&img).ok();
            Ok((serde_json::to_string(&DetectionLine::new(i, det.as_ref()))?, det.is_some()))
        })
        .collect::<Result<Vec<(String, bool)>>>()?;
    let found = lines.iter().filter(|l| l.1).count();
    let text: String = lines.into_iter().map(|l| l.0 + "\n").collect();
    match a.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    eprintln!("marker found in {found} of {} frames", files.len());
    Ok(())
}

fn read_detections(path: &Path) -> Result<Vec<DetectionLine>> {
    std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| RtiError::from(e).context(format!("line {}", n + 1))))
        .collect()
}

/// Indexes detections by frame number.
fn detections_by_frame(lines: &[DetectionLine]) -> Vec<Option<MarkerDetection>> {
    let n = lines.iter().map(|l| l.frame + 1).max().unwrap_or(0);
    let mut out = vec![None; n];
    for l in lines {
        out[l.frame] = l.detection();
    }
    out
}

/// Light direction seen from one moving-camera detection, anchored at the
/// marker centre. The marker model is the unit square.
pub fn light_from_detection(det: &MarkerDetection, k: &CameraIntrinsics) -> Result<LightDirection> {
    let model = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    let h = estimate_homography(&model, &det.corners)?;
    light_direction_at(&factor_homography(&h, k)?, [0.5, 0.5, 0.0])
}

fn cmd_pose(a: PoseArgs) -> Result<()> {
    let k: CameraIntrinsics = serde_json::from_slice(&std::fs::read(&a.intrinsics)?)?;
    let k = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
    let mut records = Vec::new();
    let lines = read_detections(&a.detections)?;
    for line in &lines {
        let Some(det) = line.detection() else { continue };
        match light_from_detection(&det, &k) {
            Ok(l) => records.push(LightRecord::new(line.frame, &l)),
            Err(e) => eprintln!("frame {}: skipped ({e})", line.frame),
        }
    }
    if records.is_empty() {
        return Err(RtiError::invalid("no frame produced a light direction"));
    }
    std::fs::write(&a.out, serde_json::to_string_pretty(&records)?)?;
    println!("lights={} of {} frames", records.len(), lines.len());
    Ok(())
}

fn cmd_extract(a: ExtractArgs, cfg: &PipelineConfig) -> Result<()> {
    let pairs = FrameIndexMap::load(&a.pairs)?;
    let files = list_frames(&a.frames)?;
    let dets = detections_by_frame(&read_detections(&a.detections)?);
    let records: Vec<LightRecord> = serde_json::from_slice(&std::fs::read(&a.lights)?)?;
    let n_moving = records.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let mut lights = vec![None; n_moving];
    for r in &records {
        lights[r.frame] = Some(r.direction().map_err(|e| e.context(format!("light of frame {}", r.frame)))?);
    }
    let load = |i: usize| -> Result<RgbImage> {
        let path = files
            .get(i)
            .ok_or_else(|| RtiError::invalid(format!("static frame {i} missing from {}", a.frames.display())))?;
        RgbImage::load(path)
    };
    let mlic = build_mlic(&pairs, &dets, &lights, load, cfg.crop_size)?;
    mlic.save(&a.out)?;
    println!("images={} size={}x{}", mlic.len(), mlic.width(), mlic.height());
    Ok(())
}

fn load_or_draw_split(path: Option<&Path>, mlic: &Mlic, cfg: &PipelineConfig) -> Result<LightSplit> {
    let split = match path {
        Some(p) => LightSplit::load(p)?,
        None => cfg.split(mlic)?,
    };
    split.validate(mlic.len())?;
    Ok(split)
}

fn cmd_split(a: SplitArgs, cfg: &PipelineConfig) -> Result<()> {
    let mlic = Mlic::load(&a.mlic)?;
    let split = cfg.split(&mlic)?;
    split.save(&a.out)?;
    println!("train={} test={}", split.train_idx.len(), split.test_idx.len());
    Ok(())
}

fn cmd_compress(a: CompressArgs, cfg: &PipelineConfig) -> Result<()> {
    let mlic = Mlic::load(&a.mlic)?;
    let split = load_or_draw_split(a.split.as_deref(), &mlic, cfg)?;
    let (basis, _) = compress(&mlic, &split, cfg)?;
    basis.save_json(&a.out)?;
    let ev: Vec<String> = basis.explained_variance().iter().map(|v| format!("{v:.6}")).collect();
    println!("bases={} explained_variance={}", basis.n_out(), ev.join(","));
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let mlic = Mlic::load(&a.mlic)?;
    let split = load_or_draw_split(a.split.as_deref(), &mlic, cfg)?;
    let mut log: Box<dyn std::io::Write> = match &a.log {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut io_err = None;
    let trained = fit_model(&mlic, &split, cfg, |r| {
        let line = serde_json::to_string(r).expect("epoch record serialises");
        if let Err(e) = writeln!(log, "{line}") {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    trained.model.save(&a.out)?;
    if let Some(p) = &a.pca {
        trained.basis.save_json(p)?;
    }
    Ok(())
}

fn cmd_relight(a: RelightArgs) -> Result<()> {
    let l = LightDirection::from_uv(a.lu, a.lv)?;
    let model = RelightModel::load(&a.model)?;
    model.relight_image(&l).save_png(&a.out)
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    neural: &'a Evaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    ptm: Option<&'a Evaluation>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mlic = Mlic::load(&a.mlic)?;
    let split = LightSplit::load(&a.split)?;
    let model = RelightModel::load(&a.model)?;
    let neural = evaluate(&model, &mlic, &split)?;
    let ptm = if a.baseline {
        let p = ptm_fit(&mlic, &split).map_err(|e| e.context("baseline"))?;
        Some(evaluate(&p, &mlic, &split)?)
    } else {
        None
    };
    let mut csv = String::from("method,light,lu,lv,psnr,ssim\n");
    csv += &neural.csv_rows("neural");
    println!("neural psnr={:.4} ssim={:.4}", neural.mean_psnr, neural.mean_ssim);
    if let Some(p) = &ptm {
        csv += &p.csv_rows("ptm");
        println!("ptm psnr={:.4} ssim={:.4}", p.mean_psnr, p.mean_ssim);
    }
    std::fs::write(&a.csv, csv)?;
    if let Some(j) = &a.json {
        let summary = EvalSummary {
            neural: &neural,
            ptm: ptm.as_ref(),
        };
        std::fs::write(j, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs, cfg: &PipelineConfig) -> Result<()> {
    let axis: SweepAxis = a.axis.parse()?;
    let mlic = Mlic::load(&a.mlic)?;
    let split = a.split.as_deref().map(LightSplit::load).transpose()?;
    let report = sweep(&mlic, axis, &a.values, a.repeats, cfg, split.as_ref())?;
    let csv = report.to_csv();
    std::fs::write(&a.csv, &csv)?;
    if let Some(j) = &a.json {
        std::fs::write(j, serde_json::to_string_pretty(&report)?)?;
    }
    print!("{csv}");
    Ok(())
}

fn cmd_synth(a: SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    let scene = SceneSpec {
        width: a.size,
        height: a.size,
        ks: a.ks,
        shininess: a.shininess,
        seed: cfg.seed,
        ..SceneSpec::default()
    };
    let train = match a.trajectory.as_str() {
        "orbit" => Trajectory::Orbit {
            n: a.lights,
            zenith_deg: a.zenith,
            jitter_deg: a.jitter,
        },
        "dome" => Trajectory::Dome { n: a.lights },
        other => return Err(RtiError::invalid(format!("unknown trajectory {other:?}"))),
    };
    let built = scene.build()?;
    let mut mlic = synth_mlic(&built, &train, cfg.seed)?;
    let test = (a.test_lights > 0).then_some(Trajectory::Dome { n: a.test_lights });
    std::fs::create_dir_all(&a.out)?;
    if let Some(t) = &test {
        let held_out = synth_mlic(&built, t, cfg.seed.wrapping_add(1))?;
        let n = mlic.len();
        mlic = mlic.concat(&held_out)?;
        let split = LightSplit {
            train_idx: (0..n).collect(),
            test_idx: (n..mlic.len()).collect(),
            exclusion_radius: 0.0,
        };
        split.save(a.out.join("split.json"))?;
    }
    mlic.save(&a.out)?;
    let truth = SynthTruth {
        scene,
        train,
        test,
        seed: cfg.seed,
    };
    std::fs::write(a.out.join("truth.json"), serde_json::to_string_pretty(&truth)?)?;
    println!("images={} size={}x{}", mlic.len(), mlic.width(), mlic.height());
    Ok(())
}

fn cmd_info(a: InfoArgs) -> Result<()> {
    let m = RelightModel::load(&a.model)?;
    println!(
        "version={} width={} height={} B={} Hf={} sigma={} seed={}",
        m.version(),
        m.width(),
        m.height(),
        m.bases(),
        m.frequencies(),
        m.sigma(),
        m.seed()
    );
    Ok(())
}
