//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::embed::Frame;
use crate::error::{Error, Result};
use crate::geom::{compute_offset_table, Format, GridConfig, OffsetTable};
use crate::io::{
    decode_offsets, decode_pgm, decode_ppm, decode_saliency, decode_tensor, encode_offsets, encode_pgm, encode_saliency,
    frame_from_tensor, json_lines, parse_key_values, read_file, write_file, MetricRecord, WeightContainer,
};
use crate::metrics::{
    auc_borji, auc_judd, binarize_gt, cc, cc_area_weighted, psnr_weighted, spsnr, ws_weight_map, ErrorChannel,
    SpherePointSet, DEFAULT_PERCENTILE, DEFAULT_SPHERE_POINTS, DEFAULT_SPLITS,
};
use crate::model::{predict, ModelConfig, PaverModel, PredictOptions};
use crate::objective::{train, SpatialNeighborhood, TrainConfig};
use crate::saliency::{default_sigma, KernelSupport, SaliencyMaps, ScoreWeights};

#[derive(Debug, Parser)]
#[command(name = "paver", version, about = "Omnidirectional video saliency with deformable patch embeddings")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the tangent-patch offset table for a raster layout.
    Offsets(OffsetsArgs),
    /// Write a randomly initialized weight container.
    Init(InitArgs),
    /// Predict dense saliency maps for a directory of frames.
    Saliency(SaliencyArgs),
    /// Train the fusion head on clips of frames.
    Train(TrainArgs),
    /// Score predicted maps against ground-truth heatmaps.
    Eval(EvalArgs),
    /// Weighted PSNR between reference and distorted frames.
    Vqa(VqaArgs),
}

#[derive(Debug, Args)]
pub struct OffsetsArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, default_value = "erp")]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct HeadArgs {
    #[arg(long, default_value_t = 4)]
    pub encoder_heads: usize,
    #[arg(long, default_value_t = 8)]
    pub fusion_heads: usize,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[command(flatten)]
    pub heads: HeadArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    /// Directory of frame_*.ppm or *.pten frames.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub offsets: PathBuf,
    /// Smoothing width in pixels (default: width / 64).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for 8-bit PGM previews, one per frame.
    #[arg(long)]
    pub preview_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Evaluate the smoothing kernel everywhere instead of truncating it.
    #[arg(long)]
    pub exact_kernel: bool,
    #[command(flatten)]
    pub heads: HeadArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// A directory of frames, or a directory of clip subdirectories.
    #[arg(long)]
    pub frames_dir: PathBuf,
    /// key=value file (lr, epochs, T, lambda_t, lambda_s, lambda_g, epsilon, sigma, seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_weights: PathBuf,
    /// Loss trace CSV (default: the weights path with a .csv extension).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Starting weights; a fresh random model is used otherwise.
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long, default_value = "erp")]
    pub format: Format,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[command(flatten)]
    pub heads: HeadArgs,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "window", alias = "t")]
    pub window: Option<usize>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SaliencyMetric {
    Cc,
    #[value(name = "auc-j")]
    AucJ,
    #[value(name = "auc-b")]
    AucB,
}

impl SaliencyMetric {
    fn name(self) -> &'static str {
        match self {
            Self::Cc => "cc",
            Self::AucJ => "auc-j",
            Self::AucB => "auc-b",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted maps (PSAL or PGM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth heatmaps (PSAL or PGM).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "cc,auc-j,auc-b")]
    pub metrics: Vec<SaliencyMetric>,
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    pub percentile: f64,
    #[arg(long, default_value_t = DEFAULT_SPLITS)]
    pub splits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight CC by equirectangular row solid angle.
    #[arg(long)]
    pub area_weighted: bool,
    #[arg(long)]
    pub clip: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VqaMetric {
    Psnr,
    #[value(name = "ws-psnr")]
    WsPsnr,
    #[value(name = "s-psnr")]
    SPsnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Luma,
    Rgb,
}

#[derive(Debug, Args)]
pub struct VqaArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long, default_value = "psnr")]
    pub metric: VqaMetric,
    /// Per-pixel weights (PSAL or PGM), one map per frame or one shared map.
    #[arg(long)]
    pub weight_map: Option<PathBuf>,
    #[arg(long, default_value = "erp")]
    pub format: Format,
    /// Peak value of frames scaled to [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub max: f64,
    #[arg(long, default_value = "luma")]
    pub channel: ChannelArg,
    #[arg(long, default_value_t = DEFAULT_SPHERE_POINTS)]
    pub points: usize,
    #[arg(long)]
    pub clip: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Offsets(a) => cmd_offsets(&a),
        Command::Init(a) => cmd_init(&a),
        Command::Saliency(a) => cmd_saliency(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Vqa(a) => cmd_vqa(&a),
    }
}

pub fn cmd_offsets(a: &OffsetsArgs) -> Result<()> {
    let cfg = GridConfig::new(a.width, a.height, a.patch)?;
    let table = compute_offset_table(&cfg, a.format)?;
    write_file(&a.out, &encode_offsets(&table)?)?;
    println!("N={} w={} h={}", cfg.num_patches(), cfg.cols(), cfg.rows());
    Ok(())
}

pub fn cmd_init(a: &InitArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let cfg = ModelConfig {
        channels: a.channels,
        depth: a.depth,
        encoder_heads: a.heads.encoder_heads,
        fusion_heads: a.heads.fusion_heads,
    };
    let model = PaverModel::random(&mut rng, a.patch, cfg)?;
    write_file(&a.out, &model.to_container()?.encode()?)
}

fn is_frame_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pten"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
    let mut out = rd.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

/// Frames of one clip, in file-name order.
pub fn load_frames(dir: &Path, format: Format) -> Result<Vec<Frame>> {
    let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| is_frame_file(p)).collect();
    if files.is_empty() {
        return Err(Error::config(format!("no .ppm or .pten frames in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let bytes = read_file(p)?;
            let frame = if p.extension().is_some_and(|e| e == "ppm") {
                decode_ppm(&bytes, format)
            } else {
                frame_from_tensor(&decode_tensor(&bytes)?, format)
            };
            frame.map_err(|e| Error::format(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Clips under `dir`: its subdirectories in name order, or `dir` itself.
pub fn load_clips(dir: &Path, format: Format) -> Result<Vec<(String, Vec<Frame>)>> {
    let subdirs: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()).collect();
    if subdirs.is_empty() {
        let name = dir.file_name().map_or("clip".into(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(name, load_frames(dir, format)?)]);
    }
    subdirs
        .iter()
        .map(|d| Ok((d.file_name().map_or(String::new(), |n| n.to_string_lossy().into_owned()), load_frames(d, format)?)))
        .collect()
}

fn check_frames(frames: &[Frame], cfg: &GridConfig) -> Result<()> {
    for (k, f) in frames.iter().enumerate() {
        if f.width() != cfg.width || f.height() != cfg.height {
            return Err(Error::config(format!(
                "frame {k} is {}×{}, expected {}×{}",
                f.width(),
                f.height(),
                cfg.width,
                cfg.height
            )));
        }
    }
    Ok(())
}

fn load_model(path: &Path, heads: &HeadArgs, grid: &GridConfig) -> Result<PaverModel> {
    let container = WeightContainer::decode(&read_file(path)?)?;
    PaverModel::from_container(&container, heads.encoder_heads, heads.fusion_heads, Some((grid.rows(), grid.cols())))
}

pub fn cmd_saliency(a: &SaliencyArgs) -> Result<()> {
    let table = decode_offsets(&read_file(&a.offsets)?)?;
    let cfg = table.config;
    let frames = load_frames(&a.frames, table.format)?;
    check_frames(&frames, &cfg)?;
    let model = load_model(&a.weights, &a.heads, &cfg)?;
    let opts = PredictOptions {
        window: a.window,
        sigma: a.sigma.unwrap_or_else(|| default_sigma(cfg.width)),
        support: if a.exact_kernel { KernelSupport::Exact } else { KernelSupport::Truncated },
        weights: ScoreWeights { alpha: a.alpha, beta: a.beta, gamma: a.gamma },
    };
    if opts.window == 0 {
        return Err(Error::config("--window must be at least 1"));
    }
    let pred = predict(&model, &frames, &table, &opts)?;
    write_file(&a.out, &encode_saliency(&pred.maps)?)?;
    if let Some(dir) = &a.preview_dir {
        for t in 0..pred.maps.frames {
            let pgm = encode_pgm(pred.maps.frame(t), cfg.width, cfg.height);
            write_file(&dir.join(format!("frame_{t:05}.pgm")), &pgm)?;
        }
    }
    Ok(())
}

fn parse_value<T: std::str::FromStr>(kv: &std::collections::BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    kv.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::config(format!("config key '{key}': cannot parse '{v}'"))))
        .transpose()
}

/// Training settings from defaults, then the config file, then flags.
pub fn train_config(a: &TrainArgs, cfg: &GridConfig) -> Result<TrainConfig> {
    let mut tc = TrainConfig::for_grid(cfg);
    if let Some(path) = &a.config {
        let text = String::from_utf8(read_file(path)?).map_err(|_| Error::config("config file is not UTF-8"))?;
        let kv = parse_key_values(&text)?;
        const KNOWN: [&str; 9] = ["lr", "epochs", "T", "lambda_t", "lambda_s", "lambda_g", "epsilon", "sigma", "seed"];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown config key '{k}'")));
        }
        tc.lr = parse_value(&kv, "lr")?.unwrap_or(tc.lr);
        tc.epochs = parse_value(&kv, "epochs")?.unwrap_or(tc.epochs);
        tc.window = parse_value(&kv, "T")?.unwrap_or(tc.window);
        tc.weights.lambda_t = parse_value(&kv, "lambda_t")?.unwrap_or(tc.weights.lambda_t);
        tc.weights.lambda_s = parse_value(&kv, "lambda_s")?.unwrap_or(tc.weights.lambda_s);
        tc.weights.lambda_g = parse_value(&kv, "lambda_g")?.unwrap_or(tc.weights.lambda_g);
        tc.weights.epsilon = parse_value(&kv, "epsilon")?.unwrap_or(tc.weights.epsilon);
        tc.seed = parse_value(&kv, "seed")?.unwrap_or(tc.seed);
        // sigma only affects inference; it is accepted so one file can serve both
        let _: Option<f64> = parse_value(&kv, "sigma")?;
    }
    tc.lr = a.lr.unwrap_or(tc.lr);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.window = a.window.unwrap_or(tc.window);
    tc.weights.lambda_t = a.lambda_t.unwrap_or(tc.weights.lambda_t);
    tc.weights.lambda_s = a.lambda_s.unwrap_or(tc.weights.lambda_s);
    tc.weights.lambda_g = a.lambda_g.unwrap_or(tc.weights.lambda_g);
    tc.weights.epsilon = a.epsilon.unwrap_or(tc.weights.epsilon);
    tc.seed = a.seed.unwrap_or(tc.seed);
    tc.max_steps = a.max_steps.or(tc.max_steps);
    Ok(tc)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let clips = load_clips(&a.frames_dir, a.format)?;
    let first = &clips[0].1[0];
    let (w, h) = (first.width(), first.height());
    let table: OffsetTable = match &a.offsets {
        Some(p) => decode_offsets(&read_file(p)?)?,
        None => {
            let patch = match &a.init_weights {
                Some(p) => {
                    let c = WeightContainer::decode(&read_file(p)?)?;
                    let wt = c.get("embed.weight").ok_or_else(|| Error::format("container lacks 'embed.weight'"))?;
                    ((wt.cols() / 3) as f64).sqrt().round() as usize
                }
                None => a.patch,
            };
            compute_offset_table(&GridConfig::new(w, h, patch)?, a.format)?
        }
    };
    let cfg = table.config;
    for (_, frames) in &clips {
        check_frames(frames, &cfg)?;
    }
    let tc = train_config(a, &cfg)?;
    let mut model = match &a.init_weights {
        Some(p) => load_model(p, &a.heads, &cfg)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
            let mc = ModelConfig {
                channels: a.channels,
                depth: a.depth,
                encoder_heads: a.heads.encoder_heads,
                fusion_heads: a.heads.fusion_heads,
            };
            PaverModel::random(&mut rng, cfg.patch, mc)?
        }
    };
    let encoded = clips
        .iter()
        .map(|(_, frames)| model.encode_frames(frames, &table))
        .collect::<Result<Vec<_>>>()?;
    let nbhd = SpatialNeighborhood::for_grid(table.format, &cfg, tc.weights.epsilon)?;
    let report = train(&encoded, &mut model.fusion, &nbhd, &tc)?;
    write_file(&a.out_weights, &model.to_container()?.encode()?)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out_weights.with_extension("csv"));
    let mut csv = String::from("step,loss\n");
    for (k, l) in report.losses.iter().enumerate() {
        let _ = writeln!(csv, "{k},{l}");
    }
    write_file(&trace_path, csv.as_bytes())?;
    println!("steps={}", report.steps);
    Ok(())
}

/// Maps from a PSAL file or a single PGM.
pub fn load_maps(path: &Path) -> Result<SaliencyMaps> {
    let bytes = read_file(path)?;
    if bytes.starts_with(b"PSAL") {
        decode_saliency(&bytes)
    } else if bytes.starts_with(b"P5") {
        let (w, h, v) = decode_pgm(&bytes)?;
        SaliencyMaps::new(w, h, 1, v)
    } else {
        Err(Error::format(format!("{}: expected a PSAL or PGM file", path.display())))
    }
}

fn clip_name(explicit: &Option<String>, path: &Path) -> String {
    explicit.clone().unwrap_or_else(|| {
        path.file_stem().map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned())
    })
}

fn emit(records: &[MetricRecord], out: &Option<PathBuf>) -> Result<()> {
    let text = json_lines(records);
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn eval_records(a: &EvalArgs) -> Result<Vec<MetricRecord>> {
    let pred = load_maps(&a.pred)?;
    let gt = load_maps(&a.gt)?;
    if (pred.width, pred.height, pred.frames) != (gt.width, gt.height, gt.frames) {
        return Err(Error::config(format!(
            "prediction is {}×{}×{}, ground truth {}×{}×{}",
            pred.width, pred.height, pred.frames, gt.width, gt.height, gt.frames
        )));
    }
    let clip = clip_name(&a.clip, &a.pred);
    let mut records = Vec::new();
    for &m in &a.metrics {
        let mut sum = 0.0;
        for t in 0..pred.frames {
            let (p, g) = (pred.frame(t), gt.frame(t));
            sum += match m {
                SaliencyMetric::Cc if a.area_weighted => cc_area_weighted(p, g, pred.width, pred.height)?,
                SaliencyMetric::Cc => cc(p, g)?,
                SaliencyMetric::AucJ => auc_judd(p, &binarize_gt(g, gt.width, gt.height, a.percentile)?)?,
                SaliencyMetric::AucB => {
                    let fix = binarize_gt(g, gt.width, gt.height, a.percentile)?;
                    auc_borji(p, &fix, a.splits, a.seed.wrapping_add(t as u64))?
                }
            };
        }
        let params = match m {
            SaliencyMetric::Cc => json!({ "frames": pred.frames, "area_weighted": a.area_weighted }),
            SaliencyMetric::AucJ => json!({ "frames": pred.frames, "percentile": a.percentile }),
            SaliencyMetric::AucB => {
                json!({ "frames": pred.frames, "percentile": a.percentile, "splits": a.splits, "seed": a.seed })
            }
        };
        records.push(MetricRecord { clip: clip.clone(), metric: m.name().into(), value: sum / pred.frames as f64, params });
    }
    Ok(records)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    emit(&eval_records(a)?, &a.out)
}

pub fn vqa_record(a: &VqaArgs) -> Result<MetricRecord> {
    let reference = load_frames(&a.reference, a.format)?;
    let distorted = load_frames(&a.dist, a.format)?;
    if reference.len() != distorted.len() {
        return Err(Error::config(format!("{} reference and {} distorted frames", reference.len(), distorted.len())));
    }
    let (w, h) = (reference[0].width(), reference[0].height());
    for f in reference.iter().chain(&distorted) {
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::config("frames differ in size"));
        }
    }
    let user: Option<Vec<Vec<f64>>> = match &a.weight_map {
        None => None,
        Some(p) => {
            let m = load_maps(p)?;
            if (m.width, m.height) != (w, h) || (m.frames != 1 && m.frames != reference.len()) {
                return Err(Error::config("weight map does not match the frames"));
            }
            Some((0..m.frames).map(|t| m.frame(t).to_vec()).collect())
        }
    };
    let mode = match a.channel {
        ChannelArg::Luma => ErrorChannel::Luma,
        ChannelArg::Rgb => ErrorChannel::RgbMean,
    };
    let report = match a.metric {
        VqaMetric::Psnr => psnr_weighted(&reference, &distorted, user.as_deref(), a.max, mode)?,
        VqaMetric::WsPsnr => {
            let ws = ws_weight_map(w, h);
            let maps: Vec<Vec<f64>> = match &user {
                None => vec![ws],
                Some(u) => u.iter().map(|m| m.iter().zip(&ws).map(|(a, b)| a * b).collect()).collect(),
            };
            psnr_weighted(&reference, &distorted, Some(&maps), a.max, mode)?
        }
        VqaMetric::SPsnr => {
            let pts = SpherePointSet::fibonacci(a.points, 0)?;
            spsnr(&reference, &distorted, &pts, user.as_deref(), a.max, mode)?
        }
    };
    let metric = match a.metric {
        VqaMetric::Psnr => "psnr",
        VqaMetric::WsPsnr => "ws-psnr",
        VqaMetric::SPsnr => "s-psnr",
    };
    Ok(MetricRecord {
        clip: clip_name(&a.clip, &a.dist),
        metric: metric.into(),
        value: report.db,
        params: json!({
            "mse": report.mse,
            "exact_match": report.exact_match,
            "weighted": a.weight_map.is_some(),
            "channel": if mode == ErrorChannel::Luma { "luma" } else { "rgb" },
        }),
    })
}

pub fn cmd_vqa(a: &VqaArgs) -> Result<()> {
    emit(&[vqa_record(a)?], &a.out)
}
