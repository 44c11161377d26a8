//! Command-line front end tying the toolkit together: label rendering,
//! contour reconstruction, evaluation, benchmarking, synthetic scenes, and
//! gradient auditing.
//!
//! Exit codes: 0 on success, 1 on processing errors, 2 on usage errors.
//! Diagnostics go to the error stream (level set by `SIMTEXT_LOG`);
//! results go to files or standard output.

use crate::error::{Error, Result};
use crate::eval::{bench_postprocess, match_detections, EvalReport, DEFAULT_IOU_THRESH};
use crate::formats::{
    fmap_to_prob, pair_by_stem, parse_annotations, prob_to_fmap, read_detections, read_fmap,
    read_pgm, write_annotations, write_detections, write_fmap, write_pgm, DatasetKind,
};
use crate::losses::{
    gradcheck_with, DEFAULT_CORRECTION_SIGMA, DEFAULT_CORRECTION_THETA, DEFAULT_LAMBDA_CORRECTION,
    DEFAULT_LAMBDA_MASK,
};
use crate::pipeline::{
    generate_offset_label, generate_similar_label, reconstruct, ExpandMethod, ReconstructConfig,
    DEFAULT_BINARIZE_THRESH, DEFAULT_EXPAND_BETA, DEFAULT_MIN_AREA, DEFAULT_OFFSET_GAMMA,
    DEFAULT_SCORE_THRESH, DELTA_LINE_LEVEL,
};
use crate::raster::{binarize, ProbMap};
use crate::synth::{motion_blur, synth_scene, BlurSpec, SceneSpec, DEFAULT_BLUR_LEN};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Gradient audits beyond this relative error fail the `gradcheck` command.
pub const GRADCHECK_GATE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "simtext",
    version,
    about = "Shrink-mask text detection toolkit: generate training labels, rebuild full-extent \
             detections from probability maps, evaluate, benchmark, synthesize test data, and \
             audit loss gradients"
)]
struct Cli {
    /// Optional TOML file supplying defaults; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render ground-truth shrink masks, one PGM per annotation file.
    GenLabels(GenLabelsArgs),
    /// Rebuild full-extent detections from probability maps.
    Reconstruct(ReconstructArgs),
    /// Score detection files against ground truth.
    Eval(EvalArgs),
    /// Time the reconstruction path on a map set (single-threaded).
    Bench(BenchArgs),
    /// Generate synthetic scenes: annotations plus motion-blurred maps.
    Synth(SynthArgs),
    /// Audit loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    /// Comma-separated quads with a transcription field.
    IcdarQuad,
    /// Space-separated rotated boxes with a difficult flag.
    Td500Rotbox,
}

impl From<FormatArg> for DatasetKind {
    fn from(f: FormatArg) -> DatasetKind {
        match f {
            FormatArg::IcdarQuad => DatasetKind::IcdarQuad,
            FormatArg::Td500Rotbox => DatasetKind::Td500Rotbox,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Exact-inverse scaling about the vertex mean.
    Similar,
    /// Perimeter-normalized polygon offsetting.
    Offset,
}

impl From<MethodArg> for ExpandMethod {
    fn from(m: MethodArg) -> ExpandMethod {
        match m {
            MethodArg::Similar => ExpandMethod::Similar,
            MethodArg::Offset => ExpandMethod::Offset,
        }
    }
}

#[derive(Args)]
struct GenLabelsArgs {
    /// Directory of annotation files.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Output directory for PGM masks (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Annotation dialect.
    #[arg(long, value_enum, default_value = "icdar-quad")]
    format: FormatArg,
    /// Mask family: similar (shrink factor) or offset (clip distance).
    #[arg(long, value_enum, default_value = "similar")]
    method: MethodArg,
    /// Similar-mask shrink factor in (0, 1].
    #[arg(long)]
    delta: Option<f64>,
    /// Offset-mask shrink ratio in [0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Canvas height; derived from the annotations when absent.
    #[arg(long)]
    height: Option<usize>,
    /// Canvas width; derived from the annotations when absent.
    #[arg(long)]
    width: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory of probability maps (.fmap or .pgm).
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Output directory for res_<stem>.txt detection files.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Expansion method.
    #[arg(long, value_enum, default_value = "similar")]
    method: MethodArg,
    /// Similar-mask shrink factor in (0, 1].
    #[arg(long)]
    delta: Option<f64>,
    /// Offset expansion ratio (> 0).
    #[arg(long)]
    beta: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of ground-truth annotation files (img_N.*).
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Directory of detection files (res_img_N.txt).
    #[arg(long, value_name = "DIR")]
    det: PathBuf,
    /// Ground-truth dialect.
    #[arg(long, value_enum, default_value = "icdar-quad")]
    format: FormatArg,
    /// IoU threshold a match must strictly exceed.
    #[arg(long)]
    iou: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of probability maps (.fmap or .pgm).
    #[arg(long, value_name = "DIR")]
    maps: PathBuf,
    /// Expansion method to time.
    #[arg(long, value_enum, default_value = "similar")]
    method: MethodArg,
    /// Total timed passes, including warmup.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Leading passes excluded from statistics.
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// Similar-mask shrink factor in (0, 1].
    #[arg(long)]
    delta: Option<f64>,
    /// Offset expansion ratio (> 0).
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of scenes to generate.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Master seed; scene seeds, instance counts, and blur angles derive
    /// from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shrink factor for the rendered masks.
    #[arg(long)]
    delta: Option<f64>,
    /// Motion-blur streak length in pixels (odd; 1 disables blur).
    #[arg(long = "blur-len", default_value_t = DEFAULT_BLUR_LEN)]
    blur_len: usize,
    /// Fixed blur angle in radians; drawn per scene when absent.
    #[arg(long = "blur-angle")]
    blur_angle: Option<f64>,
    /// Canvas height in pixels.
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Canvas width in pixels.
    #[arg(long, default_value_t = 256)]
    width: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of seeded random cases.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Case generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// False-positive selection threshold in [0, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Cosine-similarity scale (> 0).
    #[arg(long)]
    sigma: Option<f64>,
}

/// Optional TOML configuration; every key mirrors a flag or a built-in
/// default and explicit flags always win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    delta: Option<f64>,
    gamma: Option<f64>,
    beta: Option<f64>,
    theta: Option<f64>,
    sigma: Option<f64>,
    lambda_mask: Option<f64>,
    lambda_correction: Option<f64>,
    binarize: Option<f64>,
    min_area: Option<usize>,
    score: Option<f64>,
    iou: Option<f64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)?;
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
        // The loss weights are part of the documented schema; no current
        // subcommand consumes them, but unknown keys must still be caught.
        let _ = (cfg.lambda_mask.unwrap_or(DEFAULT_LAMBDA_MASK),
                 cfg.lambda_correction.unwrap_or(DEFAULT_LAMBDA_CORRECTION));
        Ok(cfg)
    }
}

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses `argv` and runs the selected command, returning the process exit
/// code: 0 on success (including `--help`/`--version`), 1 on processing
/// errors, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("SIMTEXT_LOG", "warn"),
    )
    .format_timestamp(None)
    .try_init();

    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenLabels(args) => gen_labels(&args, &file),
        Command::Reconstruct(args) => reconstruct_cmd(&args, &file),
        Command::Eval(args) => eval_cmd(&args, &file),
        Command::Bench(args) => bench_cmd(&args, &file),
        Command::Synth(args) => synth_cmd(&args, &file),
        Command::Gradcheck(args) => gradcheck_cmd(&args, &file),
    }
}

/// Regular files in `dir` with one of the given extensions, sorted by path
/// for deterministic processing order.
fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| exts.contains(&e))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("out")
        .to_string()
}

/// Map files in `dir`; when a stem exists as both `.fmap` and `.pgm`, the
/// full-precision `.fmap` wins.
fn map_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = list_files(dir, &["fmap", "pgm"])?;
    let fmap_stems: Vec<String> = files
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "fmap"))
        .map(|p| stem_of(p))
        .collect();
    files.retain(|p| {
        p.extension().is_some_and(|e| e == "fmap") || !fmap_stems.contains(&stem_of(p))
    });
    Ok(files)
}

fn load_map(path: &Path) -> Result<ProbMap> {
    let bytes = std::fs::read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("fmap") => fmap_to_prob(&read_fmap(&bytes)?),
        Some("pgm") => Ok(ProbMap::from_mask(&read_pgm(&bytes)?)),
        other => Err(Error::UnsupportedFormat(format!(
            "map file extension {other:?} (expected .fmap or .pgm)"
        ))),
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads, or on the default pool
/// when `jobs` is 0.
fn with_pool<F>(jobs: usize, f: F) -> Result<()>
where
    F: FnOnce() -> Result<()> + Send,
{
    if jobs == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build a {jobs}-thread pool: {e}")))?;
    pool.install(f)
}

/// Canvas large enough for every annotation, unless overridden.
fn canvas_for(
    anns: &[crate::pipeline::Annotation],
    height: Option<usize>,
    width: Option<usize>,
) -> (usize, usize) {
    let (mut max_y, mut max_x) = (0.0f64, 0.0f64);
    for a in anns {
        let (_, max) = a.polygon().bbox();
        max_y = max_y.max(max.y);
        max_x = max_x.max(max.x);
    }
    (
        height.unwrap_or((max_y.ceil() as usize).max(1) + 1),
        width.unwrap_or((max_x.ceil() as usize).max(1) + 1),
    )
}

fn gen_labels(args: &GenLabelsArgs, file: &FileConfig) -> Result<()> {
    let delta = pick(args.delta, file.delta, DELTA_LINE_LEVEL);
    let gamma = pick(args.gamma, file.gamma, DEFAULT_OFFSET_GAMMA);
    let kind: DatasetKind = args.format.into();
    let files = list_files(&args.input, &["txt", "gt"])?;
    if files.is_empty() {
        log::warn!("no annotation files in {}", args.input.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out)?;
    with_pool(args.jobs, || {
        files.par_iter().try_for_each(|path| -> Result<()> {
            let text = std::fs::read_to_string(path)?;
            let anns = parse_annotations(kind, &text)
                .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
            let (h, w) = canvas_for(&anns, args.height, args.width);
            let masks = match args.method {
                MethodArg::Similar => generate_similar_label(&anns, delta, h, w)?,
                MethodArg::Offset => generate_offset_label(&anns, gamma, h, w)?,
            };
            if masks.skipped > 0 {
                log::warn!("{}: skipped {} instances", path.display(), masks.skipped);
            }
            let out_path = args.out.join(format!("{}.pgm", stem_of(path)));
            std::fs::write(out_path, write_pgm(&masks.gt))?;
            Ok(())
        })
    })?;
    println!("wrote {} mask files to {}", files.len(), args.out.display());
    Ok(())
}

fn reconstruct_cmd(args: &ReconstructArgs, file: &FileConfig) -> Result<()> {
    let cfg = ReconstructConfig {
        delta: pick(args.delta, file.delta, DELTA_LINE_LEVEL),
        binarize_thresh: pick(None, file.binarize, DEFAULT_BINARIZE_THRESH),
        min_area: pick(None, file.min_area, DEFAULT_MIN_AREA),
        score_thresh: pick(None, file.score, DEFAULT_SCORE_THRESH),
        method: args.method.into(),
        beta: pick(args.beta, file.beta, DEFAULT_EXPAND_BETA),
    };
    cfg.validate()?;
    let files = map_files(&args.input)?;
    if files.is_empty() {
        log::warn!("no map files in {}", args.input.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out)?;
    with_pool(args.jobs, || {
        files.par_iter().try_for_each(|path| -> Result<()> {
            let map = load_map(path)?;
            let (dets, _) = reconstruct(&map, &cfg)?;
            let out_path = args.out.join(format!("res_{}.txt", stem_of(path)));
            std::fs::write(out_path, write_detections(&dets))?;
            Ok(())
        })
    })?;
    println!(
        "wrote {} detection files to {}",
        files.len(),
        args.out.display()
    );
    Ok(())
}

fn eval_cmd(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let iou = pick(args.iou, file.iou, DEFAULT_IOU_THRESH);
    if !(0.0..1.0).contains(&iou) {
        return Err(Error::Parameter(format!("iou threshold {iou} outside [0, 1)")));
    }
    let kind: DatasetKind = args.format.into();
    let pairs = pair_by_stem(&args.gt, &args.det)?;
    if pairs.is_empty() {
        log::warn!("no annotation files in {}", args.gt.display());
    }
    let mut per_image = vec![None; pairs.len()];
    with_pool(args.jobs, || {
        pairs
            .par_iter()
            .zip(per_image.par_iter_mut())
            .try_for_each(|(pair, slot)| -> Result<()> {
                let text = std::fs::read_to_string(&pair.annotations)?;
                let gts = parse_annotations(kind, &text)
                    .map_err(|e| Error::Parameter(format!("{}: {e}", pair.annotations.display())))?;
                let dets = match &pair.detections {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)?;
                        read_detections(&text)
                            .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?
                    }
                    None => {
                        log::warn!("no detection file for {}; scoring as empty", pair.name);
                        Vec::new()
                    }
                };
                *slot = Some((pair.name.clone(), match_detections(&dets, &gts, iou)));
                Ok(())
            })
    })?;
    let report = EvalReport::from_per_image(per_image.into_iter().flatten().collect());
    println!("{report}");
    print!("{}", report.to_kv());
    Ok(())
}

fn bench_cmd(args: &BenchArgs, file: &FileConfig) -> Result<()> {
    let cfg = ReconstructConfig {
        delta: pick(args.delta, file.delta, DELTA_LINE_LEVEL),
        binarize_thresh: pick(None, file.binarize, DEFAULT_BINARIZE_THRESH),
        min_area: pick(None, file.min_area, DEFAULT_MIN_AREA),
        score_thresh: pick(None, file.score, DEFAULT_SCORE_THRESH),
        method: args.method.into(),
        beta: pick(args.beta, file.beta, DEFAULT_EXPAND_BETA),
    };
    let files = map_files(&args.maps)?;
    if files.is_empty() {
        return Err(Error::Parameter(format!(
            "no map files in {}",
            args.maps.display()
        )));
    }
    let maps = files.iter().map(|p| load_map(p)).collect::<Result<Vec<_>>>()?;
    let result = bench_postprocess(&maps, &cfg, args.iters, args.warmup)?;
    println!("{result}");
    print!("{}", result.to_kv());
    Ok(())
}

fn synth_cmd(args: &SynthArgs, file: &FileConfig) -> Result<()> {
    let delta = pick(args.delta, file.delta, DELTA_LINE_LEVEL);
    std::fs::create_dir_all(&args.out)?;
    let mut master = ChaCha8Rng::seed_from_u64(args.seed);
    let mut total_instances = 0usize;
    for i in 0..args.count {
        let scene_seed: u64 = master.gen();
        let instances = master.gen_range(1..=10usize);
        let angle = args
            .blur_angle
            .unwrap_or_else(|| master.gen_range(0.0..std::f64::consts::PI));
        let spec = SceneSpec {
            height: args.height,
            width: args.width,
            count: instances,
            seed: scene_seed,
            ..SceneSpec::default()
        };
        let (anns, map) = synth_scene(&spec, delta)?;
        total_instances += anns.len();
        let map_out = if args.blur_len > 1 {
            motion_blur(&map, &BlurSpec::new(args.blur_len, angle)?)?
        } else {
            map.clone()
        };
        let stem = format!("img_{i}");
        std::fs::write(
            args.out.join(format!("{stem}.txt")),
            write_annotations(DatasetKind::IcdarQuad, &anns)?,
        )?;
        std::fs::write(
            args.out.join(format!("{stem}.fmap")),
            write_fmap(&prob_to_fmap(&map_out)),
        )?;
        std::fs::write(
            args.out.join(format!("{stem}.pgm")),
            write_pgm(&binarize(&map, 0.5)),
        )?;
    }
    println!(
        "wrote {} scenes ({} instances) to {}",
        args.count,
        total_instances,
        args.out.display()
    );
    Ok(())
}

fn gradcheck_cmd(args: &GradcheckArgs, file: &FileConfig) -> Result<()> {
    let theta = pick(args.theta, file.theta, DEFAULT_CORRECTION_THETA);
    let sigma = pick(args.sigma, file.sigma, DEFAULT_CORRECTION_SIGMA);
    let report = gradcheck_with(args.count, args.seed, theta, sigma);
    println!("cases={}", report.cases);
    println!("max_bce_rel_err={:.3e}", report.max_bce_rel_err);
    println!("max_correction_rel_err={:.3e}", report.max_correction_rel_err);
    println!("max_rel_err={:.3e}", report.max_rel_err());
    if report.max_rel_err() > GRADCHECK_GATE {
        return Err(Error::Parameter(format!(
            "gradient mismatch {:.3e} exceeds {GRADCHECK_GATE:.0e}",
            report.max_rel_err()
        )));
    }
    println!("gradients agree within {GRADCHECK_GATE:.0e}");
    Ok(())
}
