//! Command-line driver: `convert`, `mix`, `build`, `eval`, `stats`.
//!
//! Logs are line-delimited JSON records on standard error; data goes to
//! files. Every subcommand is deterministic given its arguments and the
//! root `--seed`: per-item seeds derive as `seed ^ fnv1a64(item_key)`, so
//! `--parallelism` changes wall time but never output bytes. The exit
//! status is zero iff no per-item failure occurred.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::dataset::{
    self, load_category_config, resolve_subgroup, AugmentationPolicy, BuildConfig, CategorySet,
    CppmPlan, ModalityPlan, SffmPlan, SplitSpec,
};
use crate::dhs::{encode_dhs_with, DepthMode, EncodeOptions};
use crate::eval::{self, EvalOptions, COCO_THRESHOLDS};
use crate::geometry::load_cloud;
use crate::mixing::{self, Label, MaskStats, Neighborhood};
use crate::seed::{derive_seed, DEFAULT_SEED};
use crate::{coco, mixing::MixMode};

#[derive(Parser, Debug)]
#[command(
    name = "modmix",
    version,
    propagate_version = true,
    about = "Pseudo-image encoding, modality mixing, dataset building and detection evaluation"
)]
pub struct Cli {
    /// Root seed; all randomness in a run derives from it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads. Defaults to MODMIX_PARALLELISM or the CPU count.
    /// Affects wall time only, never output bytes.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert organized point clouds (OPC1 or depth PNG + intrinsics) to
    /// DHS pseudo-image PNGs.
    Convert(ConvertArgs),
    /// Generate mixture masks for one RGB/DHS image pair and write the
    /// mixed images.
    Mix(MixArgs),
    /// Build a dataset: modality images plus a COCO annotation document.
    Build(BuildArgs),
    /// Evaluate COCO-format detections against ground truth.
    Eval(EvalArgs),
    /// Summarize a directory of mask PNGs.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Cloud files or directories of them (.opc/.opc1, or .png depth maps
    /// with a `<name>.intr.txt` sidecar).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = DepthModeArg::Range)]
    pub depth_mode: DepthModeArg,
    /// Also write a `<name>_validity.png` mask per input.
    #[arg(long)]
    pub validity: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum DepthModeArg {
    /// Euclidean range from the sensor origin.
    Range,
    /// Coordinate along the sensor viewing axis.
    Axial,
}

impl From<DepthModeArg> for DepthMode {
    fn from(v: DepthModeArg) -> Self {
        match v {
            DepthModeArg::Range => DepthMode::Range,
            DepthModeArg::Axial => DepthMode::Axial,
        }
    }
}

#[derive(Args, Debug)]
pub struct MixArgs {
    pub img_a: PathBuf,
    pub img_b: PathBuf,
    #[arg(long, value_enum)]
    pub mode: MixModeArg,
    #[arg(long, default_value_t = 1)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p_a: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_b: f64,
    #[arg(long, value_enum, default_value_t = NeighborhoodArg::Four)]
    pub neighborhood: NeighborhoodArg,
    /// Number of masks to generate (SFFM; CPPM always emits one).
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Also write the masks as 1-bit PNGs.
    #[arg(long)]
    pub save_masks: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum MixModeArg {
    Cppm,
    Sffm,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum NeighborhoodArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

impl From<NeighborhoodArg> for Neighborhood {
    fn from(v: NeighborhoodArg) -> Self {
        match v {
            NeighborhoodArg::Four => Neighborhood::Four,
            NeighborhoodArg::Eight => Neighborhood::Eight,
        }
    }
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    /// JSON file with `train` / `val` id lists; without it the whole
    /// manifest is used.
    #[arg(long)]
    pub split_spec: Option<PathBuf>,
    /// Comma-separated subset of rgb,dhs,cppm,sffm.
    #[arg(long, value_delimiter = ',', default_value = "rgb,dhs")]
    pub modalities: Vec<String>,
    #[arg(long, default_value_t = 6)]
    pub sffm_count: usize,
    #[arg(long, default_value_t = 0.1)]
    pub prob_low: f64,
    #[arg(long, default_value_t = 0.9)]
    pub prob_high: f64,
    #[arg(long, default_value_t = 1)]
    pub patch_size: usize,
    #[arg(long, value_enum, default_value_t = NeighborhoodArg::Four)]
    pub neighborhood: NeighborhoodArg,
    /// Category subgroup used for annotations.
    #[arg(long, default_value = "sunrgbd16")]
    pub category_set: String,
    /// JSON file defining extra subgroups (e.g. sunrgbd66, sunrgbd79).
    #[arg(long)]
    pub categories_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// COCO annotation document.
    #[arg(long)]
    pub gt: PathBuf,
    /// COCO results array.
    #[arg(long)]
    pub dets: PathBuf,
    /// sunrgbd10 | sunrgbd16 | sunrgbd66 | sunrgbd79 | all
    #[arg(long, default_value = "all")]
    pub subgroup: String,
    #[arg(long, value_enum, default_value_t = ThresholdArg::Coco)]
    pub thresholds: ThresholdArg,
    #[arg(long)]
    pub categories_config: Option<PathBuf>,
    /// Average zero-ground-truth categories as 0 instead of excluding them.
    #[arg(long)]
    pub zero_fill_missing: bool,
    /// Cap detections per image (strict COCO parity uses 100).
    #[arg(long)]
    pub max_dets: Option<usize>,
    /// Write the machine-readable report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the plain-text table here (printed to stdout when neither
    /// output is given).
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ThresholdArg {
    #[value(name = "0.5")]
    Fifty,
    #[value(name = "0.75")]
    SeventyFive,
    Coco,
}

impl ThresholdArg {
    fn values(self) -> Vec<f64> {
        match self {
            ThresholdArg::Fifty => vec![0.5],
            ThresholdArg::SeventyFive => vec![0.75],
            ThresholdArg::Coco => COCO_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Directory of mask PNGs.
    pub dir: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    pub out: PathBuf,
}

/// Entry point used by the `modmix` binary.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    init_parallelism(cli.parallelism);
    let outcome = match &cli.command {
        Command::Convert(args) => cmd_convert(&cli, args),
        Command::Mix(args) => cmd_mix(&cli, args),
        Command::Build(args) => cmd_build(&cli, args),
        Command::Eval(args) => cmd_eval(&cli, args),
        Command::Stats(args) => cmd_stats(&cli, args),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            log::error!("{}", event("run_failed", &format!("{failures} item(s) failed")));
            ExitCode::FAILURE
        }
        Err(err) => {
            log::error!("{}", event("fatal", &format!("{err:#}")));
            ExitCode::FAILURE
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().to_string(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .try_init();
}

fn init_parallelism(flag: Option<usize>) {
    let threads = flag.or_else(|| {
        std::env::var("MODMIX_PARALLELISM")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn event(name: &str, detail: &str) -> String {
    serde_json::json!({ "event": name, "detail": detail }).to_string()
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("opc") | Some("opc1") | Some("png")
                    )
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn cmd_convert(_cli: &Cli, args: &ConvertArgs) -> Result<usize> {
    std::fs::create_dir_all(&args.out)?;
    let files = expand_inputs(&args.inputs)?;
    if files.is_empty() {
        bail!("no input files found");
    }
    let opts = EncodeOptions {
        depth_mode: args.depth_mode.into(),
    };
    let results: Vec<Result<(), String>> = files
        .par_iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| format!("{}: unusable file name", path.display()))?;
            let cloud =
                load_cloud(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let img = encode_dhs_with(&cloud, &opts);
            let out_path = args.out.join(format!("{stem}_dhs.png"));
            img.to_rgb_image()
                .save(&out_path)
                .map_err(|e| format!("{}: {e}", out_path.display()))?;
            if args.validity {
                let v_path = args.out.join(format!("{stem}_validity.png"));
                img.validity_image()
                    .save(&v_path)
                    .map_err(|e| format!("{}: {e}", v_path.display()))?;
            }
            log::debug!("{}", event("converted", &path.display().to_string()));
            Ok(())
        })
        .collect();

    let mut failures = 0;
    for result in &results {
        if let Err(msg) = result {
            failures += 1;
            log::warn!("{}", event("convert_failed", msg));
        }
    }
    log::info!(
        "{}",
        serde_json::json!({
            "event": "convert_summary",
            "converted": results.len() - failures,
            "failed": failures,
        })
    );
    Ok(failures)
}

// ---------------------------------------------------------------------------
// mix
// ---------------------------------------------------------------------------

fn cmd_mix(cli: &Cli, args: &MixArgs) -> Result<usize> {
    std::fs::create_dir_all(&args.out)?;
    let img_a = image::open(&args.img_a)
        .with_context(|| format!("reading {}", args.img_a.display()))?
        .into_rgb8();
    let img_b = image::open(&args.img_b)
        .with_context(|| format!("reading {}", args.img_b.display()))?
        .into_rgb8();
    if img_a.dimensions() != img_b.dimensions() {
        bail!(
            "images are not pixel aligned: {}x{} vs {}x{}",
            img_a.width(),
            img_a.height(),
            img_b.width(),
            img_b.height()
        );
    }
    let (w, h) = (img_a.width() as usize, img_a.height() as usize);

    let params = mixing::MixingParams {
        mode: match args.mode {
            MixModeArg::Cppm => MixMode::Cppm,
            MixModeArg::Sffm => MixMode::Sffm,
        },
        patch_size: args.patch_size,
        p_a: args.p_a,
        p_b: args.p_b,
        neighborhood: args.neighborhood.into(),
        seed: cli.seed,
    };
    params.validate()?;

    let write = |name: String, mask: &mixing::MixtureMask| -> Result<()> {
        let mixed = mixing::apply_mask(&img_a, &img_b, mask)?;
        mixed.save(args.out.join(format!("{name}.png")))?;
        if args.save_masks {
            mixing::save_mask_png(mask, &args.out.join(format!("{name}_mask.png")))?;
        }
        Ok(())
    };

    match args.mode {
        MixModeArg::Cppm => {
            let mask = mixing::cppm_mask(w, h, args.patch_size, Label::A);
            write("mixed_cppm".to_string(), &mask)?;
        }
        MixModeArg::Sffm => {
            for i in 0..args.count {
                let item_seed = derive_seed(cli.seed, &format!("mix/sffm/{i}"));
                let mask =
                    mixing::sffm_mask(w, h, args.p_a, args.p_b, args.neighborhood.into(), item_seed);
                write(format!("mixed_sffm{i}"), &mask)?;
            }
        }
    }
    log::info!(
        "{}",
        serde_json::json!({ "event": "mix_summary", "outputs": if matches!(args.mode, MixModeArg::Cppm) { 1 } else { args.count } })
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

fn cmd_build(cli: &Cli, args: &BuildArgs) -> Result<usize> {
    let frames = dataset::read_manifest(&args.manifest)?;
    let frames = match &args.split_spec {
        None => frames,
        Some(spec_path) => {
            let spec = SplitSpec::from_file(spec_path)?;
            let split = dataset::split_manifest(&frames, &spec)?;
            log::info!(
                "{}",
                serde_json::json!({
                    "event": "split",
                    "train": split.train.len(),
                    "val": split.val.len(),
                    "unlisted": split.unlisted.len(),
                    "missing": split.missing.len(),
                })
            );
            match args.split {
                SplitArg::Train => split.train,
                SplitArg::Val => split.val,
            }
        }
    };

    let mut plan = ModalityPlan::default();
    for modality in &args.modalities {
        match modality.as_str() {
            "rgb" => plan.rgb = true,
            "dhs" => plan.dhs = true,
            "cppm" => {
                plan.cppm = Some(CppmPlan {
                    patch_size: args.patch_size,
                })
            }
            "sffm" => {
                plan.sffm = Some(SffmPlan {
                    count: args.sffm_count,
                    prob_low: args.prob_low,
                    prob_high: args.prob_high,
                    neighborhood: args.neighborhood.into(),
                })
            }
            other => bail!("unknown modality {other:?} (expected rgb, dhs, cppm, sffm)"),
        }
    }

    let config_sets = match &args.categories_config {
        Some(path) => load_category_config(path)?,
        None => Vec::new(),
    };
    let categories = resolve_subgroup(&args.category_set, &config_sets)?;

    let policy = AugmentationPolicy {
        seed: cli.seed,
        ..Default::default()
    };
    let cfg = BuildConfig {
        plan,
        policy,
        categories,
    };
    std::fs::create_dir_all(&args.out)?;
    let summary = dataset::build_dataset(&frames, &cfg, &args.out)?;
    log::info!("{}", serde_json::json!({ "event": "build_summary", "summary": summary }));
    Ok(summary.failures.len())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(_cli: &Cli, args: &EvalArgs) -> Result<usize> {
    let gt_doc = coco::CocoDocument::from_file(&args.gt)?;
    gt_doc.check_integrity()?;
    let records = coco::read_results(&args.dets)?;

    let config_sets = match &args.categories_config {
        Some(path) => load_category_config(path)?,
        None => Vec::new(),
    };
    let subgroups: Vec<CategorySet> = if args.subgroup == "all" {
        vec![eval::all_categories_subgroup(&gt_doc.categories)]
    } else {
        vec![resolve_subgroup(&args.subgroup, &config_sets)?]
    };

    let opts = EvalOptions {
        zero_fill_missing: args.zero_fill_missing,
        max_dets_per_image: args.max_dets,
    };
    let report = eval::evaluate_coco(
        &gt_doc,
        &records,
        &subgroups,
        &args.thresholds.values(),
        &opts,
    )?;

    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_vec(&report)?)?;
    }
    if let Some(path) = &args.text {
        std::fs::write(path, report.render_text())?;
    }
    if args.json.is_none() && args.text.is_none() {
        print!("{}", report.render_text());
    }
    for sg in &report.subgroups {
        log::info!(
            "{}",
            serde_json::json!({
                "event": "eval_subgroup",
                "name": sg.name,
                "map50": sg.map50,
                "map75": sg.map75,
                "map": sg.map,
            })
        );
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct MaskReportEntry {
    file: String,
    #[serde(flatten)]
    stats: MaskStats,
}

#[derive(serde::Serialize)]
struct StatsReport {
    masks: Vec<MaskReportEntry>,
    skipped: Vec<String>,
    aggregate: Option<StatsAggregate>,
}

#[derive(serde::Serialize)]
struct StatsAggregate {
    count: usize,
    mean_a_fraction: f64,
    mean_region_count: f64,
    mean_region_size: f64,
}

fn cmd_stats(_cli: &Cli, args: &StatsArgs) -> Result<usize> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .with_context(|| format!("reading {}", args.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    files.sort();

    let computed: Vec<(PathBuf, Result<MaskStats, String>)> = files
        .par_iter()
        .map(|path| {
            let result = mixing::load_mask_png(path)
                .map(|mask| mixing::mask_stats(&mask))
                .map_err(|e| e.to_string());
            (path.clone(), result)
        })
        .collect();

    let mut report = StatsReport {
        masks: Vec::new(),
        skipped: Vec::new(),
        aggregate: None,
    };
    for (path, result) in computed {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match result {
            Ok(stats) => report.masks.push(MaskReportEntry { file: name, stats }),
            Err(msg) => {
                log::warn!("{}", event("stats_skipped", &msg));
                report.skipped.push(name);
            }
        }
    }
    if !report.masks.is_empty() {
        let n = report.masks.len() as f64;
        report.aggregate = Some(StatsAggregate {
            count: report.masks.len(),
            mean_a_fraction: report.masks.iter().map(|m| m.stats.a_fraction).sum::<f64>() / n,
            mean_region_count: report
                .masks
                .iter()
                .map(|m| m.stats.region_count as f64)
                .sum::<f64>()
                / n,
            mean_region_size: report
                .masks
                .iter()
                .map(|m| m.stats.mean_region_size)
                .sum::<f64>()
                / n,
        });
    }
    std::fs::write(&args.out, serde_json::to_vec(&report)?)?;
    log::info!(
        "{}",
        serde_json::json!({
            "event": "stats_summary",
            "masks": report.masks.len(),
            "skipped": report.skipped.len(),
        })
    );
    Ok(report.skipped.len())
}
