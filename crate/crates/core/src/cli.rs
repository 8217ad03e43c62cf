//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when any input file failed, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{Class, Reason};
use crate::error::{Error, Result};
use crate::eval::{match_regions, write_report, ConfusionTally, GroundTruth, ReportRow};
use crate::image::Rect;
use crate::imageio::{load_image, save_overlay, save_pgm};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineOutput, SkewOutcome, StageTimings};
use crate::regions::Features;
use crate::skew::ProfileSource;
use crate::synthgen::{corpus_spec, generate_card, write_corpus};

/// Environment variable naming a JSON file of config overrides.
pub const CONFIG_ENV: &str = "CARDSEP_CONFIG";

/// Resolutions benchmarked by default, in megapixels.
pub const BENCH_RESOLUTIONS: [f64; 6] = [0.3, 0.45, 0.75, 1.0, 2.0, 3.0];

const BENCH_SIZES: [(f64, u32, u32); 6] = [
    (0.3, 640, 480),
    (0.45, 800, 600),
    (0.75, 1024, 768),
    (1.0, 1182, 886),
    (2.0, 1672, 1254),
    (3.0, 2048, 1536),
];

#[derive(Debug, Parser)]
#[command(name = "cardsep", version, about = "Text/graphics separation for business card images")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Separate one image into labeled regions.
    Separate {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Separate every .pgm/.png image in a directory.
    Batch {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score predictions against ground truth.
    Eval {
        pred_dir: PathBuf,
        truth_dir: PathBuf,
        /// CSV report path; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate an annotated synthetic corpus.
    Synth {
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1024)]
        width: u32,
        #[arg(long, default_value_t = 768)]
        height: u32,
    },
    /// Time the pipeline over synthetic cards at several resolutions.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = BENCH_RESOLUTIONS)]
        resolutions: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 10)]
        cards: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Config overrides, shared by the command line and the JSON config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigArgs {
    #[arg(long)]
    pub block_size: Option<u32>,
    #[arg(long)]
    pub t_fixed: Option<i32>,
    #[arg(long)]
    pub t_min: Option<i32>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub ra_min: Option<f64>,
    #[arg(long)]
    pub ra_max: Option<f64>,
    /// Minimum component side at 1024x768, scaled with resolution.
    #[arg(long)]
    pub min_dim: Option<f64>,
    /// Tallest text line at 1024x768, scaled with resolution.
    #[arg(long)]
    pub max_char_height: Option<f64>,
    #[arg(long)]
    pub slant_elongation: Option<f64>,
    #[arg(long)]
    pub iou: Option<f64>,
    #[arg(long)]
    pub deviation_factor: Option<f64>,
    #[arg(long)]
    pub min_gray_extent: Option<u32>,
    #[arg(long)]
    pub min_extent_ratio: Option<f64>,
    #[arg(long)]
    pub profile_source: Option<ProfileSource>,
    /// Worker threads for batch processing; defaults to the logical core count.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    /// Fields set here win over those set in `base`.
    pub fn over(self, base: ConfigArgs) -> ConfigArgs {
        ConfigArgs {
            block_size: self.block_size.or(base.block_size),
            t_fixed: self.t_fixed.or(base.t_fixed),
            t_min: self.t_min.or(base.t_min),
            r_min: self.r_min.or(base.r_min),
            r_max: self.r_max.or(base.r_max),
            ra_min: self.ra_min.or(base.ra_min),
            ra_max: self.ra_max.or(base.ra_max),
            min_dim: self.min_dim.or(base.min_dim),
            max_char_height: self.max_char_height.or(base.max_char_height),
            slant_elongation: self.slant_elongation.or(base.slant_elongation),
            iou: self.iou.or(base.iou),
            deviation_factor: self.deviation_factor.or(base.deviation_factor),
            min_gray_extent: self.min_gray_extent.or(base.min_gray_extent),
            min_extent_ratio: self.min_extent_ratio.or(base.min_extent_ratio),
            profile_source: self.profile_source.or(base.profile_source),
            workers: self.workers.or(base.workers),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ConfigArgs> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the overrides to the defaults and validates the result.
    pub fn to_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        if let Some(v) = self.block_size {
            cfg.background.block_size = v;
        }
        if let Some(v) = self.t_fixed {
            cfg.background.t_fixed = v;
        }
        if let Some(v) = self.t_min {
            cfg.background.t_min = v;
        }
        set(&mut cfg.classify.r_min, self.r_min);
        set(&mut cfg.classify.r_max, self.r_max);
        set(&mut cfg.classify.ra_min, self.ra_min);
        set(&mut cfg.classify.ra_max, self.ra_max);
        set(&mut cfg.classify.min_dim, self.min_dim);
        set(&mut cfg.classify.max_char_height, self.max_char_height);
        set(&mut cfg.classify.slant_elongation, self.slant_elongation);
        set(&mut cfg.iou_threshold, self.iou);
        set(&mut cfg.skew.deviation_factor, self.deviation_factor);
        set(&mut cfg.skew.min_extent_ratio, self.min_extent_ratio);
        if let Some(v) = self.min_gray_extent {
            cfg.skew.min_gray_extent = v;
        }
        if let Some(v) = self.profile_source {
            cfg.skew.profile_source = v;
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flag overrides layered over the file named by `CARDSEP_CONFIG`, if any.
fn resolve(flags: ConfigArgs) -> Result<(PipelineConfig, ConfigArgs)> {
    let merged = match std::env::var_os(CONFIG_ENV) {
        Some(path) if !path.is_empty() => flags.over(ConfigArgs::load(PathBuf::from(path))?),
        _ => flags,
    };
    Ok((merged.to_config()?, merged))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub id: u32,
    pub bbox: Rect,
    pub class: Class,
    pub reason: Reason,
    pub features: Features,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skew: Option<SkewOutcome>,
}

/// Contents of `components.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentsFile {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub block_size: u32,
    pub components: Vec<ComponentRecord>,
}

impl ComponentsFile {
    pub fn from_output(image: impl Into<String>, out: &PipelineOutput) -> Self {
        Self {
            image: image.into(),
            width: out.width,
            height: out.height,
            block_size: out.grid.block_size(),
            components: out
                .components
                .iter()
                .map(|c| ComponentRecord {
                    id: c.component.id,
                    bbox: c.component.bbox,
                    class: c.label.class,
                    reason: c.label.reason,
                    features: c.features,
                    skew: c.skew,
                })
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn predictions(&self) -> Vec<(Rect, Class)> {
        self.components.iter().map(|c| (c.bbox, c.class)).collect()
    }
}

#[derive(Deserialize)]
struct PredictedBox {
    bbox: Rect,
    class: Class,
}

#[derive(Deserialize)]
struct PredictedBoxes {
    components: Vec<PredictedBox>,
}

/// Reads the boxes and classes of a `components.json`, ignoring other fields.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<(Rect, Class)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PredictedBoxes = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(file.components.into_iter().map(|c| (c.bbox, c.class)).collect())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Runs the pipeline on one file and writes its artifacts into `out`.
///
/// Everything except `timings.json` is a pure function of the input and config.
pub fn separate_file(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let image = load_image(input)?;
    let result = run_pipeline(&image, cfg).map_err(|e| Error::Estimation(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stem = stem_of(input);
    let name = input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let record = ComponentsFile::from_output(name, &result);
    write_json(&record, &out.join("components.json"))?;
    write_json(&result.timings, &out.join("timings.json"))?;
    save_overlay(&image, &record.predictions(), out.join("overlay.ppm"))?;
    save_pgm(&result.grid.to_debug_image(), out.join("blocks.pgm"))?;
    for r in &result.regions {
        save_pgm(&r.deskewed, out.join(format!("{stem}_cc{}_deskewed.pgm", r.component_id)))?;
        save_pgm(&r.binary.to_gray(), out.join(format!("{stem}_cc{}_binary.pgm", r.component_id)))?;
    }
    Ok(result)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase());
        if path.is_file() && matches!(ext.as_deref(), Some("pgm") | Some("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Separates every image in `dir`, returning the failures by file.
pub fn batch_dir(
    dir: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    workers: Option<usize>,
) -> Result<Vec<(PathBuf, Error)>> {
    let files = list_images(dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let failures = pool.install(|| {
        files
            .par_iter()
            .filter_map(|f| {
                separate_file(f, &out.join(stem_of(f)), cfg)
                    .err()
                    .map(|e| (f.clone(), e))
            })
            .collect::<Vec<_>>()
    });
    Ok(failures)
}

/// Per-image rows, the corpus total, and the files that could not be scored.
pub type EvalOutcome = (Vec<ReportRow>, ConfusionTally, Vec<(PathBuf, Error)>);

/// Per-image tallies for every `<stem>.truth.json` in `truth_dir`.
pub fn eval_dirs(
    pred_dir: &Path,
    truth_dir: &Path,
    iou: f64,
) -> Result<EvalOutcome> {
    let mut truths = Vec::new();
    for entry in fs::read_dir(truth_dir).map_err(|e| Error::io(truth_dir, e))? {
        let path = entry.map_err(|e| Error::io(truth_dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        if let Some(stem) = name.as_deref().and_then(|n| n.strip_suffix(".truth.json")) {
            truths.push((stem.to_string(), path));
        }
    }
    truths.sort();
    let mut rows = Vec::new();
    let mut total = ConfusionTally::default();
    let mut failures = Vec::new();
    for (stem, truth_path) in truths {
        let pred_path = pred_dir.join(&stem).join("components.json");
        let scored = GroundTruth::load(&truth_path).and_then(|truth| {
            match_regions(&load_predictions(&pred_path)?, &truth, iou)
        });
        match scored {
            Ok(t) => {
                rows.push(ReportRow::new(stem, &t));
                total += t;
            }
            Err(e) => failures.push((truth_path, e)),
        }
    }
    Ok((rows, total, failures))
}

/// Image size used for a benchmark resolution given in megapixels.
pub fn bench_size(megapixels: f64) -> Result<(u32, u32)> {
    if let Some(&(_, w, h)) = BENCH_SIZES.iter().find(|(mp, _, _)| (mp - megapixels).abs() < 1e-9) {
        return Ok((w, h));
    }
    if !(megapixels > 0.0 && megapixels <= 100.0) {
        return Err(Error::Config(format!("resolution must lie in (0, 100] MP, got {megapixels}")));
    }
    let w = (megapixels * 1e6 * 4.0 / 3.0).sqrt().round() as u32;
    Ok((w, (w * 3 / 4).max(1)))
}

/// Median timings at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub resolution_mp: f64,
    pub width: u32,
    pub height: u32,
    pub megapixels: f64,
    pub background_ms: f64,
    pub regions_ms: f64,
    pub classify_ms: f64,
    pub skew_ms: f64,
    pub binarize_ms: f64,
    pub total_ms: f64,
    /// Median fraction of total time spent in the skew stage.
    pub skew_share: f64,
    pub peak_bytes: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times the pipeline on `cards` synthetic cards, `runs` times each,
/// sequentially.
///
/// Cards are rendered once at the largest requested resolution and resampled
/// down to the others, so every resolution sees the same components.
pub fn run_bench(resolutions: &[f64], runs: usize, cards: u64, cfg: &PipelineConfig) -> Result<Vec<BenchRow>> {
    if runs == 0 || cards == 0 || resolutions.is_empty() {
        return Err(Error::Config("bench needs at least one resolution, run and card".into()));
    }
    let sizes = resolutions
        .iter()
        .map(|&mp| bench_size(mp))
        .collect::<Result<Vec<_>>>()?;
    let (master_w, master_h) = sizes
        .iter()
        .copied()
        .max_by_key(|&(w, h)| w as u64 * h as u64)
        .unwrap_or((1024, 768));
    let masters = (1..=cards)
        .map(|seed| generate_card(&corpus_spec(seed, master_w, master_h)).map(|(img, _)| img))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(resolutions.len());
    for (&mp, &(w, h)) in resolutions.iter().zip(&sizes) {
        let images = masters
            .iter()
            .map(|img| img.resize_nearest(w, h))
            .collect::<Result<Vec<_>>>()?;
        // one untimed pass to settle caches and allocations
        for img in &images {
            run_pipeline(img, cfg).map_err(|e| Error::Estimation(e.to_string()))?;
        }
        let mut samples: Vec<StageTimings> = Vec::with_capacity(runs * images.len());
        for _ in 0..runs {
            for img in &images {
                let out = run_pipeline(img, cfg).map_err(|e| Error::Estimation(e.to_string()))?;
                samples.push(out.timings);
            }
        }
        let field = |f: fn(&StageTimings) -> f64| median(samples.iter().map(f).collect());
        rows.push(BenchRow {
            resolution_mp: mp,
            width: w,
            height: h,
            megapixels: (w as f64 * h as f64) / 1e6,
            background_ms: field(|t| t.background_ms),
            regions_ms: field(|t| t.regions_ms),
            classify_ms: field(|t| t.classify_ms),
            skew_ms: field(|t| t.skew_ms),
            binarize_ms: field(|t| t.binarize_ms),
            total_ms: field(|t| t.total_ms),
            skew_share: field(|t| if t.total_ms > 0.0 { t.skew_ms / t.total_ms } else { 0.0 }),
            peak_bytes: field(|t| t.peak_bytes.unwrap_or(0) as f64).round() as u64,
        });
    }
    Ok(rows)
}

pub fn write_bench_report<W: std::io::Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn report_failures(failures: &[(PathBuf, Error)]) -> i32 {
    for (path, e) in failures {
        eprintln!("failed: {}: {e}", path.display());
    }
    if failures.is_empty() {
        0
    } else {
        eprintln!("{} file(s) failed", failures.len());
        1
    }
}

enum Failure {
    Usage(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e),
            other => Failure::Run(other),
        }
    }
}

fn execute(command: Command) -> std::result::Result<i32, Failure> {
    match command {
        Command::Separate { input, out, config } => {
            let (cfg, _) = resolve(config)?;
            separate_file(&input, &out, &cfg).map_err(Failure::Run)?;
            Ok(0)
        }
        Command::Batch { input, out, config } => {
            let (cfg, merged) = resolve(config)?;
            let failures = batch_dir(&input, &out, &cfg, merged.workers).map_err(Failure::Run)?;
            Ok(report_failures(&failures))
        }
        Command::Eval {
            pred_dir,
            truth_dir,
            out,
            config,
        } => {
            let (cfg, _) = resolve(config)?;
            let (mut rows, total, failures) = eval_dirs(&pred_dir, &truth_dir, cfg.iou_threshold)?;
            rows.push(ReportRow::new("total", &total));
            match &out {
                Some(path) => {
                    let file = fs::File::create(path).map_err(|e| Failure::Run(Error::io(path, e)))?;
                    write_report(std::io::BufWriter::new(file), &rows)?;
                }
                None => write_report(std::io::stdout().lock(), &rows)?,
            }
            let code = report_failures(&failures);
            match total.accuracy() {
                Ok(a) => {
                    println!("accuracy {a:.6}");
                    Ok(code)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(1)
                }
            }
        }
        Command::Synth {
            count,
            seed_base,
            out,
            width,
            height,
        } => {
            let specs: Vec<_> = (seed_base..seed_base + count)
                .map(|s| corpus_spec(s, width, height))
                .collect();
            for spec in &specs {
                spec.validate()?;
            }
            let stems = write_corpus(&out, &specs).map_err(Failure::Run)?;
            println!("wrote {} cards to {}", stems.len(), out.display());
            Ok(0)
        }
        Command::Bench {
            resolutions,
            runs,
            cards,
            out,
            config,
        } => {
            let (cfg, _) = resolve(config)?;
            let rows = run_bench(&resolutions, runs, cards, &cfg)?;
            let file = fs::File::create(&out).map_err(|e| Failure::Run(Error::io(&out, e)))?;
            write_bench_report(std::io::BufWriter::new(file), &rows)?;
            for r in &rows {
                println!(
                    "{:>5} MP {:>4}x{:<4} total {:>8.2} ms  skew {:>5.1}%",
                    r.resolution_mp,
                    r.width,
                    r.height,
                    r.total_ms,
                    r.skew_share * 100.0
                );
            }
            Ok(0)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
