//! The `lumen` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure. Diagnostics go to standard error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_luminance_hdr, write_atomic, write_luminance_hdr, DiskDataset, SampleSource};
use crate::error::{Error, Result};
use crate::evalsuite::{dgp, evaluation_report, joint_distribution, rammg, DEFAULT_YAWS};
use crate::hdrio::falsecolor;
use crate::mlpnet::{load_model, save_model, train, TrainConfig};
use crate::oracle::{generate_dataset, SceneSpec};
use crate::sampler::{build_schedule, split_test, Schedule, ScheduleParams};
use crate::skyctx::{annual_sky_states, hourly_sky_states, parse_epw, synthetic_weather, write_epw, Site, Timestamp};
use crate::spherical::{panorama_to_fisheye, vertical_illuminance};

#[derive(Debug, Parser)]
#[command(name = "lumen", version, about = "Annual interior luminance prediction from sparse HDR samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Seattle-like EPW weather file.
    GenEpw(GenEpwArgs),
    /// Render an oracle dataset (interior, sky, sun-patch HDRs plus index.csv).
    GenData(GenDataArgs),
    /// Choose training states and write a schedule.
    Select(SelectArgs),
    /// Train a model on a dataset and schedule.
    Train(TrainArgs),
    /// Predict interior panoramas for dataset states.
    Predict(PredictArgs),
    /// Score a model on held-out dataset states.
    Evaluate(EvaluateArgs),
    /// Extract an equidistant fisheye view from a panorama.
    Fisheye(FisheyeArgs),
    /// Daylight glare probability for a sweep of view directions.
    Dgp(DgpArgs),
    /// Multiscale contrast of a panorama.
    Rammg(RammgArgs),
    /// Log-scale false-color rendering of a panorama.
    Falsecolor(FalsecolorArgs),
    /// Joint (direct, diffuse) irradiance histogram of a dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct GenEpwArgs {
    /// Output EPW path.
    #[arg(long)]
    out: PathBuf,
    /// Calendar year written into the records.
    #[arg(long, default_value_t = 2001)]
    year: i32,
    /// Weather generator seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Hours {
    /// Only hours with the sun above the horizon.
    Daylight,
    /// All 8760 hours; night maps are black.
    All,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Run configuration (scene, dataset and io sections are used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene description JSON; defaults to the standard box room.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// EPW weather file.
    #[arg(long)]
    epw: Option<PathBuf>,
    /// Panorama resolution, e.g. 92x46.
    #[arg(long)]
    res: Option<String>,
    /// Which hourly states to render.
    #[arg(long, value_enum)]
    hours: Option<Hours>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Kmeans,
    Month,
    Days,
    Set3a,
    Set3b,
    Set3c,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Run configuration (schedule and io sections are used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Selection scheme; `days` is the twelve-day schedule.
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Cluster count for `kmeans`.
    #[arg(long)]
    k: Option<usize>,
    /// Month (1-12) for `month`.
    #[arg(long)]
    month: Option<u32>,
    /// Seed for clustering and the validation split.
    #[arg(long)]
    seed: Option<u64>,
    /// Output schedule JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Schedule JSON from `select`.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Training configuration: a run configuration or a bare train section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model file (`.model.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch history CSV; defaults to the model path with `.history.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Run single-threaded. Results are reproducible for a fixed seed either way.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset providing sky maps and sun patches.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated timestamps (YYYYMMDD_HHMM).
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    timestamps: Option<String>,
    /// Predict every dataset state.
    #[arg(long)]
    all: bool,
    /// Output directory for `<timestamp>_pred.hdr` files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Run configuration (eval and io sections are used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset with ground-truth interiors.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Schedule whose states are excluded from the test draw.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Number of test states.
    #[arg(long)]
    n_test: Option<usize>,
    /// Test draw seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Aggregate report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Prefix for `<prefix>_dgp.csv` and `<prefix>_rammg.csv`.
    #[arg(long)]
    scatter: Option<String>,
}

#[derive(Debug, Args)]
struct FisheyeArgs {
    /// Input panorama.
    #[arg(long = "in")]
    input: PathBuf,
    /// View yaw in degrees, clockwise from forward.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw: f64,
    /// Output image side in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Output HDR path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DgpArgs {
    /// Input panorama.
    #[arg(long = "in")]
    input: PathBuf,
    /// Yaw sweep `start:stop:step` in degrees (stop exclusive) or a single yaw.
    #[arg(long, default_value = "0:360:36")]
    yaws: String,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RammgArgs {
    /// Input panorama.
    #[arg(long = "in")]
    input: PathBuf,
    /// Pyramid levels.
    #[arg(long, default_value_t = 5)]
    levels: usize,
}

#[derive(Debug, Args)]
struct FalsecolorArgs {
    /// Input panorama.
    #[arg(long = "in")]
    input: PathBuf,
    /// Luminance mapped to the bottom of the scale (cd/m²).
    #[arg(long, default_value_t = 1.0)]
    min: f64,
    /// Luminance mapped to the top of the scale (cd/m²).
    #[arg(long, default_value_t = 10_000.0)]
    max: f64,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Bins per axis.
    #[arg(long, default_value_t = 4)]
    bins: usize,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DatasetSection {
    width: Option<usize>,
    height: Option<usize>,
    hours: Option<Hours>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScheduleSection {
    scheme: Option<Scheme>,
    k: Option<usize>,
    month: Option<u32>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSection {
    n_test: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IoSection {
    epw: Option<PathBuf>,
    dataset: Option<PathBuf>,
    schedule: Option<PathBuf>,
    model: Option<PathBuf>,
    report: Option<PathBuf>,
    scatter: Option<String>,
}

/// Whole-workflow configuration. Every field is optional; paths are relative
/// to the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    scene: Option<SceneSpec>,
    dataset: DatasetSection,
    schedule: ScheduleSection,
    train: Option<TrainConfig>,
    eval: EvalSection,
    io: IoSection,
}

impl RunConfig {
    /// Parses a configuration and resolves its paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::format(format!("run config: {e}")))?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut cfg.io.epw);
        fix(&mut cfg.io.dataset);
        fix(&mut cfg.io.schedule);
        fix(&mut cfg.io.model);
        fix(&mut cfg.io.report);
        if let Some(s) = &cfg.io.scatter {
            if Path::new(s).is_relative() {
                cfg.io.scatter = Some(base.join(s).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    path.map(|p| RunConfig::load(p)).transpose().map(Option::unwrap_or_default)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(format!("missing --{flag} (or its configuration entry)")))
}

/// Parses `WxH`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::invalid(format!("resolution must look like 92x46, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w < 2 || h < 2 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Parses `start:stop:step` (stop exclusive) or a single yaw.
pub fn parse_yaws(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("yaws must look like 0:360:36, got {s:?}"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [y] if y.is_finite() => Ok(vec![*y]),
        [start, stop, step] if *step > 0.0 && stop > start && step.is_finite() => {
            let n = ((stop - start) / step).ceil() as usize;
            Ok((0..n).map(|i| start + i as f64 * step).filter(|y| y < stop).collect())
        }
        _ => Err(bad()),
    }
}

fn gen_epw(a: GenEpwArgs) -> Result<()> {
    let site = Site::seattle();
    let records = synthetic_weather(&site, a.year, a.seed);
    write_atomic(&a.out, write_epw(&site, "Seattle", &records).as_bytes())?;
    eprintln!("wrote {} hourly records to {}", records.len(), a.out.display());
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let scene = match a.scene {
        Some(p) => serde_json::from_str(&read_text(&p)?).map_err(|e| Error::format(format!("{}: {e}", p.display())))?,
        None => cfg.scene.unwrap_or_default(),
    };
    let epw_path = required(a.epw.or(cfg.io.epw), "epw")?;
    let out = required(a.out.or(cfg.io.dataset), "out")?;
    let (w, h) = match a.res {
        Some(r) => parse_resolution(&r)?,
        None => (cfg.dataset.width.unwrap_or(92), cfg.dataset.height.unwrap_or(46)),
    };
    let epw = parse_epw(&read_text(&epw_path)?)?;
    if epw.missing_values > 0 {
        eprintln!("{}: {} missing irradiance values read as 0", epw_path.display(), epw.missing_values);
    }
    let states = match a.hours.or(cfg.dataset.hours).unwrap_or(Hours::Daylight) {
        Hours::Daylight => annual_sky_states(&epw.site, &epw.records)?,
        Hours::All => hourly_sky_states(&epw.site, &epw.records),
    };
    generate_dataset(&scene, &states, w, h, &out)?;
    eprintln!("rendered {} states at {w}x{h} into {}", states.len(), out.display());
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let dataset = DiskDataset::open(required(a.dataset.or(cfg.io.dataset), "dataset")?)?;
    let out = required(a.out.or(cfg.io.schedule), "out")?;
    let scheme = required(a.scheme.or(cfg.schedule.scheme), "scheme")?;
    let seed = a.seed.or(cfg.schedule.seed).unwrap_or(0);
    let params = match scheme {
        Scheme::Kmeans => ScheduleParams::Kmeans {
            k: required(a.k.or(cfg.schedule.k), "k")?,
        },
        Scheme::Month => ScheduleParams::Month {
            month: required(a.month.or(cfg.schedule.month), "month")?,
        },
        Scheme::Days | Scheme::Set3a => ScheduleParams::set3a(),
        Scheme::Set3b => ScheduleParams::set3b(),
        Scheme::Set3c => ScheduleParams::set3c(),
    };
    let schedule = build_schedule(dataset.states(), params, seed)?;
    write_atomic(&out, schedule.to_json()?.as_bytes())?;
    eprintln!(
        "selected {} states ({} train, {} validation)",
        schedule.train.len() + schedule.validation.len(),
        schedule.train.len(),
        schedule.validation.len()
    );
    Ok(())
}

fn load_train_config(path: &Path) -> Result<(TrainConfig, RunConfig)> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    match RunConfig::parse(&text, base) {
        Ok(run) => Ok((run.train.clone().unwrap_or_default(), run)),
        Err(run_err) => match serde_json::from_str::<TrainConfig>(&text) {
            Ok(t) => Ok((t, RunConfig::default())),
            Err(_) => Err(run_err),
        },
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (config, run) = match &a.config {
        Some(p) => load_train_config(p)?,
        None => (TrainConfig::default(), RunConfig::default()),
    };
    let dataset = DiskDataset::open(required(a.dataset.or(run.io.dataset), "dataset")?)?;
    let schedule_path = required(a.schedule.or(run.io.schedule), "schedule")?;
    let schedule = Schedule::from_json(&read_text(&schedule_path)?)?;
    let out = required(a.out.or(run.io.model), "out")?;
    let work = || train(&dataset, &schedule, &config);
    let (model, history) = if a.deterministic {
        single_threaded(work)?
    } else {
        work()?
    };
    write_atomic(&out, &save_model(&model)?)?;
    let history_path = a.history.unwrap_or_else(|| history_path_for(&out));
    write_atomic(&history_path, history.to_csv().as_bytes())?;
    eprintln!(
        "trained {} epochs, best validation loss {:.6e}; wrote {}",
        history.epochs.len(),
        model.metadata.best_val_loss.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn history_path_for(model: &Path) -> PathBuf {
    let name = model.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".model.json").or_else(|| name.strip_suffix(".json")).unwrap_or(&name);
    model.with_file_name(format!("{stem}.history.csv"))
}

#[cfg(feature = "parallel")]
fn single_threaded<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn single_threaded<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    f()
}

fn read_model(path: &Path) -> Result<crate::mlpnet::Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(&bytes)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let dataset = DiskDataset::open(&a.dataset)?;
    let indices: Vec<usize> = if a.all {
        (0..dataset.len()).collect()
    } else {
        let list = a.timestamps.unwrap_or_default();
        list.split(',')
            .map(|t| {
                let ts = Timestamp::parse_tag(t.trim())?;
                dataset
                    .find(&ts)
                    .ok_or_else(|| Error::data(format!("timestamp {t} is not in the dataset")))
            })
            .collect::<Result<_>>()?
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let predictor = model.predictor();
    for &i in &indices {
        let s = dataset.sample(i)?;
        let pred = model.predict_with(&predictor, &s.state, &s.sky, &s.sunpatch)?;
        let path = a.out.join(format!("{}_pred.hdr", s.state.timestamp.tag()));
        write_luminance_hdr(&path, &pred)?;
    }
    eprintln!("wrote {} predictions to {}", indices.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let model = read_model(&required(a.model.or(cfg.io.model), "model")?)?;
    let dataset = DiskDataset::open(required(a.dataset.or(cfg.io.dataset), "dataset")?)?;
    let report_path = required(a.report.or(cfg.io.report), "report")?;
    let n_test = a.n_test.or(cfg.eval.n_test).unwrap_or(500);
    let seed = a.seed.or(cfg.eval.seed).unwrap_or(0);
    let schedule = match a.schedule.or(cfg.io.schedule) {
        Some(p) => Schedule::from_json(&read_text(&p)?)?,
        None => Schedule {
            params: ScheduleParams::Explicit { indices: vec![] },
            seed: 0,
            train: vec![],
            validation: vec![],
        },
    };
    let daylight: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.states()[i].is_daylight()).collect();
    let picks = split_test(daylight.len(), &remap(&schedule, &daylight), n_test, seed)?;
    let test: Vec<usize> = picks.into_iter().map(|j| daylight[j]).collect();
    let report = evaluation_report(&model, &dataset, &test, &DEFAULT_YAWS)?;
    write_atomic(&report_path, report.to_json()?.as_bytes())?;
    if let Some(prefix) = a.scatter.or(cfg.io.scatter) {
        write_atomic(Path::new(&format!("{prefix}_dgp.csv")), report.dgp_csv().as_bytes())?;
        write_atomic(Path::new(&format!("{prefix}_rammg.csv")), report.rammg_csv().as_bytes())?;
    }
    let g = &report.aggregates;
    eprintln!(
        "{} samples: log10 MSE {:.4e}, log10 RER {:.4e}, DGP MSE {:.3e} (r² {:.4}), RAMMG MSE {:.3e} (r² {:.4})",
        g.n_samples, g.mean_log10_mse, g.mean_log10_rer, g.dgp_mse, g.dgp_r2, g.rammg_mse, g.rammg_r2
    );
    Ok(())
}

/// Re-expresses a schedule's dataset indices as positions in `subset`.
fn remap(schedule: &Schedule, subset: &[usize]) -> Schedule {
    let pos = |v: &[usize]| -> Vec<usize> { v.iter().filter_map(|i| subset.binary_search(i).ok()).collect() };
    Schedule {
        params: schedule.params.clone(),
        seed: schedule.seed,
        train: pos(&schedule.train),
        validation: pos(&schedule.validation),
    }
}

fn fisheye(a: FisheyeArgs) -> Result<()> {
    let pan = read_luminance_hdr(&a.input)?;
    let fish = panorama_to_fisheye(&pan, a.yaw, a.size)?;
    write_luminance_hdr(&a.out, &fish.to_luminance_map())
}

fn dgp_cmd(a: DgpArgs) -> Result<()> {
    let pan = read_luminance_hdr(&a.input)?;
    let mut csv = String::from("yaw,ev,dgp\n");
    for yaw in parse_yaws(&a.yaws)? {
        csv.push_str(&format!("{yaw},{},{}\n", vertical_illuminance(&pan, yaw), dgp(&pan, yaw)));
    }
    emit(a.out.as_deref(), &csv)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rammg_cmd(a: RammgArgs) -> Result<()> {
    let pan = read_luminance_hdr(&a.input)?;
    println!("{:?}", rammg(&pan, a.levels)?);
    Ok(())
}

fn falsecolor_cmd(a: FalsecolorArgs) -> Result<()> {
    let pan = read_luminance_hdr(&a.input)?;
    let img = falsecolor(&pan, a.min, a.max)?;
    write_atomic(&a.out, &img.to_ppm())
}

fn stats(a: StatsArgs) -> Result<()> {
    let dataset = DiskDataset::open(&a.dataset)?;
    let daylight: Vec<_> = dataset.states().iter().filter(|s| s.is_daylight()).copied().collect();
    let dist = joint_distribution(&daylight, a.bins)?;
    emit(a.out.as_deref(), &dist.to_csv())
}

/// Exit-code class of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenEpw(a) => gen_epw(a),
        Command::GenData(a) => gen_data(a),
        Command::Select(a) => select(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Fisheye(a) => fisheye(a),
        Command::Dgp(a) => dgp_cmd(a),
        Command::Rammg(a) => rammg_cmd(a),
        Command::Falsecolor(a) => falsecolor_cmd(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lumen: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_and_yaw_parsing() {
        assert_eq!(parse_resolution("92x46").unwrap(), (92, 46));
        assert!(parse_resolution("92").is_err());
        assert!(parse_resolution("1x1").is_err());
        let y = parse_yaws("0:360:36").unwrap();
        assert_eq!(y.len(), 10);
        assert_eq!(y[9], 324.0);
        assert_eq!(parse_yaws("45").unwrap(), vec![45.0]);
        assert!(parse_yaws("0:360:0").is_err());
        assert!(parse_yaws("a:b:c").is_err());
    }

    #[test]
    fn run_config_rejects_unknown_keys_and_resolves_paths() {
        let cfg = RunConfig::parse(r#"{"io": {"dataset": "data", "model": "/abs/m.model.json"}}"#, Path::new("/work")).unwrap();
        assert_eq!(cfg.io.dataset, Some(PathBuf::from("/work/data")));
        assert_eq!(cfg.io.model, Some(PathBuf::from("/abs/m.model.json")));
        assert!(RunConfig::parse(r#"{"iox": {}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"eval": {"n_tests": 3}}"#, Path::new(".")).is_err());
    }

    #[test]
    fn history_path_naming() {
        assert_eq!(history_path_for(Path::new("/a/m.model.json")), PathBuf::from("/a/m.history.csv"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["lumen", "nonsense"]), 1);
        assert_eq!(run(["lumen", "rammg", "--help"]), 0);
        assert_eq!(run(["lumen", "rammg", "--in", "/nonexistent/x.hdr"]), 2);
    }
}
