//! Command-line front end. Exit codes: 0 success, 2 usage or configuration
//! error, 3 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::detection::TokenMode;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, read_jsonl, write_jsonl, DetectionRecord, EvalConfig, EvalResult, GtRecord, Scenario,
    Setting,
};
use crate::harness::data::{load_gt, load_manifest, DataConfig, Dataset};
use crate::harness::probe::{colocated_probe, probe_similarity, Metric};
use crate::harness::report::{class_file_name, save_overlay, save_pr_curve, OverlayOptions};
use crate::harness::{generate_dataset, infer, train, Checkpoint, HoiModel, RunConfig, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lghoi",
    version,
    about = "Language-guided human-object interaction detection on synthetic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a config file; writes metrics.jsonl and checkpoint.json.
    Train(TrainArgs),
    /// Score detections against annotations, from files or a checkpoint.
    Eval(EvalArgs),
    /// Token similarity probe.
    Probe(ProbeArgs),
    /// Render detection overlays as PNG files.
    Report(ReportArgs),
    /// Write a synthetic dataset directory.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; generated from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = "LGHOI_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, requires = "gt", conflicts_with = "checkpoint")]
    dets: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Manifest with per-class training counts (enables rare / non-rare).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "s2")]
    scenario: String,
    #[arg(long, default_value = "default")]
    setting: String,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Also write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-class precision-recall PNGs.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Write the checkpoint's detections as JSONL.
    #[arg(long)]
    write_dets: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, default_value = "cosine")]
    metric: String,
    /// `position-only` or `mixed` tokens for the built-in co-located scene.
    #[arg(long, default_value = "position-only")]
    mode: String,
    /// Probe one image of a dataset instead of the built-in scene.
    #[arg(long, requires = "image")]
    data: Option<PathBuf>,
    #[arg(long)]
    image: Option<u64>,
    #[arg(long, env = "LGHOI_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    images: usize,
    #[arg(long, default_value_t = 0.3)]
    min_score: f64,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, env = "LGHOI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    images: usize,
    #[arg(long, default_value_t = 3)]
    verbs: usize,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    #[arg(long, default_value_t = 8)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// Prints one line to stdout; a closed pipe (`| head`) is not an error.
fn emit(value: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{value}");
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Report(a) => cmd_report(a),
        Command::GenData(a) => cmd_gen_data(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_or_generate(cfg: &RunConfig, dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        Some(d) => Dataset::load(d),
        None => generate_dataset(cfg.seed, &cfg.data),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.steps {
        cfg.optim.steps = Some(n);
    }
    if let Some(v) = &a.variant {
        cfg.variant = Some(v.parse::<Variant>()?);
    }
    cfg.validate()?;
    let data = load_or_generate(&cfg, a.data.as_deref())?;
    let out = train(&cfg, &data, Some(&a.out))?;
    let last = out.metrics.last();
    emit(serde_json::json!({
        "steps": out.checkpoint.steps,
        "final_total": last.map(|m| m.total),
        "checkpoint": a.out.join("checkpoint.json"),
        "metrics": a.out.join("metrics.jsonl"),
    }));
    Ok(())
}

fn eval_config(a: &EvalArgs) -> Result<EvalConfig> {
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        scenario: a.scenario.parse::<Scenario>()?,
        setting: a.setting.parse::<Setting>()?,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = eval_config(&a)?;
    let (dets, gts, table) = match (&a.dets, &a.checkpoint) {
        (Some(d), None) => {
            let dets: Vec<DetectionRecord> =
                read_jsonl(std::io::BufReader::new(std::fs::File::open(d)?))?;
            let gt_path =
                a.gt.as_ref()
                    .ok_or_else(|| Error::Config("--dets needs --gt".into()))?;
            let gts = load_gt(gt_path)?;
            let table = match &a.manifest {
                Some(m) => Some(
                    serde_json::from_str::<crate::harness::data::Manifest>(
                        &std::fs::read_to_string(m)?,
                    )
                    .map_err(|e| Error::Config(format!("bad manifest: {e}")))?
                    .classes,
                ),
                None => None,
            };
            (dets, gts, table)
        }
        (None, Some(ck)) => {
            let dir = a
                .data
                .as_ref()
                .ok_or_else(|| Error::Config("--checkpoint needs --data".into()))?;
            let ck = Checkpoint::load(ck)?;
            let (model, _) = HoiModel::new(&ck.config)?;
            let data = Dataset::load(dir)?;
            let dets = infer(&model, &ck.params, &data)?;
            if let Some(p) = &a.write_dets {
                let mut buf = Vec::new();
                write_jsonl(&mut buf, &dets)?;
                std::fs::write(p, buf)?;
            }
            let gts: Vec<GtRecord> = data.gt_records();
            let table = load_manifest(dir)
                .map(|m| m.classes)
                .unwrap_or_else(|_| data.manifest().classes);
            (dets, gts, Some(table))
        }
        _ => {
            return Err(Error::Config(
                "eval needs either --dets/--gt or --checkpoint/--data".into(),
            ))
        }
    };
    let result = evaluate(&dets, &gts, table.as_ref(), &cfg)?;
    emit_eval(&result, &a)
}

fn emit_eval(result: &EvalResult, a: &EvalArgs) -> Result<()> {
    let text = serde_json::to_string_pretty(result)?;
    emit(&text);
    if let Some(p) = &a.out {
        std::fs::write(p, &text)?;
    }
    if let Some(dir) = &a.plots {
        std::fs::create_dir_all(dir)?;
        for c in &result.per_class {
            save_pr_curve(c, &dir.join(class_file_name(c)))?;
        }
    }
    Ok(())
}

fn cmd_probe(a: ProbeArgs) -> Result<()> {
    let metric: Metric = a.metric.parse()?;
    let report = match (&a.data, a.image) {
        (Some(dir), Some(id)) => {
            let data = Dataset::load(dir)?;
            let scene = data
                .scenes
                .iter()
                .find(|s| s.image_id == id)
                .ok_or_else(|| Error::Config(format!("image {id} not in dataset")))?;
            let mut cfg = RunConfig {
                seed: a.seed,
                data: data.config.clone(),
                ..Default::default()
            };
            cfg.detector.channels = data.config.channels;
            cfg.detector.num_classes = data.config.num_objects + 1;
            cfg.detector.token_mode = token_mode(&a.mode)?;
            let (model, _) = HoiModel::new(&cfg)?;
            let prep = model.prepare(scene)?;
            let d = &prep.detections;
            probe_similarity(&d.tokens, &d.boxes, &d.class_labels, metric)?
        }
        _ => colocated_probe(token_mode(&a.mode)?, metric, a.seed)?,
    };
    emit(serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn token_mode(s: &str) -> Result<TokenMode> {
    match s {
        "position-only" => Ok(TokenMode::PositionOnly),
        "mixed" => Ok(TokenMode::Mixed { patch_weight: 0.25 }),
        _ => Err(Error::Config(format!("unknown token mode {s:?}"))),
    }
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (model, _) = HoiModel::new(&ck.config)?;
    let data = Dataset::load(&a.data)?;
    std::fs::create_dir_all(&a.out)?;
    let opts = OverlayOptions {
        min_score: a.min_score,
        ..Default::default()
    };
    let mut written = Vec::new();
    for scene in data.scenes.iter().take(a.images) {
        let prep = model.prepare(scene)?;
        let dets = model.detection_records(&ck.params, &prep)?;
        let path = a.out.join(format!("image_{:04}.png", scene.image_id));
        save_overlay(scene, &dets, &opts, &path)?;
        written.push(path);
    }
    emit(serde_json::json!({ "written": written }));
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = DataConfig {
        num_images: a.images,
        num_verbs: a.verbs,
        num_objects: a.objects,
        grid: a.grid,
        ..Default::default()
    };
    let data = generate_dataset(a.seed, &cfg)?;
    data.save(&a.out)?;
    emit(serde_json::json!({ "scenes": data.scenes.len(), "out": a.out }));
    Ok(())
}
