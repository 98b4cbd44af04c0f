//! Command-line front end: synth | train | predict | eval | ablate.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 runtime/divergence.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{load_with_overrides, DataFormat, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{
    parse_apolloscape, parse_generic_csv, read_clips, segment_clips, split_train_val, synth_scenes,
    write_clips, AgentType, MotionFamily, ParseOutcome, ReferencePolicy, SceneClip, SegmentConfig,
};
use crate::model::{ModelParams, PredictionResult};
use crate::train::{
    compute_metrics, dclose_sweep_entries, location_error_profile, prepare_sample, prepare_samples,
    run_ablation, train, AblationEntry, MetricsReport, ScenePrediction,
};

#[derive(Parser, Debug)]
#[command(
    name = "trajcast",
    version,
    about = "multi-agent trajectory prediction"
)]
pub struct Cli {
    /// Run configuration TOML.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set training.epochs=5 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", action = ArgAction::Append)]
    pub overrides: Vec<String>,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: <out root>/<command>).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic scene clips.
    Synth(SynthArgs),
    /// Train a model; writes checkpoint, config echo and training log.
    Train(TrainArgs),
    /// Predict futures for a clip file using a checkpoint.
    Predict(PredictArgs),
    /// Score a predictions file against ground-truth clips.
    Eval(EvalArgs),
    /// Run a configuration grid, threshold sweep and location profile.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Agents per scene (sets both ends of the range).
    #[arg(long)]
    pub agents: Option<usize>,
    /// Motion family (repeatable): cv | ca | turn | lane | coupled.
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Turn radius (pins the radius range).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Position noise sigma.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long = "t-history")]
    pub t_history: Option<usize>,
    #[arg(long = "t-future")]
    pub t_future: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Input format: synth | apolloscape | csv | clips.
    #[arg(long)]
    pub format: Option<String>,
    /// Input path for file formats (file, or directory of sequences).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "t-history")]
    pub t_history: Option<usize>,
    #[arg(long = "t-future")]
    pub t_future: Option<usize>,
    /// Keep every n-th frame before segmentation.
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Scene window half-width in scene units.
    #[arg(long = "window-feet")]
    pub window_feet: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub clips: PathBuf,
    /// Warm runs per timing row (median is reported).
    #[arg(long, default_value_t = 20)]
    pub timing_runs: usize,
    /// Skip the batch-timing report.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long = "ground-truth")]
    pub ground_truth: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// TOML grid file with [[entries]] of model/training overrides.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Comma-separated spatial thresholds to sweep, e.g. "0,25,50".
    #[arg(long = "dclose-sweep", value_name = "LIST")]
    pub dclose_sweep: Option<String>,
    /// Also emit the per-location error profile of the base config.
    #[arg(long)]
    pub locations: bool,
}

/// Entry point for the binary.
pub fn run_from_env() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    run_from(&args)
}

/// Parse `args` (including argv[0]) and run; returns the process exit code.
pub fn run_from<S: AsRef<str>>(args: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(args.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success intent.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Parameter(_) => 1,
        Error::Data(_) | Error::Parse { .. } | Error::Capacity { .. } => 2,
        Error::Divergence { .. }
        | Error::Io(_)
        | Error::Checkpoint(_)
        | Error::ShapeMismatch { .. } => 3,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = load_with_overrides(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.training.seed = seed;
    }
    let quiet = cli.quiet;
    match &cli.command {
        Command::Synth(args) => cmd_synth(config, args, cli.out.as_deref(), quiet),
        Command::Train(args) => cmd_train(config, args, cli.out.as_deref(), quiet),
        Command::Predict(args) => cmd_predict(config, args, cli.out.as_deref(), quiet),
        Command::Eval(args) => cmd_eval(config, args, cli.out.as_deref(), quiet),
        Command::Ablate(args) => cmd_ablate(config, args, cli.out.as_deref(), quiet),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn echo_config(dir: &Path, config: &RunConfig) -> Result<()> {
    std::fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
    Ok(())
}

fn say(quiet: bool, msg: &str) {
    if !quiet {
        println!("{msg}");
    }
}

// ── synth ────────────────────────────────────────────────────────────────

fn apply_synth_flags(config: &mut RunConfig, args: &SynthArgs) -> Result<()> {
    let synth = &mut config.synth;
    if let Some(s) = args.scenes {
        synth.scenes = s;
    }
    if let Some(a) = args.agents {
        synth.agents_min = a;
        synth.agents_max = a;
    }
    if !args.families.is_empty() {
        synth.families = args
            .families
            .iter()
            .map(|f| f.parse::<MotionFamily>())
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(r) = args.radius {
        synth.turn_radius_min = r;
        synth.turn_radius_max = r;
    }
    if let Some(n) = args.noise {
        synth.noise_sigma = n;
    }
    if let Some(t) = args.t_history {
        synth.t_history = t;
    }
    if let Some(t) = args.t_future {
        synth.t_future = t;
    }
    Ok(())
}

fn cmd_synth(
    mut config: RunConfig,
    args: &SynthArgs,
    out: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    apply_synth_flags(&mut config, args)?;
    let dir = config.resolve_out_dir(out, "synth");
    ensure_dir(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let clips = synth_scenes(&config.synth, &mut rng)?;
    let path = dir.join("clips.jsonl");
    write_clips(&path, &clips)?;
    echo_config(&dir, &config)?;
    say(
        quiet,
        &format!("wrote {} clips to {}", clips.len(), path.display()),
    );
    Ok(())
}

// ── data loading shared by train/ablate ─────────────────────────────────

fn report_parse_outcome(outcome: &ParseOutcome, source: &str, quiet: bool) {
    if !outcome.errors.is_empty() {
        say(
            quiet,
            &format!(
                "{source}: skipped {} malformed line(s), first at line {}",
                outcome.errors.len(),
                outcome.errors[0].line
            ),
        );
    }
}

fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Data(format!(
                "directory {} contains no files",
                path.display()
            )));
        }
        Ok(files)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::Data(format!("no such input: {}", path.display())))
    }
}

/// Load (train, val) clips per the data section of the config.
fn load_split_clips(config: &RunConfig, quiet: bool) -> Result<(Vec<SceneClip>, Vec<SceneClip>)> {
    let data = &config.data;
    let clips =
        match data.format {
            DataFormat::Synth => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                synth_scenes(&config.synth, &mut rng)?
            }
            DataFormat::Clips => {
                let path = data.path.as_ref().ok_or_else(|| {
                    Error::Config("data.path is required for clips format".into())
                })?;
                read_clips(Path::new(path))?
            }
            DataFormat::Apolloscape | DataFormat::Csv => {
                let path = data.path.as_ref().ok_or_else(|| {
                    Error::Config("data.path is required for file formats".into())
                })?;
                let seg = SegmentConfig {
                    t_history: data.effective_t_history(),
                    t_future: data.effective_t_future(),
                    stride: data.stride,
                    window_half_width: data.window,
                    reference: match data.reference_agent {
                        Some(id) => ReferencePolicy::Agent(id),
                        None => ReferencePolicy::Centroid,
                    },
                    frame_rate: data.effective_frame_rate(),
                    unit: data.effective_unit(),
                };
                let mut all = Vec::new();
                let mut next_scene_id = 0u64;
                for (seq, file) in input_files(Path::new(path))?.iter().enumerate() {
                    let reader = std::io::BufReader::new(std::fs::File::open(file)?);
                    let outcome = match data.format {
                        DataFormat::Apolloscape => parse_apolloscape(reader, data.strict)?,
                        _ => parse_generic_csv(reader, data.strict)?,
                    };
                    report_parse_outcome(&outcome, &file.display().to_string(), quiet);
                    let records = crate::ingest::downsample(&outcome.records, data.downsample)?;
                    let clips = segment_clips(&records, &seg, seq as u64, &mut next_scene_id)?;
                    all.extend(clips);
                }
                all
            }
        };
    if clips.is_empty() {
        return Err(Error::Data("no clips produced from the input data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    split_train_val(clips, config.data.val_fraction, &mut rng)
}

// ── train ────────────────────────────────────────────────────────────────

fn apply_train_flags(config: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(fmt) = &args.format {
        config.data.format = match fmt.as_str() {
            "synth" => DataFormat::Synth,
            "apolloscape" => DataFormat::Apolloscape,
            "csv" => DataFormat::Csv,
            "clips" => DataFormat::Clips,
            other => {
                return Err(Error::Config(format!("unknown data format {other:?}")));
            }
        };
    }
    if let Some(p) = &args.data {
        config.data.path = Some(p.display().to_string());
    }
    if let Some(t) = args.t_history {
        config.data.t_history = Some(t);
        config.synth.t_history = t;
    }
    if let Some(t) = args.t_future {
        config.data.t_future = Some(t);
        config.synth.t_future = t;
    }
    if let Some(d) = args.downsample {
        config.data.downsample = d;
    }
    if let Some(w) = args.window_feet {
        config.data.window = w;
        config.synth.window_half_width = w;
    }
    if let Some(e) = args.epochs {
        config.training.epochs = e;
    }
    Ok(())
}

fn write_training_log(path: &Path, history: &[crate::train::EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record([
        "epoch",
        "train_loss",
        "val_loss",
        "val_wsade",
        "wall_seconds",
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            format!("{:.9}", h.train_loss),
            h.val_loss.map_or(String::new(), |v| format!("{v:.9}")),
            h.val_wsade.map_or(String::new(), |v| format!("{v:.9}")),
            format!("{:.3}", h.wall_seconds),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(
    mut config: RunConfig,
    args: &TrainArgs,
    out: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    apply_train_flags(&mut config, args)?;
    let dir = config.resolve_out_dir(out, "train");
    ensure_dir(&dir)?;
    let (train_clips, val_clips) = load_split_clips(&config, quiet)?;
    let all: Vec<SceneClip> = train_clips.iter().chain(&val_clips).cloned().collect();
    config.resolve_capacity(&all)?;
    echo_config(&dir, &config)?;
    write_clips(&dir.join("train_clips.jsonl"), &train_clips)?;
    write_clips(&dir.join("val_clips.jsonl"), &val_clips)?;
    say(
        quiet,
        &format!(
            "training on {} clips (validation {}), capacity {} agents",
            train_clips.len(),
            val_clips.len(),
            config.model.n_max
        ),
    );

    let mut params = ModelParams::init(&config.model, config.seed)?;
    let outcome = train(&mut params, &train_clips, &val_clips, &config.training)?;
    write_training_log(&dir.join("training_log.csv"), &outcome.history)?;
    save_checkpoint(&dir.join("checkpoint.ckpt"), &outcome.best_params)?;

    if let Some(last) = outcome.history.last() {
        say(
            quiet,
            &format!(
                "done: {} epochs, {} steps, final train loss {:.6}{}",
                outcome.history.len(),
                outcome.steps_taken,
                last.train_loss,
                last.val_loss
                    .map_or(String::new(), |v| format!(", val loss {v:.6}")),
            ),
        );
    }
    say(
        quiet,
        &format!("checkpoint: {}", dir.join("checkpoint.ckpt").display()),
    );
    Ok(())
}

// ── predict ──────────────────────────────────────────────────────────────

fn write_predictions_csv(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record([
        "scene_id",
        "agent_id",
        "agent_type",
        "step",
        "pred_x",
        "pred_y",
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.scene_id.to_string(),
            r.agent_id.to_string(),
            r.agent_type.name().to_string(),
            r.step.to_string(),
            format!("{:.9}", r.x),
            format!("{:.9}", r.y),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

struct PredictionRow {
    scene_id: u64,
    agent_id: i64,
    agent_type: AgentType,
    step: usize,
    x: f64,
    y: f64,
}

fn prediction_rows(clip: &SceneClip, pred: &PredictionResult) -> Vec<PredictionRow> {
    let mut rows = Vec::new();
    for (i, agent_pos) in pred.positions.iter().enumerate() {
        for (s, p) in agent_pos.iter().enumerate() {
            rows.push(PredictionRow {
                scene_id: clip.scene_id,
                agent_id: clip.agent_ids[i],
                agent_type: clip.agent_types[i],
                step: s + 1,
                x: p[0],
                y: p[1],
            });
        }
    }
    rows
}

fn write_submission(path: &Path, clips: &[SceneClip], preds: &[PredictionResult]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (clip, pred) in clips.iter().zip(preds) {
        let base = clip.origin_frame + clip.t_history as i64 - 1;
        for (i, agent_pos) in pred.positions.iter().enumerate() {
            for (s, p) in agent_pos.iter().enumerate() {
                writeln!(
                    w,
                    "{} {} {} {:.4} {:.4}",
                    base + s as i64 + 1,
                    clip.agent_ids[i],
                    clip.agent_types[i].code(),
                    p[0],
                    p[1]
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn write_timing(
    path: &Path,
    params: &ModelParams,
    samples: &[crate::train::TrainSample],
    runs: usize,
) -> Result<()> {
    let machine = format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record([
        "batch_size",
        "runs",
        "median_seconds",
        "seconds_per_scene",
        "machine",
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    for batch in [1usize, 128] {
        // One warm-up run, then `runs` timed runs over `batch` scenes each
        // (cycling the loaded clips as needed).
        let run_once = |offset: usize| -> Result<f64> {
            let start = Instant::now();
            for j in 0..batch {
                let sample = &samples[(offset + j) % samples.len()];
                crate::train::predict_sample(params, sample)?;
            }
            Ok(start.elapsed().as_secs_f64())
        };
        run_once(0)?;
        let mut times = Vec::with_capacity(runs);
        for r in 0..runs {
            times.push(run_once(r)?);
        }
        let med = median(&mut times);
        w.write_record([
            batch.to_string(),
            runs.to_string(),
            format!("{med:.6}"),
            format!("{:.6}", med / batch as f64),
            machine.clone(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_predict(
    config: RunConfig,
    args: &PredictArgs,
    out: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    let dir = config.resolve_out_dir(out, "predict");
    ensure_dir(&dir)?;
    let params = load_checkpoint(&args.checkpoint)?;
    let clips = read_clips(&args.clips)?;
    echo_config(&dir, &config)?;

    let mut rows = Vec::new();
    let mut preds = Vec::new();
    let mut samples = Vec::new();
    for clip in &clips {
        let sample = prepare_sample(
            clip,
            params.config.input_mode,
            params.config.d_close,
            params.norm_scale,
        )?;
        let pred = crate::train::predict_sample(&params, &sample)?;
        rows.extend(prediction_rows(clip, &pred));
        preds.push(pred);
        samples.push(sample);
    }
    write_predictions_csv(&dir.join("predictions.csv"), &rows)?;
    write_submission(&dir.join("submission.txt"), &clips, &preds)?;
    if !args.no_timing && !samples.is_empty() {
        write_timing(&dir.join("timing.csv"), &params, &samples, args.timing_runs)?;
    }
    say(
        quiet,
        &format!(
            "predicted {} scenes ({} rows) into {}",
            clips.len(),
            rows.len(),
            dir.display()
        ),
    );
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────────

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let agent_type = AgentType::from_name(&field(2))
            .or_else(|| field(2).parse::<i64>().ok().and_then(AgentType::from_code))
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("unknown agent_type {:?}", field(2)),
            })?;
        let parse_num = |i: usize, what: &str| -> Result<f64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad {what} {:?}", field(i)),
            })
        };
        rows.push(PredictionRow {
            scene_id: parse_num(0, "scene_id")? as u64,
            agent_id: parse_num(1, "agent_id")? as i64,
            agent_type,
            step: parse_num(3, "step")? as usize,
            x: parse_num(4, "pred_x")?,
            y: parse_num(5, "pred_y")?,
        });
    }
    Ok(rows)
}

fn write_metrics_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record(["horizon_seconds", "step", "rmse", "count", "unit"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for h in &report.rmse_per_second {
        w.write_record([
            h.second.to_string(),
            h.step.to_string(),
            format!("{:.9}", h.rmse),
            h.count.to_string(),
            report.unit.clone(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record([
        "wsade", "ade_v", "ade_p", "ade_b", "wsfde", "fde_v", "fde_p", "fde_b", "unit",
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    w.write_record([
        fmt(report.wsade),
        fmt(report.ade_vehicle),
        fmt(report.ade_pedestrian),
        fmt(report.ade_bicycle),
        fmt(report.wsfde),
        fmt(report.fde_vehicle),
        fmt(report.fde_pedestrian),
        fmt(report.fde_bicycle),
        report.unit.clone(),
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    w.flush()?;
    Ok(())
}

fn cmd_eval(config: RunConfig, args: &EvalArgs, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = config.resolve_out_dir(out, "eval");
    ensure_dir(&dir)?;
    let rows = read_predictions(&args.predictions)?;
    let clips = read_clips(&args.ground_truth)?;
    echo_config(&dir, &config)?;

    // Index predictions by (scene, agent, step).
    let mut by_key: std::collections::BTreeMap<(u64, i64, usize), [f64; 2]> =
        std::collections::BTreeMap::new();
    for r in &rows {
        by_key.insert((r.scene_id, r.agent_id, r.step), [r.x, r.y]);
    }

    let mut missing: Vec<String> = Vec::new();
    let mut items = Vec::new();
    for clip in &clips {
        let t_f = clip.t_future();
        let mut pred = vec![vec![[0.0; 2]; t_f]; clip.num_agents()];
        for (i, &agent_id) in clip.agent_ids.iter().enumerate() {
            for s in 1..=t_f {
                match by_key.remove(&(clip.scene_id, agent_id, s)) {
                    Some(p) => pred[i][s - 1] = p,
                    None => {
                        missing.push(format!("scene {} agent {agent_id} step {s}", clip.scene_id))
                    }
                }
            }
        }
        items.push(ScenePrediction {
            pred,
            gt: clip
                .positions
                .iter()
                .map(|p| p[clip.t_history..].to_vec())
                .collect(),
            mask: clip
                .mask
                .iter()
                .map(|m| m[clip.t_history..].to_vec())
                .collect(),
            agent_types: clip.agent_types.clone(),
        });
    }
    let extra: Vec<String> = by_key
        .keys()
        .map(|(sc, ag, st)| format!("scene {sc} agent {ag} step {st}"))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("prediction/ground-truth id mismatch.");
        if !missing.is_empty() {
            msg.push_str(&format!(
                " missing {} prediction(s), first: {}.",
                missing.len(),
                missing[0]
            ));
        }
        if !extra.is_empty() {
            msg.push_str(&format!(
                " {} extra prediction(s), first: {}.",
                extra.len(),
                extra[0]
            ));
        }
        return Err(Error::Data(msg));
    }

    let (frame_rate, unit) = clips
        .first()
        .map_or((1.0, crate::ingest::Unit::Units), |c| {
            (c.frame_rate, c.unit)
        });
    let report = compute_metrics(&items, frame_rate, unit)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("metrics serialization: {e}")))?;
    std::fs::write(dir.join("metrics.json"), json)?;
    write_metrics_csv(&dir.join("metrics.csv"), &report)?;
    write_summary_csv(&dir.join("summary.csv"), &report)?;
    say(
        quiet,
        &format!(
            "evaluated {} scenes: wsade {:?}, ade(all) {:?}",
            clips.len(),
            report.wsade,
            report.ade_all
        ),
    );
    Ok(())
}

// ── ablate ───────────────────────────────────────────────────────────────

#[derive(serde::Deserialize)]
struct GridFile {
    #[serde(default)]
    entries: Vec<GridEntryToml>,
}

#[derive(serde::Deserialize)]
struct GridEntryToml {
    label: String,
    #[serde(default)]
    model: toml::Table,
    #[serde(default)]
    training: toml::Table,
}

fn merge_tables(base: &mut toml::Table, overlay: &toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(bt)), toml::Value::Table(ot)) => merge_tables(bt, ot),
            (Some(slot), _) => *slot = v.clone(),
            (None, _) => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn entry_from_overrides(
    base: &RunConfig,
    label: &str,
    model: &toml::Table,
    training: &toml::Table,
) -> Result<AblationEntry> {
    let text = base.to_toml_string()?;
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("internal config reserialization: {e}")))?;
    let model_slot = doc
        .entry("model".to_string())
        .or_insert(toml::Value::Table(toml::Table::new()));
    if let toml::Value::Table(t) = model_slot {
        merge_tables(t, model);
    }
    let training_slot = doc
        .entry("training".to_string())
        .or_insert(toml::Value::Table(toml::Table::new()));
    if let toml::Value::Table(t) = training_slot {
        merge_tables(t, training);
    }
    let merged: RunConfig =
        RunConfig::from_toml_str(&toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?)
            .map_err(|e| Error::Config(format!("grid entry {label:?}: {e}")))?;
    Ok(AblationEntry {
        label: label.to_string(),
        model: merged.model,
        training: merged.training,
    })
}

fn write_ablation_csv(path: &Path, rows: &[crate::train::AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_ablate(
    mut config: RunConfig,
    args: &AblateArgs,
    out: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    if args.grid.is_none() && args.dclose_sweep.is_none() && !args.locations {
        return Err(Error::Usage(
            "ablate needs --grid, --dclose-sweep and/or --locations".into(),
        ));
    }
    let dir = config.resolve_out_dir(out, "ablate");
    ensure_dir(&dir)?;
    let (train_clips, val_clips) = load_split_clips(&config, quiet)?;
    let all: Vec<SceneClip> = train_clips.iter().chain(&val_clips).cloned().collect();
    config.resolve_capacity(&all)?;
    echo_config(&dir, &config)?;

    if let Some(grid_path) = &args.grid {
        let text = std::fs::read_to_string(grid_path).map_err(|e| {
            Error::Usage(format!(
                "cannot read grid file {}: {e}",
                grid_path.display()
            ))
        })?;
        let grid: GridFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("grid file: {e}")))?;
        let entries = grid
            .entries
            .iter()
            .map(|e| entry_from_overrides(&config, &e.label, &e.model, &e.training))
            .collect::<Result<Vec<_>>>()?;
        say(quiet, &format!("running {} grid entr(ies)", entries.len()));
        let rows = run_ablation(&entries, &train_clips, &val_clips);
        write_ablation_csv(&dir.join("ablation.csv"), &rows)?;
    }

    if let Some(sweep) = &args.dclose_sweep {
        let values = sweep
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Usage(format!("bad sweep value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let entries = dclose_sweep_entries(&config.model, &config.training, &values);
        say(quiet, &format!("sweeping d_close over {values:?}"));
        let rows = run_ablation(&entries, &train_clips, &val_clips);
        write_ablation_csv(&dir.join("dclose_sweep.csv"), &rows)?;
    }

    if args.locations {
        let mut params = ModelParams::init(&config.model, config.seed)?;
        let outcome = train(&mut params, &train_clips, &val_clips, &config.training)?;
        let eval_clips = if val_clips.is_empty() {
            &train_clips
        } else {
            &val_clips
        };
        let samples = prepare_samples(
            eval_clips,
            config.model.input_mode,
            config.model.d_close,
            outcome.best_params.norm_scale,
        )?;
        let points =
            location_error_profile(&outcome.best_params, &samples, 12, config.data.window)?;
        let mut w = csv::Writer::from_path(dir.join("locations.csv"))
            .map_err(|e| Error::Data(e.to_string()))?;
        for p in &points {
            w.serialize(p).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
    }
    say(quiet, &format!("ablation outputs in {}", dir.display()));
    Ok(())
}
