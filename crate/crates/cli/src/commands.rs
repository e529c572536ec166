//! The subcommands as library functions, so tests and the pipeline can call
//! them without spawning processes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rkn_core::checkpoint::{checkpoint_hash, parse_checkpoint, save_checkpoint};
use rkn_core::eval::{compare, read_metrics_csv, write_metrics_csv, ComparisonTable, MetricsReport};
use rkn_core::kalman::{run_kf, MeasurementNoiseModel};
use rkn_core::rkn::{rkn_filter, RknModel};
use rkn_core::run::{write_runs_csv, FilterRun};
use rkn_core::ssm::{
    generate_dataset, load_dataset, make_cv_model, named_mix, save_dataset, Dataset, InitialLaw, ScenarioId, Split,
    CV_DT, CV_SIGMA_V,
};
use rkn_core::train::{train_rkn, TrainConfig, TrainHistory};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::estimator::EstimatorSpec;
use crate::plot::{gain_chart, std_chart};

pub const TOOL: &str = concat!("rkn-lab ", env!("CARGO_PKG_VERSION"));

fn header(command: &str) -> Vec<String> {
    vec![format!("tool: {TOOL}"), format!("command: {command}")]
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", path.display())))
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path, what: &str) -> CliResult<Dataset> {
    require_file(path, what)?;
    load_dataset(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub scenario: String,
    /// Scenario of the test split; defaults to `scenario`.
    pub test_scenario: Option<String>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub length: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// File name prefix, e.g. `s1_` gives `s1_train.ndjson`.
    pub prefix: String,
    pub command: String,
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// Writes the non-empty splits as `<prefix><split>.ndjson`.
pub fn generate(args: &GenerateArgs) -> CliResult<GenerateOutput> {
    if args.length == 0 {
        return Err(CliError::usage("--length must be positive"));
    }
    if args.train + args.val + args.test == 0 {
        return Err(CliError::usage("nothing to generate: all split sizes are zero"));
    }
    let test_scenario = args.test_scenario.as_deref().unwrap_or(&args.scenario);
    named_mix(&args.scenario, 1)?;
    named_mix(test_scenario, 1)?;
    let model = make_cv_model(CV_DT, CV_SIGMA_V)?;
    let initial = InitialLaw::cv_default();
    create_dir(&args.out)?;
    let mut out = GenerateOutput { train: None, val: None, test: None };
    for (split, count, scenario) in [
        (Split::Train, args.train, args.scenario.as_str()),
        (Split::Val, args.val, args.scenario.as_str()),
        (Split::Test, args.test, test_scenario),
    ] {
        if count == 0 {
            continue;
        }
        let mut ds = generate_dataset(&model, &named_mix(scenario, count)?, &initial, args.length, args.seed, split)?;
        ds.provenance = Some(json!({
            "tool": TOOL,
            "command": args.command,
            "scenario": scenario,
            "seed": args.seed,
        }));
        let path = args.out.join(format!("{}{}.ndjson", args.prefix, split.as_str()));
        save_dataset(&ds, &path).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        println!(
            "wrote {}: {} episodes, T = {}, scenario {scenario}, seed {}",
            path.display(),
            ds.len(),
            args.length,
            args.seed
        );
        match split {
            Split::Train => out.train = Some(path),
            Split::Val => out.val = Some(path),
            Split::Test => out.test = Some(path),
        }
    }
    Ok(out)
}

/// Conventional tag for a training mix.
pub fn default_tag(ds: &Dataset) -> &'static str {
    let ids: Vec<ScenarioId> = ds.scenario_mix.iter().map(|(id, _)| *id).collect();
    match ids.as_slice() {
        [ScenarioId::S1] => "rkn_ref",
        [ScenarioId::S2a, ScenarioId::S2b] => "rkn_e1",
        [ScenarioId::S3a, ScenarioId::S3b] => "rkn_e2",
        _ => "rkn",
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub train: PathBuf,
    pub val: PathBuf,
    pub tag: Option<String>,
    /// Seeds the initialization; the config's shuffle seed is set to it too.
    pub seed: u64,
    pub config: TrainConfig,
    pub out: PathBuf,
    pub progress: bool,
    pub command: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub tag: String,
    pub checkpoint: PathBuf,
    pub label: String,
    pub history_path: PathBuf,
    pub history: TrainHistory,
}

fn describe(ds: &Dataset) -> serde_json::Value {
    json!({
        "split": ds.split.as_str(),
        "master_seed": ds.master_seed,
        "episodes": ds.len(),
        "T": ds.episode_len(),
        "scenario_mix": ds.scenario_mix.iter().map(|(id, c)| json!([id.as_str(), c])).collect::<Vec<_>>(),
    })
}

pub fn train(args: &TrainArgs) -> CliResult<TrainOutput> {
    require_file(&args.train, "training set")?;
    require_file(&args.val, "validation set")?;
    let train_ds = load(&args.train, "training set")?;
    let val_ds = load(&args.val, "validation set")?;
    let tag = args.tag.clone().unwrap_or_else(|| default_tag(&train_ds).to_string());
    let config = TrainConfig { seed: args.seed, ..args.config.clone() };
    config.validate()?;
    create_dir(&args.out)?;

    let (model, history) = if args.progress {
        let arch = rkn_core::rkn::RknArch::new(train_ds.model.state_dim(), train_ds.model.meas_dim(), config.hidden)?;
        rkn_core::train::train_from(&config, RknModel::new(arch, args.seed), &train_ds, &val_ds, |e| {
            eprintln!("[{tag}] epoch {:>3}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss)
        })
    } else {
        train_rkn(&config, args.seed, &train_ds, &val_ds)
    }
    .map_err(|e| CliError::runtime(format!("training {tag} failed: {e}")))?;

    let best_val = history.best_epoch.and_then(|b| history.epochs.iter().find(|e| e.epoch == b)).map(|e| e.val_loss);
    let meta = json!({
        "tool": TOOL,
        "command": args.command,
        "tag": tag,
        "config": config,
        "train_data": describe(&train_ds),
        "val_data": describe(&val_ds),
        "epochs_run": history.epochs.len(),
        "best_epoch": history.best_epoch,
        "best_val_loss": best_val,
        "early_stop_epoch": history.early_stop_epoch,
        "events": history.events,
    });
    let checkpoint = args.out.join(format!("{tag}.ckpt.json"));
    let label = save_checkpoint(&model, Some(meta), &checkpoint)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", checkpoint.display())))?;
    let history_path = args.out.join(format!("{tag}.history.csv"));
    let mut preamble = header(&args.command);
    preamble.push(format!("seed: {}", args.seed));
    preamble.push(format!("checkpoint: {label}"));
    for ev in &history.events {
        preamble.push(format!("event: {ev}"));
    }
    let mut buf = Vec::new();
    history.write_csv(&preamble, &mut buf)?;
    write_file(&history_path, &buf)?;
    match history.early_stop_epoch {
        Some(e) => println!("{tag}: early stop at epoch {e}, best epoch {:?}", history.best_epoch),
        None => println!("{tag}: ran {} epochs, best epoch {:?}", history.epochs.len(), history.best_epoch),
    }
    println!("wrote {} ({label})", checkpoint.display());
    Ok(TrainOutput { tag, checkpoint, label, history_path, history })
}

/// A loaded estimator ready to filter a dataset.
pub enum Estimator {
    Kf(MeasurementNoiseModel),
    Rkn { model: Box<RknModel>, path: PathBuf, sha256: String },
}

impl Estimator {
    pub fn load(spec: &EstimatorSpec) -> CliResult<Self> {
        Ok(match spec {
            EstimatorSpec::KfOracle => Estimator::Kf(MeasurementNoiseModel::Oracle),
            EstimatorSpec::KfFixed(r) => Estimator::Kf(MeasurementNoiseModel::fixed(*r)?),
            EstimatorSpec::Rkn(path) => {
                require_file(path, "checkpoint")?;
                let text = fs::read_to_string(path)?;
                let model =
                    parse_checkpoint(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
                Estimator::Rkn { model: Box::new(model), path: path.clone(), sha256: checkpoint_hash(text.as_bytes()) }
            }
        })
    }

    pub fn id(&self) -> String {
        match self {
            Estimator::Kf(noise) => noise.estimator_id(),
            Estimator::Rkn { model, .. } => model.label.clone(),
        }
    }

    pub fn provenance(&self) -> Option<String> {
        match self {
            Estimator::Kf(_) => None,
            Estimator::Rkn { model, path, sha256 } => {
                Some(format!("checkpoint: {} = {} sha256={sha256} seed={}", model.label, path.display(), model.seed))
            }
        }
    }

    /// Filters every episode; results keep the dataset order.
    pub fn run(&self, ds: &Dataset) -> CliResult<Vec<FilterRun>> {
        let dynamics = ds.model.dynamics();
        ds.episodes
            .par_iter()
            .map(|ep| match self {
                Estimator::Kf(noise) => run_kf(&ds.model, *noise, &ds.initial, ep),
                Estimator::Rkn { model, .. } => rkn_filter(model, &ds.initial, &dynamics, &ep.z, ep.episode_id),
            })
            .collect::<rkn_core::Result<Vec<_>>>()
            .map_err(|e| CliError::runtime(format!("{} failed: {e}", self.id())))
    }
}

#[derive(Debug, Clone)]
pub struct FilterArgs {
    pub data: PathBuf,
    pub estimator: EstimatorSpec,
    pub out: PathBuf,
    pub command: String,
}

/// Exports per-step filter outputs as CSV.
pub fn filter(args: &FilterArgs) -> CliResult<usize> {
    let ds = load(&args.data, "dataset")?;
    let est = Estimator::load(&args.estimator)?;
    let runs = est.run(&ds)?;
    let mut preamble = header(&args.command);
    preamble.push(format!("data: seed={} split={}", ds.master_seed, ds.split.as_str()));
    preamble.extend(est.provenance());
    let mut buf = Vec::new();
    write_runs_csv(&runs, &preamble, &mut buf)?;
    write_file(&args.out, &buf)?;
    println!("wrote {} ({} episodes, {})", args.out.display(), runs.len(), est.id());
    Ok(runs.len())
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub test: PathBuf,
    pub estimators: Vec<EstimatorSpec>,
    pub probes: Vec<usize>,
    pub out: PathBuf,
    pub command: String,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub reports: Vec<MetricsReport>,
    pub table: ComparisonTable,
    pub metrics_path: PathBuf,
    pub comparison_path: PathBuf,
}

/// Writes `metrics.csv`, `comparison.csv` and `comparison.txt` into `out`.
pub fn eval(args: &EvalArgs) -> CliResult<EvalOutput> {
    if args.estimators.is_empty() {
        return Err(CliError::usage("at least one estimator is required"));
    }
    if args.probes.is_empty() {
        return Err(CliError::usage("at least one probe time is required"));
    }
    require_file(&args.test, "test set")?;
    let estimators = args.estimators.iter().map(Estimator::load).collect::<CliResult<Vec<_>>>()?;
    let ds = load(&args.test, "test set")?;
    if let Some(p) = args.probes.iter().find(|&&p| p >= ds.episode_len()) {
        return Err(CliError::usage(format!("probe {p} is beyond the episode length {}", ds.episode_len())));
    }
    let mut reports = Vec::new();
    for est in &estimators {
        let runs = est.run(&ds)?;
        reports.push(MetricsReport::build(&est.id(), &runs, &ds.episodes)?);
    }
    let table = compare(&reports, &args.probes)?;

    let mut preamble = header(&args.command);
    preamble.push(format!("test data: seed={} episodes={} T={}", ds.master_seed, ds.len(), ds.episode_len()));
    preamble.extend(estimators.iter().filter_map(Estimator::provenance));
    create_dir(&args.out)?;
    let metrics_path = args.out.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(&reports, &preamble, &mut buf)?;
    write_file(&metrics_path, &buf)?;
    let comparison_path = args.out.join("comparison.csv");
    let mut buf = Vec::new();
    table.write_csv(&preamble, &mut buf)?;
    write_file(&comparison_path, &buf)?;
    let text = table.render();
    let mut txt: String = preamble.iter().map(|l| format!("# {l}\n")).collect();
    txt.push_str(&text);
    write_file(&args.out.join("comparison.txt"), txt.as_bytes())?;
    print!("{text}");
    Ok(EvalOutput { reports, table, metrics_path, comparison_path })
}

#[derive(Debug, Clone)]
pub struct PlotArgs {
    pub metrics: PathBuf,
    pub out: PathBuf,
    pub command: String,
}

/// Writes `std.svg` and `gain.svg` into `out`.
pub fn plot(args: &PlotArgs) -> CliResult<(PathBuf, PathBuf)> {
    require_file(&args.metrics, "metrics file")?;
    let text = fs::read(&args.metrics)?;
    let reports = read_metrics_csv(text.as_slice())
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.metrics.display())))?;
    let mut comments = header(&args.command);
    comments.push(format!("metrics sha256={}", checkpoint_hash(&text)));
    create_dir(&args.out)?;
    let std_path = args.out.join("std.svg");
    write_file(&std_path, std_chart(&reports).to_svg(&comments).as_bytes())?;
    let gain_path = args.out.join("gain.svg");
    write_file(&gain_path, gain_chart(&reports).to_svg(&comments).as_bytes())?;
    println!("wrote {} and {}", std_path.display(), gain_path.display());
    Ok((std_path, gain_path))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub models: Vec<TrainOutput>,
    pub eval: EvalOutput,
}

/// generate, train every model, evaluate everything on the test set, plot.
pub fn pipeline(config_path: &Path, progress: bool) -> CliResult<PipelineOutput> {
    require_file(config_path, "experiment config")?;
    let raw = fs::read(config_path)?;
    let text = String::from_utf8(raw.clone()).map_err(|_| CliError::usage("experiment config is not UTF-8"))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    run_experiment(&cfg, &format!("pipeline config sha256={}", checkpoint_hash(&raw)), progress)
}

pub fn run_experiment(cfg: &ExperimentConfig, origin: &str, progress: bool) -> CliResult<PipelineOutput> {
    cfg.validate()?;
    let data_dir = cfg.out_dir.join("data");
    let model_dir = cfg.out_dir.join("models");
    let test = generate(&GenerateArgs {
        scenario: cfg.test_scenario.clone(),
        test_scenario: None,
        train: 0,
        val: 0,
        test: cfg.test_episodes,
        length: cfg.length,
        seed: cfg.seed,
        out: data_dir.clone(),
        prefix: String::new(),
        command: format!("{origin}: generate test"),
    })?
    .test
    .expect("test split requested");

    let mut sets = Vec::new();
    for (k, scenario) in cfg.training_scenarios().into_iter().enumerate() {
        let g = generate(&GenerateArgs {
            scenario: scenario.to_string(),
            test_scenario: None,
            train: cfg.train_episodes,
            val: cfg.val_episodes,
            test: 0,
            length: cfg.length,
            seed: cfg.seed.wrapping_add(k as u64 + 1),
            out: data_dir.clone(),
            prefix: format!("{scenario}_"),
            command: format!("{origin}: generate {scenario}"),
        })?;
        sets.push((scenario, g.train.expect("train split"), g.val.expect("val split")));
    }

    let mut models = Vec::new();
    for m in &cfg.models {
        let (_, train_path, val_path) = sets.iter().find(|(s, _, _)| *s == m.scenario).expect("scenario generated");
        models.push(train(&TrainArgs {
            train: train_path.clone(),
            val: val_path.clone(),
            tag: Some(m.tag.clone()),
            seed: m.seed,
            config: cfg.train.clone(),
            out: model_dir.clone(),
            progress,
            command: format!("{origin}: train {}", m.tag),
        })?);
    }

    let mut estimators: Vec<EstimatorSpec> =
        cfg.baselines.iter().map(|b| b.parse()).collect::<Result<_, _>>().map_err(|e| CliError::usage(format!("{e}")))?;
    estimators.extend(models.iter().map(|m| EstimatorSpec::Rkn(m.checkpoint.clone())));
    let eval_out = eval(&EvalArgs {
        test,
        estimators,
        probes: cfg.probes.clone(),
        out: cfg.out_dir.clone(),
        command: format!("{origin}: eval"),
    })?;
    for m in &models {
        println!("{} = {}", m.tag, m.label);
    }
    plot(&PlotArgs {
        metrics: eval_out.metrics_path.clone(),
        out: cfg.out_dir.clone(),
        command: format!("{origin}: plot"),
    })?;
    Ok(PipelineOutput { models, eval: eval_out })
}

/// Sizes the global worker pool from `RKN_THREADS` (unset: all cores).
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("RKN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("RKN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(format!("cannot size the worker pool: {e}")))
}
