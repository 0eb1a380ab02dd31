use std::path::{Path, PathBuf};

use clap::Args;
use cloud_core::autodiff::{derive_seed, Rng};
use cloud_core::data::{self, Corpus, Dataset, ItemId, Split};
use cloud_core::eval::{self, InputView, MetricsReport, RunMetadata};
use cloud_core::io::{self, FileHeader};
use cloud_core::model::{Model, ModifiedSequence};
use cloud_core::seeds;
use cloud_core::train::{self, load_checkpoint, save_checkpoint, FitOptions, TrainReport};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::GlobalArgs;

pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output TSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw TSV log; defaults to `data.events` from the config.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output directory; defaults to `data.dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Preprocessed data directory; defaults to `data.dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint directory to write; defaults to `<output_dir>/checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// JSON-lines dump of every corruption example drawn during training.
    #[arg(long)]
    pub dump_corruptions: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint directory; defaults to `<output_dir>/checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// valid or test.
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Args, Debug)]
pub struct ModifyArgs {
    #[command(flatten)]
    pub common: CheckpointArgs,
    /// Output JSON-lines path.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CheckpointArgs,
    /// modified (through the modifier) or raw.
    #[arg(long, default_value = "modified")]
    pub view: InputView,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrivacyArgs {
    #[command(flatten)]
    pub common: CheckpointArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory for the simulated dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = eval::SIMULATED_NOISE.0)]
    pub keep: f64,
    #[arg(long, default_value_t = eval::SIMULATED_NOISE.1)]
    pub delete: f64,
    #[arg(long, default_value_t = eval::SIMULATED_NOISE.2)]
    pub insert: f64,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Simulated dataset written by `simulate-noise`.
    #[arg(long)]
    pub simulated: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn data_dir(cfg: &ExperimentConfig, arg: &DataArgs) -> PathBuf {
    arg.data.clone().unwrap_or_else(|| cfg.data.dir.clone())
}

fn checkpoint_dir(cfg: &ExperimentConfig, arg: &Option<PathBuf>) -> PathBuf {
    arg.clone().unwrap_or_else(|| cfg.output_dir.join("checkpoint"))
}

pub fn synth(cfg: &ExperimentConfig, a: SynthArgs) -> Result<(), CliError> {
    let mut rng = Rng::new(derive_seed(cfg.seed, &[seeds::SYNTHETIC]));
    let events = data::generate_synthetic_corpus(&cfg.data.synthetic, &mut rng);
    io::write_bytes(&a.out, data::events::to_tsv(&events).as_bytes())?;
    log::info!("wrote {} events to {}", events.len(), a.out.display());
    Ok(())
}

pub fn preprocess(cfg: &ExperimentConfig, a: PreprocessArgs) -> Result<(), CliError> {
    let events_path = a
        .events
        .or_else(|| cfg.data.events.clone())
        .ok_or_else(|| CliError::Usage("no events file: pass --events or set data.events".into()))?;
    let out = a.data.unwrap_or_else(|| cfg.data.dir.clone());
    let events = data::read_tsv(&events_path)?;
    let n_raw = events.len();
    let events = data::filter_time_range(events, cfg.data.start_time, cfg.data.end_time);
    let events = data::k_core_filter(events, cfg.data.min_count)?;
    let (corpus, stats) = Corpus::from_events(&events, cfg.corruption.max_raw_len)?;
    corpus.save(&out, Some(&cfg.hash()))?;
    log::info!(
        "{n_raw} events -> {} after filtering; {} sequences over {} items ({} truncated)",
        events.len(),
        corpus.sequences.len(),
        corpus.vocab.n_items(),
        stats.truncated
    );
    Ok(())
}

pub fn build_index(cfg: &ExperimentConfig, a: DataArgs) -> Result<(), CliError> {
    let dir = data_dir(cfg, &a);
    let corpus = Corpus::load(&dir)?;
    let ds = Dataset::build(corpus, cfg.neighbors, cfg.negatives, cfg.seed);
    let hash = cfg.hash();
    data::save_neighbors(&dir.join(data::NEIGHBORS_FILE), &ds.neighbors, Some(&hash))?;
    data::save_negatives(&dir.join(data::NEGATIVES_FILE), &ds.negatives, Some(&hash))?;
    let with_neighbors = ds.neighbors.lists.iter().filter(|l| !l.is_empty()).count();
    log::info!(
        "indexed {} sequences; {with_neighbors} have at least one similar sequence",
        ds.sequences().len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    config: serde_json::Value,
    report: &'a TrainReport,
}

pub fn train(mut cfg: ExperimentConfig, a: TrainArgs) -> Result<(), CliError> {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let data = Dataset::load(&data_dir(&cfg, &a.data))?;
    let mut model = Model::new(cfg.model_for(data.n_items())?, cfg.seed)?;
    let options = FitOptions {
        dump_corruptions: a.dump_corruptions,
    };
    let report = train::fit(&mut model, &data, &cfg.train, &cfg.corruption, cfg.seed, &options)?;
    let ck = checkpoint_dir(&cfg, &a.checkpoint);
    let hash = cfg.hash();
    save_checkpoint(&ck, &model, cfg.seed, report.best_epoch, Some(&hash))?;
    let out = TrainOutput {
        config: cfg.to_json(),
        report: &report,
    };
    let text = serde_json::to_string_pretty(&out).expect("serialisable report") + "\n";
    io::write_bytes(&ck.join(TRAIN_REPORT_FILE), text.as_bytes())?;
    if let Some(p) = a.report {
        io::write_bytes(&p, text.as_bytes())?;
    }
    log::info!("checkpoint (epoch {}) written to {}", report.best_epoch, ck.display());
    Ok(())
}

/// Loads a checkpoint and applies `--mode` / `--recommender` overrides.
fn load_model(global: &GlobalArgs, dir: &Path) -> Result<(Model, u64), CliError> {
    let ck = load_checkpoint(dir)?;
    let mut config = ck.model.config.clone();
    if let Some(m) = global.mode {
        config.mode = m;
    }
    if let Some(r) = global.recommender {
        config.recommender = r;
    }
    let model = if config == ck.model.config {
        ck.model
    } else {
        ck.model.with_config(config)?
    };
    Ok((model, ck.seed))
}

fn metadata(cfg: &ExperimentConfig, model: &Model, checkpoint: &Path, data: &Dataset) -> RunMetadata {
    RunMetadata {
        mode: model.config.mode.name().to_string(),
        recommender: model.config.recommender.to_string(),
        seed: cfg.seed,
        checkpoint: Some(checkpoint.display().to_string()),
        config_hash: Some(cfg.hash()),
        negatives: data.negatives.spec.to_string(),
        config: Some(cfg.to_json()),
    }
}

fn emit(report: &MetricsReport, path: Option<&Path>) -> Result<(), CliError> {
    let text = report.to_text();
    print!("{text}");
    if let Some(p) = path {
        io::write_bytes(p, report.to_json().as_bytes())?;
        io::write_bytes(&p.with_extension("txt"), text.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ModifiedRecord<'a> {
    seq: usize,
    user: &'a str,
    raw: &'a [ItemId],
    modified: &'a ModifiedSequence,
}

pub fn modify(cfg: &ExperimentConfig, global: &GlobalArgs, a: ModifyArgs) -> Result<(), CliError> {
    let data = Dataset::load(&data_dir(cfg, &a.common.data))?;
    let (model, _) = load_model(global, &checkpoint_dir(cfg, &a.common.checkpoint))?;
    let max = cfg.corruption.max_raw_len;
    let modified = eval::modify_split(&model, &data, a.common.split, max)?;
    let records: Vec<ModifiedRecord> = modified
        .iter()
        .enumerate()
        .map(|(s, m)| ModifiedRecord {
            seq: s,
            user: &data.sequences()[s].user,
            raw: eval::split_input(&data, s, a.common.split, max),
            modified: m,
        })
        .collect();
    let header = FileHeader::new("modified")
        .with_config_hash(Some(&cfg.hash()))
        .with_meta("mode", model.config.mode.name().into());
    io::write_jsonl(&a.out, header, &records)?;
    log::info!("wrote {} modified sequences to {}", records.len(), a.out.display());
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig, global: &GlobalArgs, a: EvaluateArgs) -> Result<(), CliError> {
    let data = Dataset::load(&data_dir(cfg, &a.common.data))?;
    let ck = checkpoint_dir(cfg, &a.common.checkpoint);
    let (model, _) = load_model(global, &ck)?;
    let ev = eval::evaluate(&model, &data, a.common.split, a.view, cfg.corruption.max_raw_len)?;
    let report = MetricsReport::new(metadata(cfg, &model, &ck, &data), a.common.split, a.view, ev.metrics);
    emit(&report, a.report.as_deref())
}

pub fn privacy(cfg: &ExperimentConfig, global: &GlobalArgs, a: PrivacyArgs) -> Result<(), CliError> {
    let data = Dataset::load(&data_dir(cfg, &a.common.data))?;
    let ck = checkpoint_dir(cfg, &a.common.checkpoint);
    let (model, _) = load_model(global, &ck)?;
    let max = cfg.corruption.max_raw_len;
    let ev = eval::evaluate(&model, &data, a.common.split, InputView::Modified, max)?;
    let modified = ev.modified.as_deref().expect("modified view decodes");
    let raw: Vec<&[ItemId]> = (0..data.sequences().len())
        .map(|s| eval::split_input(&data, s, a.common.split, max))
        .collect();
    let mut report = MetricsReport::new(
        metadata(cfg, &model, &ck, &data),
        a.common.split,
        InputView::Modified,
        ev.metrics,
    );
    report.privacy = Some(eval::privacy_report(&raw, modified)?);
    emit(&report, a.report.as_deref())
}

pub fn simulate(cfg: &ExperimentConfig, a: SimulateArgs) -> Result<(), CliError> {
    let real = Corpus::load(&data_dir(cfg, &a.data))?;
    let noise = cfg.corruption.clone().with_probs(a.keep, a.delete, a.insert);
    let sim = eval::simulate_noise(&real, &noise, cfg.seed)?;
    let ds = Dataset::build(sim, cfg.neighbors, cfg.negatives, cfg.seed);
    ds.save(&a.out, Some(&cfg.hash()))?;
    log::info!("wrote simulated dataset to {}", a.out.display());
    Ok(())
}

pub fn robustness(cfg: &ExperimentConfig, global: &GlobalArgs, a: RobustnessArgs) -> Result<(), CliError> {
    let real = Dataset::load(&data_dir(cfg, &a.data))?;
    let simulated = Dataset::load(&a.simulated)?;
    let ck = checkpoint_dir(cfg, &a.checkpoint);
    let (model, _) = load_model(global, &ck)?;
    let r = eval::robustness_report(&model, &real, &simulated, cfg.corruption.max_raw_len)?;
    let mut report = MetricsReport::new(metadata(cfg, &model, &ck, &simulated), Split::Test, InputView::Modified, r.simulated);
    report.robustness = Some(r);
    emit(&report, a.report.as_deref())
}
