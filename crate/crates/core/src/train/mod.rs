//! Joint training: corruption → modifier loss, gradient-free decode → S^c,
//! masked views of S^r and S^c → recommender loss, then clip and Adam.

pub mod checkpoint;
pub mod optim;

use std::io::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use optim::{adam_step, clip_gradients, AdamConfig};

use crate::autodiff::{derive_seed, Gradients, Rng, Tape, Var};
use crate::corruption::{corrupt, mask_for_recommender, CorruptionConfig, CorruptionExample, MaskPolicy};
use crate::data::{Dataset, ItemId, Split};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{Directionality, ModifiedSequence, Model};
use crate::seeds;

/// When S^c is regenerated from the current parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    #[default]
    Epoch,
    Batch,
}

/// Which loss terms are optimised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Joint,
    ModifierOnly,
    RecommenderOnly,
}

impl Objective {
    fn modifier(self) -> bool {
        self != Objective::RecommenderOnly
    }

    fn recommender(self) -> bool {
        self != Objective::ModifierOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub regenerate: Cadence,
    /// Draw a fresh corruption every epoch; otherwise reuse epoch 0's.
    pub resample_corruption: bool,
    /// Keep the parameters of the epoch with the best validation HR@10.
    pub select_best: bool,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            clip_lo: -5.0,
            clip_hi: 5.0,
            epochs: 100,
            batch_size: 64,
            regenerate: Cadence::Epoch,
            resample_corruption: true,
            select_best: true,
            objective: Objective::Joint,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.beta1, self.beta2, self.eps];
        if self.learning_rate < 0.0 || positive.iter().any(|v| !(*v > 0.0)) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        if !(self.clip_lo < self.clip_hi) {
            return Err(Error::Config(format!(
                "clip range [{}, {}] is empty",
                self.clip_lo, self.clip_hi
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// `total == modifier + recommender`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub modifier: f64,
    pub recommender: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(modifier: f64, recommender: f64) -> Self {
        LossBreakdown {
            modifier,
            recommender,
            total: modifier + recommender,
        }
    }

    pub fn add(&mut self, other: &LossBreakdown) {
        *self = LossBreakdown::new(self.modifier + other.modifier, self.recommender + other.recommender);
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LossBreakdown::new(self.modifier * factor, self.recommender * factor)
    }
}

/// One sequence's training inputs.
pub struct StepInput<'a> {
    pub raw: &'a [ItemId],
    /// S^c; `None` or empty skips the modified view.
    pub modified: Option<&'a [ItemId]>,
    pub neighbors: Vec<&'a [ItemId]>,
}

pub struct StepRngs {
    pub corrupt: Rng,
    pub mask: Rng,
    /// `None` disables dropout.
    pub dropout: Option<Rng>,
}

impl StepRngs {
    pub fn derived(seed: u64, epoch: u64, corruption_epoch: u64, seq: u64) -> Self {
        StepRngs {
            corrupt: Rng::new(derive_seed(seed, &[seeds::CORRUPT, corruption_epoch, seq])),
            mask: Rng::new(derive_seed(seed, &[seeds::MASK, epoch, seq])),
            dropout: Some(Rng::new(derive_seed(seed, &[seeds::DROPOUT, epoch, seq]))),
        }
    }
}

pub struct StepLoss {
    pub total: Var,
    pub breakdown: LossBreakdown,
    pub example: CorruptionExample,
}

pub fn mask_policy(model: &Model) -> MaskPolicy {
    match model.config.recommender {
        Directionality::Bi => MaskPolicy::Random,
        Directionality::Uni => MaskPolicy::LastOnly,
    }
}

/// Records `L = L_mod + L_rec` for one sequence on `tape`.
pub fn joint_loss<'p>(
    model: &'p Model,
    tape: &mut Tape<'p>,
    input: &StepInput<'_>,
    corruption: &CorruptionConfig,
    objective: Objective,
    rngs: &mut StepRngs,
) -> Result<StepLoss> {
    let tokens = model.tokens();
    let example = corrupt(input.raw, corruption, tokens, &mut rngs.corrupt)?;
    let mut dropout = rngs.dropout.as_mut();
    let mut parts: Vec<Var> = Vec::new();
    let mut l_mod = 0.0;
    let mut l_rec = 0.0;
    if objective.modifier() {
        let ctx = model.neighbor_context(tape, &input.neighbors, dropout.as_deref_mut())?;
        let loss = model.modifier_loss(tape, &example, &ctx, dropout.as_deref_mut())?;
        l_mod = tape.scalar(loss.total);
        parts.push(loss.total);
    }
    if objective.recommender() {
        let policy = mask_policy(model);
        let raw_view = mask_for_recommender(input.raw, corruption.p_mask, policy, tokens, &mut rngs.mask)?;
        let mut views = vec![raw_view];
        if let Some(m) = input.modified.filter(|m| !m.is_empty()) {
            views.push(mask_for_recommender(m, corruption.p_mask, policy, tokens, &mut rngs.mask)?);
        }
        let refs: Vec<_> = views.iter().collect();
        let loss = model.recommender_loss(tape, &refs, dropout.as_deref_mut())?;
        l_rec = tape.scalar(loss);
        parts.push(loss);
    }
    let total = match parts.as_slice() {
        [one] => *one,
        [a, b] => tape.add(*a, *b)?,
        _ => return Err(Error::Contract("objective has no loss terms".into())),
    };
    Ok(StepLoss {
        total,
        breakdown: LossBreakdown::new(l_mod, l_rec),
        example,
    })
}

/// Training input of a sequence: its most recent training items.
pub fn raw_input<'d>(data: &'d Dataset, seq: usize, corruption: &CorruptionConfig) -> &'d [ItemId] {
    data.sequences()[seq].valid_input(corruption.max_raw_len)
}

/// Greedy-decodes every sequence's training input with the current
/// parameters. Runs on inference tapes only.
pub fn decode_training_inputs(
    model: &Model,
    data: &Dataset,
    corruption: &CorruptionConfig,
    seqs: &[usize],
) -> Result<Vec<ModifiedSequence>> {
    seqs.par_iter()
        .map(|&s| {
            let neighbors = data.neighbor_items(s, corruption.max_raw_len);
            model.modify(raw_input(data, s, corruption), &neighbors)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per sequence.
    pub loss: LossBreakdown,
    /// Sum per batch.
    pub batches: Vec<LossBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_hr10: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 means initialisation.
    pub best_epoch: usize,
    pub best_valid_hr10: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub dump_corruptions: Option<PathBuf>,
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    epoch: usize,
    seq: usize,
    user: &'a str,
    example: &'a CorruptionExample,
}

/// One pass over all sequences. `modified` holds S^c per sequence and is
/// refreshed here when the cadence is per batch.
pub fn train_epoch(
    model: &mut Model,
    data: &Dataset,
    config: &TrainConfig,
    corruption: &CorruptionConfig,
    seed: u64,
    epoch: usize,
    modified: &mut [Vec<ItemId>],
    mut dump: Option<&mut dyn std::io::Write>,
) -> Result<EpochRecord> {
    let n = data.sequences().len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(seed, &[seeds::SHUFFLE, epoch as u64])).shuffle(&mut order);
    let corruption_epoch = if config.resample_corruption { epoch as u64 } else { 0 };
    let adam = config.adam();
    let mut epoch_loss = LossBreakdown::default();
    let mut batches = Vec::new();

    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        if config.regenerate == Cadence::Batch && config.objective.recommender() {
            let fresh = decode_training_inputs(model, data, corruption, batch)?;
            for (&s, m) in batch.iter().zip(fresh) {
                modified[s] = m.items;
            }
        }
        let shared: &Model = model;
        let keep_examples = dump.is_some();
        let results: Vec<Result<(Gradients, LossBreakdown, Option<CorruptionExample>)>> = batch
            .par_iter()
            .map(|&s| {
                let input = StepInput {
                    raw: raw_input(data, s, corruption),
                    modified: Some(&modified[s]),
                    neighbors: data.neighbor_items(s, corruption.max_raw_len),
                };
                let mut rngs = StepRngs::derived(seed, epoch as u64, corruption_epoch, s as u64);
                let mut tape = Tape::with_params(&shared.params);
                let step = joint_loss(shared, &mut tape, &input, corruption, config.objective, &mut rngs)?;
                if !step.breakdown.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {:?} for sequence {s} ({}) in epoch {epoch}, batch {b}",
                        step.breakdown,
                        data.sequences()[s].user
                    )));
                }
                tape.backward(step.total)?;
                let example = keep_examples.then_some(step.example);
                Ok((tape.param_grads(), step.breakdown, example))
            })
            .collect();

        let mut grads = Gradients::empty(model.params.len());
        let mut batch_loss = LossBreakdown::default();
        for (&s, r) in batch.iter().zip(results) {
            let (g, l, example) = r?;
            grads.accumulate(&g);
            batch_loss.add(&l);
            if let (Some(w), Some(ex)) = (dump.as_deref_mut(), example) {
                let rec = DumpRecord {
                    epoch,
                    seq: s,
                    user: &data.sequences()[s].user,
                    example: &ex,
                };
                let line = serde_json::to_string(&rec).expect("serialisable record");
                writeln!(w, "{line}").map_err(|e| Error::io("corruption dump", e))?;
            }
        }
        grads.scale(1.0 / batch.len() as f64);
        clip_gradients(&mut grads, config.clip_lo, config.clip_hi);
        adam_step(&mut model.params, &grads, &adam)?;
        epoch_loss.add(&batch_loss);
        batches.push(batch_loss);
    }
    Ok(EpochRecord {
        epoch,
        loss: epoch_loss.scaled(1.0 / n.max(1) as f64),
        batches,
        valid_hr10: None,
    })
}

/// Trains for `config.epochs` epochs (1-based in the report). With
/// `select_best`, the parameters of the best validation epoch are restored
/// at the end; initialisation competes as epoch 0.
pub fn fit(
    model: &mut Model,
    data: &Dataset,
    config: &TrainConfig,
    corruption: &CorruptionConfig,
    seed: u64,
    options: &FitOptions,
) -> Result<TrainReport> {
    config.validate()?;
    corruption.validate()?;
    let mut dump_file = match &options.dump_corruptions {
        Some(p) => Some(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let all: Vec<usize> = (0..data.sequences().len()).collect();
    let mut modified: Vec<Vec<ItemId>> = vec![Vec::new(); all.len()];
    let mut report = TrainReport::default();
    let mut best: Option<(f64, crate::autodiff::ParamStore)> = None;
    if config.select_best && config.epochs > 0 {
        let hr = validation_hr10(model, data, corruption)?;
        best = Some((hr, model.params.clone()));
        report.best_valid_hr10 = Some(hr);
    }
    for epoch in 1..=config.epochs {
        if config.regenerate == Cadence::Epoch && config.objective.recommender() {
            for (s, m) in decode_training_inputs(model, data, corruption, &all)?.into_iter().enumerate() {
                modified[s] = m.items;
            }
        }
        let dump = dump_file.as_mut().map(|f| f as &mut dyn std::io::Write);
        let mut record = train_epoch(model, data, config, corruption, seed, epoch, &mut modified, dump)?;
        log::info!(
            "epoch {epoch}: L={:.4} L_mod={:.4} L_rec={:.4}",
            record.loss.total,
            record.loss.modifier,
            record.loss.recommender
        );
        if let Some((best_hr, store)) = best.as_mut() {
            let hr = validation_hr10(model, data, corruption)?;
            record.valid_hr10 = Some(hr);
            if hr > *best_hr {
                *best_hr = hr;
                *store = model.params.clone();
                report.best_epoch = epoch;
                report.best_valid_hr10 = Some(hr);
            }
        } else {
            report.best_epoch = epoch;
        }
        report.epochs.push(record);
    }
    if let Some(w) = dump_file.as_mut() {
        w.flush().map_err(|e| Error::io("corruption dump", e))?;
    }
    if let Some((_, store)) = best {
        model.params = store;
    }
    Ok(report)
}

fn validation_hr10(model: &Model, data: &Dataset, corruption: &CorruptionConfig) -> Result<f64> {
    let ev = eval::evaluate(model, data, Split::Valid, eval::InputView::Modified, corruption.max_raw_len)?;
    Ok(ev.metrics.hr10)
}
