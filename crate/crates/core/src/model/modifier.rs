//! Item-wise modifier: a keep/delete/insert decision per position, and a
//! reverse generator whose output distribution can be mixed with a copy
//! distribution over the items of similar sequences.

use serde::{Deserialize, Serialize};

use super::config::AnchorSource;
use super::transformer::{run_blocks, AttentionMask, Block};
use super::Model;
use crate::autodiff::{ParamId, Rng, Tape, Tensor, Var};
use crate::corruption::{CorruptionExample, OperationLabel};
use crate::data::ItemId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModifierParams {
    /// `3 × dim` operation projection.
    pub w_op: ParamId,
    pub generator_blocks: Vec<Block>,
    /// `dim × dim`.
    pub w_co: ParamId,
    /// `dim × dim`.
    pub u_co: ParamId,
    /// `dim × 1`.
    pub v_co: ParamId,
    /// `2 × dim` gate projections.
    pub wp_co: ParamId,
    pub wp_all: ParamId,
}

/// Encoded similar sequences of one target.
pub struct NeighborContext {
    /// One `|S_k| × dim` matrix per neighbor.
    pub encodings: Vec<Var>,
    /// `K × dim`, row `k` the mean of neighbor `k`'s rows.
    pub pooled: Option<Var>,
    /// Occurrences of each generator class across all neighbors.
    pub counts: Vec<f64>,
}

impl NeighborContext {
    pub fn empty(classes: usize) -> Self {
        NeighborContext {
            encodings: Vec::new(),
            pooled: None,
            counts: vec![0.0; classes],
        }
    }

    pub fn len(&self) -> usize {
        self.encodings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encodings.is_empty()
    }
}

/// Output of one generator pass, one row per step.
pub struct InsertionDistribution {
    pub probs: Var,
    pub p_all: Var,
    /// Present only when the copy mechanism ran.
    pub p_col: Option<Var>,
    pub gate: Option<Var>,
}

pub struct ModifierStates {
    pub h_e: Var,
    /// Representation the operation head reads: shared or plain.
    pub h_ops: Var,
}

impl ModifierStates {
    fn anchor(&self, source: AnchorSource) -> Var {
        match source {
            AnchorSource::Encoder => self.h_e,
            AnchorSource::Shared => self.h_ops,
        }
    }
}

pub struct ModifierLoss {
    pub total: Var,
    pub operations: Var,
    pub insertions: Vec<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Kept { source: usize },
    Inserted { anchor: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStop {
    Eos,
    MaxRun,
    LengthBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionRun {
    pub anchor: usize,
    /// In generation order; placed before the anchor reversed.
    pub items: Vec<ItemId>,
    pub stop: RunStop,
}

/// Greedy decode result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifiedSequence {
    pub items: Vec<ItemId>,
    pub provenance: Vec<Provenance>,
    /// Chosen operation per input position.
    pub operations: Vec<OperationLabel>,
    pub runs: Vec<InsertionRun>,
}

impl ModifiedSequence {
    pub fn inserted(&self) -> usize {
        self.provenance
            .iter()
            .filter(|p| matches!(p, Provenance::Inserted { .. }))
            .count()
    }

    pub fn count(&self, op: OperationLabel) -> usize {
        self.operations.iter().filter(|&&o| o == op).count()
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Encodes the similar sequences (when the mode uses them) and counts
    /// their items.
    pub fn neighbor_context(
        &self,
        tape: &mut Tape<'_>,
        neighbors: &[&[ItemId]],
        mut rng: Option<&mut Rng>,
    ) -> Result<NeighborContext> {
        let classes = self.tokens().generator_classes();
        if !self.config.mode.uses_neighbors() || neighbors.is_empty() {
            return Ok(NeighborContext::empty(classes));
        }
        let mut ctx = NeighborContext::empty(classes);
        let mut means = Vec::with_capacity(neighbors.len());
        for seq in neighbors {
            let enc = self.encode(tape, seq, rng.as_deref_mut())?;
            means.push(tape.mean_rows(enc.h));
            ctx.encodings.push(enc.h);
            for &i in seq.iter() {
                if self.tokens().is_item(i) {
                    ctx.counts[i] += 1.0;
                }
            }
        }
        ctx.pooled = Some(tape.concat_rows(&means)?);
        Ok(ctx)
    }

    /// `H_e + (Σ_k softmax(H_e H_kᵀ) H_k) / K`; `H_e` itself without neighbors.
    pub fn shared_representation(&self, tape: &mut Tape<'_>, h_e: Var, ctx: &NeighborContext) -> Result<Var> {
        if ctx.is_empty() {
            return Ok(h_e);
        }
        let mut acc: Option<Var> = None;
        for &hk in &ctx.encodings {
            let scores = tape.matmul_nt(h_e, hk)?;
            let a = tape.softmax_rows(scores, None)?;
            let term = tape.matmul(a, hk)?;
            acc = Some(match acc {
                None => term,
                Some(s) => tape.add(s, term)?,
            });
        }
        let mean = tape.scale(acc.expect("nonempty"), 1.0 / ctx.len() as f64);
        Ok(tape.add(h_e, mean)?)
    }

    /// `m × 3` logits `h Wᵀ` over (Keep, Delete, Insert).
    pub fn operation_logits(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let w = tape.param(self.modifier.w_op);
        Ok(tape.matmul_nt(h, w)?)
    }

    pub fn operation_distribution(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let logits = self.operation_logits(tape, h)?;
        Ok(tape.softmax_rows(logits, None)?)
    }

    pub fn modifier_states(
        &self,
        tape: &mut Tape<'_>,
        seq: &[ItemId],
        ctx: &NeighborContext,
        rng: Option<&mut Rng>,
    ) -> Result<ModifierStates> {
        let h_e = self.encode(tape, seq, rng)?.h;
        let h_ops = if self.config.mode.shared_representation() {
            self.shared_representation(tape, h_e, ctx)?
        } else {
            h_e
        };
        Ok(ModifierStates { h_e, h_ops })
    }

    /// Causal generator states for `[anchor + p_1, e_1 + p_2, …]`; row `n`
    /// predicts the `n+1`-th inserted item.
    pub fn generator_hidden(
        &self,
        tape: &mut Tape<'_>,
        anchor: Var,
        prefix: &[ItemId],
        rng: Option<&mut Rng>,
    ) -> Result<Var> {
        if prefix.len() > self.config.max_insert_run {
            return Err(Error::Contract(format!(
                "insertion prefix of {} exceeds the run limit {}",
                prefix.len(),
                self.config.max_insert_run
            )));
        }
        let p = tape.param(self.encoder.pos_emb);
        let positions: Vec<usize> = (0..=prefix.len()).collect();
        let pos = tape.gather_rows(p, &positions)?;
        let rows = if prefix.is_empty() {
            anchor
        } else {
            let e = tape.param(self.encoder.item_emb);
            let items = tape.embedding(e, prefix)?;
            tape.concat_rows(&[anchor, items])?
        };
        let h0 = tape.add(rows, pos)?;
        let h0 = tape.dropout(h0, self.config.dropout, rng);
        let out = run_blocks(tape, &self.modifier.generator_blocks, h0, AttentionMask::Causal)?;
        Ok(out.out)
    }

    /// Per-row distribution over items and `[eos]`.
    pub fn insertion_distribution(
        &self,
        tape: &mut Tape<'_>,
        h_c: Var,
        ctx: &NeighborContext,
    ) -> Result<InsertionDistribution> {
        let classes = self.tokens().generator_classes();
        let e = tape.param(self.encoder.item_emb);
        let e_out = tape.slice_rows(e, 0, classes)?;
        let logits = tape.matmul_nt(h_c, e_out)?;
        let p_all = tape.softmax_rows(logits, None)?;
        let pooled = match ctx.pooled {
            Some(p) if self.config.mode.copy_mechanism() => p,
            _ => {
                return Ok(InsertionDistribution {
                    probs: p_all,
                    p_all,
                    p_col: None,
                    gate: None,
                })
            }
        };
        let steps = tape.shape(h_c).0;

        let gate = match self.config.gate_override {
            Some([g_col, g_all]) => {
                let data = (0..steps).flat_map(|_| [g_col, g_all]).collect();
                tape.constant(Tensor::new(vec![steps, 2], data)?)
            }
            None => {
                let w_co = tape.param(self.modifier.w_co);
                let u_co = tape.param(self.modifier.u_co);
                let v_co = tape.param(self.modifier.v_co);
                let keys = tape.matmul_nt(pooled, w_co)?;
                let queries = tape.matmul_nt(h_c, u_co)?;
                let mut contexts = Vec::with_capacity(steps);
                for n in 0..steps {
                    let q = tape.slice_rows(queries, n, 1)?;
                    let s = tape.add_row(keys, q)?;
                    let s = tape.tanh(s);
                    let scores = tape.matmul(s, v_co)?;
                    let scores = tape.transpose(scores);
                    let a = tape.softmax_rows(scores, None)?;
                    contexts.push(tape.matmul(a, pooled)?);
                }
                let c = tape.concat_rows(&contexts)?;
                let wp_co = tape.param(self.modifier.wp_co);
                let wp_all = tape.param(self.modifier.wp_all);
                let gc = tape.matmul_nt(c, wp_co)?;
                let ga = tape.matmul_nt(h_c, wp_all)?;
                let g = tape.add(gc, ga)?;
                tape.softmax_rows(g, None)?
            }
        };

        let ln_counts: Vec<f64> = ctx
            .counts
            .iter()
            .map(|&n| if n > 0.0 { n.ln() } else { 0.0 })
            .collect();
        let support: Vec<bool> = (0..steps).flat_map(|_| ctx.counts.iter().map(|&n| n > 0.0)).collect();
        let ln_counts = tape.constant(Tensor::new(vec![1, classes], ln_counts)?);
        let col_logits = tape.add_row(logits, ln_counts)?;
        let p_col = tape.softmax_rows(col_logits, Some(&support))?;

        let g_col = tape.slice_cols(gate, 0, 1)?;
        let g_all = tape.slice_cols(gate, 1, 1)?;
        let a = tape.mul_col(p_col, g_col)?;
        let b = tape.mul_col(p_all, g_all)?;
        let probs = tape.add(a, b)?;
        Ok(InsertionDistribution {
            probs,
            p_all,
            p_col: Some(p_col),
            gate: Some(gate),
        })
    }

    /// Summed operation NLL plus teacher-forced insertion NLL.
    pub fn modifier_loss(
        &self,
        tape: &mut Tape<'_>,
        example: &CorruptionExample,
        ctx: &NeighborContext,
        mut rng: Option<&mut Rng>,
    ) -> Result<ModifierLoss> {
        let states = self.modifier_states(tape, &example.corrupted, ctx, rng.as_deref_mut())?;
        let logits = self.operation_logits(tape, states.h_ops)?;
        let labels: Vec<usize> = example.labels.iter().map(|l| l.index()).collect();
        let operations = tape.cross_entropy(logits, &labels)?;
        let anchors = states.anchor(self.config.anchor);
        let mut total = operations;
        let mut insertions = Vec::with_capacity(example.insert_targets.len());
        for (&pos, target) in &example.insert_targets {
            let anchor = tape.slice_rows(anchors, pos, 1)?;
            let h_c = self.generator_hidden(tape, anchor, &target[..target.len() - 1], rng.as_deref_mut())?;
            let dist = self.insertion_distribution(tape, h_c, ctx)?;
            let nll = tape.nll_probs(dist.probs, target)?;
            total = tape.add(total, nll)?;
            insertions.push(nll);
        }
        Ok(ModifierLoss {
            total,
            operations,
            insertions,
        })
    }

    /// Greedy decode in eval mode. Insertions are refused once they could
    /// push the output past `max_modified_len`.
    pub fn modify(&self, seq: &[ItemId], neighbors: &[&[ItemId]]) -> Result<ModifiedSequence> {
        let max_len = self.config.max_modified_len;
        if seq.is_empty() || seq.len() > max_len {
            return Err(Error::Contract(format!(
                "modifier input length {} outside 1..={max_len}",
                seq.len()
            )));
        }
        let mut tape = Tape::inference(&self.params);
        let ctx = self.neighbor_context(&mut tape, neighbors, None)?;
        let states = self.modifier_states(&mut tape, seq, &ctx, None)?;
        let probs = self.operation_distribution(&mut tape, states.h_ops)?;
        let anchors = states.anchor(self.config.anchor);
        let eos = self.tokens().eos();

        let n = seq.len();
        let mut out = ModifiedSequence {
            items: Vec::with_capacity(max_len),
            provenance: Vec::with_capacity(max_len),
            operations: Vec::with_capacity(n),
            runs: Vec::new(),
        };
        for (t, &item) in seq.iter().enumerate() {
            let op = OperationLabel::from_index(argmax(tape.row(probs, t))).expect("three operations");
            out.operations.push(op);
            if op == OperationLabel::Delete {
                continue;
            }
            if op == OperationLabel::Insert {
                let budget = max_len.saturating_sub(out.items.len() + (n - t));
                let limit = budget.min(self.config.max_insert_run);
                let anchor = tape.slice_rows(anchors, t, 1)?;
                let mut generated: Vec<ItemId> = Vec::new();
                let stop = loop {
                    if generated.len() == limit {
                        break if limit == self.config.max_insert_run {
                            RunStop::MaxRun
                        } else {
                            RunStop::LengthBudget
                        };
                    }
                    let h_c = self.generator_hidden(&mut tape, anchor, &generated, None)?;
                    let dist = self.insertion_distribution(&mut tape, h_c, &ctx)?;
                    let next = argmax(tape.row(dist.probs, generated.len()));
                    if next == eos {
                        break RunStop::Eos;
                    }
                    generated.push(next);
                };
                for &g in generated.iter().rev() {
                    out.items.push(g);
                    out.provenance.push(Provenance::Inserted { anchor: t });
                }
                out.runs.push(InsertionRun {
                    anchor: t,
                    items: generated,
                    stop,
                });
            }
            out.items.push(item);
            out.provenance.push(Provenance::Kept { source: t });
        }
        Ok(out)
    }
}
