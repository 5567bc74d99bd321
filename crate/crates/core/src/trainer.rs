//! The training loop: reconstruction-only pretraining, then joint
//! optimization of all four objectives with one optimizer step and one
//! target-network EMA update per batch.
//!
//! Gradients are routed positionally: every batch graph records which tape
//! node holds each trainable parameter (in `trainable_params` order), so a
//! term that is inactive this batch simply leaves its parameters without
//! gradients and the optimizer skips them.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::evaluate::{build_common_representation, kmeans, score, MetricsReport};
use crate::losses::{graph, LossBreakdown, LossWeights};
use crate::networks::{
    ema_update, init_model, sync_targets, target_forward, Mlp, MlpNodes, ModelArch, ModelBundle,
};
use crate::numerics::{Matrix, NodeId, Tape};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// When the cross-view prediction term joins the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreSchedule {
    /// Active from the warm-up epoch (a global count, defaulting to the
    /// pretrain length) onward: prediction starts once latents have had
    /// time to settle, then stays on.
    Warmup,
    /// Active for the first `pretrain_epochs` joint epochs, then off.
    Literal,
}

/// Which target embedding the online network of each view must predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmlMode {
    /// online(x_v) vs target(x_v), summed over views.
    SameView,
    /// online(x_v) vs target(x_other), summed over both directions.
    CrossView,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Reconstruction-only epochs before the joint phase.
    pub pretrain_epochs: usize,
    /// Total epochs including pretraining.
    pub total_epochs: usize,
    /// Warm-up horizon for the prediction term under the `warmup` schedule;
    /// defaults to `pretrain_epochs` when unset.
    pub warmup_epochs_for_pre: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Cluster count used by the heads and the per-epoch evaluation.
    pub k: usize,
    pub seed: u64,
    pub pre_schedule: PreSchedule,
    /// When false, prediction gradients stop at the latents and reach only
    /// the cross predictors.
    pub pre_updates_encoders: bool,
    pub cml_mode: CmlMode,
    /// Structural switch for the cross-view prediction term. Unlike a zero
    /// weight this removes the term from the graph entirely; ablations use
    /// it because the prediction and mutual-information terms share one
    /// weight.
    pub enable_pre: bool,
    /// Structural switch for the mutual-information term.
    pub enable_ccl: bool,
    /// Score the clustering every this many epochs (0: never; the final
    /// epoch is always scored when enabled). Requires dataset labels.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 50,
            total_epochs: 300,
            warmup_epochs_for_pre: None,
            batch_size: 256,
            learning_rate: 1e-3,
            weights: LossWeights::default(),
            k: 3,
            seed: 0,
            pre_schedule: PreSchedule::Warmup,
            pre_updates_encoders: true,
            cml_mode: CmlMode::SameView,
            enable_pre: true,
            enable_ccl: true,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pretrain_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "pretrain_epochs {} exceeds total_epochs {}",
                self.pretrain_epochs, self.total_epochs
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.weights.validate()
    }

    fn warmup_horizon(&self) -> usize {
        self.warmup_epochs_for_pre.unwrap_or(self.pretrain_epochs)
    }
}

/// One epoch of the log: batch-mean loss terms, optional clustering scores,
/// and how many batches had to skip the pair-dependent terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based global epoch (pretraining counts).
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub metrics: Option<MetricsReport>,
    /// Batches in this epoch that contained no complete rows while a
    /// pair-dependent term was requested.
    pub skipped_pair_batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = HistoryWriter::create(path)?;
        for rec in &self.epochs {
            w.append(rec)?;
        }
        Ok(())
    }
}

/// Streams epoch records to CSV as they are produced:
/// `epoch,rec,cml,pre,ccl,total,acc,nmi,ari` with metric cells left blank
/// for epochs that were not scored.
pub struct HistoryWriter {
    out: BufWriter<File>,
    path: String,
}

impl HistoryWriter {
    pub fn create(path: &Path) -> Result<HistoryWriter> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = HistoryWriter {
            out: BufWriter::new(file),
            path: path.display().to_string(),
        };
        w.write_line("epoch,rec,cml,pre,ccl,total,acc,nmi,ari")?;
        Ok(w)
    }

    pub fn append(&mut self, rec: &EpochRecord) -> Result<()> {
        let l = rec.losses;
        let tail = match rec.metrics {
            Some(m) => format!("{},{},{}", m.acc, m.nmi, m.ari),
            None => ",,".into(),
        };
        let line = format!(
            "{},{},{},{},{},{},{tail}",
            rec.epoch, l.rec, l.cml, l.pre, l.ccl, l.total
        );
        self.write_line(&line)?;
        self.out
            .flush()
            .map_err(|e| Error::io(self.path.clone(), e))
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(self.path.clone(), e))
    }
}

/// Loads a history CSV written by [`HistoryWriter`]. Skip counts are not
/// serialized and load as zero.
pub fn read_history_csv(path: &Path) -> Result<History> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, col: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        col,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "epoch,rec,cml,pre,ccl,total,acc,nmi,ari" => {}
        other => {
            return Err(parse_err(
                1,
                1,
                format!("unexpected header {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut history = History::default();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(parse_err(
                idx + 1,
                1,
                format!("expected 9 cells, got {}", cells.len()),
            ));
        }
        let epoch: usize = cells[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(idx + 1, 1, format!("bad epoch: {e}")))?;
        let mut nums = [0.0f64; 5];
        for (j, slot) in nums.iter_mut().enumerate() {
            *slot = cells[j + 1]
                .trim()
                .parse()
                .map_err(|e| parse_err(idx + 1, j + 2, format!("bad number: {e}")))?;
        }
        let metric_cells = [cells[6].trim(), cells[7].trim(), cells[8].trim()];
        let metrics = if metric_cells.iter().all(|c| c.is_empty()) {
            None
        } else if metric_cells.iter().all(|c| !c.is_empty()) {
            let mut vals = [0.0f64; 3];
            for (j, slot) in vals.iter_mut().enumerate() {
                *slot = metric_cells[j]
                    .parse()
                    .map_err(|e| parse_err(idx + 1, j + 7, format!("bad metric: {e}")))?;
            }
            Some(MetricsReport {
                acc: vals[0],
                nmi: vals[1],
                ari: vals[2],
            })
        } else {
            return Err(parse_err(
                idx + 1,
                7,
                "metrics must be all present or all blank".into(),
            ));
        };
        history.epochs.push(EpochRecord {
            epoch,
            losses: LossBreakdown {
                rec: nums[0],
                cml: nums[1],
                pre: nums[2],
                ccl: nums[3],
                total: nums[4],
            },
            metrics,
            skipped_pair_batches: 0,
        });
    }
    Ok(history)
}

struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Adam with bias correction, one moment pair per trainable parameter. The
/// step count is tracked per parameter so a parameter that only starts
/// receiving gradients later in training still gets full warm-up correction.
pub struct AdamState {
    names: Vec<String>,
    slots: Vec<AdamSlot>,
}

impl AdamState {
    pub fn for_bundle(bundle: &ModelBundle) -> AdamState {
        let names = bundle.trainable_param_names();
        let slots = bundle
            .trainable_params()
            .iter()
            .map(|p| AdamSlot {
                m: vec![0.0; p.data().len()],
                v: vec![0.0; p.data().len()],
                t: 0,
            })
            .collect();
        AdamState { names, slots }
    }

    /// Applies one update to every parameter that has a gradient; parameters
    /// with `None` are left untouched and their step counts do not advance.
    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Option<Matrix>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(Error::Contract(format!(
                "optimizer state covers {} parameters, got {} params / {} grads",
                self.slots.len(),
                params.len(),
                grads.len()
            )));
        }
        for i in 0..self.slots.len() {
            let Some(g) = &grads[i] else { continue };
            if g.shape() != params[i].shape() {
                return Err(Error::Contract(format!(
                    "gradient shape {} does not match parameter {} of shape {}",
                    g.shape_str(),
                    self.names[i],
                    params[i].shape_str()
                )));
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "gradient".into(),
                    location: format!(
                        "parameter {}, entry ({}, {})",
                        self.names[i],
                        pos / g.cols(),
                        pos % g.cols()
                    ),
                });
            }
            let slot = &mut self.slots[i];
            slot.t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(slot.t as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(slot.t as i32);
            let data = params[i].data_mut();
            for (j, gv) in g.data().iter().enumerate() {
                slot.m[j] = ADAM_BETA1 * slot.m[j] + (1.0 - ADAM_BETA1) * gv;
                slot.v[j] = ADAM_BETA2 * slot.v[j] + (1.0 - ADAM_BETA2) * gv * gv;
                let mhat = slot.m[j] / bc1;
                let vhat = slot.v[j] / bc2;
                data[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    #[cfg(test)]
    fn step_count(&self, i: usize) -> u64 {
        self.slots[i].t
    }
}

#[derive(Clone, Copy)]
struct ViewOffsets {
    encoder: usize,
    decoder: usize,
    projector: usize,
    predictor: usize,
    head: usize,
}

/// Start index of each component's parameters inside the flat trainable
/// parameter list. Must mirror `ModelBundle::trainable_params` exactly.
struct Offsets {
    views: Vec<ViewOffsets>,
    g12: usize,
    g21: usize,
    total: usize,
}

fn param_offsets(bundle: &ModelBundle) -> Offsets {
    let mut next = 0;
    let mut take = |mlp: &Mlp| {
        let at = next;
        next += 2 * mlp.num_layers();
        at
    };
    let mut views = Vec::with_capacity(bundle.views.len());
    for vm in &bundle.views {
        views.push(ViewOffsets {
            encoder: take(&vm.encoder),
            decoder: take(&vm.decoder),
            projector: take(&vm.dual.online.projector),
            predictor: take(&vm.dual.online.predictor),
            head: take(&vm.cluster_head),
        });
    }
    let g12 = take(&bundle.cross.g12);
    let g21 = take(&bundle.cross.g21);
    Offsets {
        views,
        g12,
        g21,
        total: next,
    }
}

/// A batch objective under construction: the tape plus the tape location of
/// every trainable parameter inserted so far.
struct BatchGraph {
    tape: Tape,
    slots: Vec<Option<NodeId>>,
}

impl BatchGraph {
    fn new(total_params: usize) -> BatchGraph {
        BatchGraph {
            tape: Tape::new(),
            slots: vec![None; total_params],
        }
    }

    fn insert(&mut self, mlp: &Mlp, offset: usize) -> MlpNodes {
        let nodes = mlp.insert_params(&mut self.tape);
        for (j, id) in nodes.ids().into_iter().enumerate() {
            self.slots[offset + j] = Some(id);
        }
        nodes
    }

    /// Per-parameter gradients in trainable order; call after backward.
    fn into_grads(self) -> Vec<Option<Matrix>> {
        self.slots
            .iter()
            .map(|slot| slot.and_then(|id| self.tape.grad(id).cloned()))
            .collect()
    }
}

struct BuiltBatch {
    graph: BatchGraph,
    objective: Option<NodeId>,
    losses: LossBreakdown,
    pair_skipped: bool,
}

/// Positions of `complete` inside `observed`. Both are ordered filters of
/// the same batch, so complete is a subsequence of observed.
fn positions_within(observed: &[usize], complete: &[usize]) -> Vec<usize> {
    let mut pos = Vec::with_capacity(complete.len());
    let mut oi = 0;
    for &c in complete {
        while observed[oi] != c {
            oi += 1;
        }
        pos.push(oi);
        oi += 1;
    }
    pos
}

/// Reconstruction-only batch: per view, mean squared reconstruction error
/// over the view's observed rows, summed across views (unweighted).
fn pretrain_batch(
    bundle: &ModelBundle,
    ds: &MultiViewDataset,
    rows: &[usize],
) -> Result<BuiltBatch> {
    let off = param_offsets(bundle);
    let mut g = BatchGraph::new(off.total);
    let mut terms = Vec::new();
    let mut rec_total = 0.0;
    for (v, vm) in bundle.views.iter().enumerate() {
        let observed: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| ds.mask().observed(i, v))
            .collect();
        if observed.is_empty() {
            continue;
        }
        let x = g.tape.constant(ds.view(v).gather_rows(&observed));
        let enc = g.insert(&vm.encoder, off.views[v].encoder);
        let z = vm.encoder.forward_tape(&mut g.tape, &enc, x)?;
        let dec = g.insert(&vm.decoder, off.views[v].decoder);
        let xhat = vm.decoder.forward_tape(&mut g.tape, &dec, z)?;
        let rec = graph::rec_term(&mut g.tape, x, xhat)?;
        rec_total += g.tape.scalar(rec);
        terms.push((rec, 1.0));
    }
    let objective = if terms.is_empty() {
        None
    } else {
        Some(g.tape.weighted_sum(&terms)?)
    };
    Ok(BuiltBatch {
        graph: g,
        objective,
        // The optimized objective is the raw reconstruction sum, but the log
        // uses the same weighting as the joint phase so the total column is
        // comparable across the whole run.
        losses: LossBreakdown::from_terms(rec_total, 0.0, 0.0, 0.0, &LossWeights::default(), false),
        pair_skipped: false,
    })
}

/// Full joint-phase batch: reconstruction on observed rows; agreement,
/// prediction and mutual-information terms on complete rows only. Terms
/// whose weight is zero, that are schedule-inactive, or that have no
/// complete rows this batch are not recorded at all, so their parameters
/// receive no gradients.
fn joint_batch(
    bundle: &ModelBundle,
    ds: &MultiViewDataset,
    rows: &[usize],
    cfg: &TrainConfig,
    pre_active: bool,
) -> Result<BuiltBatch> {
    let w = &cfg.weights;
    let off = param_offsets(bundle);
    let mut g = BatchGraph::new(off.total);
    let mut terms: Vec<(NodeId, f64)> = Vec::new();

    let complete: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&i| ds.mask().observed(i, 0) && ds.mask().observed(i, 1))
        .collect();
    let cml_wanted = w.beta > 0.0;
    let ccl_wanted = w.lambda > 0.0 && cfg.enable_ccl;
    let pre_wanted = w.lambda > 0.0 && pre_active && cfg.enable_pre;
    let pair_wanted = cml_wanted || ccl_wanted || pre_wanted;
    let pair_on = pair_wanted && !complete.is_empty();
    let pair_skipped = pair_wanted && complete.is_empty();

    let mut rec_total = 0.0;
    let mut complete_latents: Vec<Option<NodeId>> = vec![None; 2];
    for (v, vm) in bundle.views.iter().enumerate() {
        let observed: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| ds.mask().observed(i, v))
            .collect();
        let rec_on = w.alpha > 0.0 && !observed.is_empty();
        let encode_rows: &[usize] = if rec_on {
            &observed
        } else if pair_on {
            &complete
        } else {
            continue;
        };
        if encode_rows.is_empty() {
            continue;
        }
        let x = g.tape.constant(ds.view(v).gather_rows(encode_rows));
        let enc = g.insert(&vm.encoder, off.views[v].encoder);
        let z = vm.encoder.forward_tape(&mut g.tape, &enc, x)?;
        if rec_on {
            let dec = g.insert(&vm.decoder, off.views[v].decoder);
            let xhat = vm.decoder.forward_tape(&mut g.tape, &dec, z)?;
            let rec = graph::rec_term(&mut g.tape, x, xhat)?;
            rec_total += g.tape.scalar(rec);
            terms.push((rec, w.alpha));
        }
        if pair_on {
            complete_latents[v] = Some(if rec_on {
                let pos = positions_within(&observed, &complete);
                g.tape.gather_rows(z, &pos)
            } else {
                z
            });
        }
    }

    let mut cml_total = 0.0;
    let mut pre_total = 0.0;
    let mut ccl_total = 0.0;
    if pair_on {
        let zc = [
            complete_latents[0].expect("complete latents exist when pair terms are on"),
            complete_latents[1].expect("complete latents exist when pair terms are on"),
        ];
        if cml_wanted {
            for v in 0..2 {
                let vm = &bundle.views[v];
                let proj = g.insert(&vm.dual.online.projector, off.views[v].projector);
                let p = vm
                    .dual
                    .online
                    .projector
                    .forward_tape(&mut g.tape, &proj, zc[v])?;
                let pred = g.insert(&vm.dual.online.predictor, off.views[v].predictor);
                let q = vm
                    .dual
                    .online
                    .predictor
                    .forward_tape(&mut g.tape, &pred, p)?;
                let q = if bundle.arch().predictor_softmax {
                    let s = g.tape.softmax_rows(q);
                    g.tape.l2norm_rows(s)
                } else {
                    g.tape.l2norm_rows(q)
                };
                // The trailing network's output enters as a constant: no
                // gradient reaches target parameters.
                let target_view = match cfg.cml_mode {
                    CmlMode::SameView => v,
                    CmlMode::CrossView => 1 - v,
                };
                let x_t = ds.view(target_view).gather_rows(&complete);
                let t = target_forward(bundle, target_view, &x_t)?;
                let t = g.tape.constant(t);
                let cml = graph::cml_term(&mut g.tape, q, t)?;
                cml_total += g.tape.scalar(cml);
                terms.push((cml, w.beta));
            }
        }
        if pre_wanted {
            let z0 = g.tape.value(zc[0]).clone();
            let z1 = g.tape.value(zc[1]).clone();
            let (src0, src1) = if cfg.pre_updates_encoders {
                (zc[0], zc[1])
            } else {
                (g.tape.constant(z0.clone()), g.tape.constant(z1.clone()))
            };
            let n12 = g.insert(&bundle.cross.g12, off.g12);
            let p12 = bundle.cross.g12.forward_tape(&mut g.tape, &n12, src0)?;
            let n21 = g.insert(&bundle.cross.g21, off.g21);
            let p21 = bundle.cross.g21.forward_tape(&mut g.tape, &n21, src1)?;
            let t1 = g.tape.constant(z1);
            let t0 = g.tape.constant(z0);
            let pre = graph::pre_term(&mut g.tape, p12, t1, p21, t0)?;
            pre_total = g.tape.scalar(pre);
            terms.push((pre, w.lambda));
        }
        if ccl_wanted {
            let mut probs = [zc[0]; 2];
            for v in 0..2 {
                let vm = &bundle.views[v];
                let head = g.insert(&vm.cluster_head, off.views[v].head);
                probs[v] = vm.cluster_head.forward_tape(&mut g.tape, &head, zc[v])?;
            }
            let ccl = graph::ccl_term(&mut g.tape, probs[0], probs[1], w.eta_reg)?;
            ccl_total = g.tape.scalar(ccl);
            terms.push((ccl, w.lambda));
        }
    }

    let objective = if terms.is_empty() {
        None
    } else {
        Some(g.tape.weighted_sum(&terms)?)
    };
    Ok(BuiltBatch {
        graph: g,
        objective,
        losses: LossBreakdown::from_terms(
            rec_total, cml_total, pre_total, ccl_total, w, pre_active,
        ),
        pair_skipped,
    })
}

/// Deterministic epoch batching: one shuffled pass over all rows, chunked.
/// The trailing batch may be short.
pub(crate) fn shuffled_batches(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    // Spread epochs across the seed space so runs with adjacent base seeds
    // do not share batch streams.
    let stream = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

fn backprop_and_step(
    bundle: &mut ModelBundle,
    adam: &mut AdamState,
    built: BuiltBatch,
    lr: f64,
) -> Result<()> {
    let BuiltBatch {
        mut graph,
        objective,
        ..
    } = built;
    if let Some(obj) = objective {
        graph.tape.backward(obj)?;
        let grads = graph.into_grads();
        let mut params = bundle.trainable_params_mut();
        adam.step(&mut params, &grads, lr)?;
    }
    Ok(())
}

/// Runs the reconstruction-only phase, then re-syncs the target networks to
/// the online ones (the EMA trail starts fresh from there).
pub fn pretrain(
    bundle: &mut ModelBundle,
    ds: &MultiViewDataset,
    cfg: &TrainConfig,
    adam: &mut AdamState,
) -> Result<Vec<EpochRecord>> {
    let mut records = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 1..=cfg.pretrain_epochs {
        records.push(pretrain_epoch(bundle, ds, cfg, adam, epoch)?);
    }
    sync_targets(bundle);
    Ok(records)
}

fn pretrain_epoch(
    bundle: &mut ModelBundle,
    ds: &MultiViewDataset,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    epoch: usize,
) -> Result<EpochRecord> {
    let batches = shuffled_batches(ds.n(), cfg.batch_size, cfg.seed, epoch);
    let mut rec_sum = 0.0;
    for rows in &batches {
        let built = pretrain_batch(bundle, ds, rows)?;
        rec_sum += built.losses.rec;
        backprop_and_step(bundle, adam, built, cfg.learning_rate)?;
    }
    let rec = rec_sum / batches.len() as f64;
    Ok(EpochRecord {
        epoch,
        losses: LossBreakdown::from_terms(rec, 0.0, 0.0, 0.0, &cfg.weights, false),
        metrics: None,
        skipped_pair_batches: 0,
    })
}

/// Whether the prediction term participates at this global epoch.
fn pre_active_at(cfg: &TrainConfig, epoch: usize) -> bool {
    match cfg.pre_schedule {
        PreSchedule::Warmup => epoch >= cfg.warmup_horizon(),
        PreSchedule::Literal => {
            epoch > cfg.pretrain_epochs && epoch - cfg.pretrain_epochs <= cfg.pretrain_epochs
        }
    }
}

/// One joint epoch: per shuffled batch, build the active terms, take one
/// optimizer step, then one EMA update of the targets. Returns batch-mean
/// loss terms.
pub fn train_epoch(
    bundle: &mut ModelBundle,
    ds: &MultiViewDataset,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    epoch: usize,
) -> Result<EpochRecord> {
    train_epoch_inner(bundle, ds, cfg, adam, epoch, &mut false)
}

fn train_epoch_inner(
    bundle: &mut ModelBundle,
    ds: &MultiViewDataset,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    epoch: usize,
    warned_degenerate: &mut bool,
) -> Result<EpochRecord> {
    let pre_active = pre_active_at(cfg, epoch);
    let batches = shuffled_batches(ds.n(), cfg.batch_size, cfg.seed, epoch);
    let mut sums = LossBreakdown::default();
    let mut skipped = 0usize;
    for rows in &batches {
        let built = joint_batch(bundle, ds, rows, cfg, pre_active)?;
        if built.graph.tape.degenerate_row_events() > 0 && !*warned_degenerate {
            log::warn!(
                "row with (near-)zero norm hit the normalization floor at epoch {epoch}; \
                 reporting once per run"
            );
            *warned_degenerate = true;
        }
        sums.rec += built.losses.rec;
        sums.cml += built.losses.cml;
        sums.pre += built.losses.pre;
        sums.ccl += built.losses.ccl;
        skipped += built.pair_skipped as usize;
        backprop_and_step(bundle, adam, built, cfg.learning_rate)?;
        ema_update(bundle, cfg.weights.momentum)?;
    }
    let nb = batches.len() as f64;
    let losses = LossBreakdown::from_terms(
        sums.rec / nb,
        sums.cml / nb,
        sums.pre / nb,
        sums.ccl / nb,
        &cfg.weights,
        pre_active,
    );
    Ok(EpochRecord {
        epoch,
        losses,
        metrics: None,
        skipped_pair_batches: skipped,
    })
}

fn maybe_eval(
    bundle: &ModelBundle,
    ds: &MultiViewDataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Option<MetricsReport>> {
    let Some(labels) = ds.labels() else {
        return Ok(None);
    };
    if cfg.eval_every == 0 {
        return Ok(None);
    }
    if epoch % cfg.eval_every != 0 && epoch != cfg.total_epochs {
        return Ok(None);
    }
    let z = build_common_representation(bundle, ds)?;
    let clusters = kmeans(&z, cfg.k, cfg.seed)?;
    Ok(Some(score(&clusters.labels, labels)?))
}

/// Initializes a model and trains it end to end; deterministic per seed.
pub fn fit(
    ds: &MultiViewDataset,
    arch: &ModelArch,
    cfg: &TrainConfig,
) -> Result<(ModelBundle, History)> {
    fit_with(ds, arch, cfg, |_| Ok(()))
}

/// [`fit`] with a per-epoch callback (history streaming, progress logging).
pub fn fit_with(
    ds: &MultiViewDataset,
    arch: &ModelArch,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<(ModelBundle, History)> {
    cfg.validate()?;
    if ds.num_views() != 2 {
        return Err(Error::Config(format!(
            "training expects exactly 2 views, got {}",
            ds.num_views()
        )));
    }
    let mut bundle = init_model(&ds.view_dims(), arch, cfg.k, cfg.seed)?;
    let mut adam = AdamState::for_bundle(&bundle);
    let mut history = History::default();
    let mut warned = false;
    for epoch in 1..=cfg.pretrain_epochs {
        let mut rec = pretrain_epoch(&mut bundle, ds, cfg, &mut adam, epoch)?;
        rec.metrics = maybe_eval(&bundle, ds, cfg, epoch)?;
        on_epoch(&rec)?;
        history.epochs.push(rec);
    }
    sync_targets(&mut bundle);
    for epoch in (cfg.pretrain_epochs + 1)..=cfg.total_epochs {
        let mut rec = train_epoch_inner(&mut bundle, ds, cfg, &mut adam, epoch, &mut warned)?;
        rec.metrics = maybe_eval(&bundle, ds, cfg, epoch)?;
        on_epoch(&rec)?;
        history.epochs.push(rec);
    }
    Ok((bundle, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_mask, synth_two_view, MaskSpec, MultiViewDataset};

    fn tiny_arch() -> ModelArch {
        ModelArch {
            hidden: vec![8],
            latent: 4,
            projector_hidden: 6,
            projector_out: 4,
            predictor_hidden: 6,
            cross_hidden: 6,
            predictor_softmax: false,
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 2,
            total_epochs: 5,
            batch_size: 16,
            k: 3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn tiny_data(seed: u64) -> MultiViewDataset {
        let ds = synth_two_view(48, 3, 6, 5, 0.1, seed).unwrap();
        let mask = generate_mask(ds.n(), 2, &MaskSpec::new(0.25, seed).unwrap()).unwrap();
        ds.with_mask(mask).unwrap()
    }

    fn target_snapshot(b: &ModelBundle) -> Vec<Matrix> {
        b.target_params().iter().map(|p| (*p).clone()).collect()
    }

    #[test]
    fn batches_partition_all_rows() {
        for epoch in 1..4 {
            let batches = shuffled_batches(53, 16, 9, epoch);
            let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, (0..53).collect::<Vec<_>>());
            assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == 16));
        }
        assert_ne!(
            shuffled_batches(53, 16, 9, 1),
            shuffled_batches(53, 16, 9, 2)
        );
        assert_eq!(
            shuffled_batches(53, 16, 9, 1),
            shuffled_batches(53, 16, 9, 1)
        );
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point_that_advances_the_counter() {
        let mut bundle = init_model(&[5, 4], &tiny_arch(), 2, 0).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        let before: Vec<Matrix> = bundle
            .trainable_params()
            .iter()
            .map(|p| (*p).clone())
            .collect();
        let grads: Vec<Option<Matrix>> = before
            .iter()
            .map(|p| Some(Matrix::zeros(p.rows(), p.cols())))
            .collect();
        {
            let mut params = bundle.trainable_params_mut();
            adam.step(&mut params, &grads, 1e-3).unwrap();
        }
        for (a, b) in bundle.trainable_params().iter().zip(&before) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(adam.step_count(0), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_roughly_lr() {
        let mut bundle = init_model(&[5, 4], &tiny_arch(), 2, 0).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        let before = (*bundle.trainable_params()[0]).clone();
        let mut grads: Vec<Option<Matrix>> =
            bundle.trainable_params().iter().map(|_| None).collect();
        grads[0] = Some(Matrix::filled(before.rows(), before.cols(), 0.37));
        {
            let mut params = bundle.trainable_params_mut();
            adam.step(&mut params, &grads, 1e-3).unwrap();
        }
        let after = (*bundle.trainable_params()[0]).clone();
        // With zero state and a constant gradient g, the bias-corrected
        // first step is lr * g / (|g| + eps): almost exactly lr downhill.
        let expected = 1e-3 * 0.37 / (0.37 + ADAM_EPS);
        for (a, b) in after.data().iter().zip(before.data()) {
            let delta = b - a;
            assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
        }
        // Parameters without gradients keep a zero step count.
        assert_eq!(adam.step_count(0), 1);
        assert_eq!(adam.step_count(1), 0);
    }

    #[test]
    fn adam_rejects_nonfinite_gradients_by_parameter_name() {
        let mut bundle = init_model(&[5, 4], &tiny_arch(), 2, 0).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        let mut grads: Vec<Option<Matrix>> =
            bundle.trainable_params().iter().map(|_| None).collect();
        let shape = bundle.trainable_params()[2].shape();
        let mut bad = Matrix::zeros(shape.0, shape.1);
        bad.set(0, 0, f64::NAN);
        grads[2] = Some(bad);
        let offending = bundle.trainable_param_names()[2].clone();
        let err = {
            let mut params = bundle.trainable_params_mut();
            adam.step(&mut params, &grads, 1e-3).unwrap_err()
        };
        let msg = err.to_string();
        assert!(msg.contains(&offending), "missing {offending} in: {msg}");
    }

    #[test]
    fn pretrain_reduces_reconstruction_and_counts_epochs() {
        let ds = tiny_data(1);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 8;
        cfg.total_epochs = 8;
        let mut bundle = init_model(&ds.view_dims(), &tiny_arch(), cfg.k, cfg.seed).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        let records = pretrain(&mut bundle, &ds, &cfg, &mut adam).unwrap();
        assert_eq!(records.len(), 8);
        assert!(records[7].losses.rec <= records[0].losses.rec);
        for r in &records {
            assert!((r.losses.total - cfg.weights.alpha * r.losses.rec).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pretrain_epochs_only_syncs_targets() {
        let ds = tiny_data(2);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 0;
        let mut bundle = init_model(&ds.view_dims(), &tiny_arch(), cfg.k, cfg.seed).unwrap();
        // Perturb an online parameter so the sync is observable.
        {
            let mut enc = bundle.views[0].encoder.params_mut();
            enc[0].set(0, 0, 123.0);
        }
        let mut adam = AdamState::for_bundle(&bundle);
        let records = pretrain(&mut bundle, &ds, &cfg, &mut adam).unwrap();
        assert!(records.is_empty());
        assert_eq!(
            bundle.views[0].dual.target.encoder.params()[0].get(0, 0),
            123.0
        );
    }

    #[test]
    fn fit_is_deterministic_and_covers_all_epochs() {
        let ds = tiny_data(3);
        let cfg = tiny_cfg();
        let (b1, h1) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        let (b2, h2) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        assert_eq!(h1.len(), cfg.total_epochs);
        assert_eq!(h1, h2);
        for (p, q) in b1.trainable_params().iter().zip(b2.trainable_params()) {
            assert_eq!(p.data(), q.data());
        }
    }

    #[test]
    fn every_history_row_keeps_the_total_identity() {
        let ds = tiny_data(4);
        let cfg = tiny_cfg();
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for r in &history.epochs {
            let pre_active = r.epoch > cfg.pretrain_epochs && pre_active_at(&cfg, r.epoch);
            let expected = cfg.weights.beta * r.losses.cml
                + cfg.weights.lambda * (r.losses.ccl + if pre_active { r.losses.pre } else { 0.0 })
                + cfg.weights.alpha * r.losses.rec;
            assert!((r.losses.total - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_only_training_equals_a_plain_autoencoder_loop() {
        let ds = tiny_data(5);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 0;
        cfg.total_epochs = 3;
        cfg.weights.beta = 0.0;
        cfg.weights.lambda = 0.0;
        let (full, _) = fit(&ds, &tiny_arch(), &cfg).unwrap();

        // Reference: autoencoder-only updates with the same batching, the
        // same optimizer constants, and the same parameter initialization.
        let mut reference = init_model(&ds.view_dims(), &tiny_arch(), cfg.k, cfg.seed).unwrap();
        let mut adam = AdamState::for_bundle(&reference);
        for epoch in 1..=cfg.total_epochs {
            for rows in shuffled_batches(ds.n(), cfg.batch_size, cfg.seed, epoch) {
                let off = param_offsets(&reference);
                let mut g = BatchGraph::new(off.total);
                let mut terms = Vec::new();
                for (v, vm) in reference.views.iter().enumerate() {
                    let observed: Vec<usize> = rows
                        .iter()
                        .copied()
                        .filter(|&i| ds.mask().observed(i, v))
                        .collect();
                    if observed.is_empty() {
                        continue;
                    }
                    let x = g.tape.constant(ds.view(v).gather_rows(&observed));
                    let enc = g.insert(&vm.encoder, off.views[v].encoder);
                    let z = vm.encoder.forward_tape(&mut g.tape, &enc, x).unwrap();
                    let dec = g.insert(&vm.decoder, off.views[v].decoder);
                    let xhat = vm.decoder.forward_tape(&mut g.tape, &dec, z).unwrap();
                    let rec = graph::rec_term(&mut g.tape, x, xhat).unwrap();
                    terms.push((rec, cfg.weights.alpha));
                }
                let obj = g.tape.weighted_sum(&terms).unwrap();
                g.tape.backward(obj).unwrap();
                let grads = g.into_grads();
                let mut params = reference.trainable_params_mut();
                adam.step(&mut params, &grads, cfg.learning_rate).unwrap();
                ema_update(&mut reference, cfg.weights.momentum).unwrap();
            }
        }
        for (a, b) in full
            .trainable_params()
            .iter()
            .zip(reference.trainable_params())
        {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn with_beta_zero_final_params_ignore_the_momentum() {
        let ds = tiny_data(6);
        let mut cfg = tiny_cfg();
        cfg.weights.beta = 0.0;
        cfg.weights.momentum = 0.5;
        let (b1, _) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        cfg.weights.momentum = 0.99;
        let (b2, _) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for (p, q) in b1.trainable_params().iter().zip(b2.trainable_params()) {
            assert_eq!(p.data(), q.data());
        }
        // The targets themselves do differ: they trail at different speeds.
        let t1 = target_snapshot(&b1);
        let t2 = target_snapshot(&b2);
        assert!(t1.iter().zip(&t2).any(|(a, b)| a.data() != b.data()));
    }

    #[test]
    fn momentum_one_freezes_targets_for_the_whole_joint_phase() {
        let ds = tiny_data(7);
        let mut cfg = tiny_cfg();
        cfg.weights.momentum = 1.0;
        cfg.pretrain_epochs = 1;
        cfg.total_epochs = 4;
        let mut bundle = init_model(&ds.view_dims(), &tiny_arch(), cfg.k, cfg.seed).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        pretrain(&mut bundle, &ds, &cfg, &mut adam).unwrap();
        let frozen = target_snapshot(&bundle);
        for epoch in 2..=4 {
            train_epoch(&mut bundle, &ds, &cfg, &mut adam, epoch).unwrap();
        }
        let now = target_snapshot(&bundle);
        for (a, b) in frozen.iter().zip(&now) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn targets_trail_the_online_networks_between_epochs() {
        let ds = tiny_data(8);
        let mut cfg = tiny_cfg();
        cfg.weights.momentum = 0.9;
        cfg.pretrain_epochs = 1;
        let mut bundle = init_model(&ds.view_dims(), &tiny_arch(), cfg.k, cfg.seed).unwrap();
        let mut adam = AdamState::for_bundle(&bundle);
        pretrain(&mut bundle, &ds, &cfg, &mut adam).unwrap();
        let before = target_snapshot(&bundle);
        train_epoch(&mut bundle, &ds, &cfg, &mut adam, 2).unwrap();
        let after = target_snapshot(&bundle);
        assert!(before.iter().zip(&after).any(|(a, b)| a.data() != b.data()));
    }

    #[test]
    fn data_in_masked_rows_never_influences_training() {
        let ds = tiny_data(9);
        // Corrupt the hidden half of a row missing in view 0.
        let hidden_row = (0..ds.n())
            .find(|&i| !ds.mask().observed(i, 0))
            .expect("mask has missing rows");
        let mut views = vec![ds.view(0).clone(), ds.view(1).clone()];
        for j in 0..views[0].cols() {
            views[0].set(hidden_row, j, 1e6);
        }
        let corrupted =
            MultiViewDataset::new(views, ds.mask().clone(), ds.labels().map(|l| l.to_vec()))
                .unwrap();
        let cfg = tiny_cfg();
        let (b1, h1) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        let (b2, h2) = fit(&corrupted, &tiny_arch(), &cfg).unwrap();
        assert_eq!(h1, h2);
        for (p, q) in b1.trainable_params().iter().zip(b2.trainable_params()) {
            assert_eq!(p.data(), q.data());
        }
    }

    #[test]
    fn warmup_schedule_gates_the_prediction_term() {
        let ds = tiny_data(10);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 2;
        cfg.total_epochs = 6;
        cfg.warmup_epochs_for_pre = Some(5);
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for r in &history.epochs {
            let active = r.epoch > 2 && r.epoch >= 5;
            if active {
                assert!(r.losses.pre > 0.0, "epoch {}: pre should be on", r.epoch);
            } else {
                assert_eq!(r.losses.pre, 0.0, "epoch {}: pre should be off", r.epoch);
            }
        }
    }

    #[test]
    fn literal_schedule_activates_then_retires_the_prediction_term() {
        let ds = tiny_data(11);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 2;
        cfg.total_epochs = 8;
        cfg.pre_schedule = PreSchedule::Literal;
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for r in &history.epochs {
            // Joint epochs are 3..=8; the first two of them carry the
            // prediction term under the literal schedule.
            let active = r.epoch > 2 && r.epoch - 2 <= 2;
            if active {
                assert!(r.losses.pre > 0.0, "epoch {}", r.epoch);
            } else {
                assert_eq!(r.losses.pre, 0.0, "epoch {}", r.epoch);
            }
        }
    }

    #[test]
    fn no_complete_rows_skips_pair_terms_but_still_reconstructs() {
        let ds = synth_two_view(24, 2, 5, 4, 0.1, 12).unwrap();
        // Missing rate 1: every row is stripped to a single view.
        let mask = generate_mask(24, 2, &MaskSpec::new(1.0, 3).unwrap()).unwrap();
        assert_eq!(mask.count_complete(), 0);
        let ds = ds.with_mask(mask).unwrap();
        let mut cfg = tiny_cfg();
        cfg.k = 2;
        cfg.pretrain_epochs = 1;
        cfg.total_epochs = 3;
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        let batches = shuffled_batches(24, cfg.batch_size, cfg.seed, 2).len();
        for r in &history.epochs[1..] {
            assert_eq!(r.skipped_pair_batches, batches);
            assert_eq!(r.losses.cml, 0.0);
            assert_eq!(r.losses.ccl, 0.0);
            assert!(r.losses.rec > 0.0);
        }
    }

    #[test]
    fn detached_prediction_sources_leave_encoder_gradients_unchanged() {
        let ds = tiny_data(15);
        let bundle = init_model(&ds.view_dims(), &tiny_arch(), 3, 7).unwrap();
        let rows: Vec<usize> = (0..ds.n()).collect();
        let mut cfg = tiny_cfg();
        // Keep ccl so encoders always receive some gradient; drop rec/cml.
        cfg.weights.alpha = 0.0;
        cfg.weights.beta = 0.0;

        let grads_of = |cfg: &TrainConfig, pre_active: bool| {
            let built = joint_batch(&bundle, &ds, &rows, cfg, pre_active).unwrap();
            let mut g = built.graph;
            g.tape.backward(built.objective.unwrap()).unwrap();
            g.into_grads()
        };

        cfg.pre_updates_encoders = false;
        let detached = grads_of(&cfg, true);
        let without_pre = grads_of(&cfg, false);
        cfg.pre_updates_encoders = true;
        let attached = grads_of(&cfg, true);

        let off = param_offsets(&bundle);
        let enc = off.views[0].encoder..off.views[0].decoder;
        // Detached: encoder gradients are exactly what the remaining terms
        // produce on their own.
        for i in enc.clone() {
            let a = detached[i].as_ref().map(|m| m.data());
            let b = without_pre[i].as_ref().map(|m| m.data());
            assert_eq!(a, b, "trainable {i}");
        }
        // Attached: the prediction term contributes encoder gradient.
        assert!(enc.clone().any(|i| {
            detached[i].as_ref().map(|m| m.data()) != attached[i].as_ref().map(|m| m.data())
        }));
        // Cross predictors train in both modes, and not without the term.
        assert!(detached[off.g12].is_some() && detached[off.g21].is_some());
        assert!(attached[off.g12].is_some());
        assert!(without_pre[off.g12].is_none());
    }

    #[test]
    fn per_epoch_metrics_appear_on_schedule() {
        let ds = tiny_data(13);
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 1;
        cfg.total_epochs = 5;
        cfg.eval_every = 2;
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for r in &history.epochs {
            let expected = r.epoch % 2 == 0 || r.epoch == 5;
            assert_eq!(r.metrics.is_some(), expected, "epoch {}", r.epoch);
            if let Some(m) = r.metrics {
                assert!((0.0..=1.0).contains(&m.acc));
                assert!((0.0..=1.0).contains(&m.nmi));
            }
        }
    }

    #[test]
    fn history_csv_roundtrips() {
        let ds = tiny_data(14);
        let mut cfg = tiny_cfg();
        cfg.eval_every = 3;
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        history.write_csv(&path).unwrap();
        let loaded = read_history_csv(&path).unwrap();
        assert_eq!(loaded.len(), history.len());
        for (a, b) in loaded.epochs.iter().zip(&history.epochs) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.losses, b.losses);
            assert_eq!(a.metrics, b.metrics);
        }
    }

    #[test]
    fn term_toggles_structurally_remove_the_lambda_terms() {
        let ds = tiny_data(16);
        let mut cfg = tiny_cfg();
        cfg.enable_pre = false;
        cfg.enable_ccl = false;
        let (_, history) = fit(&ds, &tiny_arch(), &cfg).unwrap();
        for r in &history.epochs[cfg.pretrain_epochs..] {
            assert_eq!(r.losses.pre, 0.0);
            assert_eq!(r.losses.ccl, 0.0);
            assert!(r.losses.cml > 0.0, "agreement term stays on");
            assert!(r.losses.rec > 0.0);
        }
    }

    #[test]
    fn offsets_line_up_with_parameter_names() {
        let bundle = init_model(&[7, 5], &tiny_arch(), 3, 1).unwrap();
        let names = bundle.trainable_param_names();
        let off = param_offsets(&bundle);
        assert_eq!(off.total, names.len());
        for (v, vo) in off.views.iter().enumerate() {
            assert_eq!(names[vo.encoder], format!("view{v}.encoder.w0"));
            assert_eq!(names[vo.decoder], format!("view{v}.decoder.w0"));
            assert_eq!(names[vo.projector], format!("view{v}.projector.w0"));
            assert_eq!(names[vo.predictor], format!("view{v}.predictor.w0"));
            assert_eq!(names[vo.head], format!("view{v}.cluster_head.w0"));
        }
        assert_eq!(names[off.g12], "cross.g12.w0");
        assert_eq!(names[off.g21], "cross.g21.w0");
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let mut cfg = tiny_cfg();
        cfg.pretrain_epochs = 10;
        cfg.total_epochs = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.weights.momentum = 1.5;
        assert!(cfg.validate().is_err());
    }
}
