//! Training loop: streamed batches, Adam updates, periodic evaluation on the
//! fixed sets, and checkpointing.

use crate::checkpoint;
use crate::data::{self, domain, record_rng, DataConfig};
use crate::embed::{self, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabeledPair, Triplet};
use crate::loss::{self, LossConfig, LossFamily, TrainingMode};
use crate::matching::{self, PairBatch};
use crate::metrics;
use crate::nn::ParamStore;
use crate::tape::{NodeId, Tape};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Embedding,
    Matching,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_model_kind")]
    pub model_kind: ModelKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_num_steps")]
    pub num_training_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_model_kind() -> ModelKind {
    ModelKind::Embedding
}
fn default_batch_size() -> usize {
    20
}
fn default_num_steps() -> u64 {
    100_000
}
fn default_eval_every() -> u64 {
    2_000
}
fn default_learning_rate() -> f64 {
    0.001
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            data: DataConfig::default(),
            model_kind: default_model_kind(),
            batch_size: default_batch_size(),
            num_training_steps: default_num_steps(),
            eval_every: default_eval_every(),
            learning_rate: default_learning_rate(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.data.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.num_training_steps == 0 || self.eval_every == 0 {
            return Err(Error::Config("step counts must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Metrics at one evaluation point; `loss` is the mean training loss since
/// the previous report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: u64,
    pub loss: f64,
    pub pair_auc: f64,
    pub triplet_acc: f64,
}

/// Fresh parameters for the configured model kind, derived from the seed.
pub fn init_params(cfg: &TrainConfig) -> ParamStore {
    let mut rng = record_rng(cfg.seed, domain::INIT, 0);
    match cfg.model_kind {
        ModelKind::Embedding => embed::init_embedding_params(&cfg.model, &mut rng),
        ModelKind::Matching => matching::init_matching_params(&cfg.model, &mut rng),
    }
}

#[derive(Clone, Debug)]
pub enum Batch {
    Pairs(Vec<LabeledPair>),
    Triplets(Vec<Triplet>),
}

/// Batch for one training step, a pure function of (config, step).
pub fn make_batch(cfg: &TrainConfig, step: u64) -> Result<Batch> {
    let base = (step - 1) * cfg.batch_size as u64;
    match cfg.loss.mode {
        TrainingMode::Pair => {
            let mut pairs = Vec::with_capacity(cfg.batch_size);
            for b in 0..cfg.batch_size as u64 {
                let mut rng = record_rng(cfg.data.seed, domain::TRAIN, base + b);
                pairs.push(data::make_training_pair(&cfg.data, &mut rng)?);
            }
            Ok(Batch::Pairs(pairs))
        }
        TrainingMode::Triplet => {
            let mut triplets = Vec::with_capacity(cfg.batch_size);
            for b in 0..cfg.batch_size as u64 {
                let mut rng = record_rng(cfg.data.seed, domain::TRAIN, base + b);
                triplets.push(data::make_training_triplet(&cfg.data, &mut rng)?);
            }
            Ok(Batch::Triplets(triplets))
        }
    }
}

fn gather_stride(
    tape: &mut Tape,
    h: NodeId,
    count: usize,
    stride: usize,
    offset: usize,
) -> Result<NodeId> {
    let idx: Vec<usize> = (0..count).map(|t| t * stride + offset).collect();
    tape.gather_rows(h, &idx)
}

/// Graph vectors for a pair list: ([P x H] left, [P x H] right).
fn pair_vectors(
    tape: &mut Tape,
    store: &ParamStore,
    model: &ModelConfig,
    kind: ModelKind,
    pairs: &[(&Graph, &Graph)],
) -> Result<(NodeId, NodeId)> {
    let p = pairs.len();
    let h_graphs = match kind {
        ModelKind::Embedding => {
            let mut graphs = Vec::with_capacity(2 * p);
            for (g1, g2) in pairs {
                graphs.push(*g1);
                graphs.push(*g2);
            }
            let batch = crate::batch::GraphBatch::new(&graphs)?;
            embed::embed_batch(tape, store, model, &batch)?
        }
        ModelKind::Matching => {
            let pb = PairBatch::new(pairs)?;
            matching::match_batch(tape, store, model, &pb)?.h_graphs
        }
    };
    let left = gather_stride(tape, h_graphs, p, 2, 0)?;
    let right = gather_stride(tape, h_graphs, p, 2, 1)?;
    Ok((left, right))
}

/// Mean batch loss on a fresh tape; used by both training (with backward) and
/// the gradient checker (value only).
pub fn batch_loss(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &TrainConfig,
    batch: &Batch,
) -> Result<NodeId> {
    match batch {
        Batch::Pairs(pairs) => {
            let refs: Vec<(&Graph, &Graph)> = pairs.iter().map(|p| (&p.g1, &p.g2)).collect();
            let labels: Vec<i8> = pairs.iter().map(|p| p.label).collect();
            let (left, right) = pair_vectors(tape, store, &cfg.model, cfg.model_kind, &refs)?;
            loss::pair_loss_on_tape(tape, left, right, &labels, &cfg.loss)
        }
        Batch::Triplets(triplets) => {
            // two pairs per triplet: (g1, g2) then (g1, g3)
            let mut refs: Vec<(&Graph, &Graph)> = Vec::with_capacity(2 * triplets.len());
            for t in triplets {
                refs.push((&t.g1, &t.g2));
                refs.push((&t.g1, &t.g3));
            }
            let (left, right) = pair_vectors(tape, store, &cfg.model, cfg.model_kind, &refs)?;
            let n = triplets.len();
            let a_pos = gather_stride(tape, left, n, 2, 0)?;
            let b_pos = gather_stride(tape, right, n, 2, 0)?;
            let a_neg = gather_stride(tape, left, n, 2, 1)?;
            let c_neg = gather_stride(tape, right, n, 2, 1)?;
            loss::triplet_loss_on_tape(tape, (a_pos, b_pos), (a_neg, c_neg), &cfg.loss)
        }
    }
}

fn param_diagnostics(store: &ParamStore) -> String {
    store
        .iter()
        .map(|(name, e)| format!("{name}: max|w|={:.3e}", e.value.max_abs()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One optimization step; returns the batch loss before the update.
pub fn train_step(store: &mut ParamStore, cfg: &TrainConfig, batch: &Batch) -> Result<f64> {
    let mut tape = Tape::new();
    let loss_node = batch_loss(&mut tape, store, cfg, batch)?;
    let loss_value = tape.value(loss_node).data()[0];
    if !loss_value.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: store.step() + 1,
            diagnostics: param_diagnostics(store),
        });
    }
    let grads = tape.backward(loss_node)?;
    store.adam_step(grads.params(), cfg.learning_rate, 0.9, 0.999, 1e-8)?;
    Ok(loss_value)
}

const EVAL_CHUNK: usize = 100;

/// Similarity scores for a list of pairs (higher = more similar), processed
/// in chunks on throwaway tapes.
pub fn score_pairs(
    store: &ParamStore,
    model: &ModelConfig,
    kind: ModelKind,
    family: LossFamily,
    pairs: &[(&Graph, &Graph)],
) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let (left, right) = pair_vectors(&mut tape, store, model, kind, chunk)?;
        let lv = tape.value(left).clone();
        let rv = tape.value(right).clone();
        let h = lv.cols();
        for i in 0..chunk.len() {
            scores.push(loss::pair_score(
                &lv.data()[i * h..(i + 1) * h],
                &rv.data()[i * h..(i + 1) * h],
                family,
            )?);
        }
    }
    Ok(scores)
}

/// Pair AUC and triplet accuracy of a model over fixed eval sets.
pub fn evaluate_model(
    store: &ParamStore,
    model: &ModelConfig,
    kind: ModelKind,
    family: LossFamily,
    pairs: &[LabeledPair],
    triplets: &[Triplet],
) -> Result<(f64, f64)> {
    let pair_refs: Vec<(&Graph, &Graph)> = pairs.iter().map(|p| (&p.g1, &p.g2)).collect();
    let pair_scores = score_pairs(store, model, kind, family, &pair_refs)?;
    let labeled: Vec<(f64, i8)> = pair_scores
        .iter()
        .zip(pairs)
        .map(|(&s, p)| (s, p.label))
        .collect();
    let auc = metrics::pair_auc(&labeled)?;

    let pos_refs: Vec<(&Graph, &Graph)> = triplets.iter().map(|t| (&t.g1, &t.g2)).collect();
    let neg_refs: Vec<(&Graph, &Graph)> = triplets.iter().map(|t| (&t.g1, &t.g3)).collect();
    let s_pos = score_pairs(store, model, kind, family, &pos_refs)?;
    let s_neg = score_pairs(store, model, kind, family, &neg_refs)?;
    let triplet_scores: Vec<(f64, f64)> = s_pos.into_iter().zip(s_neg).collect();
    let acc = metrics::triplet_accuracy(&triplet_scores)?;
    Ok((auc, acc))
}

pub struct TrainOutcome {
    pub store: ParamStore,
    pub reports: Vec<EvalReport>,
    pub step_losses: Vec<f64>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Full training run. Writes `metrics.csv` and `checkpoint.bin` into
/// `out_dir` (checkpoint refreshed at every eval point) and calls `progress`
/// after each evaluation.
pub fn train_loop(
    cfg: &TrainConfig,
    out_dir: &Path,
    progress: &mut dyn FnMut(&EvalReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut store = init_params(cfg);
    let (eval_pairs, eval_triplets) = data::build_eval_sets(&cfg.data)?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join(METRICS_FILE))?);
    writeln!(csv, "step,loss,pair_auc,triplet_acc")?;

    let mut reports = Vec::new();
    let mut step_losses = Vec::with_capacity(cfg.num_training_steps as usize);
    let mut window_loss = 0.0;
    let mut window_count = 0u64;
    for step in 1..=cfg.num_training_steps {
        let batch = make_batch(cfg, step)?;
        let loss_value = train_step(&mut store, cfg, &batch)?;
        step_losses.push(loss_value);
        window_loss += loss_value;
        window_count += 1;

        if step % cfg.eval_every == 0 || step == cfg.num_training_steps {
            let (auc, acc) = evaluate_model(
                &store,
                &cfg.model,
                cfg.model_kind,
                cfg.loss.family,
                &eval_pairs,
                &eval_triplets,
            )?;
            let report = EvalReport {
                step,
                loss: window_loss / window_count as f64,
                pair_auc: auc,
                triplet_acc: acc,
            };
            window_loss = 0.0;
            window_count = 0;
            writeln!(
                csv,
                "{},{},{},{}",
                report.step, report.loss, report.pair_auc, report.triplet_acc
            )?;
            csv.flush()?;
            checkpoint::checkpoint_save(&out_dir.join(CHECKPOINT_FILE), &store, cfg)?;
            progress(&report);
            reports.push(report);
        }
    }
    Ok(TrainOutcome {
        store,
        reports,
        step_losses,
    })
}

/// Max relative error between analytic and central-difference gradients of
/// the configured model + loss on a small random batch.
pub fn run_gradcheck(cfg: &TrainConfig, h: f64) -> Result<f64> {
    let store = init_params(cfg);
    let mut rng = record_rng(cfg.seed, domain::INIT, 1);
    let small = |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let n = rand::Rng::gen_range(rng, 3..=5);
        let g = data::sample_er_graph(n, 0.5, rng);
        if g.num_edges() > 0 {
            return g;
        }
    };
    let batch = match cfg.loss.mode {
        TrainingMode::Pair => Batch::Pairs(vec![
            LabeledPair {
                g1: small(&mut rng),
                g2: small(&mut rng),
                label: 1,
            },
            LabeledPair {
                g1: small(&mut rng),
                g2: small(&mut rng),
                label: -1,
            },
        ]),
        TrainingMode::Triplet => Batch::Triplets(vec![Triplet {
            g1: small(&mut rng),
            g2: small(&mut rng),
            g3: small(&mut rng),
        }]),
    };

    let mut tape = Tape::new();
    let loss_node = batch_loss(&mut tape, &store, cfg, &batch)?;
    let grads = tape.backward(loss_node)?;

    crate::nn::finite_diff_gradcheck(
        |s| {
            let mut t = Tape::new();
            let l = batch_loss(&mut t, s, cfg, &batch)?;
            Ok(t.value(l).data()[0])
        },
        &store,
        grads.params(),
        h,
    )
}
