//! Vector-space similarities and the four training losses.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFamily {
    MarginEuclidean,
    Hamming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingMode {
    Pair,
    Triplet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default = "default_family")]
    pub family: LossFamily,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_mode")]
    pub mode: TrainingMode,
}

fn default_family() -> LossFamily {
    LossFamily::MarginEuclidean
}
fn default_margin() -> f64 {
    1.0
}
fn default_mode() -> TrainingMode {
    TrainingMode::Pair
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            family: default_family(),
            margin: default_margin(),
            mode: default_mode(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::Config("margin must be positive".into()));
        }
        Ok(())
    }
}

fn check_len(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "vector similarity",
            lhs: vec![u.len()],
            rhs: vec![v.len()],
        });
    }
    Ok(())
}

/// Squared Euclidean distance, the `d` of the margin losses.
pub fn euclidean_sq_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u, v)?;
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Approximate average Hamming similarity of tanh-squashed vectors, in [-1, 1].
pub fn hamming_similarity_approx(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u, v)?;
    let h = u.len() as f64;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| a.tanh() * b.tanh())
        .sum::<f64>()
        / h)
}

/// max{0, gamma - t(1 - d)}
pub fn pair_margin_loss(d: f64, t: i8, gamma: f64) -> f64 {
    (gamma - t as f64 * (1.0 - d)).max(0.0)
}

/// max{0, d_pos - d_neg + gamma}
pub fn triplet_margin_loss(d_pos: f64, d_neg: f64, gamma: f64) -> f64 {
    (d_pos - d_neg + gamma).max(0.0)
}

/// (t - s)^2 / 4, bounded in [0, 1] for s in [-1, 1]
pub fn hamming_pair_loss(s: f64, t: i8) -> f64 {
    let diff = t as f64 - s;
    diff * diff / 4.0
}

/// ((s_pos - 1)^2 + (s_neg + 1)^2) / 8, bounded in [0, 1]
pub fn hamming_triplet_loss(s_pos: f64, s_neg: f64) -> f64 {
    ((s_pos - 1.0) * (s_pos - 1.0) + (s_neg + 1.0) * (s_neg + 1.0)) / 8.0
}

/// Evaluation score for ranking: 1 - d for the Euclidean family, the
/// approximate Hamming similarity otherwise. Higher means more similar.
pub fn pair_score(u: &[f64], v: &[f64], family: LossFamily) -> Result<f64> {
    match family {
        LossFamily::MarginEuclidean => Ok(1.0 - euclidean_sq_distance(u, v)?),
        LossFamily::Hamming => hamming_similarity_approx(u, v),
    }
}

/// [P x 1] squared Euclidean distances between row-aligned graph vectors.
pub fn distances_on_tape(tape: &mut Tape, hg1: NodeId, hg2: NodeId) -> Result<NodeId> {
    let diff = tape.sub(hg1, hg2)?;
    let sq = tape.mul(diff, diff)?;
    tape.row_sum(sq)
}

/// [P x 1] approximate Hamming similarities between row-aligned graph vectors.
pub fn hamming_on_tape(tape: &mut Tape, hg1: NodeId, hg2: NodeId) -> Result<NodeId> {
    let h = tape.value(hg1).cols() as f64;
    let t1 = tape.tanh(hg1);
    let t2 = tape.tanh(hg2);
    let prod = tape.mul(t1, t2)?;
    let sums = tape.row_sum(prod)?;
    Ok(tape.scale(sums, 1.0 / h))
}

/// Mean pair loss over a batch; labels are +-1 row-aligned with the vectors.
pub fn pair_loss_on_tape(
    tape: &mut Tape,
    hg1: NodeId,
    hg2: NodeId,
    labels: &[i8],
    cfg: &LossConfig,
) -> Result<NodeId> {
    let p = tape.value(hg1).rows();
    assert_eq!(labels.len(), p);
    let t_col = crate::tensor::Tensor::column(
        &labels.iter().map(|&l| l as f64).collect::<Vec<_>>(),
    );
    let t = tape.constant(t_col);
    let per_pair = match cfg.family {
        LossFamily::MarginEuclidean => {
            // max{0, gamma - t(1 - d)} = max{0, gamma - t + t*d}
            let d = distances_on_tape(tape, hg1, hg2)?;
            let td = tape.mul(t, d)?;
            let shifted = tape.sub(td, t)?;
            let arg = tape.add_scalar(shifted, cfg.margin);
            tape.relu(arg)
        }
        LossFamily::Hamming => {
            let s = hamming_on_tape(tape, hg1, hg2)?;
            let diff = tape.sub(t, s)?;
            let sq = tape.mul(diff, diff)?;
            tape.scale(sq, 0.25)
        }
    };
    let total = tape.sum_all(per_pair);
    Ok(tape.scale(total, 1.0 / p as f64))
}

/// Mean triplet loss; rows of the three inputs are (anchor, positive-side
/// anchor copy is implicit) aligned triplets.
pub fn triplet_loss_on_tape(
    tape: &mut Tape,
    hg_anchor_pos: (NodeId, NodeId),
    hg_anchor_neg: (NodeId, NodeId),
    cfg: &LossConfig,
) -> Result<NodeId> {
    let p = tape.value(hg_anchor_pos.0).rows();
    let per_triplet = match cfg.family {
        LossFamily::MarginEuclidean => {
            let d_pos = distances_on_tape(tape, hg_anchor_pos.0, hg_anchor_pos.1)?;
            let d_neg = distances_on_tape(tape, hg_anchor_neg.0, hg_anchor_neg.1)?;
            let diff = tape.sub(d_pos, d_neg)?;
            let arg = tape.add_scalar(diff, cfg.margin);
            tape.relu(arg)
        }
        LossFamily::Hamming => {
            let s_pos = hamming_on_tape(tape, hg_anchor_pos.0, hg_anchor_pos.1)?;
            let s_neg = hamming_on_tape(tape, hg_anchor_neg.0, hg_anchor_neg.1)?;
            let pos_shift = tape.add_scalar(s_pos, -1.0);
            let pos_sq = tape.mul(pos_shift, pos_shift)?;
            let neg_shift = tape.add_scalar(s_neg, 1.0);
            let neg_sq = tape.mul(neg_shift, neg_shift)?;
            let sum = tape.add(pos_sq, neg_sq)?;
            tape.scale(sum, 0.125)
        }
    };
    let total = tape.sum_all(per_triplet);
    Ok(tape.scale(total, 1.0 / p as f64))
}
