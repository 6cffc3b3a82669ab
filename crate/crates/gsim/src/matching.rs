//! Graph Matching Network: joint propagation over a pair of graphs with a
//! cross-graph attention term feeding each node update.

use crate::batch::GraphBatch;
use crate::embed::{
    self, encode, init_aggregator, init_propagation, AttentionSimilarity, ModelConfig,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::LossFamily;
use crate::nn::{init_mlp, MlpSpec, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Cross-graph attention weights for one propagation step, one matrix per
/// direction. Row i of `g1_to_g2` is node i of graph 1 attending over graph 2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepAttention {
    pub step: usize,
    pub g1_to_g2: Vec<Vec<f64>>,
    pub g2_to_g1: Vec<Vec<f64>>,
}

pub type AttentionRecord = Vec<StepAttention>;

#[derive(Clone, Debug)]
pub struct MatchResult {
    pub h_g1: Vec<f64>,
    pub h_g2: Vec<f64>,
    pub score: f64,
    pub attention: Option<AttentionRecord>,
}

/// Fresh parameters for the matching model. The GRU consumes the
/// concatenation of the message sum and the cross-graph mu sum.
pub fn init_matching_params(cfg: &ModelConfig, rng: &mut impl Rng) -> ParamStore {
    let mut store = ParamStore::new();
    init_mlp(
        &mut store,
        "encoder.node",
        &MlpSpec::linear(cfg.node_feature_dim, cfg.node_state_dim),
        1.0,
        rng,
    );
    init_propagation(&mut store, cfg, cfg.msg_dim() + cfg.node_state_dim, rng);
    init_aggregator(&mut store, cfg, rng);
    store
}

pub struct CrossAttention {
    pub mu1: NodeId,
    pub mu2: NodeId,
    pub a_1to2: NodeId,
    pub a_2to1: NodeId,
    /// number of pairwise similarity evaluations performed
    pub similarity_ops: usize,
}

/// Similarity logits between every node of graph 1 (rows) and graph 2 (cols).
/// Both supported choices are symmetric in their arguments.
fn similarity_matrix(
    tape: &mut Tape,
    s1: NodeId,
    s2: NodeId,
    sim: AttentionSimilarity,
) -> Result<NodeId> {
    match sim {
        AttentionSimilarity::DotProduct => {
            let s2t = tape.transpose(s2)?;
            tape.matmul(s1, s2t)
        }
        AttentionSimilarity::NegSquaredEuclidean => {
            // -|u - v|^2 = 2 u.v - |u|^2 - |v|^2
            let s2t = tape.transpose(s2)?;
            let dots = tape.matmul(s1, s2t)?;
            let two_dots = tape.scale(dots, 2.0);
            let sq1 = {
                let s = tape.mul(s1, s1)?;
                let r = tape.row_sum(s)?;
                tape.scale(r, -1.0)
            };
            let sq2 = {
                let s = tape.mul(s2, s2)?;
                let r = tape.row_sum(s)?;
                let n = tape.scale(r, -1.0);
                tape.transpose(n)?
            };
            let t = tape.add_col(two_dots, sq1)?;
            tape.add_row(t, sq2)
        }
    }
}

fn row_softmax(tape: &mut Tape, logits: NodeId) -> Result<NodeId> {
    let (rows, cols) = {
        let v = tape.value(logits);
        (v.rows(), v.cols())
    };
    let ids: Vec<usize> = (0..rows * cols).map(|k| k / cols).collect();
    tape.segment_softmax(logits, &ids, rows)
}

/// Attention in both directions plus the per-node mu sums
/// `sum_j mu_{j->i} = h_i - sum_j a_{j->i} h_j`.
pub fn cross_attention(
    tape: &mut Tape,
    s1: NodeId,
    s2: NodeId,
    sim: AttentionSimilarity,
) -> Result<CrossAttention> {
    let (n1, n2) = (tape.value(s1).rows(), tape.value(s2).rows());
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptyGraph(
            "cross-graph attention is undefined for an empty graph",
        ));
    }
    let logits_12 = similarity_matrix(tape, s1, s2, sim)?;
    let a_1to2 = row_softmax(tape, logits_12)?;
    let attended_1 = tape.matmul(a_1to2, s2)?;
    let mu1 = tape.sub(s1, attended_1)?;

    let logits_21 = tape.transpose(logits_12)?;
    let a_2to1 = row_softmax(tape, logits_21)?;
    let attended_2 = tape.matmul(a_2to1, s1)?;
    let mu2 = tape.sub(s2, attended_2)?;

    Ok(CrossAttention {
        mu1,
        mu2,
        a_1to2,
        a_2to1,
        similarity_ops: 2 * n1 * n2,
    })
}

/// Test hook: mu sums under an externally supplied attention matrix pair.
pub fn mu_sums_given_attention(
    states1: &Tensor,
    states2: &Tensor,
    a_1to2: &Tensor,
    a_2to1: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let att1 = a_1to2.matmul(states2)?;
    let att2 = a_2to1.matmul(states1)?;
    let sub = |a: &Tensor, b: &Tensor| {
        let data: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x - y)
            .collect();
        Tensor::from_vec(a.shape(), data)
    };
    Ok((sub(states1, &att1)?, sub(states2, &att2)?))
}

/// Graphs of a pair batch are interleaved: graph 2p is the left element of
/// pair p and graph 2p+1 the right element.
pub struct PairBatch {
    pub batch: GraphBatch,
    pub num_pairs: usize,
}

impl PairBatch {
    pub fn new(pairs: &[(&Graph, &Graph)]) -> Result<Self> {
        let mut graphs = Vec::with_capacity(pairs.len() * 2);
        for (g1, g2) in pairs {
            if g1.n == 0 || g2.n == 0 {
                return Err(Error::EmptyGraph("matching model requires non-empty graphs"));
            }
            graphs.push(*g1);
            graphs.push(*g2);
        }
        Ok(PairBatch {
            batch: GraphBatch::new(&graphs)?,
            num_pairs: pairs.len(),
        })
    }
}

pub struct MatchStep {
    pub h: NodeId,
    /// per pair: attention node ids (1->2, 2->1)
    pub attention: Vec<(NodeId, NodeId)>,
    pub similarity_ops: usize,
}

/// One joint propagation round: within-graph messages exactly as in the
/// embedding model, plus the cross-graph mu term, both fed to the updater.
pub fn match_propagate_step(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    t: usize,
    h: NodeId,
    e: NodeId,
    pb: &PairBatch,
) -> Result<MatchStep> {
    let msg_sum = embed::message_sums(tape, store, cfg, t, h, e, &pb.batch)?;

    let mut mu_parts = Vec::with_capacity(pb.num_pairs * 2);
    let mut attention = Vec::with_capacity(pb.num_pairs);
    let mut similarity_ops = 0;
    for p in 0..pb.num_pairs {
        let (ga, gb) = (2 * p, 2 * p + 1);
        let s1 = tape.slice_rows(h, pb.batch.node_offset[ga], pb.batch.graph_size(ga))?;
        let s2 = tape.slice_rows(h, pb.batch.node_offset[gb], pb.batch.graph_size(gb))?;
        let att = cross_attention(tape, s1, s2, cfg.attention_similarity)?;
        mu_parts.push(att.mu1);
        mu_parts.push(att.mu2);
        attention.push((att.a_1to2, att.a_2to1));
        similarity_ops += att.similarity_ops;
    }
    let mu_all = tape.concat_rows(&mu_parts)?;
    let input = tape.concat_cols(&[msg_sum, mu_all])?;
    let h_next = embed::node_update(tape, store, cfg, t, h, input)?;
    Ok(MatchStep {
        h: h_next,
        attention,
        similarity_ops,
    })
}

pub struct MatchOutput {
    /// [2P x H] graph vectors, interleaved like the input pairs
    pub h_graphs: NodeId,
    /// outer index: propagation step; inner: pair
    pub attention: Vec<Vec<(NodeId, NodeId)>>,
    pub similarity_ops: usize,
}

/// encode both sides -> T matching propagation steps -> shared aggregator.
pub fn match_batch(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    pb: &PairBatch,
) -> Result<MatchOutput> {
    let (mut h, e) = encode(tape, store, cfg, &pb.batch)?;
    let mut attention = Vec::with_capacity(cfg.num_propagation_steps);
    let mut similarity_ops = 0;
    for t in 0..cfg.num_propagation_steps {
        let step = match_propagate_step(tape, store, cfg, t, h, e, pb)?;
        h = step.h;
        attention.push(step.attention);
        similarity_ops += step.similarity_ops;
    }
    let h_graphs = embed::aggregate(tape, store, cfg, h, &pb.batch)?;
    Ok(MatchOutput {
        h_graphs,
        attention,
        similarity_ops,
    })
}

/// Matches one pair on a throwaway tape and scores it with the configured
/// vector-space similarity.
pub fn match_graph_pair(
    store: &ParamStore,
    cfg: &ModelConfig,
    g1: &Graph,
    g2: &Graph,
    family: LossFamily,
    record_attention: bool,
) -> Result<MatchResult> {
    let pb = PairBatch::new(&[(g1, g2)])?;
    let mut tape = Tape::new();
    let out = match_batch(&mut tape, store, cfg, &pb)?;
    let hg = tape.value(out.h_graphs);
    let h_dim = hg.cols();
    let h_g1 = hg.data()[..h_dim].to_vec();
    let h_g2 = hg.data()[h_dim..].to_vec();
    let score = crate::loss::pair_score(&h_g1, &h_g2, family)?;
    let attention = record_attention.then(|| {
        out.attention
            .iter()
            .enumerate()
            .map(|(t, pairs)| {
                let (a12, a21) = pairs[0];
                StepAttention {
                    step: t,
                    g1_to_g2: matrix_rows(tape.value(a12)),
                    g2_to_g1: matrix_rows(tape.value(a21)),
                }
            })
            .collect()
    });
    Ok(MatchResult {
        h_g1,
        h_g2,
        score,
        attention,
    })
}

fn matrix_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|r| (0..t.cols()).map(|c| t.get2(r, c)).collect())
        .collect()
}
