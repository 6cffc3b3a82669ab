//! Graph embedding network: encoder, T propagation layers, and a gated
//! aggregator producing one vector per graph.

use crate::batch::GraphBatch;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{gru_apply, init_gru, init_mlp, mlp_apply, MlpSpec, ParamStore};
use crate::tape::{NodeId, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeUpdateKind {
    Gru,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionSimilarity {
    DotProduct,
    NegSquaredEuclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_node_state_dim")]
    pub node_state_dim: usize,
    #[serde(default = "default_graph_vector_dim")]
    pub graph_vector_dim: usize,
    #[serde(default = "default_propagation_steps")]
    pub num_propagation_steps: usize,
    #[serde(default)]
    pub share_propagation_params: bool,
    #[serde(default = "default_node_update_kind")]
    pub node_update_kind: NodeUpdateKind,
    #[serde(default = "default_attention_similarity")]
    pub attention_similarity: AttentionSimilarity,
    #[serde(default = "default_feature_dim")]
    pub node_feature_dim: usize,
    #[serde(default = "default_feature_dim")]
    pub edge_feature_dim: usize,
}

fn default_node_state_dim() -> usize {
    32
}
fn default_graph_vector_dim() -> usize {
    128
}
fn default_propagation_steps() -> usize {
    5
}
fn default_node_update_kind() -> NodeUpdateKind {
    NodeUpdateKind::Gru
}
fn default_attention_similarity() -> AttentionSimilarity {
    AttentionSimilarity::DotProduct
}
fn default_feature_dim() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_state_dim: default_node_state_dim(),
            graph_vector_dim: default_graph_vector_dim(),
            num_propagation_steps: default_propagation_steps(),
            share_propagation_params: false,
            node_update_kind: default_node_update_kind(),
            attention_similarity: default_attention_similarity(),
            node_feature_dim: default_feature_dim(),
            edge_feature_dim: default_feature_dim(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_state_dim == 0 || self.graph_vector_dim == 0 {
            return Err(Error::Config(
                "node_state_dim and graph_vector_dim must be >= 1".into(),
            ));
        }
        if self.node_feature_dim == 0 || self.edge_feature_dim == 0 {
            return Err(Error::Config("feature dims must be >= 1".into()));
        }
        Ok(())
    }

    /// f_msg: one hidden layer, hidden and output width 2D, ReLU hidden.
    pub fn msg_spec(&self) -> MlpSpec {
        let d = self.node_state_dim;
        MlpSpec::new(&[2 * d + self.edge_feature_dim, 2 * d, 2 * d])
    }

    pub fn msg_dim(&self) -> usize {
        2 * self.node_state_dim
    }

    pub fn prop_prefix(&self, t: usize) -> String {
        if self.share_propagation_params {
            "prop.shared".to_string()
        } else {
            format!("prop.{t}")
        }
    }

    fn node_update_spec(&self, input_dim: usize) -> MlpSpec {
        let d = self.node_state_dim;
        MlpSpec::new(&[d + input_dim, 2 * d, d])
    }
}

/// Weight scale for f_msg, which is initialized small to keep summed message
/// magnitudes under control at the start of training.
const MSG_INIT_SCALE: f64 = 0.1;

pub(crate) fn init_propagation(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    update_input_dim: usize,
    rng: &mut impl Rng,
) {
    let steps = if cfg.share_propagation_params {
        1
    } else {
        cfg.num_propagation_steps
    };
    for t in 0..steps {
        let prefix = cfg.prop_prefix(t);
        init_mlp(
            store,
            &format!("{prefix}.msg"),
            &cfg.msg_spec(),
            MSG_INIT_SCALE,
            rng,
        );
        match cfg.node_update_kind {
            NodeUpdateKind::Gru => init_gru(
                store,
                &format!("{prefix}.node"),
                cfg.node_state_dim,
                update_input_dim,
                rng,
            ),
            NodeUpdateKind::Mlp => init_mlp(
                store,
                &format!("{prefix}.node"),
                &cfg.node_update_spec(update_input_dim),
                1.0,
                rng,
            ),
        }
    }
}

pub(crate) fn init_aggregator(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut impl Rng) {
    let (d, h) = (cfg.node_state_dim, cfg.graph_vector_dim);
    init_mlp(store, "agg.gate", &MlpSpec::linear(d, h), 1.0, rng);
    init_mlp(store, "agg.transform", &MlpSpec::linear(d, h), 1.0, rng);
    init_mlp(store, "agg.out", &MlpSpec::new(&[h, h, h]), 1.0, rng);
}

/// Fresh parameters for the embedding model. GRU input is the message sum.
pub fn init_embedding_params(cfg: &ModelConfig, rng: &mut impl Rng) -> ParamStore {
    let mut store = ParamStore::new();
    init_mlp(
        &mut store,
        "encoder.node",
        &MlpSpec::linear(cfg.node_feature_dim, cfg.node_state_dim),
        1.0,
        rng,
    );
    init_propagation(&mut store, cfg, cfg.msg_dim(), rng);
    init_aggregator(&mut store, cfg, rng);
    store
}

/// h^(0) via a linear node encoder; edge vectors pass through unchanged.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    batch: &GraphBatch,
) -> Result<(NodeId, NodeId)> {
    let x = tape.constant(batch.node_features.clone());
    let h0 = mlp_apply(
        tape,
        store,
        "encoder.node",
        &MlpSpec::linear(cfg.node_feature_dim, cfg.node_state_dim),
        x,
    )?;
    let e = tape.constant(batch.edge_features.clone());
    Ok((h0, e))
}

/// One within-graph message passing round:
///   m_{j->i} = f_msg([h_i, h_j, e_ij]) over all directed pairs,
///   h_i' = f_node(h_i, sum_j m_{j->i}).
pub fn propagate_step(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    t: usize,
    h: NodeId,
    e: NodeId,
    batch: &GraphBatch,
) -> Result<NodeId> {
    let msg_sum = message_sums(tape, store, cfg, t, h, e, batch)?;
    node_update(tape, store, cfg, t, h, msg_sum)
}

pub(crate) fn message_sums(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    t: usize,
    h: NodeId,
    e: NodeId,
    batch: &GraphBatch,
) -> Result<NodeId> {
    let prefix = cfg.prop_prefix(t);
    let h_dst = tape.gather_rows(h, &batch.msg_dst)?;
    let h_src = tape.gather_rows(h, &batch.msg_src)?;
    let inp = tape.concat_cols(&[h_dst, h_src, e])?;
    let msgs = mlp_apply(tape, store, &format!("{prefix}.msg"), &cfg.msg_spec(), inp)?;
    tape.segment_sum(msgs, &batch.msg_dst, batch.num_nodes)
}

pub(crate) fn node_update(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    t: usize,
    h: NodeId,
    input: NodeId,
) -> Result<NodeId> {
    let prefix = cfg.prop_prefix(t);
    match cfg.node_update_kind {
        NodeUpdateKind::Gru => gru_apply(tape, store, &format!("{prefix}.node"), h, input),
        NodeUpdateKind::Mlp => {
            let cat = tape.concat_cols(&[h, input])?;
            let input_dim = tape.value(input).cols();
            mlp_apply(
                tape,
                store,
                &format!("{prefix}.node"),
                &cfg.node_update_spec(input_dim),
                cat,
            )
        }
    }
}

/// Gated weighted-sum readout followed by a final graph MLP.
pub fn aggregate(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    h: NodeId,
    batch: &GraphBatch,
) -> Result<NodeId> {
    let (d, hdim) = (cfg.node_state_dim, cfg.graph_vector_dim);
    let gate_logits = mlp_apply(tape, store, "agg.gate", &MlpSpec::linear(d, hdim), h)?;
    let gates = tape.sigmoid(gate_logits);
    let transformed = mlp_apply(tape, store, "agg.transform", &MlpSpec::linear(d, hdim), h)?;
    let gated = tape.mul(gates, transformed)?;
    let per_graph = tape.segment_sum(gated, &batch.node_graph, batch.num_graphs)?;
    mlp_apply(
        tape,
        store,
        "agg.out",
        &MlpSpec::new(&[hdim, hdim, hdim]),
        per_graph,
    )
}

/// encoder -> T propagation steps -> aggregator; returns [num_graphs x H].
pub fn embed_batch(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    batch: &GraphBatch,
) -> Result<NodeId> {
    let (mut h, e) = encode(tape, store, cfg, batch)?;
    for t in 0..cfg.num_propagation_steps {
        h = propagate_step(tape, store, cfg, t, h, e, batch)?;
    }
    aggregate(tape, store, cfg, h, batch)
}

/// Embeds a single graph with a throwaway tape.
pub fn embed_graph(store: &ParamStore, cfg: &ModelConfig, g: &Graph) -> Result<Vec<f64>> {
    let batch = GraphBatch::new(&[g])?;
    let mut tape = Tape::new();
    let out = embed_batch(&mut tape, store, cfg, &batch)?;
    Ok(tape.value(out).data().to_vec())
}
