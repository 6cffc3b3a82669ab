//! Packs a list of graphs into one node/edge matrix block so a whole batch
//! runs through the model as a handful of large matrix products.

use crate::error::{Error, Result};
use crate::graph::{to_directed_pairs_indexed, Graph};
use crate::tensor::Tensor;

pub struct GraphBatch {
    pub num_graphs: usize,
    pub num_nodes: usize,
    /// node_offset[g]..node_offset[g+1] are the global node ids of graph g
    pub node_offset: Vec<usize>,
    /// graph id of each global node
    pub node_graph: Vec<usize>,
    /// directed message endpoints, global node indices
    pub msg_src: Vec<usize>,
    pub msg_dst: Vec<usize>,
    /// [num_nodes x d_x]; all-ones when graphs carry no node features
    pub node_features: Tensor,
    /// [num_msgs x d_e]; all-ones when graphs carry no edge features
    pub edge_features: Tensor,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let num_graphs = graphs.len();
        let node_feat_dim = feature_dim(graphs, |g| g.node_features.as_deref(), "node")?;
        let edge_feat_dim = feature_dim(graphs, |g| g.edge_features.as_deref(), "edge")?;

        let mut node_offset = Vec::with_capacity(num_graphs + 1);
        let mut node_graph = Vec::new();
        let mut msg_src = Vec::new();
        let mut msg_dst = Vec::new();
        let mut node_rows: Vec<f64> = Vec::new();
        let mut edge_rows: Vec<f64> = Vec::new();

        let mut offset = 0;
        node_offset.push(0);
        for (gi, g) in graphs.iter().enumerate() {
            for i in 0..g.n {
                node_graph.push(gi);
                match &g.node_features {
                    Some(rows) => node_rows.extend_from_slice(&rows[i]),
                    None => node_rows.extend(std::iter::repeat(1.0).take(node_feat_dim)),
                }
            }
            for (src, dst, e) in to_directed_pairs_indexed(g)? {
                msg_src.push(offset + src);
                msg_dst.push(offset + dst);
                match &g.edge_features {
                    Some(rows) => edge_rows.extend_from_slice(&rows[e]),
                    None => edge_rows.extend(std::iter::repeat(1.0).take(edge_feat_dim)),
                }
            }
            offset += g.n;
            node_offset.push(offset);
        }

        let num_msgs = msg_src.len();
        Ok(GraphBatch {
            num_graphs,
            num_nodes: offset,
            node_offset,
            node_graph,
            msg_src,
            msg_dst,
            node_features: Tensor::from_vec(&[offset, node_feat_dim], node_rows)?,
            edge_features: Tensor::from_vec(&[num_msgs, edge_feat_dim], edge_rows)?,
        })
    }

    pub fn graph_size(&self, g: usize) -> usize {
        self.node_offset[g + 1] - self.node_offset[g]
    }
}

fn feature_dim<'a>(
    graphs: &[&'a Graph],
    select: impl Fn(&'a Graph) -> Option<&'a [Vec<f64>]>,
    what: &str,
) -> Result<usize> {
    let mut dim: Option<usize> = None;
    let mut any_missing = false;
    for g in graphs {
        match select(g) {
            Some(rows) => {
                let w = rows.first().map_or(0, Vec::len);
                if let Some(d) = dim {
                    if d != w {
                        return Err(Error::Config(format!(
                            "inconsistent {what} feature widths in batch: {d} vs {w}"
                        )));
                    }
                } else {
                    dim = Some(w);
                }
            }
            None => any_missing = true,
        }
    }
    match dim {
        Some(d) if any_missing => Err(Error::Config(format!(
            "some graphs in the batch have {what} features ({d}-dim) and some do not"
        ))),
        Some(d) => Ok(d),
        // featureless graphs get the constant all-ones vector
        None => Ok(1),
    }
}
