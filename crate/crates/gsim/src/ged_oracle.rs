//! Exhaustive graph edit distance for small graphs: minimum over all node
//! bijections of the edge-set symmetric difference, plus unit node
//! insertion/deletion costs when sizes differ. Verification-only; the
//! training task never needs it.

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const ORACLE_MAX_NODES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleResult {
    Distance(usize),
    ExceedsMaxCost,
}

/// Each edge insertion or deletion costs 1 (so one edge substitution costs
/// 2); each node insertion or deletion costs 1. Smaller graphs are padded
/// with isolated nodes before the bijection search.
pub fn exact_edit_distance_oracle(g1: &Graph, g2: &Graph, max_cost: usize) -> Result<OracleResult> {
    let n = g1.n.max(g2.n);
    if n > ORACLE_MAX_NODES {
        return Err(Error::OracleTooLarge {
            max: ORACLE_MAX_NODES,
            got: n,
        });
    }
    let node_cost = g1.n.abs_diff(g2.n);
    let adj1 = adjacency_masks(g1, n);
    let adj2 = adjacency_masks(g2, n);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = usize::MAX;
    permute(&mut perm, 0, &mut |p| {
        let cost = mismatched_edges(&adj1, &adj2, p);
        if cost < best {
            best = cost;
        }
    });
    let total = best + node_cost;
    if total > max_cost {
        Ok(OracleResult::ExceedsMaxCost)
    } else {
        Ok(OracleResult::Distance(total))
    }
}

fn adjacency_masks(g: &Graph, n: usize) -> Vec<u16> {
    let mut adj = vec![0u16; n];
    for &(i, j) in &g.edges {
        adj[i] |= 1 << j;
        adj[j] |= 1 << i;
    }
    adj
}

/// Edge mismatches between g1 and g2 under the bijection i -> perm[i].
fn mismatched_edges(adj1: &[u16], adj2: &[u16], perm: &[usize]) -> usize {
    let n = adj1.len();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let in1 = adj1[i] >> j & 1;
            let in2 = adj2[perm[i]] >> perm[j] & 1;
            count += (in1 != in2) as usize;
        }
    }
    count
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
