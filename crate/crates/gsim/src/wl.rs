//! Weisfeiler-Lehman subtree kernel baseline. Nodes start labeled by degree;
//! each iteration relabels a node by its (label, sorted neighbor labels)
//! signature through a dictionary shared across the pair being compared.

use crate::graph::Graph;
use std::collections::{BTreeMap, HashMap};

/// Compressed-label dictionary. Ids are assigned in first-seen order, which
/// is deterministic given the iteration order over nodes.
#[derive(Default)]
pub struct WlLabeler {
    dict: HashMap<(u64, Vec<u64>), u64>,
    next_id: u64,
}

impl WlLabeler {
    pub fn new() -> Self {
        WlLabeler::default()
    }

    fn compress(&mut self, signature: (u64, Vec<u64>)) -> u64 {
        if let Some(&id) = self.dict.get(&signature) {
            return id;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.dict.insert(signature, id);
        id
    }

    /// Per-node label sequences for t = 0..=T; labels[t][i] is node i's label
    /// after t refinement rounds. The t=0 label is the node degree.
    pub fn iterate_labels(&mut self, g: &Graph, iterations: usize) -> Vec<Vec<u64>> {
        let adj = g.neighbors();
        let mut labels: Vec<Vec<u64>> = Vec::with_capacity(iterations + 1);
        labels.push(g.degrees().iter().map(|&d| d as u64).collect());
        for t in 0..iterations {
            let prev = &labels[t];
            let next: Vec<u64> = (0..g.n)
                .map(|i| {
                    let mut neigh: Vec<u64> = adj[i].iter().map(|&j| prev[j]).collect();
                    neigh.sort_unstable();
                    self.compress((prev[i], neigh))
                })
                .collect();
            labels.push(next);
        }
        labels
    }
}

pub fn wl_iterate_labels(g: &Graph, iterations: usize) -> Vec<Vec<u64>> {
    WlLabeler::new().iterate_labels(g, iterations)
}

/// Counts of every (iteration, label) pair seen across all rounds.
pub fn wl_feature_histogram(labels: &[Vec<u64>]) -> BTreeMap<(usize, u64), u64> {
    let mut hist = BTreeMap::new();
    for (t, round) in labels.iter().enumerate() {
        for &l in round {
            *hist.entry((t, l)).or_insert(0) += 1;
        }
    }
    hist
}

fn dot(a: &BTreeMap<(usize, u64), u64>, b: &BTreeMap<(usize, u64), u64>) -> f64 {
    a.iter()
        .filter_map(|(k, &va)| b.get(k).map(|&vb| va as f64 * vb as f64))
        .sum()
}

/// Cosine-normalized WL kernel with a label dictionary built jointly on the
/// pair; in [0, 1], and exactly 1 for isomorphic graphs.
pub fn wl_kernel_similarity(g1: &Graph, g2: &Graph, iterations: usize) -> f64 {
    let mut labeler = WlLabeler::new();
    let h1 = wl_feature_histogram(&labeler.iterate_labels(g1, iterations));
    let h2 = wl_feature_histogram(&labeler.iterate_labels(g2, iterations));
    let k12 = dot(&h1, &h2);
    let k11 = dot(&h1, &h1);
    let k22 = dot(&h2, &h2);
    if k11 == 0.0 || k22 == 0.0 {
        return 0.0;
    }
    k12 / (k11 * k22).sqrt()
}
