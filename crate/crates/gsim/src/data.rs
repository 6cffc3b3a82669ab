//! Synthetic graph edit distance task: seeded binomial graph sampling and
//! edge-substitution perturbations.

use crate::error::{Error, Result};
use crate::graph::{Graph, LabeledPair, Triplet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntOrRange {
    Scalar(usize),
    /// inclusive [lo, hi], sampled uniformly per graph
    Range([usize; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FloatOrRange {
    Scalar(f64),
    Range([f64; 2]),
}

impl IntOrRange {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            IntOrRange::Scalar(v) => v,
            IntOrRange::Range([lo, hi]) => rng.gen_range(lo..=hi),
        }
    }

    fn min(&self) -> usize {
        match *self {
            IntOrRange::Scalar(v) => v,
            IntOrRange::Range([lo, _]) => lo,
        }
    }
}

impl FloatOrRange {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            FloatOrRange::Scalar(v) => v,
            FloatOrRange::Range([lo, hi]) => rng.gen_range(lo..=hi),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            FloatOrRange::Scalar(v) => (v, v),
            FloatOrRange::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(default = "default_n")]
    pub n: IntOrRange,
    #[serde(default = "default_p")]
    pub p: FloatOrRange,
    #[serde(default = "default_k_p")]
    pub k_p: usize,
    #[serde(default = "default_k_n")]
    pub k_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> IntOrRange {
    IntOrRange::Scalar(20)
}
fn default_p() -> FloatOrRange {
    FloatOrRange::Scalar(0.2)
}
fn default_k_p() -> usize {
    1
}
fn default_k_n() -> usize {
    2
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n: default_n(),
            p: default_p(),
            k_p: default_k_p(),
            k_n: default_k_n(),
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let (p_lo, p_hi) = self.p.bounds();
        if !(0.0..=1.0).contains(&p_lo) || !(0.0..=1.0).contains(&p_hi) || p_lo > p_hi {
            return Err(Error::Config("edge probability p must lie in [0, 1]".into()));
        }
        if self.k_p < 1 || self.k_p >= self.k_n {
            return Err(Error::Config("need 1 <= k_p < k_n".into()));
        }
        if self.n.min() < 2 {
            return Err(Error::Config("need n >= 2".into()));
        }
        Ok(())
    }
}

/// Seed-derivation domains, so every record is a pure function of
/// (seed, domain, index) and generation order never matters.
pub mod domain {
    pub const INIT: u64 = 0;
    pub const EVAL_PAIR: u64 = 1;
    pub const EVAL_TRIPLET: u64 = 2;
    pub const TRAIN: u64 = 3;
}

pub fn record_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | index);
    rng
}

/// Binomial (Erdos-Renyi) graph: each of the n(n-1)/2 unordered pairs is an
/// edge independently with probability p.
pub fn sample_er_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges)
}

/// Removes k distinct existing edges and adds k distinct absent ones, keeping
/// node and edge counts unchanged.
pub fn substitute_edges(g: &Graph, k: usize, rng: &mut impl Rng) -> Result<Graph> {
    if g.num_edges() < k {
        return Err(Error::Substitution(format!(
            "graph has {} edges, need at least {k} to remove",
            g.num_edges()
        )));
    }
    let present: std::collections::HashSet<(usize, usize)> = g.edges.iter().cloned().collect();
    let mut absent: Vec<(usize, usize)> = Vec::new();
    for i in 0..g.n {
        for j in (i + 1)..g.n {
            if !present.contains(&(i, j)) {
                absent.push((i, j));
            }
        }
    }
    if absent.len() < k {
        return Err(Error::Substitution(format!(
            "graph has only {} absent pairs, need {k} to add",
            absent.len()
        )));
    }

    let mut edge_idx: Vec<usize> = (0..g.num_edges()).collect();
    edge_idx.shuffle(rng);
    let removed: std::collections::HashSet<usize> = edge_idx[..k].iter().cloned().collect();
    absent.shuffle(rng);

    let mut edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, e)| *e)
        .collect();
    edges.extend_from_slice(&absent[..k]);
    edges.sort_unstable();
    Ok(Graph::new(g.n, edges))
}

const MAX_RETRIES: usize = 64;

fn sample_base_and_partner(
    cfg: &DataConfig,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Graph, Graph)> {
    let mut last_err = None;
    for _ in 0..MAX_RETRIES {
        let n = cfg.n.sample(rng);
        let p = cfg.p.sample(rng);
        let g1 = sample_er_graph(n, p, rng);
        match substitute_edges(&g1, k, rng) {
            Ok(g2) => return Ok((g1, g2)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Substitution("retries exhausted".into())))
}

/// A labeled pair: the partner differs from G1 by k_p (positive) or k_n
/// (negative) edge substitutions. The label is drawn with equal probability.
pub fn make_training_pair(cfg: &DataConfig, rng: &mut impl Rng) -> Result<LabeledPair> {
    let label: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
    make_pair_with_label(cfg, label, rng)
}

pub fn make_pair_with_label(cfg: &DataConfig, label: i8, rng: &mut impl Rng) -> Result<LabeledPair> {
    let k = if label > 0 { cfg.k_p } else { cfg.k_n };
    let (g1, g2) = sample_base_and_partner(cfg, k, rng)?;
    Ok(LabeledPair { g1, g2, label })
}

pub fn make_training_triplet(cfg: &DataConfig, rng: &mut impl Rng) -> Result<Triplet> {
    let mut last_err = None;
    for _ in 0..MAX_RETRIES {
        let n = cfg.n.sample(rng);
        let p = cfg.p.sample(rng);
        let g1 = sample_er_graph(n, p, rng);
        let g2 = match substitute_edges(&g1, cfg.k_p, rng) {
            Ok(g) => g,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let g3 = match substitute_edges(&g1, cfg.k_n, rng) {
            Ok(g) => g,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        return Ok(Triplet { g1, g2, g3 });
    }
    Err(last_err.unwrap_or_else(|| Error::Substitution("retries exhausted".into())))
}

pub const EVAL_SET_SIZE: usize = 1000;

/// Fixed evaluation sets: 1000 pairs balanced exactly 500/500 (labels
/// alternate by index) and 1000 triplets, all derived per-record from the
/// config seed.
pub fn build_eval_sets(cfg: &DataConfig) -> Result<(Vec<LabeledPair>, Vec<Triplet>)> {
    let mut pairs = Vec::with_capacity(EVAL_SET_SIZE);
    for i in 0..EVAL_SET_SIZE {
        let mut rng = record_rng(cfg.seed, domain::EVAL_PAIR, i as u64);
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        pairs.push(make_pair_with_label(cfg, label, &mut rng)?);
    }
    let mut triplets = Vec::with_capacity(EVAL_SET_SIZE);
    for i in 0..EVAL_SET_SIZE {
        let mut rng = record_rng(cfg.seed, domain::EVAL_TRIPLET, i as u64);
        triplets.push(make_training_triplet(cfg, &mut rng)?);
    }
    Ok((pairs, triplets))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DataConfig,
    pub num_pairs: usize,
    pub num_triplets: usize,
    pub pairs_file: String,
    pub triplets_file: String,
}

/// Writes eval_pairs.jsonl, eval_triplets.jsonl and a manifest.json that
/// records the generating config.
pub fn write_eval_sets(cfg: &DataConfig, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir)?;
    let (pairs, triplets) = build_eval_sets(cfg)?;
    let pairs_file = "eval_pairs.jsonl".to_string();
    let triplets_file = "eval_triplets.jsonl".to_string();
    crate::graph::write_pairs(&out_dir.join(&pairs_file), &pairs)?;
    crate::graph::write_triplets(&out_dir.join(&triplets_file), &triplets)?;
    let manifest = DatasetManifest {
        config: cfg.clone(),
        num_pairs: pairs.len(),
        num_triplets: triplets.len(),
        pairs_file,
        triplets_file,
    };
    let file = std::fs::File::create(out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        let mut rng = record_rng(7, 9, 0);
        assert_eq!(sample_er_graph(5, 0.0, &mut rng).num_edges(), 0);
        assert_eq!(sample_er_graph(4, 1.0, &mut rng).num_edges(), 6);
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // E[edges] = 190 * 0.2 = 38 at n=20, p=0.2
        let mut total = 0usize;
        for i in 0..10_000u64 {
            let mut rng = record_rng(11, 42, i);
            total += sample_er_graph(20, 0.2, &mut rng).num_edges();
        }
        let mean = total as f64 / 10_000.0;
        assert!((mean - 38.0).abs() < 1.0, "mean edge count {mean}");
    }

    #[test]
    fn substitute_on_saturated_triangle_fails() {
        let g = Graph::new(3, vec![(0, 1), (0, 2), (1, 2)]);
        let mut rng = record_rng(0, 0, 0);
        assert!(substitute_edges(&g, 1, &mut rng).is_err());
    }

    #[test]
    fn substitute_on_path_changes_exactly_one_edge() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]);
        let mut rng = record_rng(1, 0, 0);
        let g2 = substitute_edges(&g, 1, &mut rng).unwrap();
        assert_eq!(g2.num_edges(), 2);
        let orig: std::collections::HashSet<_> = g.edges.iter().collect();
        let changed = g2.edges.iter().filter(|e| !orig.contains(e)).count();
        assert_eq!(changed, 1);
    }

    #[test]
    fn training_labels_roughly_balanced() {
        let cfg = DataConfig::default();
        let mut pos = 0usize;
        for i in 0..10_000u64 {
            let mut rng = record_rng(3, domain::TRAIN, i);
            if make_training_pair(&cfg, &mut rng).unwrap().label > 0 {
                pos += 1;
            }
        }
        let frac = pos as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "positive fraction {frac}");
    }

    #[test]
    fn same_seed_gives_identical_records() {
        let cfg = DataConfig::default();
        let a = make_training_pair(&cfg, &mut record_rng(5, domain::TRAIN, 123)).unwrap();
        let b = make_training_pair(&cfg, &mut record_rng(5, domain::TRAIN, 123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_sets_are_balanced_and_sized() {
        let cfg = DataConfig {
            n: IntOrRange::Scalar(8),
            p: FloatOrRange::Scalar(0.3),
            ..DataConfig::default()
        };
        let (pairs, triplets) = build_eval_sets(&cfg).unwrap();
        assert_eq!(pairs.len(), EVAL_SET_SIZE);
        assert_eq!(triplets.len(), EVAL_SET_SIZE);
        let pos = pairs.iter().filter(|p| p.label > 0).count();
        assert_eq!(pos, EVAL_SET_SIZE / 2);
    }

    #[test]
    fn positive_pair_differs_in_two_edge_set_elements() {
        let cfg = DataConfig::default();
        for i in 0..50u64 {
            let mut rng = record_rng(17, domain::TRAIN, i);
            let pair = make_pair_with_label(&cfg, 1, &mut rng).unwrap();
            let e1: std::collections::HashSet<_> = pair.g1.edges.iter().collect();
            let e2: std::collections::HashSet<_> = pair.g2.edges.iter().collect();
            assert_eq!(e1.symmetric_difference(&e2).count(), 2);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = DataConfig::default();
        cfg.k_p = 2;
        cfg.k_n = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = DataConfig::default();
        cfg.p = FloatOrRange::Scalar(1.5);
        assert!(cfg.validate().is_err());
    }
}
