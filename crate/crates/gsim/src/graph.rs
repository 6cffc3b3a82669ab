//! Graph representation, validation, and JSON-lines serialization.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// An undirected graph with dense node indices `0..n` and edges stored as
/// `(i, j)` with `i < j`. Feature matrices are optional; consumers substitute
/// constant all-ones vectors when they are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_features: Option<Vec<Vec<f64>>>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Graph {
            n,
            edges,
            node_features: None,
            edge_features: None,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Relabels nodes by `perm` (node i becomes perm[i]), keeping canonical
    /// edge order. Feature rows move with their nodes.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        let node_features = self.node_features.as_ref().map(|rows| {
            let mut out = vec![Vec::new(); self.n];
            for (i, row) in rows.iter().enumerate() {
                out[perm[i]] = row.clone();
            }
            out
        });
        // edge features follow the sorted edge order
        let edge_features = self.edge_features.as_ref().map(|rows| {
            let mut tagged: Vec<((usize, usize), Vec<f64>)> =
                edges.iter().cloned().zip(rows.iter().cloned()).collect();
            tagged.sort_by_key(|(e, _)| *e);
            tagged.into_iter().map(|(_, f)| f).collect()
        });
        edges.sort_unstable();
        Graph {
            n: self.n,
            edges,
            node_features,
            edge_features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub g1: Graph,
    pub g2: Graph,
    pub label: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub g1: Graph,
    pub g2: Graph,
    pub g3: Graph,
}

/// Checks all Graph invariants, reporting the first violation found.
pub fn validate_graph(g: &Graph) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for &(i, j) in &g.edges {
        if i >= g.n || j >= g.n {
            return Err(format!("edge ({i},{j}) out of range for {} nodes", g.n));
        }
        if i == j {
            return Err(format!("self-loop at node {i}"));
        }
        if i > j {
            return Err(format!("edge ({i},{j}) not stored with i<j"));
        }
        if !seen.insert((i, j)) {
            return Err(format!("duplicate edge ({i},{j})"));
        }
    }
    if let Some(nf) = &g.node_features {
        if nf.len() != g.n {
            return Err(format!(
                "node_features has {} rows for {} nodes",
                nf.len(),
                g.n
            ));
        }
        if let Some(w) = nf.first().map(Vec::len) {
            if nf.iter().any(|r| r.len() != w) {
                return Err("ragged node_features rows".to_string());
            }
        }
    }
    if let Some(ef) = &g.edge_features {
        if ef.len() != g.edges.len() {
            return Err(format!(
                "edge_features has {} rows for {} edges",
                ef.len(),
                g.edges.len()
            ));
        }
        if let Some(w) = ef.first().map(Vec::len) {
            if ef.iter().any(|r| r.len() != w) {
                return Err("ragged edge_features rows".to_string());
            }
        }
    }
    Ok(())
}

fn require_valid(g: &Graph) -> Result<()> {
    validate_graph(g).map_err(Error::InvalidGraph)
}

/// Expands each undirected edge into both orientations, sorted by (from, to).
/// The result pairs each directed edge with the index of its undirected
/// source edge, so edge features can follow the expansion.
pub fn to_directed_pairs_indexed(g: &Graph) -> Result<Vec<(usize, usize, usize)>> {
    require_valid(g)?;
    let mut out = Vec::with_capacity(2 * g.edges.len());
    for (e, &(i, j)) in g.edges.iter().enumerate() {
        out.push((i, j, e));
        out.push((j, i, e));
    }
    out.sort_unstable_by_key(|&(a, b, _)| (a, b));
    Ok(out)
}

pub fn to_directed_pairs(g: &Graph) -> Result<Vec<(usize, usize)>> {
    Ok(to_directed_pairs_indexed(g)?
        .into_iter()
        .map(|(a, b, _)| (a, b))
        .collect())
}

pub fn serialize_graph(g: &Graph) -> Result<String> {
    require_valid(g)?;
    Ok(serde_json::to_string(g)?)
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let g: Graph = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    require_valid(&g)?;
    Ok(g)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut file, r)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_graphs(path: &Path) -> Result<Vec<Graph>> {
    let graphs: Vec<Graph> = read_jsonl(path)?;
    for g in &graphs {
        require_valid(g)?;
    }
    Ok(graphs)
}

pub fn write_graphs(path: &Path, graphs: &[Graph]) -> Result<()> {
    write_jsonl(path, graphs)
}

pub fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let pairs: Vec<LabeledPair> = read_jsonl(path)?;
    for (i, p) in pairs.iter().enumerate() {
        if p.label != 1 && p.label != -1 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("label must be -1 or 1, got {}", p.label),
            });
        }
        require_valid(&p.g1)?;
        require_valid(&p.g2)?;
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_triplets(path: &Path) -> Result<Vec<Triplet>> {
    let triplets: Vec<Triplet> = read_jsonl(path)?;
    for t in &triplets {
        require_valid(&t.g1)?;
        require_valid(&t.g2)?;
        require_valid(&t.g3)?;
    }
    Ok(triplets)
}

pub fn write_triplets(path: &Path, triplets: &[Triplet]) -> Result<()> {
    write_jsonl(path, triplets)
}
