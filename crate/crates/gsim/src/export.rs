//! Attention visualization export: per-step JSON matrices and Graphviz DOT
//! files showing the two graphs side by side with cross edges whose opacity
//! tracks the attention weight.

use crate::error::Result;
use crate::graph::Graph;
use crate::matching::StepAttention;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct AttentionJson<'a> {
    step: usize,
    direction: &'static str,
    matrix: &'a [Vec<f64>],
}

/// Cross edges below this weight are omitted from the DOT output to keep the
/// drawing readable; the JSON always carries the full matrix.
const DOT_MIN_WEIGHT: f64 = 0.01;

pub fn attention_dot(g1: &Graph, g2: &Graph, matrix: &[Vec<f64>], direction: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph attention {{");
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(out, "  node [shape=circle, fontsize=10];");
    for (cluster, graph, tag) in [(0, g1, "a"), (1, g2, "b")] {
        let _ = writeln!(out, "  subgraph cluster_g{} {{", cluster + 1);
        let _ = writeln!(out, "    label=\"graph {}\";", cluster + 1);
        for i in 0..graph.n {
            let _ = writeln!(out, "    {tag}{i} [label=\"{i}\"];");
        }
        for &(i, j) in &graph.edges {
            let _ = writeln!(out, "    {tag}{i} -> {tag}{j} [dir=none];");
        }
        let _ = writeln!(out, "  }}");
    }
    // direction g1_to_g2: row i of the matrix is node i of graph 1 attending
    // over graph 2 nodes
    let (from_tag, to_tag) = if direction == "g1_to_g2" {
        ("a", "b")
    } else {
        ("b", "a")
    };
    for (i, row) in matrix.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w < DOT_MIN_WEIGHT {
                continue;
            }
            let alpha = (w.clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = writeln!(
                out,
                "  {from_tag}{i} -> {to_tag}{j} [color=\"#00aa00{alpha:02x}\", constraint=false];"
            );
        }
    }
    let _ = writeln!(out, "}}");
    out
}

/// One JSON and one DOT file per step per direction, named
/// `attention_step{t}_{direction}.{json,dot}`; returns the paths written.
pub fn write_attention_files(
    out_dir: &Path,
    g1: &Graph,
    g2: &Graph,
    record: &[StepAttention],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for step in record {
        for (direction, matrix) in [
            ("g1_to_g2", &step.g1_to_g2),
            ("g2_to_g1", &step.g2_to_g1),
        ] {
            let json = AttentionJson {
                step: step.step,
                direction,
                matrix,
            };
            let json_path = out_dir.join(format!("attention_step{}_{direction}.json", step.step));
            std::fs::write(&json_path, serde_json::to_string_pretty(&json)?)?;
            written.push(json_path);

            let dot_path = out_dir.join(format!("attention_step{}_{direction}.dot", step.step));
            std::fs::write(&dot_path, attention_dot(g1, g2, matrix, direction))?;
            written.push(dot_path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Graph, Graph, Vec<Vec<f64>>) {
        let g1 = Graph::new(2, vec![(0, 1)]);
        let g2 = Graph::new(3, vec![(0, 1), (1, 2)]);
        let matrix = vec![vec![0.7, 0.2, 0.1], vec![0.005, 0.495, 0.5]];
        (g1, g2, matrix)
    }

    #[test]
    fn dot_output_is_well_formed() {
        let (g1, g2, matrix) = sample();
        let dot = attention_dot(&g1, &g2, &matrix, "g1_to_g2");
        assert!(dot.starts_with("digraph attention {"));
        assert!(dot.trim_end().ends_with('}'));
        assert!(dot.contains("subgraph cluster_g1"));
        assert!(dot.contains("subgraph cluster_g2"));
        assert!(dot.contains("a0 -> a1 [dir=none];"));
        // weight 0.7 -> alpha 179 = 0xb3
        assert!(dot.contains("a0 -> b0 [color=\"#00aa00b3\""));
        // below-threshold cross edge dropped
        assert!(!dot.contains("a1 -> b0"));
        // balanced braces
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    }

    #[test]
    fn files_written_per_step_and_direction() {
        let (g1, g2, matrix) = sample();
        let transposed: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..2).map(|i| matrix[i][j]).collect())
            .collect();
        let record = vec![
            StepAttention {
                step: 0,
                g1_to_g2: matrix.clone(),
                g2_to_g1: transposed.clone(),
            },
            StepAttention {
                step: 1,
                g1_to_g2: matrix,
                g2_to_g1: transposed,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let written = write_attention_files(dir.path(), &g1, &g2, &record).unwrap();
        assert_eq!(written.len(), 8);
        for p in &written {
            assert!(p.exists());
        }
        let text = std::fs::read_to_string(dir.path().join("attention_step1_g1_to_g2.json"))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["step"], 1);
        assert_eq!(v["direction"], "g1_to_g2");
        assert_eq!(v["matrix"].as_array().unwrap().len(), 2);
    }
}
