//! Ranking metrics: pair AUC (Mann-Whitney) and triplet accuracy.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};

/// Area under the ROC curve via the rank statistic: the probability that a
/// random positive outscores a random negative, ties counted as 0.5. O(n log n).
pub fn pair_auc(scores: &[(f64, i8)]) -> Result<f64> {
    let num_pos = scores.iter().filter(|&&(_, l)| l > 0).count();
    let num_neg = scores.len() - num_pos;
    if num_pos == 0 || num_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<(f64, i8)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sum of average ranks (1-based) of the positives, ties sharing a rank
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = sorted[i..j].iter().filter(|&&(_, l)| l > 0).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum_pos - (num_pos * (num_pos + 1)) as f64 / 2.0;
    Ok(u / (num_pos as f64 * num_neg as f64))
}

/// Reference implementation: explicit loop over all positive x negative pairs.
pub fn pair_auc_brute_force(scores: &[(f64, i8)]) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().filter(|&&(_, l)| l > 0).map(|&(s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().filter(|&&(_, l)| l <= 0).map(|&(s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut total = 0.0;
    for &p in &pos {
        for &n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}

/// Fraction of triplets with s_pos strictly greater than s_neg; ties count as
/// incorrect.
pub fn triplet_accuracy(scores: &[(f64, f64)]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("triplet accuracy"));
    }
    let correct = scores.iter().filter(|&&(p, n)| p > n).count();
    Ok(correct as f64 / scores.len() as f64)
}

/// One `score,label` line per pair.
pub fn write_pair_scores(w: &mut impl Write, scores: &[(f64, i8)]) -> Result<()> {
    for &(s, l) in scores {
        writeln!(w, "{s},{l}")?;
    }
    Ok(())
}

pub fn read_pair_scores(r: impl BufRead) -> Result<Vec<(f64, i8)>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: &str| Error::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let (s, l) = line
            .split_once(',')
            .ok_or_else(|| parse("expected score,label"))?;
        let score: f64 = s.trim().parse().map_err(|_| parse("bad score"))?;
        let label: i8 = l.trim().parse().map_err(|_| parse("bad label"))?;
        if label != 1 && label != -1 {
            return Err(parse("label must be 1 or -1"));
        }
        out.push((score, label));
    }
    Ok(out)
}
