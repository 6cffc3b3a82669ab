//! Acceptance gate. One pass/fail line per criterion; run with
//! `cargo test --test acceptance -- --nocapture` to see them.
//!
//! Criteria 1, 2 and 8 evaluate trained checkpoints. Training a full-size
//! model for 100k steps takes hours on one CPU, so finished runs are cached
//! under `target/acceptance/<tag>/` and reused when the stored config matches
//! (runs are byte-deterministic, so a cached checkpoint is identical to a
//! fresh one). Missing or stale runs are retrained in place. The cache can be
//! prewarmed with the CLI, e.g.
//! `gsim train --out target/acceptance/gmn_t5 'model_kind="Matching"'`.

use gsim::checkpoint::checkpoint_load;
use gsim::data::{self, record_rng, sample_er_graph, substitute_edges};
use gsim::embed::ModelConfig;
use gsim::ged_oracle::{exact_edit_distance_oracle, OracleResult};
use gsim::graph::{LabeledPair, Triplet};
use gsim::loss::{hamming_pair_loss, hamming_triplet_loss, LossFamily, TrainingMode};
use gsim::matching::mu_sums_given_attention;
use gsim::metrics::{pair_auc, pair_auc_brute_force, triplet_accuracy};
use gsim::nn::ParamStore;
use gsim::tape::Tape;
use gsim::tensor::Tensor;
use gsim::train::{
    evaluate_model, run_gradcheck, train_loop, ModelKind, TrainConfig, CHECKPOINT_FILE,
    METRICS_FILE,
};
use gsim::wl::wl_kernel_similarity;
use rand::seq::SliceRandom;
use rand::Rng;
use std::path::{Path, PathBuf};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {detail}");
        if !pass {
            self.failures.push(format!("{name}: {detail}"));
        }
    }
}

fn cache_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
}

fn run_config(kind: ModelKind, steps_t: usize, num_training_steps: u64) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            num_propagation_steps: steps_t,
            ..ModelConfig::default()
        },
        model_kind: kind,
        num_training_steps,
        ..TrainConfig::default()
    }
}

/// Load the cached checkpoint for `tag` if its stored config matches,
/// otherwise train from scratch into the cache directory.
fn trained(tag: &str, cfg: &TrainConfig) -> ParamStore {
    let dir = cache_dir().join(tag);
    let ckpt = dir.join(CHECKPOINT_FILE);
    if let Ok((store, stored_cfg)) = checkpoint_load::<TrainConfig>(&ckpt) {
        if &stored_cfg == cfg {
            return store;
        }
        eprintln!("{tag}: cached config differs, retraining");
    } else {
        eprintln!("{tag}: no cached run, training {} steps", cfg.num_training_steps);
    }
    train_loop(cfg, &dir, &mut |r| {
        eprintln!(
            "{tag} step {} loss {:.4} auc {:.4} acc {:.4}",
            r.step, r.loss, r.pair_auc, r.triplet_acc
        );
    })
    .unwrap()
    .store
}

fn eval(store: &ParamStore, cfg: &TrainConfig, pairs: &[LabeledPair], triplets: &[Triplet]) -> (f64, f64) {
    evaluate_model(store, &cfg.model, cfg.model_kind, cfg.loss.family, pairs, triplets).unwrap()
}

/// Best-over-iterations WL kernel metrics on the fixed eval sets.
fn wl_baseline(pairs: &[LabeledPair], triplets: &[Triplet]) -> (usize, f64, f64) {
    let mut best = (0usize, -1.0f64, 0.0f64);
    for iterations in 1..=5 {
        let scored: Vec<(f64, i8)> = pairs
            .iter()
            .map(|p| (wl_kernel_similarity(&p.g1, &p.g2, iterations), p.label))
            .collect();
        let auc = pair_auc(&scored).unwrap();
        if auc > best.1 {
            let trip: Vec<(f64, f64)> = triplets
                .iter()
                .map(|t| {
                    (
                        wl_kernel_similarity(&t.g1, &t.g2, iterations),
                        wl_kernel_similarity(&t.g1, &t.g3, iterations),
                    )
                })
                .collect();
            best = (iterations, auc, triplet_accuracy(&trip).unwrap());
        }
    }
    best
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { failures: Vec::new() };
    let data_cfg = data::DataConfig::default();
    let (pairs, triplets) = data::build_eval_sets(&data_cfg).unwrap();

    // criteria 1 and 2: trained models on the default task
    let gnn_t5_cfg = run_config(ModelKind::Embedding, 5, 100_000);
    let gmn_t5_cfg = run_config(ModelKind::Matching, 5, 100_000);
    let gnn_t1_cfg = run_config(ModelKind::Embedding, 1, 100_000);
    let gmn_t1_cfg = run_config(ModelKind::Matching, 1, 100_000);
    let (gnn_auc, gnn_acc) = eval(&trained("gnn_t5", &gnn_t5_cfg), &gnn_t5_cfg, &pairs, &triplets);
    let (gmn_auc, gmn_acc) = eval(&trained("gmn_t5", &gmn_t5_cfg), &gmn_t5_cfg, &pairs, &triplets);
    let (gnn1_auc, _) = eval(&trained("gnn_t1", &gnn_t1_cfg), &gnn_t1_cfg, &pairs, &triplets);
    let (gmn1_auc, _) = eval(&trained("gmn_t1", &gmn_t1_cfg), &gmn_t1_cfg, &pairs, &triplets);
    let (wl_iters, wl_auc, wl_acc) = wl_baseline(&pairs, &triplets);

    gate.check(
        "criterion 1 (metric table reproduction)",
        (0.75..=0.87).contains(&wl_auc)
            && (0.77..=0.89).contains(&wl_acc)
            && gnn_auc >= 0.85
            && gnn_acc >= 0.90
            && gmn_auc >= 0.92
            && gmn_acc >= 0.92
            && gmn_auc >= gnn_auc + 0.02,
        format!(
            "wl(T={wl_iters}) auc {wl_auc:.3} acc {wl_acc:.3}; embedding auc {gnn_auc:.3} acc {gnn_acc:.3}; matching auc {gmn_auc:.3} acc {gmn_acc:.3}"
        ),
    );

    gate.check(
        "criterion 2 (more propagation steps help)",
        gnn_auc >= gnn1_auc + 0.03 && gmn_auc >= gmn1_auc + 0.03,
        format!(
            "embedding auc T=5 {gnn_auc:.3} vs T=1 {gnn1_auc:.3}; matching auc T=5 {gmn_auc:.3} vs T=1 {gmn1_auc:.3}"
        ),
    );

    // criterion 3: gradcheck over both models and all four losses
    let mut worst: f64 = 0.0;
    for kind in [ModelKind::Embedding, ModelKind::Matching] {
        for family in [LossFamily::MarginEuclidean, LossFamily::Hamming] {
            for mode in [TrainingMode::Pair, TrainingMode::Triplet] {
                let mut cfg = run_config(kind, 2, 1);
                cfg.model.node_state_dim = 4;
                cfg.model.graph_vector_dim = 6;
                cfg.loss.family = family;
                cfg.loss.mode = mode;
                worst = worst.max(run_gradcheck(&cfg, 1e-5).unwrap());
            }
        }
    }
    gate.check(
        "criterion 3 (gradient check)",
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 8 model/loss combinations"),
    );

    // criterion 4: permutation attention on a relabeled copy zeroes the mu sums
    let mut worst_mu: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = record_rng(40, 97, i);
        let n = rng.gen_range(4..=8);
        let d = 5;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut s1 = Tensor::zeros(&[n, d]);
        for v in s1.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut s2 = Tensor::zeros(&[n, d]);
        for node in 0..n {
            for c in 0..d {
                s2.set2(perm[node], c, s1.get2(node, c));
            }
        }
        let mut a12 = Tensor::zeros(&[n, n]);
        let mut a21 = Tensor::zeros(&[n, n]);
        for node in 0..n {
            a12.set2(node, perm[node], 1.0);
            a21.set2(perm[node], node, 1.0);
        }
        let (mu1, mu2) = mu_sums_given_attention(&s1, &s2, &a12, &a21).unwrap();
        worst_mu = worst_mu.max(mu1.max_abs()).max(mu2.max_abs());
    }
    gate.check(
        "criterion 4 (exact alignment kills cross-graph messages)",
        worst_mu < 1e-12,
        format!("max |mu| {worst_mu:.2e} over 20 relabeled pairs"),
    );

    // criterion 5: edit distance after k substitutions never exceeds 2k
    let mut strict = 0usize;
    let mut violations = 0usize;
    for i in 0..500u64 {
        let mut rng = record_rng(50, 98, i);
        let n = rng.gen_range(5..=7);
        let (g, k, g2) = loop {
            let g = sample_er_graph(n, 0.5, &mut rng);
            let k = 1 + (i as usize % 2);
            if let Ok(g2) = substitute_edges(&g, k, &mut rng) {
                break (g, k, g2);
            }
        };
        match exact_edit_distance_oracle(&g, &g2, 2 * k).unwrap() {
            OracleResult::Distance(d) => {
                if d < 2 * k {
                    strict += 1;
                }
            }
            OracleResult::ExceedsMaxCost => violations += 1,
        }
    }
    gate.check(
        "criterion 5 (oracle vs substitution bound)",
        violations == 0 && strict >= 1,
        format!("0 of 500 distances above 2k allowed, saw {violations}; {strict} strictly below"),
    );

    // criterion 6: metric implementations against oracles
    let mut auc_mismatch = 0usize;
    for i in 0..100u64 {
        let mut rng = record_rng(60, 99, i);
        let count = rng.gen_range(2..=200);
        let scores: Vec<(f64, i8)> = (0..count)
            .map(|j| {
                // quantized scores force plenty of ties
                let s = (rng.gen_range(-3.0..3.0f64) * 4.0).round() / 4.0;
                let l = if j == 0 || rng.gen_bool(0.5) { 1 } else { -1 };
                (s, l)
            })
            .chain(std::iter::once((0.0, -1)))
            .collect();
        if pair_auc(&scores).unwrap() != pair_auc_brute_force(&scores).unwrap() {
            auc_mismatch += 1;
        }
    }
    let mut worst_row: f64 = 0.0;
    {
        let mut rng = record_rng(61, 99, 0);
        for _ in 0..50 {
            let n = rng.gen_range(1..=40);
            let segments = rng.gen_range(1..=5);
            let ids: Vec<usize> = (0..n).map(|i| i % segments).collect();
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::from_vec(&[n, 1], vals).unwrap());
            let y = tape.segment_softmax(x, &ids, segments).unwrap();
            let out = tape.value(y);
            for seg in 0..segments.min(n) {
                let sum: f64 = (0..n).filter(|&i| ids[i] == seg).map(|i| out.data()[i]).sum();
                worst_row = worst_row.max((sum - 1.0).abs());
            }
        }
    }
    let mut hamming_ok = true;
    {
        let mut rng = record_rng(62, 99, 0);
        for _ in 0..1_000_000 {
            let s = rng.gen_range(-1.0..1.0);
            let s2 = rng.gen_range(-1.0..1.0);
            let t = if rng.gen_bool(0.5) { 1 } else { -1 };
            if !(0.0..=1.0).contains(&hamming_pair_loss(s, t))
                || !(0.0..=1.0).contains(&hamming_triplet_loss(s, s2))
            {
                hamming_ok = false;
            }
        }
    }
    gate.check(
        "criterion 6 (metric oracles)",
        auc_mismatch == 0 && worst_row < 1e-9 && hamming_ok,
        format!(
            "auc exact on 100 sets ({auc_mismatch} mismatches); softmax row error {worst_row:.2e}; hamming losses in [0,1] over 1e6 samples: {hamming_ok}"
        ),
    );

    // criterion 7: byte-identical training runs
    let mut det_cfg = run_config(ModelKind::Matching, 2, 6);
    det_cfg.model.node_state_dim = 8;
    det_cfg.model.graph_vector_dim = 16;
    det_cfg.data.n = data::IntOrRange::Scalar(8);
    det_cfg.batch_size = 4;
    det_cfg.eval_every = 3;
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    train_loop(&det_cfg, dir1.path(), &mut |_| {}).unwrap();
    train_loop(&det_cfg, dir2.path(), &mut |_| {}).unwrap();
    let identical = [METRICS_FILE, CHECKPOINT_FILE].iter().all(|f| {
        std::fs::read(dir1.path().join(f)).unwrap() == std::fs::read(dir2.path().join(f)).unwrap()
    });
    gate.check(
        "criterion 7 (determinism)",
        identical,
        "metrics csv and checkpoint byte-identical across two runs".into(),
    );

    // criterion 8: no propagation means no structure signal
    let gnn_t0_cfg = run_config(ModelKind::Embedding, 0, 2_000);
    let (t0_auc, _) = eval(&trained("gnn_t0", &gnn_t0_cfg), &gnn_t0_cfg, &pairs, &triplets);
    gate.check(
        "criterion 8 (T=0 degenerates to chance)",
        (0.45..=0.55).contains(&t0_auc),
        format!("pair auc {t0_auc:.3}"),
    );

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
