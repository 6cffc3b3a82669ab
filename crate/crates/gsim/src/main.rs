use clap::{Parser, Subcommand};
use gsim::checkpoint::{checkpoint_load, validate_against};
use gsim::data::{self, DataConfig};
use gsim::error::{Error, Result};
use gsim::graph::{read_graphs, Graph, LabeledPair};
use gsim::matching::match_graph_pair;
use gsim::metrics::{pair_auc, triplet_accuracy, write_pair_scores};
use gsim::train::{
    self, evaluate_model, init_params, run_gradcheck, train_loop, ModelKind, TrainConfig,
};
use gsim::wl::wl_kernel_similarity;
use serde::de::DeserializeOwned;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "gsim", about = "Graph similarity learning on synthetic edit-distance data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the fixed evaluation sets and a manifest
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model, writing metrics.csv and checkpoint.bin
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the fixed evaluation sets
    Eval {
        /// Checkpoint produced by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional CSV path for per-pair scores (score,label per line)
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// WL-kernel baseline metrics on the fixed evaluation sets
    WlBaseline {
        #[command(flatten)]
        common: Common,
        /// Refinement iteration counts to try
        #[arg(long, default_value = "5")]
        max_iterations: usize,
        /// Optional CSV path for per-pair scores at the best iteration count
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Export per-step attention matrices (JSON + DOT) for one graph pair
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL file whose first two lines are the graphs to match;
        /// defaults to an evaluation pair generated from the checkpoint config
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Evaluation pair index used when --graphs is absent
        #[arg(long, default_value = "0")]
        index: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against finite differences
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1e-4")]
        tolerance: f64,
    },
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file; omitted fields take defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $GSIM_OUT_DIR or the working directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scalar config overrides, e.g. model.node_state_dim=64
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load<T: DeserializeOwned>(&self) -> Result<T> {
        let mut value = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => serde_json::json!({}),
        };
        for raw in &self.overrides {
            apply_override(&mut value, raw)?;
        }
        Ok(serde_json::from_value(value)?)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os("GSIM_OUT_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))
        })
    }
}

/// Sets `a.b.c=value` inside a JSON config; the value is parsed as JSON when
/// possible and treated as a string otherwise.
fn apply_override(config: &mut serde_json::Value, raw: &str) -> Result<()> {
    let raw = raw.strip_prefix("--").unwrap_or(raw);
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{raw}` is not KEY=VALUE")))?;
    let parsed: serde_json::Value = serde_json::from_str(val)
        .unwrap_or_else(|_| serde_json::Value::String(val.to_string()));
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::Config(format!("override path `{key}` not an object")));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::Config(format!("override path `{key}` not an object"))),
    }
}

fn load_checkpoint(path: &PathBuf) -> Result<(gsim::nn::ParamStore, TrainConfig)> {
    let (store, cfg): (_, TrainConfig) = checkpoint_load(path)?;
    cfg.validate()?;
    validate_against(&store, &init_params(&cfg))?;
    Ok((store, cfg))
}

fn eval_pair_scores(
    store: &gsim::nn::ParamStore,
    cfg: &TrainConfig,
    pairs: &[LabeledPair],
) -> Result<Vec<(f64, i8)>> {
    let refs: Vec<(&Graph, &Graph)> = pairs.iter().map(|p| (&p.g1, &p.g2)).collect();
    let scores = train::score_pairs(store, &cfg.model, cfg.model_kind, cfg.loss.family, &refs)?;
    Ok(scores.into_iter().zip(pairs.iter().map(|p| p.label)).collect())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { common } => {
            let cfg: DataConfig = common.load()?;
            cfg.validate()?;
            let manifest = data::write_eval_sets(&cfg, &common.out_dir())?;
            println!(
                "wrote {} pairs and {} triplets to {}",
                manifest.num_pairs,
                manifest.num_triplets,
                common.out_dir().display()
            );
        }
        Command::Train { common } => {
            let cfg: TrainConfig = common.load()?;
            let out_dir = common.out_dir();
            train_loop(&cfg, &out_dir, &mut |r| {
                println!(
                    "step {} loss {:.6} pair_auc {:.4} triplet_acc {:.4}",
                    r.step, r.loss, r.pair_auc, r.triplet_acc
                );
            })?;
            println!(
                "done; metrics in {} and checkpoint in {}",
                out_dir.join(train::METRICS_FILE).display(),
                out_dir.join(train::CHECKPOINT_FILE).display()
            );
        }
        Command::Eval { checkpoint, scores } => {
            let (store, cfg) = load_checkpoint(&checkpoint)?;
            let (pairs, triplets) = data::build_eval_sets(&cfg.data)?;
            let (auc, acc) = evaluate_model(
                &store,
                &cfg.model,
                cfg.model_kind,
                cfg.loss.family,
                &pairs,
                &triplets,
            )?;
            println!(
                "step {} pair_auc {:.4} triplet_acc {:.4}",
                store.step(),
                auc,
                acc
            );
            if let Some(path) = scores {
                let labeled = eval_pair_scores(&store, &cfg, &pairs)?;
                let mut file = std::fs::File::create(&path)?;
                write_pair_scores(&mut file, &labeled)?;
                println!("scores written to {}", path.display());
            }
        }
        Command::WlBaseline {
            common,
            max_iterations,
            scores,
        } => {
            let cfg: DataConfig = common.load()?;
            cfg.validate()?;
            let (pairs, triplets) = data::build_eval_sets(&cfg)?;
            let mut best: Option<(usize, f64, f64)> = None;
            for t in 1..=max_iterations {
                let labeled: Vec<(f64, i8)> = pairs
                    .iter()
                    .map(|p| (wl_kernel_similarity(&p.g1, &p.g2, t), p.label))
                    .collect();
                let auc = pair_auc(&labeled)?;
                let triplet_scores: Vec<(f64, f64)> = triplets
                    .iter()
                    .map(|tr| {
                        (
                            wl_kernel_similarity(&tr.g1, &tr.g2, t),
                            wl_kernel_similarity(&tr.g1, &tr.g3, t),
                        )
                    })
                    .collect();
                let acc = triplet_accuracy(&triplet_scores)?;
                println!("iterations {t} pair_auc {auc:.4} triplet_acc {acc:.4}");
                if best.map_or(true, |(_, b, _)| auc > b) {
                    best = Some((t, auc, acc));
                }
            }
            let (t, auc, acc) = best.expect("max_iterations >= 1");
            println!("best iterations {t} pair_auc {auc:.4} triplet_acc {acc:.4}");
            if let Some(path) = scores {
                let labeled: Vec<(f64, i8)> = pairs
                    .iter()
                    .map(|p| (wl_kernel_similarity(&p.g1, &p.g2, t), p.label))
                    .collect();
                let mut file = std::fs::File::create(&path)?;
                write_pair_scores(&mut file, &labeled)?;
                println!("scores written to {}", path.display());
            }
        }
        Command::ExportAttention {
            checkpoint,
            graphs,
            index,
            out,
        } => {
            let (store, cfg) = load_checkpoint(&checkpoint)?;
            if cfg.model_kind != ModelKind::Matching {
                return Err(Error::Config(
                    "attention export requires a matching-model checkpoint".into(),
                ));
            }
            let (g1, g2) = match graphs {
                Some(path) => {
                    let gs = read_graphs(&path)?;
                    if gs.len() < 2 {
                        return Err(Error::Config(format!(
                            "{} holds {} graphs, need 2",
                            path.display(),
                            gs.len()
                        )));
                    }
                    (gs[0].clone(), gs[1].clone())
                }
                None => {
                    let mut rng = data::record_rng(cfg.data.seed, data::domain::EVAL_PAIR, index);
                    let label = if index % 2 == 0 { 1 } else { -1 };
                    let pair = data::make_pair_with_label(&cfg.data, label, &mut rng)?;
                    (pair.g1, pair.g2)
                }
            };
            let result =
                match_graph_pair(&store, &cfg.model, &g1, &g2, cfg.loss.family, true)?;
            let out_dir = out.unwrap_or_else(|| {
                std::env::var_os("GSIM_OUT_DIR")
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let record = result.attention.expect("attention was requested");
            let written = gsim::export::write_attention_files(&out_dir, &g1, &g2, &record)?;
            println!(
                "score {:.4}; wrote {} files to {}",
                result.score,
                written.len(),
                out_dir.display()
            );
        }
        Command::Gradcheck { common, tolerance } => {
            let cfg: TrainConfig = common.load()?;
            cfg.validate()?;
            let err = run_gradcheck(&cfg, 1e-5)?;
            println!("max relative gradient error {err:.3e} (tolerance {tolerance:.0e})");
            if err >= tolerance {
                return Err(Error::Config(format!(
                    "gradient check failed: {err:.3e} >= {tolerance:.0e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
