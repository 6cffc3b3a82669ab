use gsim::tape::Tape;
use gsim::train::*;
use std::time::Instant;

fn main() {
    let mut cfg = TrainConfig::default();
    if std::env::args().nth(1).as_deref() == Some("gmn") { cfg.model_kind = ModelKind::Matching; }
    let mut store = init_params(&cfg);
    // warmup
    for s in 1..=3 {
        let b = make_batch(&cfg, s).unwrap();
        train_step(&mut store, &cfg, &b).unwrap();
    }
    let n = 20u64;
    let mut t_gen = 0.0; let mut t_fwd = 0.0; let mut t_bwd = 0.0; let mut t_adam = 0.0;
    for s in 4..4 + n {
        let t0 = Instant::now();
        let b = make_batch(&cfg, s).unwrap();
        let t1 = Instant::now();
        let mut tape = Tape::new();
        let loss = batch_loss(&mut tape, &store, &cfg, &b).unwrap();
        let t2 = Instant::now();
        let grads = tape.backward(loss).unwrap();
        let t3 = Instant::now();
        store.adam_step(grads.params(), cfg.learning_rate, 0.9, 0.999, 1e-8).unwrap();
        let t4 = Instant::now();
        t_gen += (t1 - t0).as_secs_f64();
        t_fwd += (t2 - t1).as_secs_f64();
        t_bwd += (t3 - t2).as_secs_f64();
        t_adam += (t4 - t3).as_secs_f64();
    }
    let n = n as f64;
    println!("per step: gen {:.1}ms fwd {:.1}ms bwd {:.1}ms adam {:.1}ms",
        t_gen / n * 1e3, t_fwd / n * 1e3, t_bwd / n * 1e3, t_adam / n * 1e3);
}
