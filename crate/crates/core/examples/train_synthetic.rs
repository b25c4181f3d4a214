//! Train on 16 synthetic scenes and score the training set.
//!
//! cargo run --release --example train_synthetic -- [steps] [lr] [variant]

use std::time::Instant;

use lghoi::eval::{EvalConfig, Scenario};
use lghoi::harness::{evaluate_on, generate_dataset, train, RunConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::default();
    cfg.optim.steps = Some(args.first().map(|s| s.parse()).transpose()?.unwrap_or(300));
    if let Some(lr) = args.get(1) {
        cfg.optim.lr = lr.parse()?;
    }
    if let Some(v) = args.get(2) {
        cfg.variant = Some(v.parse::<Variant>()?);
    }
    let data = generate_dataset(cfg.seed, &cfg.data)?;

    let t = Instant::now();
    let out = train(&cfg, &data, None)?;
    let first = out.metrics.first().map(|m| m.total).unwrap_or(f64::NAN);
    let last = out.metrics.last().map(|m| m.total).unwrap_or(f64::NAN);
    println!(
        "{} steps in {:.1?}: loss {first:.4} -> {last:.4}",
        out.metrics.len(),
        t.elapsed()
    );

    let eval = EvalConfig {
        scenario: Scenario::S2,
        ..Default::default()
    };
    let r = evaluate_on(&out.model, &out.checkpoint.params, &data, &eval)?;
    println!(
        "training-set mAP {:.4} over {} classes",
        r.map_full,
        r.per_class.len()
    );
    Ok(())
}
