//! Train every variant briefly and compare training-set mAP.
//!
//! cargo run --release --example ablation_sweep -- [steps]

use lghoi::eval::{EvalConfig, Scenario};
use lghoi::harness::{evaluate_on, generate_dataset, train, RunConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(100);
    let eval = EvalConfig {
        scenario: Scenario::S2,
        ..Default::default()
    };
    for v in Variant::ALL {
        let mut cfg = RunConfig::default();
        cfg.optim.steps = Some(steps);
        cfg.optim.lr = 3e-3;
        cfg.variant = Some(v);
        let data = generate_dataset(cfg.seed, &cfg.data)?;
        let out = train(&cfg, &data, None)?;
        let r = evaluate_on(&out.model, &out.checkpoint.params, &data, &eval)?;
        let last = out.metrics.last().map_or(f64::NAN, |m| m.total);
        println!("{:<16} loss {last:.4}  mAP {:.4}", v.name(), r.map_full);
    }
    Ok(())
}
