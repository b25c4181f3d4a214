//! Train briefly, then write detection overlays and precision-recall plots.
//!
//! cargo run --release --example render_report -- [out_dir]

use std::path::PathBuf;

use lghoi::eval::EvalConfig;
use lghoi::harness::report::{class_file_name, save_overlay, save_pr_curve, OverlayOptions};
use lghoi::harness::{evaluate_on, generate_dataset, train, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "report".into()));
    std::fs::create_dir_all(&out_dir)?;
    let mut cfg = RunConfig::default();
    cfg.optim.steps = Some(150);
    cfg.optim.lr = 3e-3;
    let data = generate_dataset(cfg.seed, &cfg.data)?;
    let run = train(&cfg, &data, None)?;
    let params = &run.checkpoint.params;

    for scene in data.scenes.iter().take(3) {
        let prep = run.model.prepare(scene)?;
        let dets = run.model.detection_records(params, &prep)?;
        let path = out_dir.join(format!("image_{:04}.png", scene.image_id));
        save_overlay(scene, &dets, &OverlayOptions::default(), &path)?;
        println!("wrote {}", path.display());
    }
    let r = evaluate_on(&run.model, params, &data, &EvalConfig::default())?;
    for c in &r.per_class {
        save_pr_curve(c, &out_dir.join(class_file_name(c)))?;
    }
    println!(
        "{} precision-recall plots, mAP {:.4}",
        r.per_class.len(),
        r.map_full
    );
    Ok(())
}
