//! Every loss term of the full model on one scene, before training.

use lghoi::harness::{generate_scene, HoiModel, RunConfig};
use lghoi::primitives::Graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let (model, store) = HoiModel::new(&cfg)?;
    let scene = generate_scene(cfg.seed, 0, &cfg.data)?;
    let prep = model.prepare(&scene)?;
    println!(
        "{} pairs, {} matched to annotations, {} word rows",
        prep.pairs.len(),
        prep.matched.len(),
        prep.words.rows()
    );

    let mut g = Graph::with_params(&store);
    let l = model.scene_losses(&mut g, &prep)?;
    let a = l.alignment;
    let show = |name: &str, n: Option<lghoi::primitives::NodeId>| match n {
        Some(n) => println!("  {name:<13} {:.5}", g.value(n).item()),
        None => println!("  {name:<13} off"),
    };
    show("hoi", Some(l.hoi));
    show("sentence irm", a.sentence_irm);
    show("word irm", a.word_irm);
    show("sentence ire", a.sentence_ire);
    show("word ire", a.word_ire);

    let (batch, grads) = model.batch_gradients(&store, &[&prep])?;
    let norm: f64 = grads
        .values()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    println!("weighted total {:.5}, gradient norm {norm:.4}", batch.total);
    Ok(())
}
