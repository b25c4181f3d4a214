//! Two humans standing in almost the same place: how alike are their tokens?

use lghoi::detection::TokenMode;
use lghoi::harness::probe::{colocated_probe, Metric};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (label, mode) in [
        ("position only", TokenMode::PositionOnly),
        ("mixed", TokenMode::Mixed { patch_weight: 0.25 }),
    ] {
        let r = colocated_probe(mode, Metric::Cosine, 0)?;
        let p = r.most_similar().ok_or("no human pair")?;
        println!(
            "{label:<14} cosine(human {}, human {}) = {:.4}",
            p.a, p.b, p.value
        );
    }
    let r = colocated_probe(TokenMode::PositionOnly, Metric::Euclidean, 0)?;
    println!(
        "position only  distance {:.4}",
        r.most_similar().ok_or("no human pair")?.value
    );
    Ok(())
}
