//! Finite-difference check of a small two-layer classifier under focal loss.

use lghoi::primitives::{grad_check, Graph, NodeId, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Tensor::from_fn(4, 3, |r, c| ((r * 3 + c) as f64 * 0.7).sin());
    let w1 = Tensor::from_fn(3, 5, |r, c| ((r + 2 * c) as f64 * 0.31).cos() * 0.5);
    let w2 = Tensor::from_fn(5, 2, |r, c| ((r * 2 + c) as f64 * 0.53).sin() * 0.5);
    let targets = Tensor::from_fn(4, 2, |r, c| ((r + c) % 2) as f64);

    let f = |g: &mut Graph, p: &[NodeId]| {
        let h = g.matmul(p[0], p[1])?;
        let h = g.gelu(h);
        let logits = g.matmul(h, p[2])?;
        g.focal_loss(logits, &targets, 0.2)
    };
    let err = grad_check(f, &[x, w1, w2])?;
    println!("max relative error over every input entry: {err:.3e}");
    Ok(())
}
