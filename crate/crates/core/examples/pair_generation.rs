//! Mock detections for one synthetic scene and the human-object pairs built
//! from them.

use lghoi::detection::{generate_pairs, Detector, MockDetector, MockDetectorConfig};
use lghoi::harness::{generate_scene, DataConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = DataConfig::default();
    let scene = generate_scene(3, 0, &data)?;
    let detector = MockDetector::new(MockDetectorConfig {
        channels: data.channels,
        num_classes: data.num_objects + 1,
        jitter: 0.01,
        ..Default::default()
    })?;
    let dets = detector
        .with_instances(&scene.instances, scene.image_id)
        .detect(&scene.feature_map()?, 16)?;
    let names = data.vocabulary().objects;
    for (i, (b, &l)) in dets.boxes.iter().zip(&dets.class_labels).enumerate() {
        println!(
            "{i}: {:<8} [{:.2} {:.2} {:.2} {:.2}]",
            names[l], b.x1, b.y1, b.x2, b.y2
        );
    }
    let pairs = generate_pairs(&dets);
    println!(
        "\n{} pairs (token width {}):",
        pairs.len(),
        pairs.first().map_or(0, |p| p.pair_tokens.cols())
    );
    for p in &pairs {
        println!(
            "  human {} -> {} {}",
            p.human_idx, names[dets.class_labels[p.object_idx]], p.object_idx
        );
    }
    Ok(())
}
