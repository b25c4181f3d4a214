//! Which grid cells feed a pair's re-mined cue, and the cue itself.

use lghoi::harness::{generate_scene, DataConfig};
use lghoi::primitives::{Graph, ParamStore};
use lghoi::relation::{pair_cells, RelationConfig, RelationEncoder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DataConfig::default();
    let scene = generate_scene(7, 0, &cfg)?;
    let t = &scene.interactions[0];
    let mut pb = [0.0; 8];
    pb[..4].copy_from_slice(&t.human_box.to_array());
    pb[4..].copy_from_slice(&t.object_box.to_array());

    let cells = pair_cells(scene.height, scene.width, &pb)?;
    println!("human {:.2?}\nobject {:.2?}\n", &pb[..4], &pb[4..]);
    for r in 0..scene.height {
        let row: String = (0..scene.width)
            .map(|c| {
                if cells.contains(&(r * scene.width + c)) {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        println!("  {row}");
    }

    let mut store = ParamStore::new(0);
    let enc = RelationEncoder::new(
        &mut store,
        RelationConfig {
            channels: cfg.channels,
            ..Default::default()
        },
    )?;
    let mut g = Graph::with_params(&store);
    let map = g.input(scene.feature_map()?.grid);
    let encoded = enc.encode_map(&mut g, map, scene.height, scene.width)?;
    let cue = enc.masked_roi(&mut g, encoded, scene.height, scene.width, &pb)?;
    let v = g.value(cue);
    println!(
        "\n{} of {} cells pooled; cue {:?}, first entries {:.3?}",
        cells.len(),
        scene.height * scene.width,
        v.shape(),
        &v.data()[..4]
    );
    Ok(())
}
