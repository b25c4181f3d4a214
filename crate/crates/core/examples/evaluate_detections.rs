//! mAP on a hand-built case with an occluded object, under both scenarios.

use lghoi::eval::{evaluate, DetectionRecord, EvalConfig, GtRecord, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = [0.1, 0.1, 0.4, 0.9];
    let gts = vec![
        GtRecord {
            image_id: 0,
            human_box: h,
            object_box: [0.3, 0.5, 0.7, 0.9],
            object_class: 1,
            verbs: vec![0],
            occluded_object: false,
        },
        GtRecord {
            image_id: 0,
            human_box: h,
            object_box: [0.0; 4],
            object_class: 2,
            verbs: vec![1],
            occluded_object: true,
        },
    ];
    let det = |object_box, object_class, verb, score| DetectionRecord {
        image_id: 0,
        human_box: h,
        object_box,
        object_class,
        verb,
        score,
    };
    let dets = vec![
        det([0.31, 0.5, 0.7, 0.88], 1, 0, 0.9),
        // A guessed box for the occluded object: wrong under S1, fine under S2.
        det([0.5, 0.1, 0.8, 0.3], 2, 1, 0.8),
        det([0.3, 0.5, 0.7, 0.9], 1, 0, 0.4),
    ];
    for scenario in [Scenario::S1, Scenario::S2] {
        let r = evaluate(
            &dets,
            &gts,
            None,
            &EvalConfig {
                scenario,
                ..Default::default()
            },
        )?;
        println!("{scenario:?}: mAP {:.3}", r.map_full);
        for c in &r.per_class {
            println!(
                "  verb {} object {}: AP {:.3} ({} gt, {} dets)",
                c.verb, c.object_class, c.ap, c.num_gt, c.num_dets
            );
        }
    }
    Ok(())
}
