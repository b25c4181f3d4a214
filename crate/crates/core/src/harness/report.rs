//! PNG output: per-image detection overlays and precision-recall plots.

use std::path::Path;

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use crate::error::Result;
use crate::eval::{ClassResult, DetectionRecord};

use super::data::SyntheticScene;

const GT: Rgb<u8> = Rgb([40, 200, 60]);
const HUMAN: Rgb<u8> = Rgb([50, 110, 255]);
const OBJECT: Rgb<u8> = Rgb([235, 60, 50]);
const LINK: Rgb<u8> = Rgb([250, 210, 40]);
const VERB_COLORS: [Rgb<u8>; 6] = [
    Rgb([255, 128, 0]),
    Rgb([180, 0, 255]),
    Rgb([0, 200, 200]),
    Rgb([255, 0, 150]),
    Rgb([120, 255, 0]),
    Rgb([255, 255, 255]),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayOptions {
    pub min_score: f64,
    pub max_detections: usize,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            min_score: 0.3,
            max_detections: 8,
        }
    }
}

fn pixel_rect(b: &[f64; 4], size: u32) -> Option<Rect> {
    let s = size as f64;
    let x = (b[0] * s).round() as i32;
    let y = (b[1] * s).round() as i32;
    let w = ((b[2] - b[0]) * s).round() as u32;
    let h = ((b[3] - b[1]) * s).round() as u32;
    (w > 0 && h > 0).then(|| Rect::at(x, y).of_size(w, h))
}

fn center(b: &[f64; 4], size: u32) -> (f32, f32) {
    let s = size as f64;
    (
        ((b[0] + b[2]) / 2.0 * s) as f32,
        ((b[1] + b[3]) / 2.0 * s) as f32,
    )
}

/// Feature-energy background with ground-truth boxes, then the top
/// detections: human box, object box, a link between their centres and one
/// colour swatch per verb at the link midpoint.
pub fn render_overlay(
    scene: &SyntheticScene,
    dets: &[DetectionRecord],
    opts: &OverlayOptions,
) -> RgbImage {
    let size = scene.image_size.max(32);
    let (h, w, c) = (scene.height, scene.width, scene.channels);
    let energy: Vec<f64> = (0..h * w)
        .map(|cell| {
            scene.features[cell * c..(cell + 1) * c]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let peak = energy.iter().cloned().fold(1e-12, f64::max);
    let mut img = RgbImage::from_fn(size, size, |x, y| {
        let col = ((x as usize) * w / size as usize).min(w - 1);
        let row = ((y as usize) * h / size as usize).min(h - 1);
        let v = (energy[row * w + col] / peak * 140.0) as u8;
        Rgb([v, v, v])
    });
    for t in &scene.interactions {
        for b in [t.human_box, t.object_box] {
            if let Some(r) = pixel_rect(&b.to_array(), size) {
                draw_hollow_rect_mut(&mut img, r, GT);
            }
        }
    }
    let mut ranked: Vec<&DetectionRecord> = dets
        .iter()
        .filter(|d| d.image_id == scene.image_id && d.score >= opts.min_score)
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(opts.max_detections);
    for (k, d) in ranked.iter().enumerate() {
        if let Some(r) = pixel_rect(&d.human_box, size) {
            draw_hollow_rect_mut(&mut img, r, HUMAN);
        }
        if let Some(r) = pixel_rect(&d.object_box, size) {
            draw_hollow_rect_mut(&mut img, r, OBJECT);
        }
        let (a, b) = (center(&d.human_box, size), center(&d.object_box, size));
        draw_line_segment_mut(&mut img, a, b, LINK);
        let mid = ((a.0 + b.0) / 2.0) as i32;
        let side = 6 + (d.score * 6.0) as u32;
        let y = ((a.1 + b.1) / 2.0) as i32 + (k as i32 % 3) * 4;
        draw_filled_rect_mut(
            &mut img,
            Rect::at(mid, y).of_size(side, side),
            VERB_COLORS[d.verb % VERB_COLORS.len()],
        );
    }
    img
}

pub fn save_overlay(
    scene: &SyntheticScene,
    dets: &[DetectionRecord],
    opts: &OverlayOptions,
    path: &Path,
) -> Result<()> {
    render_overlay(scene, dets, opts).save(path)?;
    Ok(())
}

/// Precision against recall on a 320 × 240 canvas.
pub fn render_pr_curve(class: &ClassResult) -> RgbImage {
    let (w, h) = (320u32, 240u32);
    let (left, bottom, right, top) = (30.0f32, 210.0f32, 305.0f32, 15.0f32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let axis = Rgb([30, 30, 30]);
    draw_line_segment_mut(&mut img, (left, bottom), (right, bottom), axis);
    draw_line_segment_mut(&mut img, (left, bottom), (left, top), axis);
    for t in 1..=4 {
        let f = t as f32 / 4.0;
        let grid = Rgb([225, 225, 225]);
        draw_line_segment_mut(
            &mut img,
            (left + 1.0, bottom - f * (bottom - top)),
            (right, bottom - f * (bottom - top)),
            grid,
        );
        draw_line_segment_mut(
            &mut img,
            (left + f * (right - left), bottom - 1.0),
            (left + f * (right - left), top),
            grid,
        );
    }
    let to_px = |r: f64, p: f64| {
        (
            left + r as f32 * (right - left),
            bottom - p as f32 * (bottom - top),
        )
    };
    let mut prev = to_px(0.0, class.precision.first().copied().unwrap_or(0.0));
    for (r, p) in class.recall.iter().zip(&class.precision) {
        let cur = to_px(*r, *p);
        draw_line_segment_mut(&mut img, prev, cur, HUMAN);
        prev = cur;
    }
    img
}

pub fn save_pr_curve(class: &ClassResult, path: &Path) -> Result<()> {
    render_pr_curve(class).save(path)?;
    Ok(())
}

pub fn class_file_name(c: &ClassResult) -> String {
    format!("pr_v{}_o{}.png", c.verb, c.object_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::{generate_scene, DataConfig};

    #[test]
    fn overlay_marks_boxes() {
        let s = generate_scene(0, 0, &DataConfig::default()).unwrap();
        let t = &s.interactions[0];
        let det = DetectionRecord {
            image_id: 0,
            human_box: t.human_box.to_array(),
            object_box: t.object_box.to_array(),
            object_class: t.object_class,
            verb: 0,
            score: 0.9,
        };
        let img = render_overlay(&s, &[det], &OverlayOptions::default());
        assert_eq!(img.dimensions(), (s.image_size, s.image_size));
        assert!(img.pixels().any(|p| *p == HUMAN));
        assert!(img.pixels().any(|p| *p == OBJECT));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.png");
        img.save(&path).unwrap();
        assert!(image::open(&path).is_ok());
    }

    #[test]
    fn pr_plot_draws_curve() {
        let c = ClassResult {
            verb: 0,
            object_class: 1,
            ap: 0.5,
            num_gt: 2,
            num_dets: 2,
            rare: None,
            precision: vec![1.0, 0.5],
            recall: vec![0.5, 0.5],
        };
        let img = render_pr_curve(&c);
        assert!(img.pixels().any(|p| *p == HUMAN));
        assert_eq!(class_file_name(&c), "pr_v0_o1.png");
    }
}
