//! Deterministic synthetic digit images.
//!
//! This environment ships no digit corpus and downloading one is out of
//! scope, so experiments and tests render their own: seven-segment style
//! glyphs for 0–9 drawn as anti-aliased strokes on a 28×28 canvas, with a
//! random affine jitter (rotation, scale, shear, shift), stroke width and
//! brightness per sample. The result is a labeled, learnable stand-in with
//! the same shape and value conventions as the real thing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mnist::{ImageDataset, Split};
use crate::rng;

const SIDE: usize = 28;

/// Segment endpoints in glyph coordinates ([0,1]²; y grows downward).
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.20, 0.10), (0.80, 0.10)), // A: top
    ((0.85, 0.15), (0.85, 0.45)), // B: upper right
    ((0.85, 0.55), (0.85, 0.85)), // C: lower right
    ((0.20, 0.90), (0.80, 0.90)), // D: bottom
    ((0.15, 0.55), (0.15, 0.85)), // E: lower left
    ((0.15, 0.15), (0.15, 0.45)), // F: upper left
    ((0.20, 0.50), (0.80, 0.50)), // G: middle
];

/// Active segments per digit (bit i = segment i above).
const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, // 0: ABCDEF
    0b0000110, // 1: BC
    0b1011011, // 2: ABDEG
    0b1001111, // 3: ABCDG
    0b1100110, // 4: BCFG
    0b1101101, // 5: ACDFG
    0b1111101, // 6: ACDEFG
    0b0000111, // 7: ABC
    0b1111111, // 8
    0b1101111, // 9: ABCDFG
];

/// Render `count` digits with labels; digits are drawn uniformly.
pub fn glyph_digits(count: usize, seed: u64, split: Split) -> ImageDataset {
    let mut r = rng::seeded(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let digit = r.gen_range(0..10u8);
        images.push(render_digit(digit, &mut r));
        labels.push(digit);
    }
    ImageDataset {
        images,
        labels: Some(labels),
        split,
    }
}

/// One jittered rendering of a digit.
pub fn render_digit(digit: u8, r: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(digit <= 9, "digit out of range");
    let angle = r.gen_range(-0.22..0.22f64);
    let scale_x = r.gen_range(0.80..1.12);
    let scale_y = r.gen_range(0.80..1.12);
    let shear = r.gen_range(-0.15..0.15f64);
    let shift_x = r.gen_range(-2.2..2.2);
    let shift_y = r.gen_range(-2.2..2.2);
    let halfwidth = r.gen_range(1.0..1.6);
    let brightness = r.gen_range(0.75..1.0);

    let (sin, cos) = angle.sin_cos();
    let glyph_size = 19.0;
    let center = (SIDE as f64 - 1.0) / 2.0;

    // Glyph [0,1]² → centered, scaled, sheared, rotated, shifted pixel coords.
    let map = |(u, v): (f64, f64)| -> (f64, f64) {
        let gx = (u - 0.5) * glyph_size * scale_x;
        let gy = (v - 0.5) * glyph_size * scale_y;
        let gx = gx + shear * gy;
        let px = cos * gx - sin * gy + center + shift_x;
        let py = sin * gx + cos * gy + center + shift_y;
        (px, py)
    };

    let mask = DIGIT_SEGMENTS[digit as usize];
    let strokes: Vec<((f64, f64), (f64, f64))> = SEGMENTS
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, &(a, b))| (map(a), map(b)))
        .collect();

    let mut img = vec![0.0; SIDE * SIDE];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let p = (x as f64, y as f64);
            let mut d = f64::INFINITY;
            for &(a, b) in &strokes {
                d = d.min(point_segment_distance(p, a, b));
            }
            // 1-pixel anti-aliasing ramp around the stroke edge.
            let v = (halfwidth + 0.5 - d).clamp(0.0, 1.0);
            img[y * SIDE + x] = brightness * v;
        }
    }
    img
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (px, py) = p;
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = glyph_digits(20, 9, Split::Train);
        let b = glyph_digits(20, 9, Split::Train);
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels, b.labels);
        let c = glyph_digits(20, 10, Split::Train);
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let d = glyph_digits(50, 3, Split::Train);
        for img in &d.images {
            assert_eq!(img.len(), 784);
            assert!(img.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn digits_have_distinct_shapes_and_some_ink() {
        let mut r = rng::seeded(5);
        let renders: Vec<Vec<f64>> = (0..10).map(|d| render_digit(d, &mut r)).collect();
        for img in &renders {
            let ink: f64 = img.iter().sum();
            assert!(ink > 20.0, "digit with almost no ink");
        }
        // An 8 covers every segment a 1 covers and then some.
        let ink = |v: &Vec<f64>| v.iter().sum::<f64>();
        assert!(ink(&renders[8]) > ink(&renders[1]));
    }

    #[test]
    fn labels_cover_all_digits() {
        let d = glyph_digits(500, 1, Split::Train);
        let labels = d.labels.unwrap();
        for digit in 0..10u8 {
            assert!(labels.contains(&digit), "digit {digit} never drawn");
        }
    }
}
