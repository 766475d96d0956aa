//! Synthetic camera frames: the front of a vehicle, optionally carrying the
//! two-letter "AM" marking on its bonnet, with salt-and-pepper noise.
//!
//! Used for fixtures and for calibrating the recognizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GrayImage, Point};

pub const FRAME_WIDTH: u32 = 160;
pub const FRAME_HEIGHT: u32 = 120;
pub const VEHICLE_WIDTH: i32 = 84;
pub const VEHICLE_HEIGHT: i32 = 56;
/// Glyph origin relative to the vehicle's top-left corner.
pub const GLYPH_OFFSET: Point = Point::new(18, 22);
/// Largest glyph-local coordinate covered by the stroke centre lines.
pub const GLYPH_EXTENT: (i32, i32) = (47, 23);

const BACKGROUND: u8 = 35;
const BODY: u8 = 110;
const WINDSHIELD: u8 = 45;
const HEADLIGHT: u8 = 215;
const GRILLE: u8 = 70;
const MARKING: u8 = 235;
const STROKE_RADIUS: f64 = 1.5;
/// Stroke coordinates below are multiplied by this.
const GLYPH_SCALE: f64 = 1.6;

/// Stroke centre lines of "AM" in glyph coordinates.
const STROKES: [((f64, f64), (f64, f64)); 7] = [
    ((6.0, 0.0), (0.0, 14.0)),
    ((6.0, 0.0), (12.0, 14.0)),
    ((3.0, 8.0), (9.0, 8.0)),
    ((17.0, 14.0), (17.0, 0.0)),
    ((17.0, 0.0), (23.0, 8.0)),
    ((23.0, 8.0), (29.0, 0.0)),
    ((29.0, 0.0), (29.0, 14.0)),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Top-left corner of the vehicle in the frame.
    pub vehicle_at: Point,
    pub marking: bool,
    /// Fraction of pixels replaced by 0 or 255.
    pub noise: f64,
    pub seed: u64,
}

impl Scene {
    /// Where the glyph origin lands in the frame.
    pub fn glyph_origin(&self) -> Point {
        self.vehicle_at + GLYPH_OFFSET
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Pixels covered by the marking, in glyph coordinates.
pub fn glyph_pixels() -> Vec<Point> {
    let mut out = Vec::new();
    let scaled = |(x, y): (f64, f64)| (x * GLYPH_SCALE, y * GLYPH_SCALE);
    for y in -2..=25 {
        for x in -2..=49 {
            let p = (x as f64, y as f64);
            if STROKES
                .iter()
                .any(|&(a, b)| segment_distance(p, scaled(a), scaled(b)) <= STROKE_RADIUS)
            {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

pub fn render(scene: &Scene) -> GrayImage {
    let mut img = GrayImage::filled(FRAME_WIDTH, FRAME_HEIGHT, BACKGROUND);
    let v = scene.vehicle_at;
    let mut fill = |x0: i32, y0: i32, x1: i32, y1: i32, value: u8| {
        for y in y0.max(0)..y1.min(FRAME_HEIGHT as i32) {
            for x in x0.max(0)..x1.min(FRAME_WIDTH as i32) {
                img.set(x as u32, y as u32, value);
            }
        }
    };
    fill(v.x, v.y, v.x + VEHICLE_WIDTH, v.y + VEHICLE_HEIGHT, BODY);
    fill(v.x + 10, v.y + 4, v.x + 74, v.y + 20, WINDSHIELD);
    fill(v.x + 4, v.y + 46, v.x + 18, v.y + 53, HEADLIGHT);
    fill(v.x + 66, v.y + 46, v.x + 80, v.y + 53, HEADLIGHT);
    fill(v.x + 30, v.y + 48, v.x + 54, v.y + 54, GRILLE);

    if scene.marking {
        let g = scene.glyph_origin();
        for p in glyph_pixels() {
            let q = p + g;
            if q.x >= 0 && q.y >= 0 && (q.x as u32) < FRAME_WIDTH && (q.y as u32) < FRAME_HEIGHT {
                img.set(q.x as u32, q.y as u32, MARKING);
            }
        }
    }
    if scene.noise > 0.0 {
        add_salt_and_pepper(&mut img, scene.noise, scene.seed);
    }
    img
}

pub fn add_salt_and_pepper(img: &mut GrayImage, fraction: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if rng.gen_bool(fraction) {
                let v = if rng.gen_bool(0.5) { 255 } else { 0 };
                img.set(x, y, v);
            }
        }
    }
}

/// Vehicle placements that keep the whole vehicle in frame.
pub fn placement_range() -> (std::ops::RangeInclusive<i32>, std::ops::RangeInclusive<i32>) {
    (
        0..=(FRAME_WIDTH as i32 - VEHICLE_WIDTH),
        0..=(FRAME_HEIGHT as i32 - VEHICLE_HEIGHT),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marking_only_differs_inside_glyph_box() {
        let at = Point::new(20, 30);
        let with = render(&Scene {
            vehicle_at: at,
            marking: true,
            noise: 0.0,
            seed: 0,
        });
        let without = render(&Scene {
            vehicle_at: at,
            marking: false,
            noise: 0.0,
            seed: 0,
        });
        let g = at + GLYPH_OFFSET;
        for y in 0..FRAME_HEIGHT as i32 {
            for x in 0..FRAME_WIDTH as i32 {
                let inside = (g.x - 2..=g.x + 49).contains(&x) && (g.y - 2..=g.y + 25).contains(&y);
                if !inside {
                    assert_eq!(
                        with.get(x as u32, y as u32),
                        without.get(x as u32, y as u32)
                    );
                }
            }
        }
        assert_ne!(with, without);
    }

    #[test]
    fn noise_is_seeded() {
        let s = Scene {
            vehicle_at: Point::new(5, 5),
            marking: true,
            noise: 0.02,
            seed: 9,
        };
        assert_eq!(render(&s), render(&s));
        let changed = render(&s)
            .pixels()
            .iter()
            .zip(
                render(&Scene {
                    noise: 0.0,
                    ..s.clone()
                })
                .pixels(),
            )
            .filter(|(a, b)| a != b)
            .count();
        let total = (FRAME_WIDTH * FRAME_HEIGHT) as usize;
        assert!(
            changed > total / 100 && changed < total * 3 / 100,
            "{changed}"
        );
    }
}
