//! Regenerates the frozen recognition fixtures under `fixtures/`.
//!
//! The "AM" patterns are edge points of a clean synthetic frame, taken
//! inside the glyph's box and thinned by farthest-point sampling; the
//! 20-point pattern is the first 20 samples of the 50-point one.
//!
//!     cargo run -p siren-core --example make_fixtures -- fixtures

use std::path::PathBuf;

use serde_json::json;
use siren_core::recognition::synth::{self, Scene};
use siren_core::recognition::{
    city_block, denoise, normalize, sobel_edges, write_pgm, GrayImage, Point,
    DEFAULT_SOBEL_THRESHOLD,
};

const REFERENCE_AT: Point = Point::new(38, 32);

fn farthest_point_order(cands: &[Point], n: usize) -> Vec<Point> {
    let mut chosen = vec![cands[0]];
    let mut dist: Vec<u32> = cands.iter().map(|&c| city_block(c, cands[0])).collect();
    while chosen.len() < n {
        // farthest from everything chosen so far; ties to the earliest
        let (i, _) = dist
            .iter()
            .enumerate()
            .max_by_key(|&(i, &d)| (d, std::cmp::Reverse(i)))
            .expect("candidates");
        let p = cands[i];
        chosen.push(p);
        for (d, c) in dist.iter_mut().zip(cands) {
            *d = (*d).min(city_block(*c, p));
        }
    }
    chosen
}

fn pattern_doc(points: &[Point], glyph_origin: Point) -> serde_json::Value {
    let min_x = points.iter().map(|p| p.x).min().unwrap();
    let min_y = points.iter().map(|p| p.y).min().unwrap();
    let mut local: Vec<[i32; 2]> = points.iter().map(|p| [p.x - min_x, p.y - min_y]).collect();
    local.sort_by_key(|p| (p[1], p[0]));
    json!({
        "points": local,
        "anchor": [min_x - glyph_origin.x, min_y - glyph_origin.y],
    })
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(out.join("patterns")).unwrap();
    std::fs::create_dir_all(out.join("frames")).unwrap();

    let scene = Scene {
        vehicle_at: REFERENCE_AT,
        marking: true,
        noise: 0.0,
        seed: 0,
    };
    let clean = synth::render(&scene);
    let edges = sobel_edges(&normalize(&denoise(&clean)), DEFAULT_SOBEL_THRESHOLD).unwrap();
    let g = scene.glyph_origin();
    let (gw, gh) = synth::GLYPH_EXTENT;
    let cands: Vec<Point> = edges
        .points()
        .iter()
        .copied()
        .filter(|p| p.x >= g.x - 3 && p.x <= g.x + gw + 3 && p.y >= g.y - 3 && p.y <= g.y + gh + 3)
        .collect();
    let order = farthest_point_order(&cands, 50);
    for n in [50, 20] {
        let doc = pattern_doc(&order[..n], g);
        let path = out.join(format!("patterns/am_n{n}.json"));
        std::fs::write(&path, serde_json::to_string(&doc).unwrap() + "\n").unwrap();
    }

    let frames: [(&str, GrayImage); 4] = [
        ("am_clean", clean),
        (
            "am_noisy",
            synth::render(&Scene {
                vehicle_at: Point::new(10, 50),
                marking: true,
                noise: 0.02,
                seed: 7,
            }),
        ),
        (
            "distractor",
            synth::render(&Scene {
                vehicle_at: Point::new(60, 20),
                marking: false,
                noise: 0.02,
                seed: 8,
            }),
        ),
        (
            "blank",
            GrayImage::filled(synth::FRAME_WIDTH, synth::FRAME_HEIGHT, 0),
        ),
    ];
    for (name, img) in frames {
        std::fs::write(out.join(format!("frames/{name}.pgm")), write_pgm(&img)).unwrap();
    }
}
