mod common;

use common::fixtures;
use serde_json::Value;
use siren_core::recognition::synth::{self, Scene};
use siren_core::recognition::{
    read_pgm, recognize, write_pgm, GrayImage, Pattern, Point, DEFAULT_SOBEL_THRESHOLD,
    DEFAULT_TAU_PER_POINT,
};
use siren_core::scenario::load_scenario;
use siren_core::sim::{run, DetectionOutcome, EventKind};

fn frame(name: &str) -> GrayImage {
    read_pgm(&std::fs::read(fixtures().join("frames").join(name)).unwrap()).unwrap()
}

fn pattern(name: &str) -> (Pattern, Point) {
    let text = std::fs::read_to_string(fixtures().join("patterns").join(name)).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let anchor = Point::new(
        doc["anchor"][0].as_i64().unwrap() as i32,
        doc["anchor"][1].as_i64().unwrap() as i32,
    );
    (serde_json::from_str(&text).unwrap(), anchor)
}

#[test]
fn fixture_frames_match_fresh_renders() {
    let cases = [
        (
            "am_clean.pgm",
            Scene {
                vehicle_at: Point::new(38, 32),
                marking: true,
                noise: 0.0,
                seed: 0,
            },
        ),
        (
            "am_noisy.pgm",
            Scene {
                vehicle_at: Point::new(10, 50),
                marking: true,
                noise: 0.02,
                seed: 7,
            },
        ),
        (
            "distractor.pgm",
            Scene {
                vehicle_at: Point::new(60, 20),
                marking: false,
                noise: 0.02,
                seed: 8,
            },
        ),
    ];
    for (name, scene) in cases {
        let on_disk = std::fs::read(fixtures().join("frames").join(name)).unwrap();
        assert_eq!(on_disk, write_pgm(&synth::render(&scene)), "{name}");
    }
}

#[test]
fn fifty_point_pattern_finds_clean_glyph_at_anchor() {
    let (p, anchor) = pattern("am_n50.json");
    assert_eq!(p.len(), 50);
    let m = recognize(
        &frame("am_clean.pgm"),
        &p,
        DEFAULT_SOBEL_THRESHOLD,
        DEFAULT_TAU_PER_POINT,
    )
    .unwrap();
    assert_eq!(m.dissimilarity, 0);
    assert_eq!(
        m.best_translation,
        Point::new(38, 32) + synth::GLYPH_OFFSET + anchor
    );
    assert!(m.is_ambulance);
}

#[test]
fn noisy_glyph_accepted_and_distractor_rejected() {
    let (p, _) = pattern("am_n50.json");
    let yes = recognize(
        &frame("am_noisy.pgm"),
        &p,
        DEFAULT_SOBEL_THRESHOLD,
        DEFAULT_TAU_PER_POINT,
    )
    .unwrap();
    let no = recognize(
        &frame("distractor.pgm"),
        &p,
        DEFAULT_SOBEL_THRESHOLD,
        DEFAULT_TAU_PER_POINT,
    )
    .unwrap();
    assert!(yes.is_ambulance, "{yes:?}");
    assert!(!no.is_ambulance, "{no:?}");
}

#[test]
fn blank_frame_is_not_recognizable() {
    let (p, _) = pattern("am_n20.json");
    assert!(recognize(
        &frame("blank.pgm"),
        &p,
        DEFAULT_SOBEL_THRESHOLD,
        DEFAULT_TAU_PER_POINT
    )
    .is_err());
}

#[test]
fn camera_scenario_routes_detection_through_recognizer() {
    let loaded = load_scenario(&fixtures().join("scenarios/camera.json")).unwrap();
    let camera = loaded.scenario.camera(&loaded.base_dir).unwrap().unwrap();
    let out = run(
        &loaded.scenario,
        &loaded.scenario.sim_config(),
        Some(&camera),
    )
    .unwrap();
    let det: Vec<_> = out
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Detection {
                recognition,
                outcome,
                ..
            } => Some((recognition.clone(), outcome.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(det.len(), 1);
    assert!(det[0].0.as_ref().unwrap().is_ambulance);
    assert!(matches!(det[0].1, DetectionOutcome::Granted { .. }));

    // Same run with the frame swapped for a distractor: no priority.
    let mut cam = camera.clone();
    for f in cam.frames.values_mut() {
        *f = frame("distractor.pgm");
    }
    let out = run(&loaded.scenario, &loaded.scenario.sim_config(), Some(&cam)).unwrap();
    assert!(out.events.iter().any(|e| matches!(
        e.kind,
        EventKind::Detection {
            outcome: DetectionOutcome::NotRecognized,
            ..
        }
    )));
    assert_eq!(out.report.preemptions, 0);
}
