//! Fixtures shared by the benchmarks.

use std::path::Path;

use dynscene_core::{DepthImage, Detection, SyntheticScene};

/// The bundled two-person scene at 640x480.
pub fn passing_scene() -> SyntheticScene {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/passing.toml");
    SyntheticScene::load(&path).expect("bundled scene parses")
}

/// One noisy frame with both people in view and their boxes.
pub fn two_person_frame(scene: &SyntheticScene, t: f64) -> (DepthImage, Vec<Detection>) {
    let dets: Vec<Detection> = scene.detections(t).into_iter().map(|(_, d)| d).collect();
    assert_eq!(dets.len(), 2, "both actors should be visible at t={t}");
    (scene.render_depth(t), dets)
}

/// Two consecutive frames of the static room, people removed.
pub fn odometry_pair(t: f64) -> (SyntheticScene, DepthImage, DepthImage) {
    let mut scene = passing_scene();
    scene.actors.clear();
    let dt = 1.0 / scene.rate;
    let (a, b) = (scene.render_depth(t), scene.render_depth(t + dt));
    (scene, a, b)
}
