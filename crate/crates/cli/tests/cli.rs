use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynscene_core::evaluation::{evaluate, Trajectory};
use dynscene_core::io::{read_obj, read_ply, read_trajectory, write_obj, write_trajectory};
use dynscene_core::{Mesh, PoseSE3};
use nalgebra::{UnitQuaternion, Vector3};

const SMALL_SCENE: &str = r#"
duration = 1.0
rate = 10.0
seed = 3
intrinsics = { fx = 60.0, fy = 60.0, cx = 39.5, cy = 29.5, width = 80, height = 60 }

[[boxes]]
min = [-3.0, -1.5, -1.0]
max = [3.0, 1.2, 4.0]

[[boxes]]
min = [1.0, 0.2, 2.5]
max = [3.0, 1.2, 4.0]

[[actors]]
shape = { min = [-0.25, -0.85, -0.1], max = [0.25, 0.85, 0.1] }
path = [{ t = 0.0, position = [-0.8, 0.35, 2.5] }, { t = 1.0, position = [0.2, 0.35, 2.0] }]

[[camera]]
t = 0.0
position = [0.0, -0.2, -0.5]
look_at = [0.0, 0.2, 3.0]

[[camera]]
t = 1.0
position = [0.1, -0.2, -0.45]
look_at = [0.0, 0.2, 3.0]
"#;

fn dynscene(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynscene"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate_small(dir: &Path) -> PathBuf {
    let scene = dir.join("scene.toml");
    fs::write(&scene, SMALL_SCENE).unwrap();
    let data = dir.join("data");
    let o = dynscene(&[&"simulate", &scene, &data]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_small(dir.path());
    let b_dir = dir.path().join("again");
    fs::create_dir(&b_dir).unwrap();
    let b = simulate_small(&b_dir);
    let names: Vec<_> = fs::read_dir(a.join("depth")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 10);
    for n in names {
        assert_eq!(fs::read(a.join("depth").join(&n)).unwrap(), fs::read(b.join("depth").join(&n)).unwrap());
    }
    for f in ["metadata.txt", "depth.txt", "groundtruth.txt", "detections.txt", "actor_0.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn simulate_missing_scene_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dynscene(&[&"simulate", &dir.path().join("nope.toml"), &dir.path().join("out")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn bundled_scene_has_300_frames() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/crossing.toml");
    let o = dynscene(&[&"simulate", &scene, &dir.path()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("wrote 300 frames"));
    assert_eq!(read_trajectory(&dir.path().join("groundtruth.txt")).unwrap().len(), 300);
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    for (out, extra) in [("out", None), ("raw", Some("--no-filter"))] {
        let out = dir.path().join(out);
        let dets = data.join("detections.txt");
        let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"run", &data, &dets, &out];
        if let Some(flag) = &extra {
            args.push(flag);
        }
        let o = dynscene(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let cam = read_trajectory(&out.join("camera_trajectory.txt")).unwrap();
        assert_eq!(cam.len(), 10);
        assert!(out.join("track_1.txt").exists());
        assert!(!read_ply(&out.join("map.ply")).unwrap().is_empty());
        let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
        assert_eq!(timing.lines().next(), Some("timestamp,filter_ms,odometry_ms,tracking_ms,fusion_ms"));
        assert_eq!(timing.lines().count(), 11);
    }
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "lambda = 1.3\nvoxel = -1\n").unwrap();
    let o = dynscene(&[&"run", &data, &data.join("detections.txt"), &dir.path().join("o"), &"--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let o = dynscene(&[&"run", &data, &data.join("detections.txt"), &dir.path().join("o"), &"--lambda", &"0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dynscene(&[&"run", &data]);
    assert_eq!(o.status.code(), Some(1));
}

fn stamped(poses: &[(f64, PoseSE3)]) -> Trajectory {
    let mut t = Trajectory::new();
    for (s, p) in poses {
        t.push(*s, *p).unwrap();
    }
    t
}

fn wiggle(i: usize) -> PoseSE3 {
    let t = i as f64 * 0.1;
    PoseSE3::from_quaternion(
        &UnitQuaternion::from_euler_angles(0.1 * t, 0.2 * t.sin(), 0.05 * t),
        Vector3::new(t.cos(), t.sin(), 0.3 * t),
    )
}

#[test]
fn evaluate_prints_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let gt_path = dir.path().join("gt.txt");
    let gt = stamped(&(0..50).map(|i| (i as f64 * 0.1, wiggle(i))).collect::<Vec<_>>());
    write_trajectory(&gt_path, &gt).unwrap();
    let o = dynscene(&[&"evaluate", &gt_path, &gt_path]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.000000");
    assert!(dir.path().join("gt_errors.csv").exists());

    // positions perturbed by a known pattern
    let est_path = dir.path().join("est.txt");
    let est = stamped(
        &(0..50)
            .map(|i| {
                let mut p = wiggle(i);
                p.translation.x += if i % 2 == 0 { 0.02 } else { -0.02 };
                p.translation.z += 0.01 * ((i % 5) as f64 - 2.0);
                (i as f64 * 0.1 + 0.005, p)
            })
            .collect::<Vec<_>>(),
    );
    write_trajectory(&est_path, &est).unwrap();
    let table = dir.path().join("errors.csv");
    let o = dynscene(&[&"evaluate", &est_path, &gt_path, &"--errors", &table]);
    assert!(o.status.success());
    let expected = evaluate(&read_trajectory(&est_path).unwrap(), &gt, 0.02).unwrap().rmse;
    assert_eq!(stdout(&o).trim(), format!("{expected:.6}"));
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 51);

    let late = dir.path().join("late.txt");
    write_trajectory(&late, &stamped(&[(100.0, wiggle(0)), (101.0, wiggle(1)), (102.0, wiggle(2))])).unwrap();
    let o = dynscene(&[&"evaluate", &late, &gt_path]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn place_mesh_applies_body_flip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = Mesh::new(
        vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 0.0), Vector3::new(0.0, -1.0, 2.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let mesh_path = dir.path().join("body.obj");
    write_obj(&mesh_path, &mesh).unwrap();
    let track = dir.path().join("track.txt");
    let p = Vector3::new(0.5, -0.25, 2.0);
    write_trajectory(
        &track,
        &stamped(&[(1.0, PoseSE3::identity()), (2.0, PoseSE3::from_translation(p))]),
    )
    .unwrap();
    let poses = dir.path().join("poses.txt");
    write_trajectory(&poses, &stamped(&[(1.0, PoseSE3::identity()), (2.0, PoseSE3::identity())])).unwrap();

    let out = dir.path().join("at_origin.obj");
    let o = dynscene(&[&"place-mesh", &mesh_path, &track, &poses, &"0", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let placed = read_obj(&out).unwrap();
    for (a, b) in mesh.vertices.iter().zip(&placed.vertices) {
        assert_eq!(*b, Vector3::new(a.x, -a.y, -a.z));
    }

    let out = dir.path().join("moved.obj");
    let o = dynscene(&[&"place-mesh", &mesh_path, &track, &poses, &"1", &out]);
    assert!(o.status.success());
    let shift = read_obj(&out).unwrap().centroid().unwrap() - placed.centroid().unwrap();
    assert!((shift - p).norm() < 1e-6);

    let o = dynscene(&[&"place-mesh", &mesh_path, &track, &poses, &"2", &dir.path().join("x.obj")]);
    assert_eq!(o.status.code(), Some(2));
}
