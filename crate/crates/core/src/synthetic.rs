//! Ground-truth RGB-D sequences rendered from a scripted scene.
//!
//! Camera frames use the usual vision convention: x right, y down, z
//! forward. World coordinates share that convention, so an identity camera
//! looks along world +z with world +y pointing down.

use std::fs;
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::DepthImage;
use crate::io::{write_depth_index, write_detections, write_trajectory, DatasetMetadata, DetectionSet};
use crate::separation::Detection;

/// Rays closer than this are discarded; actor boxes are clipped against the
/// same plane when projected.
pub const NEAR: f64 = 1e-3;

fn default_depth_scale() -> f64 {
    crate::io::DEFAULT_DEPTH_SCALE
}

fn default_noise() -> f64 {
    0.005
}

/// Infinite plane `normal · x = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct AaBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl AaBox {
    pub fn translated(&self, t: &Vector3<f64>) -> AaBox {
        AaBox {
            min: (Vector3::from(self.min) + t).into(),
            max: (Vector3::from(self.max) + t).into(),
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        (Vector3::from(self.min) + Vector3::from(self.max)) * 0.5
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            let pick = |axis: usize| if i >> axis & 1 == 0 { self.min[axis] } else { self.max[axis] };
            Vector3::new(pick(0), pick(1), pick(2))
        })
    }

    /// Signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let q = Vector3::from_fn(|i, _| (self.min[i] - p[i]).max(p[i] - self.max[i]));
        let outside = q.map(|x| x.max(0.0)).norm();
        outside + q.max().min(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// A moving box. `shape` is given relative to the path position.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Actor {
    pub shape: AaBox,
    pub path: Vec<Waypoint>,
}

/// Camera keyframe. Orientation comes from `look_at` if present, otherwise
/// from `rotation_deg` (roll, pitch, yaw about x, y, z), otherwise identity.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CameraKey {
    pub t: f64,
    pub position: [f64; 3],
    #[serde(default)]
    pub rotation_deg: Option<[f64; 3]>,
    #[serde(default)]
    pub look_at: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    pub duration: f64,
    pub rate: f64,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start_time: f64,
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub planes: Vec<Plane>,
    #[serde(default)]
    pub boxes: Vec<AaBox>,
    #[serde(default)]
    pub actors: Vec<Actor>,
    pub camera: Vec<CameraKey>,
}

fn look_rotation(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Rotation3<f64>> {
    let z = (to - from)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidInput("look_at equals camera position".into()))?;
    let down = Vector3::new(0.0, 1.0, 0.0);
    let x = down
        .cross(&z)
        .try_normalize(1e-9)
        .ok_or_else(|| Error::InvalidInput("look_at direction is vertical".into()))?;
    let y = z.cross(&x);
    Ok(Rotation3::from_basis_unchecked(&[x, y, z]))
}

fn segment<T>(keys: &[T], t: f64, time: impl Fn(&T) -> f64) -> (usize, usize, f64) {
    let n = keys.len();
    if n == 1 || t <= time(&keys[0]) {
        return (0, 0, 0.0);
    }
    if t >= time(&keys[n - 1]) {
        return (n - 1, n - 1, 0.0);
    }
    let j = keys.partition_point(|k| time(k) <= t);
    let (t0, t1) = (time(&keys[j - 1]), time(&keys[j]));
    (j - 1, j, (t - t0) / (t1 - t0))
}

fn ray_plane(o: &Vector3<f64>, d: &Vector3<f64>, p: &Plane) -> Option<f64> {
    let n = Vector3::from(p.normal);
    let den = n.dot(d);
    if den.abs() < 1e-12 {
        return None;
    }
    let s = (p.offset - n.dot(o)) / den;
    (s > NEAR).then_some(s)
}

/// Slab test. From inside a box the far wall is returned.
fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, b: &AaBox) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < b.min[i] || o[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (a, c) = ((b.min[i] - o[i]) * inv, (b.max[i] - o[i]) * inv);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    if t0 > t1 {
        None
    } else if t0 > NEAR {
        Some(t0)
    } else if t1 > NEAR {
        Some(t1)
    } else {
        None
    }
}

/// Tight pixel box around a world-space box seen from `camera`
/// (camera-to-world). `None` when nothing lies in front of the near plane or
/// inside the image.
pub fn gt_detection(shape: &AaBox, camera: &PoseSE3, k: &Intrinsics) -> Option<Detection> {
    let to_cam = camera.inverse();
    let c: Vec<Vector3<f64>> = shape.corners().iter().map(|p| to_cam.transform(p)).collect();
    let mut pts: Vec<Vector3<f64>> = c.iter().filter(|p| p.z >= NEAR).copied().collect();
    for i in 0..8 {
        for bit in [1, 2, 4] {
            let j = i | bit;
            if i & bit != 0 || (c[i].z >= NEAR) == (c[j].z >= NEAR) {
                continue;
            }
            let s = (NEAR - c[i].z) / (c[j].z - c[i].z);
            let mut p = c[i] + (c[j] - c[i]) * s;
            p.z = NEAR;
            pts.push(p);
        }
    }
    if pts.is_empty() {
        return None;
    }
    let (mut umin, mut vmin) = (f64::INFINITY, f64::INFINITY);
    let (mut umax, mut vmax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let x_ul = umin.ceil().max(0.0);
    let y_ul = vmin.ceil().max(0.0);
    let x_lr = (umax.floor() + 1.0).min(k.width as f64);
    let y_lr = (vmax.floor() + 1.0).min(k.height as f64);
    (x_ul < x_lr && y_ul < y_lr).then(|| Detection::new(x_ul, y_ul, x_lr, y_lr, 1.0))
}

/// Stream id of the per-frame noise generator.
fn noise_stream(t: f64) -> u64 {
    (t * 1e6).round() as i64 as u64
}

impl SyntheticScene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<scene>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut scene: SyntheticScene = toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        scene.validate().map_err(|e| Error::format(path, e.to_string()))?;
        for p in &mut scene.planes {
            let n = Vector3::from(p.normal);
            let len = n.norm();
            p.normal = (n / len).into();
            p.offset /= len;
        }
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        self.intrinsics.validate()?;
        if !(self.duration > 0.0 && self.rate > 0.0) {
            return bad(format!("duration {} and rate {} must be positive", self.duration, self.rate));
        }
        if !(self.depth_scale > 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("depth_scale must be positive and noise_sigma non-negative".into());
        }
        for p in &self.planes {
            if !(Vector3::from(p.normal).norm() > 1e-12) {
                return bad("plane normal is zero".into());
            }
        }
        let boxes = self.boxes.iter().chain(self.actors.iter().map(|a| &a.shape));
        for b in boxes {
            if !(0..3).all(|i| b.min[i] < b.max[i]) {
                return bad(format!("box {b:?} has min >= max"));
            }
        }
        let (first, last) = (self.start_time, *self.timestamps().last().unwrap_or(&self.start_time));
        let covers = |times: &[f64]| {
            // a single key holds still for the whole sequence
            times.len() == 1
                || (!times.is_empty()
                    && times.windows(2).all(|w| w[0] < w[1])
                    && times[0] <= first + 1e-9
                    && times[times.len() - 1] >= last - 1e-9)
        };
        let cam: Vec<f64> = self.camera.iter().map(|c| c.t).collect();
        if !covers(&cam) {
            return bad(format!("camera keyframes must be increasing and cover [{first}, {last}]"));
        }
        for (i, a) in self.actors.iter().enumerate() {
            let times: Vec<f64> = a.path.iter().map(|w| w.t).collect();
            if !covers(&times) {
                return bad(format!("actor {i} path must be increasing and cover [{first}, {last}]"));
            }
        }
        for key in &self.camera {
            self.key_rotation(key)?;
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    /// Frame times, rounded to the microsecond resolution of the text formats.
    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.frame_count())
            .map(|i| ((self.start_time + i as f64 / self.rate) * 1e6).round() / 1e6)
            .collect()
    }

    fn key_rotation(&self, key: &CameraKey) -> Result<UnitQuaternion<f64>> {
        let rot = match (key.look_at, key.rotation_deg) {
            (Some(target), _) => look_rotation(&Vector3::from(key.position), &Vector3::from(target))?,
            (None, Some([r, p, y])) => Rotation3::from_euler_angles(r.to_radians(), p.to_radians(), y.to_radians()),
            (None, None) => Rotation3::identity(),
        };
        Ok(UnitQuaternion::from_rotation_matrix(&rot))
    }

    /// Camera-to-world pose: positions interpolate linearly, orientations by
    /// slerp. Times outside the keyframes clamp to the nearest one.
    pub fn camera_pose(&self, t: f64) -> PoseSE3 {
        let (i, j, s) = segment(&self.camera, t, |k| k.t);
        // keyframe rotations were checked by validate()
        let qi = self.key_rotation(&self.camera[i]).unwrap_or_default();
        let qj = self.key_rotation(&self.camera[j]).unwrap_or_default();
        let q = qi.try_slerp(&qj, s, 1e-12).unwrap_or(if s < 0.5 { qi } else { qj });
        let (pi, pj) = (Vector3::from(self.camera[i].position), Vector3::from(self.camera[j].position));
        PoseSE3::from_quaternion(&q, pi + (pj - pi) * s)
    }

    pub fn actor_position(&self, actor: usize, t: f64) -> Vector3<f64> {
        let path = &self.actors[actor].path;
        let (i, j, s) = segment(path, t, |w| w.t);
        let (a, b) = (Vector3::from(path[i].position), Vector3::from(path[j].position));
        a + (b - a) * s
    }

    /// World-space box of an actor at time `t`.
    pub fn actor_box(&self, actor: usize, t: f64) -> AaBox {
        self.actors[actor].shape.translated(&self.actor_position(actor, t))
    }

    fn nearest_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>, actors: &[AaBox]) -> f64 {
        let planes = self.planes.iter().filter_map(|p| ray_plane(o, d, p));
        let boxes = self.boxes.iter().chain(actors).filter_map(|b| ray_box(o, d, b));
        planes.chain(boxes).fold(0.0, |best, s| if best == 0.0 || s < best { s } else { best })
    }

    /// Noise-free depth at time `t`; 0 where the ray hits nothing.
    pub fn render_depth_exact(&self, t: f64) -> DepthImage {
        self.render_view_exact(&self.camera_pose(t), t)
    }

    /// Noise-free depth seen from an arbitrary camera, with actors placed at
    /// time `t`.
    pub fn render_view_exact(&self, camera: &PoseSE3, t: f64) -> DepthImage {
        let k = &self.intrinsics;
        let actors: Vec<AaBox> = (0..self.actors.len()).map(|a| self.actor_box(a, t)).collect();
        let o = camera.translation;
        let mut img = DepthImage::new(k.width, k.height);
        for v in 0..k.height {
            let y = (v as f64 - k.cy) / k.fy;
            for u in 0..k.width {
                let ray = Vector3::new((u as f64 - k.cx) / k.fx, y, 1.0);
                let d = camera.rotation * ray;
                img.set(u, v, self.nearest_hit(&o, &d, &actors) as f32);
            }
        }
        img
    }

    /// Adds the scene's Gaussian depth noise to valid pixels. `stream`
    /// selects an independent, reproducible noise sequence.
    pub fn add_noise(&self, img: &mut DepthImage, stream: u64) {
        if !(self.noise_sigma > 0.0) {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        for d in img.data_mut() {
            if *d > 0.0 {
                let n = noise.sample(&mut rng) as f32;
                *d = (*d + n).max(0.0);
            }
        }
    }

    /// Depth at time `t` with additive Gaussian noise. The generator is
    /// seeded from the scene seed and the timestamp, so frames can be
    /// rendered in any order.
    pub fn render_depth(&self, t: f64) -> DepthImage {
        let mut img = self.render_depth_exact(t);
        self.add_noise(&mut img, noise_stream(t));
        img
    }

    /// Ground-truth detections of every actor at time `t`, in actor order.
    pub fn detections(&self, t: f64) -> Vec<(usize, Detection)> {
        let pose = self.camera_pose(t);
        (0..self.actors.len())
            .filter_map(|a| gt_detection(&self.actor_box(a, t), &pose, &self.intrinsics).map(|d| (a, d)))
            .collect()
    }

    pub fn camera_trajectory(&self) -> Trajectory {
        let mut traj = Trajectory::new();
        for t in self.timestamps() {
            // timestamps are strictly increasing
            let _ = traj.push(t, self.camera_pose(t));
        }
        traj
    }

    pub fn actor_trajectory(&self, actor: usize) -> Trajectory {
        let mut traj = Trajectory::new();
        for t in self.timestamps() {
            let _ = traj.push(t, PoseSE3::from_translation(self.actor_position(actor, t)));
        }
        traj
    }

    pub fn metadata(&self) -> DatasetMetadata {
        DatasetMetadata {
            depth_scale: self.depth_scale,
            intrinsics: Some(self.intrinsics),
            rate: Some(self.rate),
            noise_sigma: Some(self.noise_sigma),
            seed: Some(self.seed),
            frames: Some(self.frame_count()),
        }
    }
}

/// What [`generate_sequence`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSequence {
    pub timestamps: Vec<f64>,
    pub detections: usize,
}

/// Renders the whole scene into `out`:
/// `metadata.txt`, `depth.txt`, `depth/*.png`, `groundtruth.txt`,
/// `detections.txt` and one `actor_<k>.txt` per actor.
pub fn generate_sequence(scene: &SyntheticScene, out: &Path) -> Result<GeneratedSequence> {
    scene.validate()?;
    let depth_dir = out.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;
    scene.metadata().write(&out.join("metadata.txt"))?;

    let stamps = scene.timestamps();
    let mut index = Vec::with_capacity(stamps.len());
    let mut dets = DetectionSet::default();
    for &t in &stamps {
        let rel = format!("depth/{t:.6}.png");
        crate::io::write_depth_png(&out.join(&rel), &scene.render_depth(t), scene.depth_scale)?;
        index.push((t, rel));
        for (_, d) in scene.detections(t) {
            dets.push(t, d);
        }
    }
    write_depth_index(&out.join("depth.txt"), &index)?;
    write_trajectory(&out.join("groundtruth.txt"), &scene.camera_trajectory())?;
    write_detections(&out.join("detections.txt"), &dets)?;
    for a in 0..scene.actors.len() {
        write_trajectory(&out.join(format!("actor_{a}.txt")), &scene.actor_trajectory(a))?;
    }
    Ok(GeneratedSequence {
        timestamps: stamps,
        detections: dets.groups.iter().map(|g| g.1.len()).sum(),
    })
}
