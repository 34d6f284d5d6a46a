//! Frame-to-frame depth odometry.
//!
//! Point-to-plane ICP with projective association over an image pyramid,
//! solved by Gauss-Newton on a left-multiplied twist with Huber weights and
//! step halving. The estimated pose maps points of the current frame into
//! the previous frame.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryConfig {
    pub pyramid_levels: usize,
    /// Iteration cap per pyramid level.
    pub max_iterations: usize,
    /// Stop a level once the twist update norm drops below this.
    pub convergence_eps: f64,
    /// Weight of the dense term. The sparse term is not used, so this only
    /// scales the cost.
    pub dense_weight: f64,
    /// Huber threshold on point-to-plane residuals, meters.
    pub huber_delta: f64,
    /// Neighbour depth jump that invalidates a normal, meters.
    pub discontinuity: f64,
    /// Correspondences farther apart than this are rejected, meters.
    pub max_correspondence_distance: f64,
    /// Source pixel stride at the finest level.
    pub finest_stride: usize,
    /// Half-width of the normal stencil at the finest level, pixels. Halved
    /// at every coarser level, never below 1. Zero picks one pixel per 160
    /// columns of the input.
    pub normal_radius: usize,
    pub min_valid_pixels: usize,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        OdometryConfig {
            pyramid_levels: 3,
            max_iterations: 10,
            convergence_eps: 1e-6,
            dense_weight: 1.0,
            huber_delta: 0.05,
            discontinuity: 0.1,
            max_correspondence_distance: 0.1,
            finest_stride: 4,
            normal_radius: 0,
            min_valid_pixels: 1000,
        }
    }
}

impl OdometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0
            || !(self.convergence_eps > 0.0)
            || !(self.dense_weight > 0.0)
            || !(self.huber_delta > 0.0)
            || !(self.max_correspondence_distance > 0.0)
            || self.finest_stride == 0
        {
            return Err(Error::InvalidInput(format!("invalid odometry config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryReport {
    pub pose: PoseSE3,
    /// Gauss-Newton iterations over all levels.
    pub iterations: usize,
    /// RMS point-to-plane residual of the inliers at the final pose, meters.
    pub residual_rms: f64,
    pub inliers: usize,
    /// Set when the normal equations became degenerate; `pose` is then the
    /// best estimate reached before that point.
    pub diverged: bool,
    /// Mean robust cost after every accepted step (per level, coarse to fine).
    pub cost_history: Vec<f64>,
}

struct Level {
    k: Intrinsics,
    vertices: Vec<[f32; 3]>,
    normals: Vec<[f32; 3]>,
}

/// Vertex and normal pyramid of one depth frame.
pub struct OdometryFrame {
    levels: Vec<Level>,
    valid: usize,
}

impl OdometryFrame {
    pub fn new(depth: &DepthImage, k: &Intrinsics, cfg: &OdometryConfig) -> Self {
        let mut levels = Vec::with_capacity(cfg.pyramid_levels);
        let mut d = depth.clone();
        let mut kk = *k;
        let radius = match cfg.normal_radius {
            0 => (depth.width() / 160).max(1),
            r => r,
        };
        for l in 0..cfg.pyramid_levels {
            if l > 0 {
                d = downsample(&d, cfg.discontinuity);
                kk = kk.half();
            }
            levels.push(build_level(&d, &kk, cfg.discontinuity, radius >> l));
        }
        OdometryFrame {
            levels,
            valid: depth.valid_count(),
        }
    }

    pub fn valid_pixels(&self) -> usize {
        self.valid
    }
}

fn downsample(d: &DepthImage, jump: f64) -> DepthImage {
    let (w, h) = (d.width() / 2, d.height() / 2);
    let mut out = DepthImage::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let block = [
                d.get(2 * u, 2 * v),
                d.get(2 * u + 1, 2 * v),
                d.get(2 * u, 2 * v + 1),
                d.get(2 * u + 1, 2 * v + 1),
            ];
            let near = block
                .iter()
                .copied()
                .filter(|x| *x > 0.0)
                .fold(f32::INFINITY, f32::min);
            if !near.is_finite() {
                continue;
            }
            let (mut sum, mut n) = (0.0f32, 0);
            for x in block {
                if x > 0.0 && (x - near) as f64 <= jump {
                    sum += x;
                    n += 1;
                }
            }
            out.set(u, v, sum / n as f32);
        }
    }
    out
}

const INVALID: [f32; 3] = [f32::NAN; 3];

/// Normals are central differences over `rad` pixels; a wider baseline
/// keeps sensor noise from dominating the finest level.
fn build_level(d: &DepthImage, k: &Intrinsics, jump: f64, rad: usize) -> Level {
    let rad = rad.max(1);
    let (w, h) = (d.width(), d.height());
    let (ifx, ify) = (1.0 / k.fx, 1.0 / k.fy);
    let mut vertices = vec![INVALID; w * h];
    for v in 0..h {
        let yr = ((v as f64 - k.cy) * ify) as f32;
        for (u, &z) in d.row(v).iter().enumerate() {
            if z > 0.0 {
                let xr = ((u as f64 - k.cx) * ifx) as f32;
                vertices[v * w + u] = [xr * z, yr * z, z];
            }
        }
    }
    let mut normals = vec![INVALID; w * h];
    let jump = jump as f32;
    for v in rad..h.saturating_sub(rad) {
        for u in rad..w.saturating_sub(rad) {
            let i = v * w + u;
            let z = d.get(u, v);
            if z <= 0.0 {
                continue;
            }
            let nb = [
                d.get(u - rad, v),
                d.get(u + rad, v),
                d.get(u, v - rad),
                d.get(u, v + rad),
                d.get(u - 1, v),
                d.get(u + 1, v),
                d.get(u, v - 1),
                d.get(u, v + 1),
            ];
            if nb.iter().any(|&n| n <= 0.0 || (n - z).abs() > jump) {
                continue;
            }
            let (l, r, t, b) = (vertices[i - rad], vertices[i + rad], vertices[i - rad * w], vertices[i + rad * w]);
            let dx = [r[0] - l[0], r[1] - l[1], r[2] - l[2]];
            let dy = [b[0] - t[0], b[1] - t[1], b[2] - t[2]];
            let mut n = [
                dx[1] * dy[2] - dx[2] * dy[1],
                dx[2] * dy[0] - dx[0] * dy[2],
                dx[0] * dy[1] - dx[1] * dy[0],
            ];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !(norm > 0.0) {
                continue;
            }
            let p = vertices[i];
            // face the camera
            let s = if n[0] * p[0] + n[1] * p[1] + n[2] * p[2] > 0.0 {
                -1.0 / norm
            } else {
                1.0 / norm
            };
            n.iter_mut().for_each(|c| *c *= s);
            normals[i] = n;
        }
    }
    Level {
        k: *k,
        vertices,
        normals,
    }
}

#[derive(Default)]
struct Normal {
    h: [f64; 21],
    g: [f64; 6],
    cost: f64,
    sq: f64,
    n: usize,
}

impl Normal {
    fn mean_cost(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            self.cost / self.n as f64
        }
    }

    fn rms(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sq / self.n as f64).sqrt()
        }
    }

    fn solve(&self) -> Option<Vector6<f64>> {
        let mut m = Matrix6::zeros();
        let mut idx = 0;
        for r in 0..6 {
            for c in r..6 {
                m[(r, c)] = self.h[idx];
                m[(c, r)] = self.h[idx];
                idx += 1;
            }
        }
        let g = Vector6::from_column_slice(&self.g);
        m.cholesky().map(|ch| -ch.solve(&g))
    }
}

fn huber(r: f64, delta: f64) -> (f64, f64) {
    let a = r.abs();
    if a <= delta {
        (0.5 * r * r, 1.0)
    } else {
        (delta * (a - 0.5 * delta), delta / a)
    }
}

/// One association and linearization pass of `source` against `target`.
fn accumulate(
    target: &Level,
    source: &Level,
    pose: &PoseSE3,
    cfg: &OdometryConfig,
    stride: usize,
) -> Normal {
    let k = &target.k;
    let (w, h) = (k.width as isize, k.height as isize);
    let src_w = source.k.width;
    let max_d2 = cfg.max_correspondence_distance * cfg.max_correspondence_distance;
    let r = &pose.rotation;
    let t = &pose.translation;
    let mut acc = Normal::default();
    for sv in (0..source.k.height).step_by(stride) {
        for su in (0..src_w).step_by(stride) {
            let q = source.vertices[sv * src_w + su];
            if q[2].is_nan() {
                continue;
            }
            let q = Vector3::new(q[0] as f64, q[1] as f64, q[2] as f64);
            let p = r * q + t;
            if p.z <= 1e-6 {
                continue;
            }
            let u = (k.fx * p.x / p.z + k.cx).round() as isize;
            let v = (k.fy * p.y / p.z + k.cy).round() as isize;
            if u < 0 || v < 0 || u >= w || v >= h {
                continue;
            }
            let i = v as usize * k.width + u as usize;
            let n = target.normals[i];
            if n[0].is_nan() {
                continue;
            }
            let tv = target.vertices[i];
            let diff = p - Vector3::new(tv[0] as f64, tv[1] as f64, tv[2] as f64);
            if diff.norm_squared() > max_d2 {
                continue;
            }
            let n = Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64);
            let res = n.dot(&diff);
            let (rho, wgt) = huber(res, cfg.huber_delta);
            let pn = p.cross(&n);
            let j = [n.x, n.y, n.z, pn.x, pn.y, pn.z];
            let wd = wgt * cfg.dense_weight;
            let mut idx = 0;
            for a in 0..6 {
                let wa = wd * j[a];
                for b in a..6 {
                    acc.h[idx] += wa * j[b];
                    idx += 1;
                }
                acc.g[a] += wa * res;
            }
            acc.cost += cfg.dense_weight * rho;
            acc.sq += res * res;
            acc.n += 1;
        }
    }
    acc
}

const MIN_CORRESPONDENCES: usize = 12;
const MAX_HALVINGS: usize = 2;

/// Estimates the pose of `curr` relative to `prev`.
pub fn estimate_pose(
    prev: &DepthImage,
    curr: &DepthImage,
    k: &Intrinsics,
    init: &PoseSE3,
    cfg: &OdometryConfig,
) -> Result<OdometryReport> {
    cfg.validate()?;
    let a = OdometryFrame::new(prev, k, cfg);
    let b = OdometryFrame::new(curr, k, cfg);
    estimate_pose_frames(&a, &b, init, cfg)
}

/// Same as [`estimate_pose`] on precomputed pyramids.
pub fn estimate_pose_frames(
    prev: &OdometryFrame,
    curr: &OdometryFrame,
    init: &PoseSE3,
    cfg: &OdometryConfig,
) -> Result<OdometryReport> {
    for f in [prev, curr] {
        if f.valid < cfg.min_valid_pixels {
            return Err(Error::InsufficientPixels {
                found: f.valid,
                required: cfg.min_valid_pixels,
            });
        }
    }
    let levels = prev.levels.len().min(curr.levels.len());
    let mut pose = *init;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut last = Normal::default();
    let mut diverged = false;

    'levels: for l in (0..levels).rev() {
        let (target, source) = (&prev.levels[l], &curr.levels[l]);
        let stride = if l == 0 { cfg.finest_stride } else { 1 };
        let mut cur = accumulate(target, source, &pose, cfg, stride);
        for _ in 0..cfg.max_iterations {
            if cur.n < MIN_CORRESPONDENCES {
                diverged = true;
                last = cur;
                break 'levels;
            }
            let Some(step) = cur.solve() else {
                diverged = true;
                last = cur;
                break 'levels;
            };
            iterations += 1;
            if step.norm() < cfg.convergence_eps {
                break;
            }
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand = PoseSE3::exp(&(step * scale)).compose(&pose);
                let eval = accumulate(target, source, &cand, cfg, stride);
                if eval.n >= MIN_CORRESPONDENCES && eval.mean_cost() <= cur.mean_cost() {
                    accepted = Some((cand, eval));
                    break;
                }
                scale *= 0.5;
            }
            match accepted {
                Some((cand, eval)) => {
                    pose = cand.orthonormalized();
                    cur = eval;
                    history.push(cur.mean_cost());
                }
                // three trial steps in a row raised the cost: level is done
                None => break,
            }
        }
        last = cur;
    }

    Ok(OdometryReport {
        pose,
        iterations,
        residual_rms: last.rms(),
        inliers: last.n,
        diverged,
        cost_history: history,
    })
}

/// Point pair with the target surface normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// Point-to-plane residuals, meters.
    pub residuals: DVector<f64>,
    /// Derivative of each residual with respect to a twist `delta` applied
    /// on the left, `exp(delta) * exp(twist)`, evaluated at `delta = 0`.
    pub jacobian: DMatrix<f64>,
    /// Indices of the correspondences that were kept.
    pub kept: Vec<usize>,
}

/// Residuals `n . (exp(twist) s - t)` and their Jacobian.
///
/// Correspondences whose normal is not unit length are dropped.
pub fn residual_and_jacobian(corrs: &[Correspondence], twist: &Vector6<f64>) -> Linearization {
    let pose = PoseSE3::exp(twist);
    let kept: Vec<usize> = corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.normal.iter().all(|x| x.is_finite()) && (c.normal.norm() - 1.0).abs() < 1e-6)
        .map(|(i, _)| i)
        .collect();
    let mut residuals = DVector::zeros(kept.len());
    let mut jacobian = DMatrix::zeros(kept.len(), 6);
    for (row, &i) in kept.iter().enumerate() {
        let c = &corrs[i];
        let p = pose.transform(&c.source);
        residuals[row] = c.normal.dot(&(p - c.target));
        let pn = p.cross(&c.normal);
        for (col, v) in [c.normal.x, c.normal.y, c.normal.z, pn.x, pn.y, pn.z]
            .into_iter()
            .enumerate()
        {
            jacobian[(row, col)] = v;
        }
    }
    Linearization {
        residuals,
        jacobian,
        kept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics::new(200.0, 200.0, 79.5, 59.5, 160, 120).unwrap()
    }

    #[test]
    fn self_correspondence_has_zero_residual() {
        let c = Correspondence {
            source: Vector3::new(0.1, 0.2, 2.0),
            target: Vector3::new(0.1, 0.2, 2.0),
            normal: Vector3::new(0.0, 0.0, -1.0),
        };
        let lin = residual_and_jacobian(&[c], &Vector6::zeros());
        assert_eq!(lin.residuals[0], 0.0);
    }

    #[test]
    fn hand_derived_jacobian_row() {
        // r = n.(s - t) with n = z: J = [n, s x n] = [0,0,1, 2,-1,0]
        let c = Correspondence {
            source: Vector3::new(1.0, 2.0, 3.0),
            target: Vector3::new(1.0, 2.0, 2.5),
            normal: Vector3::z(),
        };
        let lin = residual_and_jacobian(&[c], &Vector6::zeros());
        assert_eq!(lin.residuals[0], 0.5);
        let row: Vec<f64> = lin.jacobian.row(0).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.0]);
    }

    #[test]
    fn degenerate_normals_dropped() {
        let good = Correspondence {
            source: Vector3::new(0.0, 0.0, 1.0),
            target: Vector3::new(0.0, 0.0, 1.0),
            normal: Vector3::z(),
        };
        let zero = Correspondence {
            normal: Vector3::zeros(),
            ..good
        };
        let long = Correspondence {
            normal: Vector3::new(0.0, 0.0, 2.0),
            ..good
        };
        let lin = residual_and_jacobian(&[zero, good, long], &Vector6::zeros());
        assert_eq!(lin.kept, vec![1]);
        assert_eq!(lin.residuals.len(), 1);
    }

    #[test]
    fn identical_frames_give_identity() {
        // tilted plane so every direction is observable only partially,
        // plus a box step for lateral constraints
        let k = k();
        let mut d = DepthImage::new(160, 120);
        for v in 0..120 {
            for u in 0..160 {
                let z = 2.0 + 0.004 * u as f32 + 0.002 * v as f32;
                let z = if (40..80).contains(&u) && (30..70).contains(&v) { z - 0.5 } else { z };
                d.set(u, v, z);
            }
        }
        let cfg = OdometryConfig::default();
        let rep = estimate_pose(&d, &d, &k, &PoseSE3::identity(), &cfg).unwrap();
        assert!((rep.pose.to_matrix() - nalgebra::Matrix4::identity()).abs().max() < 1e-6);
        assert!(rep.residual_rms < 1e-9);
        assert!(!rep.diverged);
    }

    #[test]
    fn too_few_pixels() {
        let k = k();
        let d = DepthImage::new(160, 120);
        let err = estimate_pose(&d, &d, &k, &PoseSE3::identity(), &OdometryConfig::default());
        assert!(matches!(err, Err(Error::InsufficientPixels { .. })));
    }

    #[test]
    fn downsample_respects_discontinuities() {
        let d = DepthImage::from_vec(2, 2, vec![1.0, 1.02, 3.0, 0.0]).unwrap();
        let h = downsample(&d, 0.1);
        assert!((h.get(0, 0) - 1.01).abs() < 1e-6);
    }
}
