//! Absolute trajectory error: timestamp association, closed-form rigid
//! alignment (Horn's unit-quaternion method, no scale) and RMSE.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub stamp: f64,
    pub pose: PoseSE3,
}

/// Poses ordered by strictly increasing timestamp, in seconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_poses(poses: Vec<StampedPose>) -> Result<Self> {
        let mut t = Trajectory::new();
        for p in poses {
            t.push(p.stamp, p.pose)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, stamp: f64, pose: PoseSE3) -> Result<()> {
        if !stamp.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {stamp}")));
        }
        if let Some(last) = self.poses.last() {
            if !(stamp > last.stamp) {
                return Err(Error::InvalidInput(format!(
                    "timestamp {stamp} does not follow {}",
                    last.stamp
                )));
            }
        }
        self.poses.push(StampedPose { stamp, pose });
        Ok(())
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].pose.translation - w[0].pose.translation).norm())
            .sum()
    }

    /// Pose whose timestamp is nearest to `stamp`, if within `max_dt`.
    pub fn nearest(&self, stamp: f64, max_dt: f64) -> Option<&StampedPose> {
        let i = self.poses.partition_point(|p| p.stamp < stamp);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.poses.get(j))
            .filter(|p| (p.stamp - stamp).abs() <= max_dt)
            .min_by(|a, b| (a.stamp - stamp).abs().total_cmp(&(b.stamp - stamp).abs()))
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &PoseSE3) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| StampedPose {
                    stamp: p.stamp,
                    pose: t.compose(&p.pose),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub est_stamp: f64,
    pub gt_stamp: f64,
    pub est: PoseSE3,
    pub gt: PoseSE3,
}

/// One-to-one pairing by timestamp: candidates within `max_dt` are taken in
/// order of increasing `|dt|`. Pairs are returned in estimate order.
pub fn associate_by_time(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<PosePair>> {
    if est.is_empty() || gt.is_empty() {
        return Err(Error::NoOverlap { max_dt });
    }
    let g = gt.poses();
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, e) in est.poses().iter().enumerate() {
        let start = g.partition_point(|p| p.stamp < e.stamp - max_dt);
        for (j, p) in g.iter().enumerate().skip(start) {
            let dt = (p.stamp - e.stamp).abs();
            if p.stamp > e.stamp + max_dt {
                break;
            }
            if dt <= max_dt {
                cands.push((dt, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if used_e[i] || used_g[j] {
            continue;
        }
        used_e[i] = true;
        used_g[j] = true;
        pairs.push(PosePair {
            est_stamp: est.poses()[i].stamp,
            gt_stamp: g[j].stamp,
            est: est.poses()[i].pose,
            gt: g[j].pose,
        });
    }
    if pairs.is_empty() {
        return Err(Error::NoOverlap { max_dt });
    }
    pairs.sort_by(|a, b| a.est_stamp.total_cmp(&b.est_stamp));
    Ok(pairs)
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn is_collinear(points: &[Vector3<f64>], c: &Vector3<f64>) -> bool {
    let cov: Matrix3<f64> = points
        .iter()
        .map(|p| (p - c) * (p - c).transpose())
        .sum();
    let mut s: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    !(s[0] > 0.0) || s[1] <= 1e-12 * s[0]
}

/// Rigid transform `S` minimizing `sum |gt_i - S est_i|^2` over positions.
pub fn align_rigid(pairs: &[PosePair]) -> Result<PoseSE3> {
    let est: Vec<Vector3<f64>> = pairs.iter().map(|p| p.est.translation).collect();
    let gt: Vec<Vector3<f64>> = pairs.iter().map(|p| p.gt.translation).collect();
    align_points(&est, &gt)
}

/// Horn's closed form on point sets; `est[i]` corresponds to `gt[i]`.
pub fn align_points(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<PoseSE3> {
    if est.len() != gt.len() {
        return Err(Error::InvalidInput("point sets differ in length".into()));
    }
    if est.len() < 3 {
        return Err(Error::RankDeficient(format!("{} point pairs", est.len())));
    }
    let (ce, cg) = (centroid(est), centroid(gt));
    if is_collinear(est, &ce) || is_collinear(gt, &cg) {
        return Err(Error::RankDeficient("points are collinear".into()));
    }
    let m: Matrix3<f64> = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (e - ce) * (g - cg).transpose())
        .sum();
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let best = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(best);
    let rotation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner();
    Ok(PoseSE3::new(rotation, cg - rotation * ce))
}

/// Per-pair position errors after applying `alignment` to the estimate.
pub fn position_errors(pairs: &[PosePair], alignment: &PoseSE3) -> Vec<(f64, f64)> {
    pairs
        .iter()
        .map(|p| {
            let e = alignment.transform(&p.est.translation);
            (p.est_stamp, (p.gt.translation - e).norm())
        })
        .collect()
}

pub fn ate_rmse(pairs: &[PosePair], alignment: &PoseSE3) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sq: f64 = position_errors(pairs, alignment)
        .iter()
        .map(|(_, e)| e * e)
        .sum();
    (sq / pairs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub alignment: PoseSE3,
    /// `(estimate timestamp, error in meters)`
    pub errors: Vec<(f64, f64)>,
}

/// Associate, align and score in one call.
pub fn evaluate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<AteReport> {
    let pairs = associate_by_time(est, gt, max_dt)?;
    let alignment = align_rigid(&pairs)?;
    Ok(AteReport {
        rmse: ate_rmse(&pairs, &alignment),
        errors: position_errors(&pairs, &alignment),
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn traj(stamps: &[f64], mut pos: impl FnMut(f64) -> Vector3<f64>) -> Trajectory {
        Trajectory::from_poses(
            stamps
                .iter()
                .map(|&t| StampedPose {
                    stamp: t,
                    pose: PoseSE3::from_translation(pos(t)),
                })
                .collect(),
        )
        .unwrap()
    }

    fn curve(t: f64) -> Vector3<f64> {
        Vector3::new(t.sin(), 0.3 * t, (0.7 * t).cos())
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> PoseSE3 {
        let xi = nalgebra::Vector6::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(-3.0..3.0)
            } else {
                rng.random_range(-1.5..1.5)
            }
        });
        PoseSE3::exp(&xi)
    }

    #[test]
    fn identical_stamps_pair_fully() {
        let stamps: Vec<f64> = (0..50).map(|i| i as f64 / 30.0).collect();
        let a = traj(&stamps, curve);
        let pairs = associate_by_time(&a, &a, 0.02).unwrap();
        assert_eq!(pairs.len(), 50);
        assert!(pairs.iter().all(|p| p.est_stamp == p.gt_stamp));
    }

    #[test]
    fn offset_stamps_pair_fully() {
        let stamps: Vec<f64> = (0..50).map(|i| i as f64 / 30.0).collect();
        let shifted: Vec<f64> = stamps.iter().map(|t| t + 0.01).collect();
        let pairs = associate_by_time(&traj(&shifted, curve), &traj(&stamps, curve), 0.02).unwrap();
        // enumeration: every shifted stamp's nearest gt stamp is its own origin
        for p in &pairs {
            let nearest = stamps
                .iter()
                .copied()
                .min_by(|a, b| (a - p.est_stamp).abs().total_cmp(&(b - p.est_stamp).abs()))
                .unwrap();
            assert_eq!(p.gt_stamp, nearest);
        }
        assert_eq!(pairs.len(), 50);
    }

    #[test]
    fn disjoint_ranges_fail() {
        let a = traj(&[0.0, 1.0, 2.0], curve);
        let b = traj(&[10.0, 11.0], curve);
        assert!(matches!(associate_by_time(&a, &b, 0.02), Err(Error::NoOverlap { .. })));
    }

    #[test]
    fn alignment_of_identical_is_identity() {
        let stamps: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let a = traj(&stamps, curve);
        let pairs = associate_by_time(&a, &a, 0.02).unwrap();
        let s = align_rigid(&pairs).unwrap();
        assert!((s.to_matrix() - Matrix4::identity()).abs().max() < 1e-9);
        assert!(ate_rmse(&pairs, &s) < 1e-9);
    }

    #[test]
    fn recovers_inverse_of_applied_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let stamps: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let gt = traj(&stamps, curve);
        for _ in 0..20 {
            let t = random_pose(&mut rng);
            let est = gt.transformed(&t);
            let pairs = associate_by_time(&est, &gt, 0.02).unwrap();
            let s = align_rigid(&pairs).unwrap();
            let err = (s.to_matrix() - t.inverse().to_matrix()).abs().max();
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn alignment_never_worse_than_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = Normal::new(0.0, 0.05).unwrap();
        for _ in 0..20 {
            let stamps: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
            let gt = traj(&stamps, curve);
            let est = traj(&stamps, |t| {
                curve(t) + Vector3::from_fn(|_, _| noise.sample(&mut rng))
            });
            let pairs = associate_by_time(&est, &gt, 0.02).unwrap();
            let aligned = ate_rmse(&pairs, &align_rigid(&pairs).unwrap());
            assert!(aligned <= ate_rmse(&pairs, &PoseSE3::identity()) + 1e-12);
        }
    }

    #[test]
    fn collinear_is_rank_deficient() {
        let stamps: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let a = traj(&stamps, |t| Vector3::new(t, 0.0, 0.0));
        let pairs = associate_by_time(&a, &a, 0.02).unwrap();
        assert!(matches!(align_rigid(&pairs), Err(Error::RankDeficient(_))));
        assert!(matches!(align_rigid(&pairs[..2]), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn constant_offset_without_alignment() {
        let stamps: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let gt = traj(&stamps, curve);
        let est = traj(&stamps, |t| curve(t) + Vector3::new(0.0, 0.05, 0.0));
        let pairs = associate_by_time(&est, &gt, 0.02).unwrap();
        assert!((ate_rmse(&pairs, &PoseSE3::identity()) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn nearest_lookup() {
        let a = traj(&[0.0, 1.0, 2.0], curve);
        assert_eq!(a.nearest(1.2, 0.5).unwrap().stamp, 1.0);
        assert_eq!(a.nearest(1.6, 0.5).unwrap().stamp, 2.0);
        assert!(a.nearest(5.0, 0.5).is_none());
    }
}
