//! Human center points in the world frame and their association into
//! trajectories.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{backproject, Intrinsics, Point3H, PoseSE3};
use crate::separation::{Detection, HumanPart};

/// Mean of the nonzero depths of a human part.
pub fn mean_depth(part: &HumanPart) -> Result<f64> {
    let (sum, n) = part
        .valid_values()
        .fold((0.0f64, 0usize), |(s, n), d| (s + d as f64, n + 1));
    if n == 0 {
        Err(Error::NoDepth)
    } else {
        Ok(sum / n as f64)
    }
}

/// Camera-frame point at the box center, placed at depth `d_m`.
pub fn center_point(det: &Detection, d_m: f64, k: &Intrinsics) -> Result<Point3H> {
    if !(d_m > 0.0) {
        return Err(Error::InvalidInput(format!("invalid mean depth {d_m}")));
    }
    Ok(Point3H::new(
        (det.x_ul + det.x_lr - 2.0 * k.cx) / (2.0 * k.fx) * d_m,
        (det.y_ul + det.y_lr - 2.0 * k.cy) / (2.0 * k.fy) * d_m,
        d_m,
    ))
}

/// Same point as [`center_point`], via the generic back-projection.
pub fn center_point_backprojected(det: &Detection, d_m: f64, k: &Intrinsics) -> Result<Point3H> {
    let (u, v) = det.center();
    backproject(u, v, d_m, k)
}

pub fn to_world(p_c: &Point3H, pose: &PoseSE3) -> Vector3<f64> {
    pose.transform(&p_c.euclidean())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// `(timestamp, world position)`, timestamps strictly increasing.
    pub points: Vec<(f64, Vector3<f64>)>,
    /// Consecutive frames without a matching observation.
    pub misses: usize,
}

impl Track {
    pub fn last_position(&self) -> Vector3<f64> {
        self.points.last().map(|p| p.1).unwrap_or_else(Vector3::zeros)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig {
    /// Largest accepted match distance, meters.
    pub gate: f64,
    /// A track is dropped once it has missed more than this many frames.
    pub max_misses: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            gate: 0.8,
            max_misses: 15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(track id, observation index)`
    pub matches: Vec<(u64, usize)>,
    /// `(new track id, observation index)`
    pub spawned: Vec<(u64, usize)>,
    pub terminated: Vec<u64>,
}

/// Live tracks plus the ones already terminated.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AssociationConfig,
    live: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_stamp: Option<f64>,
}

impl Tracker {
    pub fn new(cfg: AssociationConfig) -> Result<Self> {
        if !(cfg.gate > 0.0) {
            return Err(Error::InvalidInput(format!("gate {}", cfg.gate)));
        }
        Ok(Tracker {
            cfg,
            live: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_stamp: None,
        })
    }

    pub fn live(&self) -> &[Track] {
        &self.live
    }

    /// All tracks ever created, ordered by id.
    pub fn all_tracks(&self) -> Vec<Track> {
        let mut all: Vec<Track> = self.finished.iter().chain(&self.live).cloned().collect();
        all.sort_by_key(|t| t.id);
        all
    }

    /// Greedy nearest-neighbour association of one frame's observations.
    ///
    /// Candidate pairs within the gate are taken in ascending distance, ties
    /// broken by track id and then observation index.
    pub fn associate(&mut self, stamp: f64, observations: &[Vector3<f64>]) -> Result<Assignment> {
        if let Some(last) = self.last_stamp {
            if !(stamp > last) {
                return Err(Error::InvalidInput(format!(
                    "timestamp {stamp} does not follow {last}"
                )));
            }
        }
        self.last_stamp = Some(stamp);

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, track) in self.live.iter().enumerate() {
            let last = track.last_position();
            for (oi, obs) in observations.iter().enumerate() {
                let d = (obs - last).norm();
                if d <= self.cfg.gate {
                    pairs.push((d, ti, oi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(self.live[a.1].id.cmp(&self.live[b.1].id))
                .then(a.2.cmp(&b.2))
        });

        let mut track_used = vec![false; self.live.len()];
        let mut obs_used = vec![false; observations.len()];
        let mut out = Assignment::default();
        for (_, ti, oi) in pairs {
            if track_used[ti] || obs_used[oi] {
                continue;
            }
            track_used[ti] = true;
            obs_used[oi] = true;
            let track = &mut self.live[ti];
            track.points.push((stamp, observations[oi]));
            track.misses = 0;
            out.matches.push((track.id, oi));
        }

        for (ti, used) in track_used.iter().enumerate() {
            if !used {
                self.live[ti].misses += 1;
            }
        }
        let max_misses = self.cfg.max_misses;
        let (dead, live): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| t.misses > max_misses);
        self.live = live;
        out.terminated = dead.iter().map(|t| t.id).collect();
        self.finished.extend(dead);

        for (oi, used) in obs_used.iter().enumerate() {
            if !used {
                let id = self.next_id;
                self.next_id += 1;
                self.live.push(Track {
                    id,
                    points: vec![(stamp, observations[oi])],
                    misses: 0,
                });
                out.spawned.push((id, oi));
            }
        }
        Ok(out)
    }
}
