//! World-frame point cloud built from filtered background frames.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::{ColorImage, DepthImage};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Per-point color, present only when every fused frame had one.
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-projects every `stride`-th valid pixel and appends it in world
/// coordinates.
pub fn fuse_frame(
    map: &mut PointCloud,
    depth: &DepthImage,
    color: Option<&ColorImage>,
    pose: &PoseSE3,
    k: &Intrinsics,
    stride: usize,
) {
    let stride = stride.max(1);
    let color = color.filter(|c| c.width == depth.width() && c.height == depth.height());
    if map.points.is_empty() && color.is_some() {
        map.colors = Some(Vec::new());
    } else if color.is_none() {
        map.colors = None;
    }
    for v in (0..depth.height()).step_by(stride) {
        let yr = (v as f64 - k.cy) / k.fy;
        for u in (0..depth.width()).step_by(stride) {
            let d = depth.get(u, v) as f64;
            if d <= 0.0 {
                continue;
            }
            let p = Vector3::new((u as f64 - k.cx) / k.fx * d, yr * d, d);
            map.points.push(pose.transform(&p));
            if let (Some(cols), Some(img)) = (map.colors.as_mut(), color) {
                cols.push(img.get(u, v));
            }
        }
    }
}

fn voxel_key(p: &Vector3<f64>, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Replaces the points of each occupied voxel by their centroid. Output
/// order follows the first occurrence of each voxel.
pub fn voxel_downsample(map: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) {
        return Err(Error::InvalidInput(format!("voxel size {voxel}")));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::with_capacity(map.len() / 4);
    let mut sums: Vec<(Vector3<f64>, [u64; 3], u64)> = Vec::new();
    for (i, p) in map.points.iter().enumerate() {
        let slot = *slots.entry(voxel_key(p, voxel)).or_insert_with(|| {
            sums.push((Vector3::zeros(), [0; 3], 0));
            sums.len() - 1
        });
        let s = &mut sums[slot];
        s.0 += p;
        if let Some(c) = map.colors.as_ref().map(|c| c[i]) {
            for ch in 0..3 {
                s.1[ch] += c[ch] as u64;
            }
        }
        s.2 += 1;
    }
    let points = sums.iter().map(|(s, _, n)| s / *n as f64).collect();
    let colors = map.colors.as_ref().map(|_| {
        sums.iter()
            .map(|(_, c, n)| {
                let avg = |x: u64| ((x + n / 2) / n) as u8;
                [avg(c[0]), avg(c[1]), avg(c[2])]
            })
            .collect()
    });
    Ok(PointCloud { points, colors })
}
