use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{content_lines, fmt_num, parse_field, read_text, write_text};
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::PoseSE3;

const QUATERNION_TOLERANCE: f64 = 1e-3;

/// Parses `timestamp tx ty tz qx qy qz qw` lines.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    for (line, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(Error::parse(path, line, format!("expected 8 fields, found {}", toks.len())));
        }
        let mut v = [0.0f64; 8];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_field(path, line, tok, "number")?;
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let norm = q.norm();
        if !((norm - 1.0).abs() <= QUATERNION_TOLERANCE) {
            return Err(Error::parse(path, line, format!("quaternion norm {norm} is not 1")));
        }
        if (norm - 1.0).abs() > 1e-9 {
            warn!("{}:{line}: renormalizing quaternion of norm {norm}", path.display());
        }
        let pose = PoseSE3::from_quaternion(
            &UnitQuaternion::from_quaternion(q),
            Vector3::new(v[1], v[2], v[3]),
        );
        traj.push(v[0], pose)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read_text(path)?, path)
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::new();
    for p in traj.poses() {
        let q = p.pose.quaternion();
        let t = p.pose.translation;
        let _ = writeln!(
            s,
            "{:.6} {} {} {} {} {} {} {}",
            p.stamp,
            fmt_num(t.x),
            fmt_num(t.y),
            fmt_num(t.z),
            fmt_num(q.i),
            fmt_num(q.j),
            fmt_num(q.k),
            fmt_num(q.w)
        );
    }
    s
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_text(path, &format_trajectory(traj))
}
