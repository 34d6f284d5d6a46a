use std::fmt::Write as _;
use std::path::Path;

use super::{content_lines, fmt_num, parse_field, read_text, write_text};
use crate::error::{Error, Result};
use crate::separation::Detection;

/// Detections grouped by timestamp, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub groups: Vec<(f64, Vec<Detection>)>,
}

impl DetectionSet {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    /// Detections of the group nearest in time to `t`, if within `max_dt`.
    pub fn nearest(&self, t: f64, max_dt: f64) -> &[Detection] {
        self.groups
            .iter()
            .filter(|(s, _)| (s - t).abs() <= max_dt)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, d)| d.as_slice())
            .unwrap_or(&[])
    }

    pub fn push(&mut self, t: f64, det: Detection) {
        match self.groups.iter_mut().find(|(s, _)| *s == t) {
            Some((_, v)) => v.push(det),
            None => self.groups.push((t, vec![det])),
        }
    }
}

/// Parses `timestamp x_ul y_ul x_lr y_lr confidence` records.
pub fn read_detections(path: &Path) -> Result<DetectionSet> {
    let text = read_text(path)?;
    let mut set = DetectionSet::default();
    for (line, l) in content_lines(&text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::parse(path, line, format!("expected 6 fields, found {}", toks.len())));
        }
        let mut v = [0.0f64; 6];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_field(path, line, tok, "number")?;
        }
        let det = Detection::new(v[1], v[2], v[3], v[4], v[5]);
        if !v[0].is_finite() || !det.is_well_formed() {
            return Err(Error::parse(path, line, "degenerate box or confidence outside [0, 1]"));
        }
        set.push(v[0], det);
    }
    Ok(set)
}

pub fn write_detections(path: &Path, set: &DetectionSet) -> Result<()> {
    let mut s = String::new();
    for (t, dets) in &set.groups {
        for d in dets {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                fmt_num(*t),
                fmt_num(d.x_ul),
                fmt_num(d.y_ul),
                fmt_num(d.x_lr),
                fmt_num(d.y_lr),
                fmt_num(d.confidence)
            );
        }
    }
    write_text(path, &s)
}
