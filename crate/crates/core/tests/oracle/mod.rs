//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here works on full-frame `Vec<f32>` buffers with plain loops
//! over every pixel, so it shares no code paths with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use dynscene_core::{DepthImage, Detection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub confidence: f64,
    pub lambda: f64,
    pub bin_width: f64,
    pub bg_margin: f64,
    pub human_margin: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            confidence: 0.5,
            lambda: 1.2,
            bin_width: 0.2,
            bg_margin: 0.1,
            human_margin: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub boxes: Vec<Detection>,
    pub background: Vec<f32>,
    pub parts: Vec<Vec<f32>>,
    pub part_intervals: Vec<Option<(f64, f64)>>,
    pub background_interval: Option<(f64, f64)>,
}

fn inside(b: &Detection, u: usize, v: usize) -> bool {
    let (x, y) = (u as f64, v as f64);
    b.x_ul <= x && x < b.x_lr && b.y_ul <= y && y < b.y_lr
}

/// Principal interval by explicit bin counting.
pub fn principal_interval(values: &[f32], bin_width: f64) -> Option<(f64, f64)> {
    let mut bins: BTreeMap<i64, u64> = BTreeMap::new();
    for &d in values.iter().filter(|d| **d > 0.0) {
        *bins.entry((d as f64 / bin_width).floor() as i64).or_default() += 1;
    }
    let mut mode = None;
    for (&b, &c) in &bins {
        match mode {
            Some((_, best)) if c <= best => {}
            _ => mode = Some((b, c)),
        }
    }
    let (mode, peak) = mode?;
    let count = |b: i64| bins.get(&b).copied().unwrap_or(0);
    let (mut lo, mut hi) = (mode, mode);
    while 2 * count(lo - 1) >= peak {
        lo -= 1;
    }
    while 2 * count(hi + 1) >= peak {
        hi += 1;
    }
    Some((lo as f64 * bin_width, (hi + 1) as f64 * bin_width))
}

fn outside(d: f32, iv: (f64, f64), margin: f64) -> bool {
    let d = d as f64;
    !(iv.0 - margin < d && d < iv.1 + margin)
}

/// Box scaled about its center, never smaller than the input, clipped to
/// the frame.
pub fn magnified(b: &Detection, lambda: f64, w: usize, h: usize) -> Detection {
    let (cx, cy) = ((b.x_ul + b.x_lr) / 2.0, (b.y_ul + b.y_lr) / 2.0);
    let (hw, hh) = ((b.x_lr - b.x_ul) * lambda / 2.0, (b.y_lr - b.y_ul) * lambda / 2.0);
    Detection::new(
        (cx - hw).min(b.x_ul).max(0.0),
        (cy - hh).min(b.y_ul).max(0.0),
        (cx + hw).max(b.x_lr).min(w as f64),
        (cy + hh).max(b.y_lr).min(h as f64),
        b.confidence,
    )
}

pub fn inside_box(b: &Detection, u: usize, v: usize) -> bool {
    inside(b, u, v)
}

/// The dual bounding-box filter written out as a direct pixel loop.
pub fn dual_box_filter(depth: &[f32], w: usize, h: usize, raw: &[Detection], p: &Params) -> Reference {
    // confident boxes, clipped to the frame
    let (fw, fh) = (w as f64, h as f64);
    let mut boxes = Vec::new();
    for d in raw {
        if d.confidence <= p.confidence {
            continue;
        }
        let c = Detection::new(
            d.x_ul.max(0.0).min(fw),
            d.y_ul.max(0.0).min(fh),
            d.x_lr.max(0.0).min(fw),
            d.y_lr.max(0.0).min(fh),
            d.confidence,
        );
        if c.x_ul < c.x_lr && c.y_ul < c.y_lr {
            boxes.push(c);
        }
    }

    // separation: each pixel goes to its most confident box
    let mut background = vec![0.0f32; w * h];
    let mut parts = vec![vec![0.0f32; w * h]; boxes.len()];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let mut owner: Option<usize> = None;
            for (t, b) in boxes.iter().enumerate() {
                if inside(b, u, v) && owner.is_none_or(|o| b.confidence > boxes[o].confidence) {
                    owner = Some(t);
                }
            }
            match owner {
                Some(t) => parts[t][i] = depth[i],
                None => background[i] = depth[i],
            }
        }
    }

    let part_intervals: Vec<_> = parts.iter().map(|d| principal_interval(d, p.bin_width)).collect();
    let background_interval = principal_interval(depth, p.bin_width);

    for (t, b) in boxes.iter().enumerate() {
        let big = magnified(b, p.lambda, w, h);
        for v in 0..h {
            for u in 0..w {
                if !inside(&big, u, v) {
                    continue;
                }
                let i = v * w + u;
                if let Some(iv) = part_intervals[t] {
                    if parts[t][i] != 0.0 && outside(parts[t][i], iv, p.human_margin) {
                        background[i] = parts[t][i];
                        parts[t][i] = 0.0;
                    }
                }
                if let Some(iv) = background_interval {
                    if background[i] != 0.0 && outside(background[i], iv, p.bg_margin) {
                        background[i] = 0.0;
                    }
                }
            }
        }
    }

    Reference {
        boxes,
        background,
        parts,
        part_intervals,
        background_interval,
    }
}

/// Random frame with a sloped background, people in front of it and
/// planted outliers around them.
#[derive(Debug, Clone)]
pub struct RandomFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub detections: Vec<Detection>,
}

impl RandomFrame {
    pub fn image(&self) -> DepthImage {
        DepthImage::from_vec(self.width, self.height, self.depth.clone()).unwrap()
    }
}

pub fn random_frame(seed: u64, max_side: usize) -> RandomFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(4..=max_side);
    let h = rng.random_range(4..=max_side);
    let wall = rng.random_range(1.5..5.0f64);
    let slope = rng.random_range(-0.05..0.05f64);
    let mut depth: Vec<f32> = (0..w * h)
        .map(|i| {
            let u = (i % w) as f64;
            (wall + slope * u + rng.random_range(-0.03..0.03)) as f32
        })
        .collect();

    let n = rng.random_range(0..=3);
    let mut detections = Vec::new();
    for _ in 0..n {
        let bw = rng.random_range(2.0..(w as f64 * 0.7).max(2.5));
        let bh = rng.random_range(2.0..(h as f64 * 0.8).max(2.5));
        let x0 = rng.random_range(-2.0..w as f64 - 1.0);
        let y0 = rng.random_range(-2.0..h as f64 - 1.0);
        // integer and fractional corners both occur in practice
        let snap = rng.random_bool(0.5);
        let q = |x: f64| if snap { x.round() } else { x };
        let conf = if rng.random_bool(0.2) { 0.9 } else { rng.random_range(0.3..1.0) };
        let det = Detection::new(q(x0), q(y0), q(x0 + bw), q(y0 + bh), conf);
        let person = rng.random_range(0.8..(wall - 0.3).max(0.9));
        for v in 0..h {
            for u in 0..w {
                let (x, y) = (u as f64, v as f64);
                let (cx, cy) = ((det.x_ul + det.x_lr) / 2.0, (det.y_ul + det.y_lr) / 2.0);
                let ex = (x - cx) / (bw * 0.4);
                let ey = (y - cy) / (bh * 0.5);
                if ex * ex + ey * ey < 1.0 {
                    depth[v * w + u] = (person + rng.random_range(-0.05..0.05)) as f32;
                }
            }
        }
        detections.push(det);
    }

    // residuals: person-depth samples and far or near spikes anywhere
    let spikes = rng.random_range(0..(w * h / 6).max(1));
    for _ in 0..spikes {
        let i = rng.random_range(0..w * h);
        depth[i] = match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(0.3..8.0),
            2 => (wall + rng.random_range(0.5..3.0)) as f32,
            _ => (wall * 0.5) as f32,
        };
    }
    RandomFrame {
        width: w,
        height: h,
        depth,
        detections,
    }
}
