//! Human/background separation of depth frames and dual bounding-box
//! outlier filtering.
//!
//! A detection box covers the integer pixels `u` with `x_ul <= u < x_lr`
//! (and likewise for rows). Each frame is split into a background image and
//! one cropped part per detection; depth histograms give each region a
//! principal interval, and pixels inside the magnified boxes that fall
//! outside those intervals are removed (background) or handed back to the
//! background (human parts).

use crate::error::{Error, Result};
use crate::image::DepthImage;

/// 2D person detection in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x_ul: f64,
    pub y_ul: f64,
    pub x_lr: f64,
    pub y_lr: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn new(x_ul: f64, y_ul: f64, x_lr: f64, y_lr: f64, confidence: f64) -> Self {
        Detection {
            x_ul,
            y_ul,
            x_lr,
            y_lr,
            confidence,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_ul < self.x_lr
            && self.y_ul < self.y_lr
            && [self.x_ul, self.y_ul, self.x_lr, self.y_lr, self.confidence]
                .iter()
                .all(|v| v.is_finite())
            && (0.0..=1.0).contains(&self.confidence)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_ul + self.x_lr),
            0.5 * (self.y_ul + self.y_lr),
        )
    }

    pub fn clipped(&self, width: usize, height: usize) -> Option<Detection> {
        let (w, h) = (width as f64, height as f64);
        let d = Detection {
            x_ul: self.x_ul.clamp(0.0, w),
            y_ul: self.y_ul.clamp(0.0, h),
            x_lr: self.x_lr.clamp(0.0, w),
            y_lr: self.y_lr.clamp(0.0, h),
            confidence: self.confidence,
        };
        (d.x_ul < d.x_lr && d.y_ul < d.y_lr).then_some(d)
    }

    /// Half-open integer pixel range `(u0, u1, v0, v1)` covered by the box,
    /// restricted to a `width` x `height` image.
    pub fn pixel_range(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        fn edge(x: f64, limit: usize) -> usize {
            if x <= 0.0 {
                0
            } else {
                (x.ceil() as usize).min(limit)
            }
        }
        (
            edge(self.x_ul, width),
            edge(self.x_lr, width),
            edge(self.y_ul, height),
            edge(self.y_lr, height),
        )
    }

    #[inline]
    pub fn contains_pixel(&self, u: usize, v: usize) -> bool {
        let (u, v) = (u as f64, v as f64);
        u >= self.x_ul && u < self.x_lr && v >= self.y_ul && v < self.y_lr
    }
}

/// Principal depth interval of a region, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DepthInterval {
    /// Open-interval membership after widening both ends by `margin`.
    #[inline]
    pub fn contains_with_margin(&self, d: f64, margin: f64) -> bool {
        d > self.lo - margin && d < self.hi + margin
    }
}

/// Depth samples of one detection, cropped to its pixel range.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanPart {
    pub detection: Detection,
    /// Top-left pixel of the crop in frame coordinates.
    pub x0: usize,
    pub y0: usize,
    pub depth: DepthImage,
    pub interval: Option<DepthInterval>,
}

impl HumanPart {
    /// Value at frame pixel `(u, v)`, zero outside the crop.
    pub fn get(&self, u: usize, v: usize) -> f32 {
        if u < self.x0 || v < self.y0 {
            return 0.0;
        }
        let (lu, lv) = (u - self.x0, v - self.y0);
        if lu >= self.depth.width() || lv >= self.depth.height() {
            0.0
        } else {
            self.depth.get(lu, lv)
        }
    }

    /// Expands the crop back into a full-frame image.
    pub fn to_full(&self, width: usize, height: usize) -> DepthImage {
        let mut out = DepthImage::new(width, height);
        for lv in 0..self.depth.height() {
            for lu in 0..self.depth.width() {
                out.set(self.x0 + lu, self.y0 + lv, self.depth.get(lu, lv));
            }
        }
        out
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.depth.data().iter().copied().filter(|d| *d > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub background: DepthImage,
    pub parts: Vec<HumanPart>,
    /// Principal interval of the whole input frame.
    pub background_interval: Option<DepthInterval>,
}

/// Keeps detections with confidence strictly above `threshold`, clipped to
/// the image. Boxes that end up empty after clipping are dropped.
pub fn filter_detections(
    raw: &[Detection],
    threshold: f64,
    width: usize,
    height: usize,
) -> Vec<Detection> {
    raw.iter()
        .filter(|d| d.confidence > threshold)
        .filter_map(|d| d.clipped(width, height))
        .collect()
}

/// Splits `depth` into background and one part per detection.
///
/// A pixel covered by several boxes goes to the most confident one; equal
/// confidences resolve to the lower detection index.
pub fn scene_separation(depth: &DepthImage, dets: &[Detection]) -> SeparationResult {
    let (w, h) = (depth.width(), depth.height());
    let mut background = depth.clone();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut parts: Vec<Option<HumanPart>> = vec![None; dets.len()];
    for &i in &order {
        let det = dets[i];
        let (u0, u1, v0, v1) = det.pixel_range(w, h);
        let mut crop = DepthImage::new(u1.saturating_sub(u0), v1.saturating_sub(v0));
        for v in v0..v1 {
            for u in u0..u1 {
                // Pixels already claimed by a more confident box read as zero
                // in the background and are skipped here.
                let d = background.get(u, v);
                if d > 0.0 {
                    crop.set(u - u0, v - v0, d);
                    background.set(u, v, 0.0);
                }
            }
        }
        parts[i] = Some(HumanPart {
            detection: det,
            x0: u0,
            y0: v0,
            depth: crop,
            interval: None,
        });
    }

    SeparationResult {
        background,
        parts: parts.into_iter().flatten().collect(),
        background_interval: None,
    }
}

/// Principal interval of a set of depth samples.
///
/// Bins are anchored at zero with width `bin_width`. Starting from the modal
/// bin (lowest index on ties), the run is grown over neighbouring bins whose
/// count is at least half the modal count. Zero samples are ignored.
pub fn compute_histogram<I>(values: I, bin_width: f64) -> Result<DepthInterval>
where
    I: IntoIterator<Item = f32>,
{
    if !(bin_width > 0.0) {
        return Err(Error::InvalidInput(format!("bin width {bin_width}")));
    }
    let mut counts: Vec<u32> = Vec::new();
    for d in values {
        if !(d > 0.0) {
            continue;
        }
        let bin = (d as f64 / bin_width).floor();
        if bin >= 1e7 {
            return Err(Error::InvalidInput(format!(
                "depth {d} needs too many bins of width {bin_width}"
            )));
        }
        let bin = bin as usize;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    let (mode, &peak) = counts
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, c)| **c)
        .ok_or(Error::EmptyRegion)?;
    if peak == 0 {
        return Err(Error::EmptyRegion);
    }
    let strong = |c: u32| 2 * c as u64 >= peak as u64;
    let mut start = mode;
    while start > 0 && strong(counts[start - 1]) {
        start -= 1;
    }
    let mut end = mode;
    while end + 1 < counts.len() && strong(counts[end + 1]) {
        end += 1;
    }
    Ok(DepthInterval {
        lo: start as f64 * bin_width,
        hi: (end + 1) as f64 * bin_width,
    })
}

/// Fills in the interval of every part and the background interval, the
/// latter computed over the whole input frame.
pub fn compute_intervals(sep: &mut SeparationResult, input: &DepthImage, bin_width: f64) -> Result<()> {
    for part in &mut sep.parts {
        part.interval = match compute_histogram(part.valid_values(), bin_width) {
            Ok(iv) => Some(iv),
            Err(Error::EmptyRegion) => None,
            Err(e) => return Err(e),
        };
    }
    sep.background_interval = match compute_histogram(input.data().iter().copied(), bin_width) {
        Ok(iv) => Some(iv),
        Err(Error::EmptyRegion) => None,
        Err(e) => return Err(e),
    };
    Ok(())
}

/// Scales a box about its center by `lambda` and clips it to the image.
pub fn magnify_range(det: &Detection, lambda: f64, width: usize, height: usize) -> Detection {
    let (cx, cy) = det.center();
    let hw = 0.5 * (det.x_lr - det.x_ul) * lambda;
    let hh = 0.5 * (det.y_lr - det.y_ul) * lambda;
    // min/max keep the input box inside the result despite rounding
    Detection {
        x_ul: (cx - hw).min(det.x_ul).max(0.0),
        y_ul: (cy - hh).min(det.y_ul).max(0.0),
        x_lr: (cx + hw).max(det.x_lr).min(width as f64),
        y_lr: (cy + hh).max(det.y_lr).min(height as f64),
        confidence: det.confidence,
    }
}

/// Removes depth residuals around each detection, in detection order.
///
/// Inside the magnified box of part `t`, a pixel of part `t` outside
/// `(h_min - human_margin, h_max + human_margin)` is moved to the
/// background, and then a background pixel outside
/// `(b_min - bg_margin, b_max + bg_margin)` is zeroed. Running the human rule
/// first means samples it hands back are also held to the background rule.
/// Everything outside the magnified boxes is left untouched.
pub fn filter_outliers(sep: &mut SeparationResult, lambda: f64, bg_margin: f64, human_margin: f64) {
    let (w, h) = (sep.background.width(), sep.background.height());
    let bg_iv = sep.background_interval;
    for part in &mut sep.parts {
        let big = magnify_range(&part.detection, lambda, w, h);
        let (u0, u1, v0, v1) = big.pixel_range(w, h);
        let (pw, ph) = (part.depth.width(), part.depth.height());
        for v in v0..v1 {
            let in_rows = v >= part.y0 && v < part.y0 + ph;
            for u in u0..u1 {
                if in_rows && u >= part.x0 && u < part.x0 + pw {
                    let (lu, lv) = (u - part.x0, v - part.y0);
                    let d = part.depth.get(lu, lv);
                    if let (true, Some(iv)) = (d != 0.0, part.interval) {
                        if !iv.contains_with_margin(d as f64, human_margin) {
                            sep.background.set(u, v, d);
                            part.depth.set(lu, lv, 0.0);
                        }
                    }
                }
                if let Some(iv) = bg_iv {
                    let b = sep.background.get(u, v);
                    if b != 0.0 && !iv.contains_with_margin(b as f64, bg_margin) {
                        sep.background.set(u, v, 0.0);
                    }
                }
            }
        }
    }
}

/// Parameters of the dual bounding-box filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBoxFilter {
    pub confidence: f64,
    pub lambda: f64,
    pub bin_width: f64,
    pub bg_margin: f64,
    pub human_margin: f64,
}

impl Default for DualBoxFilter {
    fn default() -> Self {
        DualBoxFilter {
            confidence: 0.5,
            lambda: 1.2,
            bin_width: 0.2,
            bg_margin: 0.1,
            human_margin: 0.2,
        }
    }
}

impl DualBoxFilter {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0) {
            return Err(Error::InvalidInput(format!("lambda {} < 1", self.lambda)));
        }
        if !(self.bin_width > 0.0 && self.bg_margin >= 0.0 && self.human_margin >= 0.0) {
            return Err(Error::InvalidInput("non-positive filter parameter".into()));
        }
        Ok(())
    }

    /// Runs confidence filtering, separation, histograms and outlier removal.
    pub fn apply(&self, depth: &DepthImage, raw: &[Detection]) -> Result<SeparationResult> {
        let dets = filter_detections(raw, self.confidence, depth.width(), depth.height());
        let mut sep = scene_separation(depth, &dets);
        compute_intervals(&mut sep, depth, self.bin_width)?;
        filter_outliers(&mut sep, self.lambda, self.bg_margin, self.human_margin);
        Ok(sep)
    }
}
