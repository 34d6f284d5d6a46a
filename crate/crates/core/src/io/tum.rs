use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{content_lines, parse_field, read_color_png, read_depth_png, read_text, write_text, KeyValues};
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::image::{ColorImage, DepthImage};
use crate::separation::Detection;

/// Raw depth units per meter used by the TUM RGB-D datasets.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

const COLOR_MAX_DT: f64 = 0.02;

/// One time step of an RGB-D stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub timestamp: f64,
    pub depth: DepthImage,
    /// Carried through for colored map export only.
    pub color: Option<ColorImage>,
    pub detections: Vec<Detection>,
}

/// Contents of a dataset's `metadata.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    pub depth_scale: f64,
    pub intrinsics: Option<Intrinsics>,
    pub rate: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub frames: Option<usize>,
}

impl Default for DatasetMetadata {
    fn default() -> Self {
        DatasetMetadata {
            depth_scale: DEFAULT_DEPTH_SCALE,
            intrinsics: None,
            rate: None,
            noise_sigma: None,
            seed: None,
            frames: None,
        }
    }
}

impl DatasetMetadata {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let depth_scale = kv.get("depth-scale")?.unwrap_or(DEFAULT_DEPTH_SCALE);
        if !(depth_scale > 0.0) {
            return Err(Error::parse(path, kv.line_of("depth-scale"), "depth_scale must be positive"));
        }
        let intr = (
            kv.get::<f64>("fx")?,
            kv.get::<f64>("fy")?,
            kv.get::<f64>("cx")?,
            kv.get::<f64>("cy")?,
            kv.get::<usize>("width")?,
            kv.get::<usize>("height")?,
        );
        let intrinsics = match intr {
            (Some(fx), Some(fy), Some(cx), Some(cy), Some(w), Some(h)) => Some(Intrinsics::new(fx, fy, cx, cy, w, h)?),
            (None, None, None, None, None, None) => None,
            _ => return Err(Error::format(path, "incomplete intrinsics")),
        };
        Ok(DatasetMetadata {
            depth_scale,
            intrinsics,
            rate: kv.get("rate")?,
            noise_sigma: kv.get("noise-sigma")?,
            seed: kv.get("seed")?,
            frames: kv.get("frames")?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "depth_scale = {}", self.depth_scale);
        if let Some(k) = &self.intrinsics {
            let _ = writeln!(s, "fx = {}\nfy = {}\ncx = {}\ncy = {}", k.fx, k.fy, k.cx, k.cy);
            let _ = writeln!(s, "width = {}\nheight = {}", k.width, k.height);
        }
        if let Some(r) = self.rate {
            let _ = writeln!(s, "rate = {r}");
        }
        if let Some(n) = self.noise_sigma {
            let _ = writeln!(s, "noise_sigma = {n}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        if let Some(f) = self.frames {
            let _ = writeln!(s, "frames = {f}");
        }
        write_text(path, &s)
    }
}

fn read_index(path: &Path) -> Result<Vec<(f64, String)>> {
    let text = read_text(path)?;
    let mut out: Vec<(f64, String)> = Vec::new();
    for (line, l) in content_lines(&text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(path, line, "expected 'timestamp filename'"));
        }
        let t: f64 = parse_field(path, line, toks[0], "timestamp")?;
        if let Some((prev, _)) = out.last() {
            if !(t > *prev) {
                return Err(Error::parse(path, line, format!("timestamp {t} does not follow {prev}")));
            }
        }
        out.push((t, toks[1].to_string()));
    }
    Ok(out)
}

/// Writes a TUM index file (`depth.txt` style).
pub fn write_depth_index(path: &Path, entries: &[(f64, String)]) -> Result<()> {
    let mut s = String::from("# depth maps\n# timestamp filename\n");
    for (t, f) in entries {
        let _ = writeln!(s, "{t:.6} {f}");
    }
    write_text(path, &s)
}

/// Lazily loaded TUM-style RGB-D sequence.
#[derive(Debug, Clone)]
pub struct TumSequence {
    pub dir: PathBuf,
    pub depth_scale: f64,
    pub metadata: Option<DatasetMetadata>,
    depth: Vec<(f64, String)>,
    color: Vec<(f64, String)>,
}

/// Opens the sequence in `dir`. `depth_scale` overrides the value recorded
/// in `metadata.txt`, which in turn overrides the TUM default of 5000.
pub fn read_tum_sequence(dir: &Path, depth_scale: Option<f64>) -> Result<TumSequence> {
    let meta_path = dir.join("metadata.txt");
    let metadata = if meta_path.exists() {
        Some(DatasetMetadata::read(&meta_path)?)
    } else {
        None
    };
    let scale = depth_scale
        .or(metadata.as_ref().map(|m| m.depth_scale))
        .unwrap_or(DEFAULT_DEPTH_SCALE);
    if !(scale > 0.0) {
        return Err(Error::InvalidInput(format!("depth scale {scale}")));
    }
    let depth = read_index(&dir.join("depth.txt"))?;
    let rgb_path = dir.join("rgb.txt");
    let color = if rgb_path.exists() {
        read_index(&rgb_path)?
    } else {
        Vec::new()
    };
    Ok(TumSequence {
        dir: dir.to_path_buf(),
        depth_scale: scale,
        metadata,
        depth,
        color,
    })
}

impl TumSequence {
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.depth.iter().map(|e| e.0)
    }

    pub fn intrinsics(&self) -> Option<Intrinsics> {
        self.metadata.as_ref().and_then(|m| m.intrinsics)
    }

    fn nearest_color(&self, t: f64) -> Option<&(f64, String)> {
        let i = self.color.partition_point(|c| c.0 < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.color.get(j))
            .filter(|c| (c.0 - t).abs() <= COLOR_MAX_DT)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
    }

    pub fn read_frame(&self, index: usize) -> Result<FrameBundle> {
        let (t, rel) = self
            .depth
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("frame {index} out of range")))?;
        let depth = read_depth_png(&self.dir.join(rel), self.depth_scale)?;
        let color = match self.nearest_color(*t) {
            Some((_, c)) => Some(read_color_png(&self.dir.join(c))?),
            None => None,
        };
        Ok(FrameBundle {
            timestamp: *t,
            depth,
            color,
            detections: Vec::new(),
        })
    }

    /// Frames in timestamp order.
    pub fn frames(&self) -> impl Iterator<Item = Result<FrameBundle>> + '_ {
        (0..self.len()).map(move |i| self.read_frame(i))
    }
}
