//! File formats: TUM-style RGB-D sequences, detection lists, trajectories,
//! PLY point clouds, OBJ meshes and `key = value` configuration files.

mod detections;
mod obj;
mod ply;
mod png_io;
mod trajectory;
mod tum;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use detections::{read_detections, write_detections, DetectionSet};
pub use obj::{read_obj, write_obj};
pub use ply::{read_ply, write_ply};
pub use png_io::{quantize_depth, read_color_png, read_depth_png, write_depth_png};
pub use trajectory::{format_trajectory, parse_trajectory, read_trajectory, write_trajectory};
pub use tum::{read_tum_sequence, write_depth_index, DatasetMetadata, FrameBundle, TumSequence, DEFAULT_DEPTH_SCALE};

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_field<T: FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} '{tok}'")))
}

/// `-0.0` prints as `-0`; normalize it away for stable text output.
pub(crate) fn fmt_num(x: f64) -> String {
    format!("{}", x + 0.0)
}

/// Ordered `key = value` pairs. Keys treat `_` and `-` alike.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, l) in content_lines(text) {
            let Some((k, v)) = l.split_once('=') else {
                return Err(Error::parse(path, line, "expected 'key = value'"));
            };
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(Error::parse(path, line, "empty key"));
            }
            if entries.insert(key.clone(), (v.trim().to_string(), line)).is_some() {
                return Err(Error::parse(path, line, format!("duplicate key '{key}'")));
            }
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(&normalize_key(key)) {
            None => Ok(None),
            Some((v, line)) => parse_field(&self.path, *line, v, key).map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(&normalize_key(key)).map(|e| e.1).unwrap_or(0)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("# c\nbin_width = 0.25\nlambda=1.3\n\n", Path::new("x")).unwrap();
        assert_eq!(kv.get::<f64>("bin-width").unwrap(), Some(0.25));
        assert_eq!(kv.get::<f64>("lambda").unwrap(), Some(1.3));
        assert_eq!(kv.get::<f64>("gate").unwrap(), None);
        let err = KeyValues::parse("a = 1\nbroken\n", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(KeyValues::parse("a=1\na=2", Path::new("x")).is_err());
        let kv = KeyValues::parse("gate = abc", Path::new("x")).unwrap();
        assert!(kv.get::<f64>("gate").is_err());
    }
}
