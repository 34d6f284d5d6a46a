use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{parse_field, read_text, write_text};
use crate::error::{Error, Result};
use crate::placement::Mesh;

/// Reads `v` and triangular `f` records. Coordinates are float32, like the
/// writer; face tokens may carry `/vt/vn` suffixes, which are ignored, and
/// indices are 1-based.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = read_text(path)?;
    let mut mesh = Mesh::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.collect();
                if c.len() != 3 {
                    return Err(Error::parse(path, line, "vertex needs 3 coordinates"));
                }
                let mut v = [0.0; 3];
                for (slot, tok) in v.iter_mut().zip(&c) {
                    *slot = parse_field::<f32>(path, line, tok, "coordinate")? as f64;
                }
                mesh.vertices.push(Vector3::from(v));
            }
            Some("f") => {
                let c: Vec<&str> = toks.collect();
                if c.len() != 3 {
                    return Err(Error::parse(path, line, format!("face has {} vertices, only triangles are supported", c.len())));
                }
                let mut f = [0usize; 3];
                for (slot, tok) in f.iter_mut().zip(&c) {
                    let idx: usize = parse_field(path, line, tok.split('/').next().unwrap_or(""), "index")?;
                    if idx == 0 {
                        return Err(Error::parse(path, line, "face index 0"));
                    }
                    *slot = idx - 1;
                }
                mesh.faces.push(f);
            }
            Some(other) => return Err(Error::parse(path, line, format!("unsupported record '{other}'"))),
            None => {}
        }
    }
    mesh.validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(mesh)
}

/// Writes vertices at float32 precision.
pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut s = String::with_capacity(32 * (mesh.vertices.len() + mesh.faces.len()));
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x as f32 + 0.0, v.y as f32 + 0.0, v.z as f32 + 0.0);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    write_text(path, &s)
}
