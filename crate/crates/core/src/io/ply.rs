use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mapping::PointCloud;

/// Binary little-endian PLY with float32 x/y/z and, when colored, uchar rgb.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let colored = cloud.colors.is_some();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if colored {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let stride = if colored { 15 } else { 12 };
    let mut bytes = Vec::with_capacity(header.len() + stride * cloud.len());
    bytes.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.points.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if let Some(cols) = &cloud.colors {
            bytes.extend_from_slice(&cols[i]);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads the PLY layout produced by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format(path, "header is not text"))?;
    let body = &bytes[end + END.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::format(path, "not a PLY file"));
    }
    let mut count = None;
    let mut props = Vec::new();
    for l in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", ..] => return Err(Error::format(path, format!("unsupported {l}"))),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format(path, format!("bad count {n}")))?)
            }
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            _ => return Err(Error::format(path, format!("unsupported header line '{l}'"))),
        }
    }
    let count = count.ok_or_else(|| Error::format(path, "no vertex element"))?;
    let xyz = [("float", "x"), ("float", "y"), ("float", "z")];
    let rgb = [("uchar", "red"), ("uchar", "green"), ("uchar", "blue")];
    let names: Vec<(&str, &str)> = props.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let colored = if names == xyz {
        false
    } else if names.len() == 6 && names[..3] == xyz && names[3..] == rgb {
        true
    } else {
        return Err(Error::format(path, "unsupported vertex properties"));
    };
    let stride = if colored { 15 } else { 12 };
    if body.len() != stride * count {
        return Err(Error::format(
            path,
            format!("expected {} body bytes, found {}", stride * count, body.len()),
        ));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(count),
        colors: colored.then(Vec::new),
    };
    for rec in body.chunks_exact(stride) {
        cloud.points.push(Vector3::new(f(&rec[0..4]), f(&rec[4..8]), f(&rec[8..12])));
        if let Some(c) = cloud.colors.as_mut() {
            c.push([rec[12], rec[13], rec[14]]);
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![Vector3::new(1.0, 2.0, 3.0)],
            colors: None,
        };
        write_ply(&p, &cloud).unwrap();
        let text = String::from_utf8_lossy(&std::fs::read(&p).unwrap()).to_string();
        assert!(text.contains("element vertex 1\n"));
        assert_eq!(read_ply(&p).unwrap(), cloud);
    }

    #[test]
    fn empty_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        write_ply(&p, &PointCloud::default()).unwrap();
        let back = read_ply(&p).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn colored_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![Vector3::new(0.5, -0.25, 3.0), Vector3::new(0.1, 0.2, 0.3)],
            colors: Some(vec![[1, 2, 3], [255, 0, 128]]),
        };
        write_ply(&p, &cloud).unwrap();
        let back = read_ply(&p).unwrap();
        assert_eq!(back.colors, cloud.colors);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert!((a - b).abs().max() <= 1e-7 * a.abs().max().max(1.0));
        }
    }

    #[test]
    fn rejects_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        std::fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(read_ply(&p).is_err());
    }
}
