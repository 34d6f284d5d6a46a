use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ColorImage, DepthImage};

fn decode(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// Reads a 16-bit grayscale PNG and divides raw values by `depth_scale`.
pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<DepthImage> {
    let (info, buf) = decode(path)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            format!(
                "expected 16-bit grayscale depth, found {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let data = buf
        .chunks_exact(2)
        .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f64 / depth_scale) as f32)
        .collect();
    DepthImage::from_vec(info.width as usize, info.height as usize, data)
}

/// Raw 16-bit value stored for a depth in meters; 0 when invalid or out of range.
pub fn quantize_depth(d: f32, depth_scale: f64) -> u16 {
    if !(d > 0.0) {
        return 0;
    }
    let raw = (d as f64 * depth_scale).round();
    if raw > u16::MAX as f64 {
        0
    } else {
        raw as u16
    }
}

pub fn write_depth_png(path: &Path, depth: &DepthImage, depth_scale: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), depth.width() as u32, depth.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    // noisy depth barely compresses; favour speed
    enc.set_compression(png::Compression::Fast);
    let bytes: Vec<u8> = depth
        .data()
        .iter()
        .flat_map(|&d| quantize_depth(d, depth_scale).to_be_bytes())
        .collect();
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    let (info, buf) = decode(path)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "expected 8-bit color"));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::format(path, format!("unsupported color type {other:?}"))),
    };
    Ok(ColorImage {
        width: info.width as usize,
        height: info.height as usize,
        data: buf.chunks_exact(stride).map(|p| [p[0], p[1], p[2]]).collect(),
    })
}
