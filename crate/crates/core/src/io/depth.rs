//! Depth map files: 16-bit PNG (raw / 256 = meters, 0 = no data) and
//! grayscale PFM (non-finite = no data).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::DepthMap;

/// Fixed-point scale of the 16-bit PNG depth convention.
pub const PNG16_SCALE: f64 = 256.0;
/// Largest depth representable in a 16-bit PNG.
pub const PNG16_MAX_DEPTH: f64 = 65535.0 / PNG16_SCALE;

pub fn read_depth_png16(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let img = ImageReader::with_format(BufReader::new(file), ImageFormat::Png).decode()?;
    let buf = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Malformed(format!(
                "{}: expected a 16-bit single-channel PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = buf.dimensions();
    let raw = Array2::from_shape_vec((h as usize, w as usize), buf.into_raw())
        .expect("buffer length matches dimensions");
    let valid = raw.mapv(|r| r != 0);
    let values = raw.mapv(|r| r as f64 / PNG16_SCALE);
    DepthMap::with_mask(values, valid)
}

/// Rounds to the nearest 1/256 m. Valid pixels never write the reserved
/// value 0; depths below 1/512 m are stored as the smallest code instead.
pub fn write_depth_png16(dm: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = dm.dim();
    let mut raw = Vec::with_capacity(h * w);
    for ((row, col), &d) in dm.values().indexed_iter() {
        if !dm.is_valid(row, col) {
            raw.push(0u16);
            continue;
        }
        if d > PNG16_MAX_DEPTH {
            return Err(Error::invalid(format!(
                "depth {d} m at ({row}, {col}) exceeds the 16-bit PNG limit of {PNG16_MAX_DEPTH} m"
            )));
        }
        let code = (d * PNG16_SCALE).round().clamp(1.0, 65535.0);
        raw.push(code as u16);
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer length matches dimensions");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes).map_err(|e| match e {
        Error::Malformed(m) => Error::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Malformed("truncated PFM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "Pf" {
        return Err(Error::Malformed(format!(
            "expected grayscale PFM magic \"Pf\", found {magic:?}"
        )));
    }
    let parse_dim = |t: String| -> Result<usize> {
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Malformed(format!("bad PFM dimension {t:?}")))
    };
    let width = parse_dim(token()?)?;
    let height = parse_dim(token()?)?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::Malformed(format!("bad PFM scale {scale_tok:?}")))?;
    // Exactly one whitespace byte separates the header from the raster.
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let expected = width * height * 4;
    if data.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: data.len(),
        });
    }
    let mut raster = vec![0f32; width * height];
    if scale < 0.0 {
        LittleEndian::read_f32_into(&data[..expected], &mut raster);
    } else {
        BigEndian::read_f32_into(&data[..expected], &mut raster);
    }
    // Rows are stored bottom to top.
    let mut values = Array2::<f64>::zeros((height, width));
    let mut valid = Array2::from_elem((height, width), false);
    for row in 0..height {
        let src = (height - 1 - row) * width;
        for col in 0..width {
            let v = raster[src + col];
            if v.is_finite() && v >= 0.0 {
                values[[row, col]] = v as f64;
                valid[[row, col]] = true;
            }
        }
    }
    DepthMap::with_mask(values, valid)
}

/// Writes little-endian (negative scale); invalid pixels become NaN.
pub fn write_pfm(dm: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = pfm_bytes(dm);
    File::create(path)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(&bytes)?;
            w.flush()
        })
        .map_err(|e| Error::io(path, e))
}

fn pfm_bytes(dm: &DepthMap) -> Vec<u8> {
    let (h, w) = dm.dim();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    let mut row_buf = vec![0u8; w * 4];
    for row in (0..h).rev() {
        for col in 0..w {
            let v = if dm.is_valid(row, col) {
                dm.get(row, col) as f32
            } else {
                f32::NAN
            };
            LittleEndian::write_f32(&mut row_buf[col * 4..col * 4 + 4], v);
        }
        out.extend_from_slice(&row_buf);
    }
    out
}

/// Reads PNG or PFM by file extension.
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("png") => read_depth_png16(path),
        Some("pfm") => read_pfm(path),
        _ => Err(Error::Malformed(format!(
            "{}: unsupported depth file extension (expected .png or .pfm)",
            path.display()
        ))),
    }
}

/// Writes PNG or PFM by file extension.
pub fn write_depth(dm: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("png") => write_depth_png16(dm, path),
        Some("pfm") => write_pfm(dm, path),
        _ => Err(Error::invalid(format!(
            "{}: unsupported depth file extension (expected .png or .pfm)",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}
