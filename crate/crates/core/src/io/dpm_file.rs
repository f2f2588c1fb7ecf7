//! Binary DPM container.
//!
//! ```text
//! offset size field
//!      0    4 magic "DPM1"
//!      4    2 version (u16 LE) = 1
//!      6    4 height  (u32 LE)
//!     10    4 width   (u32 LE)
//!     14    4 bins    (u32 LE)
//!     18    4 min_depth (f32 LE)
//!     22    4 max_depth (f32 LE)
//!     26    . height*width*bins f32 LE, row-major, bin fastest
//! ```

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::types::{BinPartition, Dpm};

pub const DPM_MAGIC: [u8; 4] = *b"DPM1";
pub const DPM_VERSION: u16 = 1;
pub const DPM_HEADER_LEN: usize = 26;
/// Simplex tolerance applied to files, which store probabilities as f32.
pub const DPM_FILE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpmFileHeader {
    pub version: u16,
    pub height: u32,
    pub width: u32,
    pub bins: u32,
    pub min_depth: f32,
    pub max_depth: f32,
}

impl DpmFileHeader {
    pub fn to_bytes(&self) -> [u8; DPM_HEADER_LEN] {
        let mut b = [0u8; DPM_HEADER_LEN];
        b[..4].copy_from_slice(&DPM_MAGIC);
        LittleEndian::write_u16(&mut b[4..6], self.version);
        LittleEndian::write_u32(&mut b[6..10], self.height);
        LittleEndian::write_u32(&mut b[10..14], self.width);
        LittleEndian::write_u32(&mut b[14..18], self.bins);
        LittleEndian::write_f32(&mut b[18..22], self.min_depth);
        LittleEndian::write_f32(&mut b[22..26], self.max_depth);
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: DPM_HEADER_LEN,
                found: bytes.len(),
            });
        }
        if bytes[..4] != DPM_MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic { found });
        }
        if bytes.len() < DPM_HEADER_LEN {
            return Err(Error::Truncated {
                expected: DPM_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = LittleEndian::read_u16(&bytes[4..6]);
        if version != DPM_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(DpmFileHeader {
            version,
            height: LittleEndian::read_u32(&bytes[6..10]),
            width: LittleEndian::read_u32(&bytes[10..14]),
            bins: LittleEndian::read_u32(&bytes[14..18]),
            min_depth: LittleEndian::read_f32(&bytes[18..22]),
            max_depth: LittleEndian::read_f32(&bytes[22..26]),
        })
    }

    pub fn payload_len(&self) -> usize {
        self.height as usize * self.width as usize * self.bins as usize * 4
    }
}

pub fn dpm_to_bytes(dpm: &Dpm) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit the DPM header")))
    };
    let header = DpmFileHeader {
        version: DPM_VERSION,
        height: to_u32(dpm.height(), "height")?,
        width: to_u32(dpm.width(), "width")?,
        bins: to_u32(dpm.bins(), "bins")?,
        min_depth: dpm.partition().min_depth() as f32,
        max_depth: dpm.partition().max_depth() as f32,
    };
    let mut out = Vec::with_capacity(DPM_HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes());
    let mut buf = [0u8; 4];
    for &p in dpm.probs().iter() {
        LittleEndian::write_f32(&mut buf, p as f32);
        out.extend_from_slice(&buf);
    }
    Ok(out)
}

pub fn dpm_from_bytes(bytes: &[u8]) -> Result<Dpm> {
    let header = DpmFileHeader::parse(bytes)?;
    let expected = DPM_HEADER_LEN + header.payload_len();
    if bytes.len() != expected {
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        return Err(Error::Malformed(format!(
            "{} trailing bytes after DPM payload",
            bytes.len() - expected
        )));
    }
    let partition = BinPartition::uniform(
        header.bins as usize,
        header.min_depth as f64,
        header.max_depth as f64,
    )
    .map_err(|e| Error::Malformed(format!("DPM header describes an invalid partition: {e}")))?;
    let (h, w, b) = (header.height as usize, header.width as usize, header.bins as usize);
    let mut raw = vec![0f32; h * w * b];
    LittleEndian::read_f32_into(&bytes[DPM_HEADER_LEN..], &mut raw);
    let probs = Array3::from_shape_vec((h, w, b), raw.into_iter().map(f64::from).collect())
        .expect("payload length checked against header");
    Dpm::validated(probs, partition, Array2::from_elem((h, w), true), DPM_FILE_TOLERANCE)
}

pub fn write_dpm(dpm: &Dpm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dpm_to_bytes(dpm)?).map_err(|e| Error::io(path, e))
}

/// Reads and re-validates the per-pixel simplex at [`DPM_FILE_TOLERANCE`].
/// The validity mask is not stored; every pixel of the result is valid.
pub fn read_dpm(path: impl AsRef<Path>) -> Result<Dpm> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    dpm_from_bytes(&bytes)
}
