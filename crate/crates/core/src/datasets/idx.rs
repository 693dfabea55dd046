//! IDX container reader (big-endian, magic-numbered). Gzipped files are
//! detected by their header and decompressed on the fly.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::parse(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(path, "truncated IDX header"))
}

/// Returns `(rows, cols, pixel bytes)` for each image.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let bytes = read_maybe_gz(path)?;
    parse_images(&bytes, path)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gz(path)?;
    parse_labels(&bytes, path)
}

fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(
            path,
            format!("bad IDX image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * size {
        return Err(Error::parse(
            path,
            format!("truncated: header promises {count} images of {size} bytes, file holds {}", body.len()),
        ));
    }
    let images = body[..count * size].chunks(size).map(<[u8]>::to_vec).collect();
    Ok((rows, cols, images))
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(
            path,
            format!("bad IDX label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::parse(
            path,
            format!("truncated: header promises {count} labels, file holds {}", body.len()),
        ));
    }
    Ok(body[..count].to_vec())
}

/// Pairs an IDX image file with its label file. Intensities stay in 0..=255.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (_, _, pixels) = read_idx_images(images)?;
    let labels_v = read_idx_labels(labels)?;
    if pixels.len() != labels_v.len() {
        return Err(Error::parse(
            labels,
            format!("{} labels for {} images in {}", labels_v.len(), pixels.len(), images.display()),
        ));
    }
    let samples = pixels
        .into_iter()
        .zip(labels_v)
        .map(|(pixels, label)| Sample { pixels, label })
        .collect();
    Dataset::new(samples, 255, 10)
}
