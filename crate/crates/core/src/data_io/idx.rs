//! IDX container (the MNIST distribution format).
//!
//! Big-endian throughout. Images: magic `0x00000803`, then `n, rows, cols`
//! as u32, then `n * rows * cols` bytes. Labels: magic `0x00000801`, then
//! `n`, then `n` bytes. Files ending in `.gz` are decompressed first.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{DataError, Error, Result};

use super::RawLabeledImages;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>, DataError> {
    let needed = 4 * (1 + dims);
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn body<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8], DataError> {
    let needed = offset + len;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(&bytes[offset..needed])
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let dims = header(bytes, path, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = body(bytes, path, 16, n * rows * cols)?.to_vec();
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let n = header(bytes, path, LABELS_MAGIC, 1)?[0];
    Ok(body(bytes, path, 8, n)?.to_vec())
}

/// Reads an image file and a label file into one labeled set.
pub fn load_idx(images: &Path, labels: &Path) -> Result<RawLabeledImages> {
    let (n, rows, cols, pixels) = parse_images(&read_bytes(images)?, images)?;
    let labels = parse_labels(&read_bytes(labels)?, labels)?;
    if labels.len() != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: labels.len(),
        }
        .into());
    }
    RawLabeledImages::new(pixels, labels, (rows, cols), None)
}

pub fn encode_images(raw: &RawLabeledImages) -> Vec<u8> {
    let (h, w) = raw.shape();
    let mut out = Vec::with_capacity(16 + raw.pixels().len());
    for word in [IMAGES_MAGIC, raw.len() as u32, h as u32, w as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(raw.pixels());
    out
}

pub fn encode_labels(raw: &RawLabeledImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + raw.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(raw.len() as u32).to_be_bytes());
    out.extend_from_slice(raw.labels());
    out
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |e| Error::io(PathBuf::from(path), e);
    if path.extension().is_some_and(|e| e == "gz") {
        use std::io::Write;
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(err)?;
        fs::write(path, enc.finish().map_err(err)?).map_err(err)
    } else {
        fs::write(path, bytes).map_err(err)
    }
}

/// Writes the pair of IDX files (gzip-compressed when the name ends in `.gz`).
pub fn save_idx(raw: &RawLabeledImages, images: &Path, labels: &Path) -> Result<()> {
    write_maybe_gz(images, &encode_images(raw))?;
    write_maybe_gz(labels, &encode_labels(raw))
}
