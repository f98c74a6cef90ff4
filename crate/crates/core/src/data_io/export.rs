//! Binary PGM output and the original / perturbation / perturbed panels.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Maps [0, 1] to 0..=255 with clamping and rounding.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Rescales to [0, 1] by min-max. A constant input maps to 0.5.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count does not match {width}x{height}");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, pixels)).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>_original.pgm`, `<stem>_perturbation.pgm` and
/// `<stem>_perturbed.pgm` for one image row `x` and perturbation `a`.
///
/// The perturbation panel shows `scale * a` min-max normalized; the
/// perturbed panel shows `x + scale * a` clamped to [0, 1].
pub fn export_triptych(
    x: &[f64],
    a: &[f64],
    scale: f64,
    shape: (usize, usize),
    stem: &Path,
) -> Result<[PathBuf; 3]> {
    let (h, w) = shape;
    for (what, len) in [("image row", x.len()), ("perturbation", a.len())] {
        if len != h * w {
            return Err(Error::DimensionMismatch {
                what,
                expected: h * w,
                found: len,
            });
        }
    }
    let applied: Vec<f64> = a.iter().map(|v| scale * v).collect();
    let perturbed: Vec<f64> = x.iter().zip(&applied).map(|(p, d)| p + d).collect();

    let name = stem
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let path_for = |suffix: &str| stem.with_file_name(format!("{name}_{suffix}.pgm"));
    let paths = [path_for("original"), path_for("perturbation"), path_for("perturbed")];
    write_pgm(&paths[0], w, h, &to_gray(x))?;
    write_pgm(&paths[1], w, h, &to_gray(&min_max_normalize(&applied)))?;
    write_pgm(&paths[2], w, h, &to_gray(&perturbed))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_mapping_endpoints() {
        assert_eq!(to_gray(&[0.0, 1.0, 0.5, 1.7, -0.2]), vec![0, 255, 128, 255, 0]);
    }

    #[test]
    fn constant_normalizes_to_mid_gray() {
        assert_eq!(min_max_normalize(&[0.3; 4]), vec![0.5; 4]);
        assert_eq!(min_max_normalize(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn pgm_header() {
        let bytes = encode_pgm(3, 2, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[1, 2, 3, 4, 5, 6]);
    }
}
