//! Labeled images from one directory per class.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};

use crate::error::{DataError, Result};

use super::RawLabeledImages;

pub const DEFAULT_IMAGE_SIZE: usize = 32;

const EXTENSIONS: [&str; 7] = ["pgm", "pnm", "ppm", "png", "bmp", "jpg", "jpeg"];

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let io_err = |source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && has_image_extension(&path) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(DataError::EmptyClassDir {
            path: dir.to_path_buf(),
        });
    }
    Ok(files)
}

/// Decodes one image to grayscale and resamples it bilinearly to
/// `size x size`.
pub fn load_gray(path: &Path, size: usize) -> Result<Vec<u8>, DataError> {
    let img = image::open(path).map_err(|e| DataError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let side = size as u32;
    let resized = if gray.width() == side && gray.height() == side {
        gray
    } else {
        imageops::resize(&gray, side, side, FilterType::Triangle)
    };
    Ok(resized.into_raw())
}

/// Loads `root/<class>/*` for each class in order; label `i` is
/// `classes[i]`. Files are read in lexicographic order.
pub fn load_image_dir(root: &Path, classes: &[String], size: usize) -> Result<RawLabeledImages> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        for file in list_images(&root.join(class))? {
            pixels.extend(load_gray(&file, size)?);
            labels.push(label as u8);
        }
    }
    RawLabeledImages::new(pixels, labels, (size, size), Some(classes.to_vec()))
}
