use std::collections::BTreeMap;
use std::path::Path;

use super::{DataError, Dataset};
use crate::matrix::Matrix;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn header(bytes: &[u8], path: &str, words: usize, magic: u32) -> Result<Vec<u32>, DataError> {
    if bytes.len() < 4 * words {
        return Err(DataError::Truncated {
            path: path.to_string(),
            expected: 4 * words as u64,
            actual: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DataError::BadMagic {
            path: path.to_string(),
            expected: magic,
            found,
        });
    }
    Ok((1..words).map(|i| be_u32(bytes, 4 * i)).collect())
}

fn check_len(bytes: &[u8], path: &str, expected: u64) -> Result<(), DataError> {
    if (bytes.len() as u64) < expected {
        return Err(DataError::Truncated {
            path: path.to_string(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Image file to a `rows·cols × count` matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<Matrix, DataError> {
    let dims = header(bytes, path, 4, IDX_IMAGE_MAGIC)?;
    let (count, d) = (dims[0] as usize, dims[1] as usize * dims[2] as usize);
    check_len(bytes, path, 16 + (count as u64) * d as u64)?;
    let pixels = &bytes[16..16 + count * d];
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Matrix::from_col_major(d, count, data).expect("length checked above"))
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<usize>, DataError> {
    let dims = header(bytes, path, 2, IDX_LABEL_MAGIC)?;
    let count = dims[0] as usize;
    check_len(bytes, path, 8 + count as u64)?;
    Ok(bytes[8..8 + count].iter().map(|&l| l as usize).collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = std::fs::read(images_path).map_err(|e| DataError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| DataError::io(labels_path, e))?;
    let x = parse_idx_images(&images, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&labels, &labels_path.display().to_string())?;
    if x.cols() != labels.len() {
        return Err(DataError::CountMismatch {
            images: x.cols(),
            labels: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let name = images_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let mut metadata = BTreeMap::new();
    metadata.insert("format".into(), "idx".into());
    metadata.insert("normalization".into(), "pixel/255".into());
    metadata.insert("source".into(), images_path.display().to_string());
    Ok(Dataset {
        x,
        labels,
        classes,
        name,
        metadata,
    })
}
