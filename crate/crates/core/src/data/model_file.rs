//! Binary model format, little-endian throughout:
//!
//! ```text
//! "PILAEv01"
//! u32 layer count
//! per layer: u32 rows, u32 cols, u8 tag, rows·cols f64 (row-major)
//! u8 head kind (0 = none)
//! if head: u32 rows, u32 cols, rows·cols f64 (row-major), f64 lambda
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! The layer tag holds the activation in its low bits and sets `0x80` when
//! the encoder carries a bias column.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use super::DataError;
use crate::layer::Activation;
use crate::matrix::Matrix;
use crate::readout::{HeadKind, ReadoutHead};
use crate::stack::{check_chain, EncoderLayer, StackedNetwork};

pub const MODEL_MAGIC: &[u8; 8] = b"PILAEv01";
const MAGIC_FAMILY: &[u8] = b"PILAEv";
const BIAS_FLAG: u8 = 0x80;
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    out.extend((m.rows() as u32).to_le_bytes());
    out.extend((m.cols() as u32).to_le_bytes());
}

fn put_entries(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.to_row_major() {
        out.extend(v.to_le_bytes());
    }
}

pub fn model_to_bytes(net: &StackedNetwork, head: Option<&ReadoutHead>) -> Vec<u8> {
    let mut out = MODEL_MAGIC.to_vec();
    out.extend((net.encoders.len() as u32).to_le_bytes());
    for enc in &net.encoders {
        put_matrix(&mut out, &enc.weights);
        let tag = enc.activation.tag() | if enc.bias { BIAS_FLAG } else { 0 };
        out.push(tag);
        put_entries(&mut out, &enc.weights);
    }
    match head {
        None => out.push(0),
        Some(h) => {
            out.push(h.kind.tag());
            put_matrix(&mut out, &h.weights);
            put_entries(&mut out, &h.weights);
            out.extend(h.lambda.unwrap_or(0.0).to_le_bytes());
        }
    }
    let crc = CHECKSUM.checksum(&out);
    out.extend(crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DataError> {
        if self.bytes.len() - self.at < n {
            return Err(DataError::ModelTruncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.at,
                self.bytes.len() - self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, DataError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix, DataError> {
        let len = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| DataError::ModelMalformed(format!("{what} shape overflows")))?;
        let raw = self.take(len, what)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Matrix::from_row_major(rows, cols, &vals).expect("length matches shape"))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(StackedNetwork, Option<ReadoutHead>), DataError> {
    if bytes.len() < MODEL_MAGIC.len() {
        return Err(DataError::ModelTruncated(format!("{} bytes", bytes.len())));
    }
    let magic = &bytes[..8];
    if magic != MODEL_MAGIC {
        return Err(if magic.starts_with(MAGIC_FAMILY) {
            DataError::UnknownVersion {
                found: String::from_utf8_lossy(&magic[MAGIC_FAMILY.len()..]).into_owned(),
            }
        } else {
            DataError::NotModelFile {
                found: magic.to_vec(),
            }
        });
    }
    if bytes.len() < 8 + 8 {
        return Err(DataError::ModelTruncated("missing checksum".into()));
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().unwrap());
    let computed = CHECKSUM.checksum(payload);
    if stored != computed {
        return Err(DataError::Checksum { stored, computed });
    }

    let mut cur = Cursor {
        bytes: payload,
        at: 8,
    };
    let count = cur.u32("layer count")? as usize;
    if count == 0 {
        return Err(DataError::ShapeChain("file has no layers".into()));
    }
    let mut encoders = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let rows = cur.u32("layer rows")? as usize;
        let cols = cur.u32("layer cols")? as usize;
        let tag = cur.u8("activation tag")?;
        let bias = tag & BIAS_FLAG != 0;
        let activation = Activation::from_tag(tag & !BIAS_FLAG).ok_or_else(|| {
            DataError::ModelMalformed(format!("layer {i}: unknown activation tag {tag}"))
        })?;
        if rows == 0 || cols <= usize::from(bias) {
            return Err(DataError::ShapeChain(format!(
                "layer {i} has degenerate shape {rows}x{cols}"
            )));
        }
        let weights = cur.matrix(rows, cols, "layer weights")?;
        encoders.push(EncoderLayer {
            weights,
            activation,
            bias,
        });
    }
    check_chain(&encoders).map_err(|e| DataError::ShapeChain(e.to_string()))?;

    let kind = cur.u8("head kind")?;
    let head = if kind == 0 {
        None
    } else {
        let kind = HeadKind::from_tag(kind)
            .ok_or_else(|| DataError::ModelMalformed(format!("unknown head kind {kind}")))?;
        let rows = cur.u32("head rows")? as usize;
        let cols = cur.u32("head cols")? as usize;
        let weights = cur.matrix(rows, cols, "head weights")?;
        let lambda = cur.f64("head lambda")?;
        let last = encoders.last().expect("non-empty").width();
        if cols != last {
            return Err(DataError::ShapeChain(format!(
                "head expects {cols} features but the last layer emits {last}"
            )));
        }
        let lambda = (kind != HeadKind::Softmax).then_some(lambda);
        Some(
            ReadoutHead::new(kind, weights, lambda)
                .map_err(|e| DataError::ModelMalformed(e.to_string()))?,
        )
    };
    if cur.at != payload.len() {
        return Err(DataError::ModelMalformed(format!(
            "{} trailing bytes",
            payload.len() - cur.at
        )));
    }
    let mut net = StackedNetwork::from_encoders(encoders)
        .map_err(|e| DataError::ShapeChain(e.to_string()))?;
    net.readout = head.clone();
    Ok((net, head))
}

pub fn save_model(
    net: &StackedNetwork,
    head: Option<&ReadoutHead>,
    path: &Path,
) -> Result<(), DataError> {
    std::fs::write(path, model_to_bytes(net, head)).map_err(|e| DataError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(StackedNetwork, Option<ReadoutHead>), DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::transform;

    fn net() -> (StackedNetwork, ReadoutHead) {
        let w0 = Matrix::from_fn(3, 5, |i, j| (i as f64 + 1.0) * 0.1 - j as f64 * 0.07);
        let w1 = Matrix::from_fn(2, 4, |i, j| (i * 4 + j) as f64 / 9.0 - 0.3);
        let net = StackedNetwork::from_encoders(vec![
            EncoderLayer {
                weights: w0,
                activation: Activation::Sigmoid,
                bias: false,
            },
            EncoderLayer {
                weights: w1,
                activation: Activation::Tanh,
                bias: true,
            },
        ])
        .unwrap();
        let head = ReadoutHead::new(HeadKind::Shln, Matrix::from_fn(4, 2, |i, j| (i + j) as f64), Some(0.25))
            .unwrap();
        (net, head)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (net, head) = net();
        let bytes = model_to_bytes(&net, Some(&head));
        let (back, h) = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.encoders, net.encoders);
        assert_eq!(h.as_ref(), Some(&head));
        let probe = Matrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64).sin());
        assert_eq!(transform(&back, &probe).unwrap(), transform(&net, &probe).unwrap());
        assert_eq!(model_to_bytes(&back, h.as_ref()), bytes);
        let (_, none) = model_from_bytes(&model_to_bytes(&net, None)).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn corruption_detected() {
        let (net, head) = net();
        let mut bytes = model_to_bytes(&net, Some(&head));
        bytes[20] ^= 0x01;
        assert!(matches!(model_from_bytes(&bytes), Err(DataError::Checksum { .. })));
    }

    fn sealed(mut payload: Vec<u8>) -> Vec<u8> {
        let crc = CHECKSUM.checksum(&payload);
        payload.extend(crc.to_le_bytes());
        payload
    }

    #[test]
    fn structural_errors() {
        let mut empty = MODEL_MAGIC.to_vec();
        empty.extend(0u32.to_le_bytes());
        empty.push(0);
        assert!(matches!(model_from_bytes(&sealed(empty)), Err(DataError::ShapeChain(_))));

        let mut v2 = model_to_bytes(&net().0, None);
        v2[7] = b'2';
        assert!(matches!(model_from_bytes(&v2), Err(DataError::UnknownVersion { .. })));
        assert!(matches!(
            model_from_bytes(b"GARBAGE!12345678"),
            Err(DataError::NotModelFile { .. })
        ));

        // layer 1 expects 3 inputs but layer 0 emits 2
        let mut bad = MODEL_MAGIC.to_vec();
        bad.extend(2u32.to_le_bytes());
        for (r, c) in [(2u32, 3u32), (1, 3)] {
            bad.extend(r.to_le_bytes());
            bad.extend(c.to_le_bytes());
            bad.push(0);
            bad.extend(std::iter::repeat_n(0u8, (r * c * 8) as usize));
        }
        bad.push(0);
        assert!(matches!(model_from_bytes(&sealed(bad)), Err(DataError::ShapeChain(_))));

        let full = model_to_bytes(&net().0, None);
        let cut = sealed(full[..full.len() - 20].to_vec());
        assert!(matches!(model_from_bytes(&cut), Err(DataError::ModelTruncated(_))));
    }
}
