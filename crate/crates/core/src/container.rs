//! Binary file formats for matrices, measurement tensors and raw detector
//! readings. All integers and floats are little-endian; see
//! `docs/FORMATS.md` for the byte layouts.
//!
//! | file  | magic  | body |
//! |-------|--------|------|
//! | BCSM1 | `BCSM` | version, B (u16), M_B (u16), seed (u64), M_B·B² bytes of 0/1 |
//! | BCSY1 | `BCSY` | version, grid_h, grid_w, channels (u16 each), fingerprint (32 B), f64 values |
//! | BCSR1 | `BCSR` | version, count (u32), fingerprint (32 B), dark (f64), bright (f64), f64 voltages |

use std::fs;
use std::path::Path;

use crate::acquisition::RawMeasurementSet;
use crate::error::{Error, Result};
use crate::sensing::{BlockMatrix, Fingerprint, MeasurementTensor};

pub const MATRIX_MAGIC: &[u8; 4] = b"BCSM";
pub const TENSOR_MAGIC: &[u8; 4] = b"BCSY";
pub const RAW_MAGIC: &[u8; 4] = b"BCSR";
pub const VERSION: u8 = 0x01;

/// Bounds-checked little-endian reader over a byte slice.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "truncated payload: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn fingerprint(&mut self) -> Result<Fingerprint> {
        Ok(Fingerprint(self.take(32)?.try_into().unwrap()))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Checks the 4-byte magic and the version byte.
    pub fn header(&mut self, magic: &[u8; 4], version: u8) -> Result<()> {
        let found = self.take(4)?;
        if found != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            )));
        }
        let found = self.u8()?;
        if found != version {
            return Err(Error::Format(format!("unsupported version {found}, expected {version}")));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes after payload", self.remaining())));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_matrix(matrix: &BlockMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + matrix.bits().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(matrix.block_size() as u16).to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u16).to_le_bytes());
    out.extend_from_slice(&matrix.seed().to_le_bytes());
    out.extend_from_slice(matrix.bits());
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<BlockMatrix> {
    let mut r = ByteReader::new(bytes);
    r.header(MATRIX_MAGIC, VERSION)?;
    let block = r.u16()? as usize;
    let rows = r.u16()? as usize;
    let seed = r.u64()?;
    let bits = r.take(rows * block * block)?.to_vec();
    r.finish()?;
    BlockMatrix::from_bits(block, rows, bits, seed)
}

pub fn write_matrix(matrix: &BlockMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_matrix(matrix))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<BlockMatrix> {
    decode_matrix(&fs::read(path)?)
}

pub fn encode_tensor(tensor: &MeasurementTensor) -> Result<Vec<u8>> {
    let (h, w, c) = tensor.shape();
    let dims = [h, w, c]
        .iter()
        .map(|&d| u16::try_from(d).map_err(|_| Error::Dimension(format!("tensor dimension {d} exceeds 16 bits"))))
        .collect::<Result<Vec<u16>>>()?;
    let mut out = Vec::with_capacity(43 + tensor.len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(VERSION);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(tensor.matrix_fingerprint().as_bytes());
    put_f64s(&mut out, tensor.values());
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<MeasurementTensor> {
    let mut r = ByteReader::new(bytes);
    r.header(TENSOR_MAGIC, VERSION)?;
    let h = r.u16()? as usize;
    let w = r.u16()? as usize;
    let c = r.u16()? as usize;
    let fingerprint = r.fingerprint()?;
    let expected = h * w * c * 8;
    if r.remaining() != expected {
        return Err(Error::Format(format!(
            "header declares {h}x{w}x{c} ({expected} payload bytes) but {} remain",
            r.remaining()
        )));
    }
    let values = r.f64s(h * w * c)?;
    MeasurementTensor::new(h, w, c, values, fingerprint).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tensor(tensor: &MeasurementTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(tensor)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<MeasurementTensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn encode_raw(raw: &RawMeasurementSet) -> Result<Vec<u8>> {
    let count = u32::try_from(raw.voltages.len())
        .map_err(|_| Error::Dimension("too many raw measurements".into()))?;
    let mut out = Vec::with_capacity(57 + raw.voltages.len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(raw.matrix_fingerprint.as_bytes());
    out.extend_from_slice(&raw.dark_reading.to_le_bytes());
    out.extend_from_slice(&raw.bright_reading.to_le_bytes());
    put_f64s(&mut out, &raw.voltages);
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawMeasurementSet> {
    let mut r = ByteReader::new(bytes);
    r.header(RAW_MAGIC, VERSION)?;
    let count = r.u32()? as usize;
    let matrix_fingerprint = r.fingerprint()?;
    let dark_reading = r.f64()?;
    let bright_reading = r.f64()?;
    if r.remaining() != count * 8 {
        return Err(Error::Format(format!(
            "header declares {count} voltages but {} payload bytes remain",
            r.remaining()
        )));
    }
    let voltages = r.f64s(count)?;
    Ok(RawMeasurementSet { voltages, matrix_fingerprint, dark_reading, bright_reading })
}

pub fn write_raw(raw: &RawMeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_raw(raw)?)?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawMeasurementSet> {
    decode_raw(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::sensing::{generate_block_matrix, SamplingConfig};

    fn matrix() -> BlockMatrix {
        generate_block_matrix(&SamplingConfig::new(4, 0.25, 7)).unwrap()
    }

    #[test]
    fn matrix_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bcsm");
        let m = matrix();
        write_matrix(&m, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
        assert_eq!(back.seed(), 7);
    }

    #[test]
    fn matrix_layout_is_bit_exact() {
        let m = BlockMatrix::from_bits(2, 1, vec![1, 0, 1, 1], 0x0102).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(
            bytes,
            [b'B', b'C', b'S', b'M', 1, 2, 0, 1, 0, 2, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 1]
        );
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = encode_matrix(&matrix());
        bytes[0] = b'X';
        assert!(matches!(decode_matrix(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = encode_matrix(&matrix());
        bytes[4] = 2;
        assert!(matches!(decode_matrix(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_matrix_is_rejected() {
        let bytes = encode_matrix(&matrix());
        assert!(matches!(decode_matrix(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn non_binary_payload_fails_validation() {
        let mut bytes = encode_matrix(&matrix());
        let last = bytes.len() - 1;
        bytes[last] = 2;
        assert!(matches!(decode_matrix(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn tensor_header_payload_mismatch() {
        let t = MeasurementTensor::zeros(2, 2, 3, matrix().fingerprint()).unwrap();
        let mut bytes = encode_tensor(&t).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_tensor(&t).unwrap();
        bytes[5] = 3; // grid_h 2 -> 3
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn raw_count_mismatch() {
        let raw = RawMeasurementSet {
            voltages: vec![0.5; 4],
            matrix_fingerprint: matrix().fingerprint(),
            dark_reading: 0.1,
            bright_reading: 2.0,
        };
        let mut bytes = encode_raw(&raw).unwrap();
        bytes.push(0);
        assert!(matches!(decode_raw(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn tensor_bytes_roundtrip(h in 1usize..6, w in 1usize..6, c in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..h * w * c).map(|_| rng.random::<f64>() * 16.0 - 4.0).collect();
            let t = MeasurementTensor::new(h, w, c, values, Fingerprint(rng.random())).unwrap();
            let bytes = encode_tensor(&t).unwrap();
            let back = decode_tensor(&bytes).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(encode_tensor(&back).unwrap(), bytes);
        }

        #[test]
        fn raw_bytes_roundtrip(n in 0usize..64, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let raw = RawMeasurementSet {
                voltages: (0..n).map(|_| rng.random()).collect(),
                matrix_fingerprint: Fingerprint(rng.random()),
                dark_reading: rng.random(),
                bright_reading: rng.random(),
            };
            let bytes = encode_raw(&raw).unwrap();
            let back = decode_raw(&bytes).unwrap();
            prop_assert_eq!(&back, &raw);
            prop_assert_eq!(encode_raw(&back).unwrap(), bytes);
        }
    }
}
