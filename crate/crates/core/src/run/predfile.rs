//! `SEDP` prediction files: `"SEDP"`, `u16` version, `u16` K, `u32` H,
//! `u32` W, then K class-major planes of little-endian `f32` in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::ProbMaps;

const MAGIC: &[u8; 4] = b"SEDP";
const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 2 + 4 + 4;

/// Serializes `maps`, clamping every value into `[0, 1]`.
pub fn encode_prediction(maps: &ProbMaps) -> Result<Vec<u8>> {
    let k = u16::try_from(maps.k).map_err(|_| Error::config("too many classes for a prediction file"))?;
    let h = u32::try_from(maps.height).map_err(|_| Error::config("prediction too tall"))?;
    let w = u32::try_from(maps.width).map_err(|_| Error::config("prediction too wide"))?;
    let mut out = Vec::with_capacity(HEADER + 4 * maps.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for &v in &maps.data {
        if v.is_nan() {
            return Err(Error::numeric("NaN in prediction map"));
        }
        out.extend_from_slice(&v.clamp(0.0, 1.0).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_prediction(bytes: &[u8]) -> Result<ProbMaps> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::data("not a SEDP prediction file"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::data(format!("unsupported prediction file version {version}")));
    }
    let k = u16_at(6) as usize;
    let h = u32_at(8) as usize;
    let w = u32_at(12) as usize;
    let n = k * h * w;
    if bytes.len() != HEADER + 4 * n {
        return Err(Error::data(format!(
            "prediction payload is {} bytes, expected {} for {k}x{h}x{w}",
            bytes.len() - HEADER,
            4 * n
        )));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProbMaps::new(k, h, w, data)
}

pub fn write_prediction(path: impl AsRef<Path>, maps: &ProbMaps) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_prediction(maps)?).map_err(|e| Error::io(path, e))
}

pub fn read_prediction(path: impl AsRef<Path>) -> Result<ProbMaps> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_prediction(&bytes).map_err(|e| match e {
        Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_size() {
        let maps = ProbMaps::new(3, 64, 64, vec![0.25; 3 * 64 * 64]).unwrap();
        let bytes = encode_prediction(&maps).unwrap();
        assert_eq!(bytes.len() - HEADER, 49152);
        assert_eq!(decode_prediction(&bytes).unwrap(), maps);
    }

    #[test]
    fn clamps_and_round_trips() {
        let maps = ProbMaps::new(1, 1, 4, vec![-0.5, 0.3, 1.5, 1e-30]).unwrap();
        let back = decode_prediction(&encode_prediction(&maps).unwrap()).unwrap();
        assert_eq!(back.data, vec![0.0, 0.3, 1.0, 1e-30]);
    }

    #[test]
    fn rejects_corrupt_files() {
        let maps = ProbMaps::new(1, 2, 2, vec![0.5; 4]).unwrap();
        let bytes = encode_prediction(&maps).unwrap();
        assert!(matches!(decode_prediction(&bytes[..bytes.len() - 1]), Err(Error::Data(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_prediction(&bad), Err(Error::Data(_))));
    }
}
