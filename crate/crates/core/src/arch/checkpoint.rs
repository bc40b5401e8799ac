//! `SEDW` network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SEDW" | version u16 | variant u8 | head u8 | K u16
//! | stage channels 5 x u32 | blocks per stage u32 | stage-5 dilation u32
//! | scalar count u64 | parameters as f32, in registration order
//! ```

use std::fs;
use std::path::Path;

use super::{ArchVariant, BackboneConfig, Head, NetworkGraph};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SEDW";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint(net: &NetworkGraph<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + 4 * net.params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(net.variant.id());
    out.push(net.head.id());
    out.extend_from_slice(&(net.k as u16).to_le_bytes());
    for c in net.backbone.stage_channels {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.backbone.blocks_per_stage as u32).to_le_bytes());
    out.extend_from_slice(&(net.backbone.stage5_dilation as u32).to_le_bytes());
    out.extend_from_slice(&(net.params.num_scalars() as u64).to_le_bytes());
    for p in net.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::data("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<NetworkGraph<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::data("not a SEDW checkpoint"));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let variant = ArchVariant::from_id(r.u8()?).ok_or_else(|| Error::data("unknown variant id"))?;
    let head = Head::from_id(r.u8()?).ok_or_else(|| Error::data("unknown head id"))?;
    let k = r.u16()? as usize;
    let mut stage_channels = [0usize; 5];
    for c in &mut stage_channels {
        *c = r.u32()? as usize;
    }
    let backbone = BackboneConfig {
        stage_channels,
        blocks_per_stage: r.u32()? as usize,
        stage5_dilation: r.u32()? as usize,
    };
    let count = r.u64()? as usize;
    let mut net = NetworkGraph::<f32>::build(variant, head, k, backbone, 0)
        .map_err(|e| Error::data(format!("checkpoint header: {e}")))?;
    if count != net.params.num_scalars() {
        return Err(Error::data(format!(
            "checkpoint holds {count} scalars, graph needs {}",
            net.params.num_scalars()
        )));
    }
    for p in net.params.iter_mut() {
        let raw = r.take(4 * p.value.data().len())?;
        for (v, b) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::data("trailing bytes after checkpoint payload"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &NetworkGraph<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkGraph<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = BackboneConfig {
            stage_channels: [4, 4, 8, 8, 8],
            ..BackboneConfig::default()
        };
        for v in ArchVariant::ALL {
            let net = NetworkGraph::<f32>::build(v, Head::Sigmoid, 3, cfg.clone(), 7).unwrap();
            let bytes = write_checkpoint(&net);
            assert_eq!(&bytes[..4], b"SEDW");
            let back = read_checkpoint(&bytes).unwrap();
            assert_eq!(back.variant, v);
            assert_eq!(write_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let net = NetworkGraph::<f32>::build(ArchVariant::Basic, Head::Softmax, 2, BackboneConfig::default(), 1).unwrap();
        let bytes = write_checkpoint(&net);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
    }
}
