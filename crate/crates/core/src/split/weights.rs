//! Weight file layout (all integers little-endian):
//!
//! ```text
//! "PFSLW001"                      8-byte magic, version in the last 3 digits
//! u32 layer_count
//! per layer:  u32 tensor_count
//!   per tensor: u32 rank, rank x u64 dims, prod(dims) x f64
//! u32 crc32 over every byte between the magic and the checksum
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, ParamSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PFSLW001";

pub fn encode_weights(params: &ParamSet) -> Vec<u8> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for layer in params.layers() {
        payload.extend_from_slice(&(layer.len() as u32).to_le_bytes());
        for t in layer {
            payload.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                payload.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&payload);
    let mut out = Vec::with_capacity(MAGIC.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("weight file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ParamSet> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::format("weight file too short"));
    }
    if &bytes[..5] != b"PFSLW" {
        return Err(Error::format("bad weight file magic"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(format!(
            "unsupported weight file version {:?}",
            String::from_utf8_lossy(&bytes[5..8])
        )));
    }
    let payload = &bytes[MAGIC.len()..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(Error::format("weight file checksum mismatch"));
    }
    let mut r = Reader { bytes: payload, pos: 0 };
    let layers = r.u32()? as usize;
    let mut out = Vec::with_capacity(layers.min(1 << 16));
    for _ in 0..layers {
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format("tensor size overflows"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::format("tensor size overflows"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor::new(dims, data).map_err(|e| Error::format(e.to_string()))?);
        }
        out.push(tensors);
    }
    if r.pos != payload.len() {
        return Err(Error::format("trailing bytes after last tensor"));
    }
    Ok(ParamSet::new(out))
}

pub fn save_weights(params: &ParamSet, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(params))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ParamSet> {
    decode_weights(&fs::read(path)?)
}

/// Loads and checks the shapes against a target stack.
pub fn load_weights_for(path: &Path, specs: &[LayerSpec]) -> Result<ParamSet> {
    let params = load_weights(path)?;
    params.check_against(specs)?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;
    use proptest::prelude::*;

    fn specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv2d(1, 2, 3, 1, 1),
            LayerSpec::relu(),
            LayerSpec::flatten(),
            LayerSpec::dense(32, 3),
        ]
    }

    #[test]
    fn save_load_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let p = init_params(&specs(), 4).unwrap();
        save_weights(&p, &path).unwrap();
        assert!(load_weights(&path).unwrap().bit_eq(&p));
    }

    #[test]
    fn truncated_is_format_error() {
        let bytes = encode_weights(&init_params(&specs(), 4).unwrap());
        for cut in [3, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_weights(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn corrupt_magic_version_and_crc() {
        let mut bytes = encode_weights(&init_params(&specs(), 4).unwrap());
        bytes[20] ^= 1;
        assert!(matches!(decode_weights(&bytes), Err(Error::Format(m)) if m.contains("checksum")));
        let mut v = encode_weights(&ParamSet::empty(1));
        v[7] = b'9';
        assert!(matches!(decode_weights(&v), Err(Error::Format(m)) if m.contains("version")));
        let mut m = encode_weights(&ParamSet::empty(1));
        m[0] = b'X';
        assert!(matches!(decode_weights(&m), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&init_params(&specs(), 4).unwrap(), &path).unwrap();
        let mut other = specs();
        other[3] = LayerSpec::dense(32, 4);
        match load_weights_for(&path, &other) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 3),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn layout_is_little_endian() {
        let p = ParamSet::new(vec![vec![Tensor::new(vec![1], vec![1.0]).unwrap()]]);
        let b = encode_weights(&p);
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &1u32.to_le_bytes());
        assert_eq!(&b[20..28], &1u64.to_le_bytes());
        assert_eq!(&b[28..36], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 40);
    }

    proptest! {
        #[test]
        fn round_trip_any_values(vals in proptest::collection::vec(any::<f64>(), 1..40)) {
            let n = vals.len();
            let p = ParamSet::new(vec![vec![], vec![Tensor::new(vec![n], vals).unwrap()]]);
            let q = decode_weights(&encode_weights(&p)).unwrap();
            let same = p.layers()[1][0].data().iter().zip(q.layers()[1][0].data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
