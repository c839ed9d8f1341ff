//! Model persistence: a magic tag, a JSON architecture header, and the
//! raw parameter vector in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fno::model::{Arch, FnoModel};

pub const MAGIC: &[u8; 8] = b"IFOPCKPT";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Arch,
    /// Parameter block names and shapes in storage order, so a reader
    /// can detect layout drift without trusting the byte count alone.
    blocks: Vec<(String, Vec<usize>)>,
}

/// Serializes the model: magic, version (u16 LE), header length
/// (u32 LE), JSON header, then every parameter as little-endian f64 in
/// manifest order.
pub fn save(model: &FnoModel, path: &Path) -> Result<()> {
    let header = Header {
        arch: model.arch.clone(),
        blocks: model.blocks.iter().map(|b| (b.name.clone(), b.shape.clone())).collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::format(format!("header encoding: {e}")))?;
    let mut bytes =
        Vec::with_capacity(14 + header_json.len() + 8 * model.params.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for p in &model.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a checkpoint back; the parameter vector is restored bit for
/// bit.
pub fn load(path: &Path) -> Result<FnoModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < 14 || &bytes[..8] != MAGIC {
        return Err(Error::format("not a model checkpoint"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
    let body = 14 + header_len;
    if bytes.len() < body {
        return Err(Error::format("checkpoint header is truncated"));
    }
    let header: Header = serde_json::from_slice(&bytes[14..body])
        .map_err(|e| Error::format(format!("header decoding: {e}")))?;

    let mut model = FnoModel::new(header.arch, 0)?;
    let expected: Vec<(String, Vec<usize>)> =
        model.blocks.iter().map(|b| (b.name.clone(), b.shape.clone())).collect();
    if expected != header.blocks {
        return Err(Error::format("checkpoint block manifest does not match its architecture"));
    }
    let want = 8 * model.params.len();
    let tail = &bytes[body..];
    if tail.len() != want {
        return Err(Error::format(format!(
            "checkpoint holds {} parameter bytes, expected {want}",
            tail.len()
        )));
    }
    for (i, chunk) in tail.chunks_exact(8).enumerate() {
        model.params[i] = f64::from_le_bytes(chunk.try_into().expect("chunks of 8"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fno::model::HeadKind;

    fn model() -> FnoModel {
        let arch = Arch {
            d: 2,
            in_channels: 2,
            d_v: 3,
            k_max: 2,
            layers: 2,
            head: HeadKind::TfpmCoeffs,
            channels: vec!["geom/sdf/0".into(), "iface/alpha".into()],
        };
        FnoModel::new(arch, 77).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        save(&m, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.arch, m.arch);
        assert_eq!(back.params, m.params);
        let again = dir.path().join("again.ckpt");
        save(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn corrupt_files_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        save(&m, &path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(load(&path).is_err(), "bad magic must fail");

        save(&m, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load(&path).is_err(), "truncated parameters must fail");
    }
}
