use std::io::{Read, Write};
use std::path::Path;

use super::model::CnnGru;
use super::CnnGruSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes `magic, version u32, spec-length u32, spec JSON, count u64,
/// f32 parameters, crc32 u32`, all little-endian. The checksum covers every
/// preceding byte.
pub fn save_checkpoint(model: &CnnGru<f32>, path: &Path) -> Result<()> {
    let spec = serde_json::to_vec(model.spec())?;
    let mut buf = Vec::with_capacity(24 + spec.len() + 4 * model.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(&spec);
    buf.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or(Error::Truncated {
            expected: (*pos + n) as u64,
            found: buf.len() as u64,
        })?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

pub fn load_checkpoint(path: &Path) -> Result<CnnGru<f32>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0;
    if take(&buf, &mut pos, 4)? != MAGIC {
        return Err(Error::Magic("checkpoint"));
    }
    let version = u32::from_le_bytes(take(&buf, &mut pos, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let spec_len = u32::from_le_bytes(take(&buf, &mut pos, 4)?.try_into().unwrap()) as usize;
    let spec: CnnGruSpec = serde_json::from_slice(take(&buf, &mut pos, spec_len)?)?;
    let count = u64::from_le_bytes(take(&buf, &mut pos, 8)?.try_into().unwrap()) as usize;
    let expected = pos as u64 + 4 * count as u64 + 4;
    if buf.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            found: buf.len() as u64,
        });
    }
    let body_end = buf.len() - 4;
    let stored = u32::from_le_bytes(buf[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&buf[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let params = buf[pos..body_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    CnnGru::from_params(&spec, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = CnnGru::<f32>::new(&CnnGruSpec::tiny(), 11).unwrap();
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.spec(), m.spec());

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checksum { .. })));
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Magic(_))));
    }
}
