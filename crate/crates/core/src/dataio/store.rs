use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdpipe::{ClipMeta, RDClip, CLIP_FRAMES, FRAME_SIDE};
use crate::sim::GestureKind;

const MAGIC: &[u8; 4] = b"RDCS";
pub const STORE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 3 * 4 + 8;
/// label, user, location, start frame
const RECORD_META_LEN: u64 = 4 + 4 + 4 + 8;
const NO_LABEL: u32 = u32::MAX;

/// JSON sidecar describing a clip store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Frames, height, width of every clip.
    pub shape: [usize; 3],
    pub count: usize,
    /// Location names indexed by the records' location id.
    pub locations: Vec<String>,
    /// Gesture names indexed by the records' label id.
    pub labels: Vec<String>,
    pub users: Vec<u32>,
    /// Recording each clip was cut from, in record order.
    pub sources: Vec<String>,
}

/// Sidecar path for a store: `clips.rdcs` → `clips.rdcs.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `clips` to `path` plus its manifest sidecar and returns the count.
///
/// Layout, little-endian: magic `RDCS`, version u32, frames u32, height u32,
/// width u32, count u64, then per clip label u32 (`u32::MAX` when
/// unlabeled), user u32, location u32, start frame u64 and the f32 payload,
/// then a crc32 of every preceding byte.
pub fn save_clips(clips: &[RDClip], path: &Path) -> Result<usize> {
    let frames = clips.first().map_or(CLIP_FRAMES, RDClip::num_frames);
    if let Some(c) = clips.iter().find(|c| c.num_frames() != frames) {
        return Err(Error::Shape(format!(
            "store clips must share one length: {} vs {frames} frames",
            c.num_frames()
        )));
    }
    let mut locations: Vec<String> = Vec::new();
    let mut location_ids = Vec::with_capacity(clips.len());
    for c in clips {
        let id = match locations.iter().position(|l| *l == c.meta.location) {
            Some(i) => i,
            None => {
                locations.push(c.meta.location.clone());
                locations.len() - 1
            }
        };
        location_ids.push(id as u32);
    }
    let mut users: Vec<u32> = clips.iter().map(|c| c.meta.user).collect();
    users.sort_unstable();
    users.dedup();

    let mut w = HashingWriter::new(BufWriter::new(File::create(path)?));
    w.put(MAGIC)?;
    w.put(&STORE_VERSION.to_le_bytes())?;
    for d in [frames, FRAME_SIDE, FRAME_SIDE] {
        w.put(&(d as u32).to_le_bytes())?;
    }
    w.put(&(clips.len() as u64).to_le_bytes())?;
    let mut payload = Vec::new();
    for (c, &loc) in clips.iter().zip(&location_ids) {
        let label = c.label.map_or(NO_LABEL, |g| g.index() as u32);
        w.put(&label.to_le_bytes())?;
        w.put(&c.meta.user.to_le_bytes())?;
        w.put(&loc.to_le_bytes())?;
        w.put(&(c.meta.start_frame as u64).to_le_bytes())?;
        payload.clear();
        payload.extend(c.frames.iter().flat_map(|v| v.to_le_bytes()));
        w.put(&payload)?;
    }
    let crc = w.hasher.clone().finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.inner.flush()?;

    let manifest = Manifest {
        version: STORE_VERSION,
        shape: [frames, FRAME_SIDE, FRAME_SIDE],
        count: clips.len(),
        locations,
        labels: GestureKind::ALL.iter().map(|g| g.name().to_string()).collect(),
        users,
        sources: clips.iter().map(|c| c.meta.source.clone()).collect(),
    };
    std::fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(clips.len())
}

/// Reads a store written by [`save_clips`], verifying length, checksum and
/// manifest consistency.
pub fn load_clips(path: &Path) -> Result<Vec<RDClip>> {
    let file_len = std::fs::metadata(path)?.len();
    let mut r = HashingReader::new(BufReader::new(File::open(path)?), file_len);
    if &r.array::<4>()? != MAGIC {
        return Err(Error::Magic("clip store"));
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != STORE_VERSION {
        return Err(Error::Version {
            expected: STORE_VERSION,
            found: version,
        });
    }
    let frames = u32::from_le_bytes(r.array()?) as usize;
    let height = u32::from_le_bytes(r.array()?) as usize;
    let width = u32::from_le_bytes(r.array()?) as usize;
    if height != FRAME_SIDE || width != FRAME_SIDE || frames == 0 {
        return Err(Error::Shape(format!(
            "unsupported clip shape {frames}×{height}×{width}"
        )));
    }
    let count = u64::from_le_bytes(r.array()?);
    let payload_len = (frames * height * width) as u64 * 4;
    let expected = count
        .checked_mul(RECORD_META_LEN + payload_len)
        .and_then(|b| b.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| Error::Invalid(format!("implausible clip count {count}")))?;
    if file_len != expected {
        return Err(Error::Truncated {
            expected,
            found: file_len,
        });
    }

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(manifest_path(path))?)?;
    if manifest.count as u64 != count
        || manifest.shape != [frames, height, width]
        || manifest.sources.len() as u64 != count
    {
        return Err(Error::Invalid("manifest does not match the store header".into()));
    }

    let mut records = Vec::with_capacity(count as usize);
    let mut payload = vec![0u8; payload_len as usize];
    for _ in 0..count {
        let label = u32::from_le_bytes(r.array()?);
        let user = u32::from_le_bytes(r.array()?);
        let location = u32::from_le_bytes(r.array()?);
        let start_frame = u64::from_le_bytes(r.array()?) as usize;
        r.fill(&mut payload)?;
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push((label, user, location, start_frame, values));
    }
    let computed = r.hasher.clone().finalize();
    let mut trailer = [0u8; 4];
    r.inner.read_exact(&mut trailer)?;
    let stored = u32::from_le_bytes(trailer);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    records
        .into_iter()
        .enumerate()
        .map(|(i, (label, user, location, start_frame, values))| {
            let label = match label {
                NO_LABEL => None,
                l => Some(GestureKind::from_index(l as usize)?),
            };
            let location = manifest
                .locations
                .get(location as usize)
                .ok_or_else(|| Error::UnknownId(format!("location id {location} of clip {i}")))?
                .clone();
            if manifest.users.binary_search(&user).is_err() {
                return Err(Error::UnknownId(format!("user {user} of clip {i}")));
            }
            let meta = ClipMeta {
                user,
                location,
                source: manifest.sources[i].clone(),
                start_frame,
            };
            RDClip::new(values, label, meta)
        })
        .collect()
}

/// Source of RD clips; the native store is one implementation, and loaders
/// for other dataset layouts plug in here.
pub trait ClipLoader {
    fn load(&self, path: &Path) -> Result<Vec<RDClip>>;
}

/// The binary store of [`save_clips`] / [`load_clips`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NativeStore;

impl ClipLoader for NativeStore {
    fn load(&self, path: &Path) -> Result<Vec<RDClip>> {
        load_clips(path)
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
        }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: crc32fast::Hasher,
    pos: u64,
    len: u64,
}

impl<R: Read> HashingReader<R> {
    fn new(inner: R, len: u64) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
            pos: 0,
            len,
        }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        if self.pos + buf.len() as u64 > self.len {
            return Err(Error::Truncated {
                expected: self.pos + buf.len() as u64,
                found: self.len,
            });
        }
        self.inner.read_exact(buf)?;
        self.hasher.update(buf);
        self.pos += buf.len() as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b)?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(rng: &mut ChaCha8Rng, frames: usize, i: usize) -> RDClip {
        let values = (0..frames * RDClip::FRAME_LEN)
            .map(|_| rng.gen::<f32>())
            .collect();
        let label = if i % 4 == 3 {
            None
        } else {
            Some(GestureKind::ALL[i % 5])
        };
        let meta = ClipMeta {
            user: (i % 3) as u32 + 1,
            location: ["A", "B", "C"][i % 3].into(),
            source: format!("rec{}", i / 2),
            start_frame: 32 * i,
        };
        RDClip::new(values, label, meta).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clips.rdcs");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clips: Vec<RDClip> = (0..10).map(|i| clip(&mut rng, 2, i)).collect();
        assert_eq!(save_clips(&clips, &path).unwrap(), 10);
        let back = load_clips(&path).unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in clips.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.meta, b.meta);
            assert!(a
                .frames
                .iter()
                .zip(&b.frames)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let m: Manifest = serde_json::from_slice(&std::fs::read(manifest_path(&path)).unwrap()).unwrap();
        assert_eq!(m.locations, ["A", "B", "C"]);
        assert_eq!(m.users, [1, 2, 3]);
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.rdcs");
        assert_eq!(save_clips(&[], &path).unwrap(), 0);
        assert!(load_clips(&path).unwrap().is_empty());
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN + 4);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.rdcs");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clips: Vec<RDClip> = (0..3).map(|i| clip(&mut rng, 1, i)).collect();
        save_clips(&clips, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::Truncated { .. })));

        let mut bad = good.clone();
        bad[HEADER_LEN as usize + 100] ^= 0x40;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::Checksum { .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::Version { found: 9, .. })));

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::Magic(_))));

        std::fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn mixed_lengths_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clips = vec![clip(&mut rng, 1, 0), clip(&mut rng, 2, 1)];
        assert!(matches!(
            save_clips(&clips, &dir.path().join("m.rdcs")),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn manifest_must_know_every_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.rdcs");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clips: Vec<RDClip> = (0..3).map(|i| clip(&mut rng, 1, i)).collect();
        save_clips(&clips, &path).unwrap();
        let mp = manifest_path(&path);
        let mut m: Manifest = serde_json::from_slice(&std::fs::read(&mp).unwrap()).unwrap();
        m.locations.truncate(1);
        std::fs::write(&mp, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(load_clips(&path), Err(Error::UnknownId(_))));
    }
}
