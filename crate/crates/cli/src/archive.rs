//! Channel-matrix archive written by `simulate` and read by `pipeline`.
//!
//! `<name>.rdca` holds the matrices: magic `RDCA`, version u32, count u64,
//! then per recording frames u32, subcarriers u32 and the complex samples as
//! little-endian (re, im) f32 pairs, frame-major. A CRC-32 of everything
//! before it closes the file. `<name>.rdca.json` carries the radio settings
//! and, per recording, the ground-truth annotations and target tracks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use rdsense_core::sim::scenario::{Annotation, Synthesized};
use rdsense_core::{ChannelMatrix, RadioConfig, TargetTrack};

pub const MAGIC: &[u8; 4] = b"RDCA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingInfo {
    pub name: String,
    pub user: u32,
    pub location: String,
    pub frames: usize,
    pub subcarriers: usize,
    pub doppler_aliased: bool,
    pub annotations: Vec<Annotation>,
    pub tracks: Vec<TargetTrack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveIndex {
    pub version: u32,
    pub radio: RadioConfig,
    pub recordings: Vec<RecordingInfo>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Hashing<W> {
    inner: W,
    crc: crc32fast::Hasher,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Streams recordings to disk; `finish` writes the trailer and the sidecar.
pub struct ArchiveWriter {
    path: PathBuf,
    out: Hashing<BufWriter<File>>,
    index: ArchiveIndex,
    expected: u64,
}

impl ArchiveWriter {
    pub fn create(path: &Path, radio: &RadioConfig, count: usize) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = Hashing {
            inner: BufWriter::new(file),
            crc: crc32fast::Hasher::new(),
        };
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(count as u64).to_le_bytes())?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
            index: ArchiveIndex {
                version: VERSION,
                radio: *radio,
                recordings: Vec::with_capacity(count),
            },
            expected: count as u64,
        })
    }

    pub fn push(&mut self, rec: &Synthesized) -> Result<()> {
        let m = &rec.matrix;
        self.out.write_all(&(m.frames() as u32).to_le_bytes())?;
        self.out.write_all(&(m.subcarriers() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(m.subcarriers() * 8);
        for row in m.data().chunks(m.subcarriers().max(1)) {
            buf.clear();
            for z in row {
                buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            self.out.write_all(&buf)?;
        }
        self.index.recordings.push(RecordingInfo {
            name: rec.name.clone(),
            user: rec.user,
            location: rec.location.clone(),
            frames: m.frames(),
            subcarriers: m.subcarriers(),
            doppler_aliased: m.doppler_aliased,
            annotations: rec.annotations.clone(),
            tracks: rec.tracks.clone(),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<ArchiveIndex> {
        ensure!(
            self.index.recordings.len() as u64 == self.expected,
            "archive declared {} recordings but {} were written",
            self.expected,
            self.index.recordings.len()
        );
        let crc = self.out.crc.clone().finalize();
        self.out.inner.write_all(&crc.to_le_bytes())?;
        self.out.inner.flush()?;
        std::fs::write(sidecar_path(&self.path), serde_json::to_vec_pretty(&self.index)?)?;
        Ok(self.index)
    }
}

struct HashingReader<R> {
    inner: R,
    crc: crc32fast::Hasher,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }
}

/// Sequential reader. Matrices come back in archive order; the checksum is
/// verified once the last one has been read.
pub struct ArchiveReader {
    input: HashingReader<BufReader<File>>,
    pub index: ArchiveIndex,
    next: usize,
}

impl ArchiveReader {
    pub fn open(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side)
            .with_context(|| format!("reading archive index {}", side.display()))?;
        let index: ArchiveIndex =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?;
        ensure!(
            index.version == VERSION,
            "archive index version {} (expected {VERSION})",
            index.version
        );
        index.radio.validate()?;
        let file = File::open(path).with_context(|| format!("opening archive {}", path.display()))?;
        let mut input = HashingReader {
            inner: BufReader::new(file),
            crc: crc32fast::Hasher::new(),
        };
        let mut head = [0u8; 16];
        input.read_exact(&mut head).context("archive header truncated")?;
        if &head[..4] != MAGIC {
            bail!("{} is not a channel archive", path.display());
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        ensure!(
            version == VERSION,
            "archive version {version} (expected {VERSION})"
        );
        let count = u64::from_le_bytes(head[8..16].try_into().unwrap());
        ensure!(
            count == index.recordings.len() as u64,
            "archive holds {count} recordings but its index lists {}",
            index.recordings.len()
        );
        Ok(Self {
            input,
            index,
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.index.recordings.len()
    }

    pub fn next_matrix(&mut self) -> Result<Option<(RecordingInfo, ChannelMatrix)>> {
        if self.next == self.len() {
            return Ok(None);
        }
        let info = self.index.recordings[self.next].clone();
        let mut dims = [0u8; 8];
        self.input.read_exact(&mut dims).context("archive truncated")?;
        let frames = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
        let subcarriers = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
        ensure!(
            frames == info.frames && subcarriers == info.subcarriers,
            "recording {:?} is {frames}x{subcarriers} but its index says {}x{}",
            info.name,
            info.frames,
            info.subcarriers
        );
        let mut raw = vec![0u8; frames * subcarriers * 8];
        self.input.read_exact(&mut raw).context("archive truncated")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| {
                Complex64::new(
                    f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(b[4..].try_into().unwrap()) as f64,
                )
            })
            .collect();
        let mut m = ChannelMatrix::from_vec(frames, subcarriers, data)?;
        m.doppler_aliased = info.doppler_aliased;
        self.next += 1;
        if self.next == self.len() {
            self.verify_trailer()?;
        }
        Ok(Some((info, m)))
    }

    fn verify_trailer(&mut self) -> Result<()> {
        let crc = self.input.crc.clone().finalize();
        let mut tail = [0u8; 4];
        self.input
            .inner
            .read_exact(&mut tail)
            .context("archive checksum missing")?;
        ensure!(u32::from_le_bytes(tail) == crc, "archive checksum mismatch");
        let mut rest = [0u8; 1];
        ensure!(
            self.input.inner.read(&mut rest)? == 0,
            "trailing bytes after archive checksum"
        );
        Ok(())
    }
}

/// Reads an empty archive's trailer too, which `next_matrix` never reaches.
pub fn read_all(path: &Path) -> Result<(ArchiveIndex, Vec<ChannelMatrix>)> {
    let mut r = ArchiveReader::open(path)?;
    if r.len() == 0 {
        r.verify_trailer()?;
    }
    let mut out = Vec::with_capacity(r.len());
    while let Some((_, m)) = r.next_matrix()? {
        out.push(m);
    }
    Ok((r.index, out))
}

/// The matrix as stored: every sample rounded to f32 precision.
pub fn quantized(m: &ChannelMatrix) -> ChannelMatrix {
    let data = m
        .data()
        .iter()
        .map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
        .collect();
    let mut q = ChannelMatrix::from_vec(m.frames(), m.subcarriers(), data).expect("same shape");
    q.doppler_aliased = m.doppler_aliased;
    q
}
