//! On-disk dataset container: `manifest.json` plus fixed-size little-endian
//! records grouped into `chunk-NNNNN.bin` files, each suffixed with the
//! CRC32 of its contents. `docs/FORMAT.md` is the byte-level reference.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DatasetConfig, DatasetRecord, ReceiverArray, ShapeKind, ShapeSlot, Split};
use crate::em::TransmitterConfig;
use crate::error::{Error, Result};
use crate::geometry::{write_file, ImageRaster, Point};

pub const FORMAT_NAME: &str = "efie-dataset";
pub const FORMAT_VERSION: u32 = 1;
/// Shape parameter slots stored per record.
pub const MAX_SHAPE_SLOTS: usize = 3;

const MANIFEST: &str = "manifest.json";
const HEADER_LEN: usize = 40;
const SLOT_LEN: usize = 32;
const NO_SOURCE: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub file: String,
    pub records: usize,
    pub first_index: u64,
    pub last_index: u64,
    /// File length including the trailing checksum.
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub config: DatasetConfig,
    pub wavelength: f64,
    pub transmitter: TransmitterConfig,
    pub receivers: Vec<Point>,
    pub record_count: usize,
    pub record_size: usize,
    pub test_count: usize,
    /// Indices that failed to generate and are absent from the chunks.
    pub skipped: Vec<u64>,
    pub chunks: Vec<ChunkEntry>,
}

fn record_size(receivers: usize, height: usize, width: usize) -> usize {
    HEADER_LEN + MAX_SHAPE_SLOTS * SLOT_LEN + 2 * 16 * receivers + (height * width).div_ceil(8)
}

fn chunk_name(k: usize) -> String {
    format!("chunk-{k:05}.bin")
}

pub(super) struct Writer {
    root: PathBuf,
    config: DatasetConfig,
    receivers: Vec<Point>,
    transmitter: TransmitterConfig,
    record_size: usize,
    buf: Vec<u8>,
    in_chunk: usize,
    first_index: u64,
    last_index: u64,
    chunks: Vec<ChunkEntry>,
    total: usize,
}

impl Writer {
    /// Prepares `root`, removing any manifest or chunk files left by an
    /// earlier run.
    pub(super) fn create(root: &Path, config: &DatasetConfig, rx: &ReceiverArray) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name == MANIFEST || (name.starts_with("chunk-") && name.ends_with(".bin")) {
                fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            }
        }
        Ok(Writer {
            root: root.to_path_buf(),
            config: config.clone(),
            receivers: rx.positions.clone(),
            transmitter: rx.tx,
            record_size: record_size(rx.len(), config.image_height, config.image_width),
            buf: Vec::new(),
            in_chunk: 0,
            first_index: 0,
            last_index: 0,
            chunks: Vec::new(),
            total: 0,
        })
    }

    pub(super) fn push(&mut self, record: &DatasetRecord) -> Result<()> {
        if self.in_chunk == 0 {
            self.first_index = record.index;
        }
        self.last_index = record.index;
        let before = self.buf.len();
        encode(record, &mut self.buf).map_err(|reason| Error::format(&self.root, reason))?;
        debug_assert_eq!(self.buf.len() - before, self.record_size);
        self.in_chunk += 1;
        self.total += 1;
        if self.in_chunk == self.config.chunk_records {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.in_chunk == 0 {
            return Ok(());
        }
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        let file = chunk_name(self.chunks.len());
        write_file(&self.root.join(&file), &self.buf)?;
        self.chunks.push(ChunkEntry {
            file,
            records: self.in_chunk,
            first_index: self.first_index,
            last_index: self.last_index,
            bytes: self.buf.len() as u64,
            crc32: crc,
        });
        self.buf.clear();
        self.in_chunk = 0;
        Ok(())
    }

    /// Flushes the last chunk and commits the manifest.
    pub(super) fn finish(mut self, skipped: &[u64], test_count: usize) -> Result<usize> {
        self.flush()?;
        let manifest = Manifest {
            format: FORMAT_NAME.into(),
            format_version: FORMAT_VERSION,
            wavelength: self.config.doi.wavelength,
            config: self.config,
            transmitter: self.transmitter,
            receivers: self.receivers,
            record_count: self.total,
            record_size: self.record_size,
            test_count,
            skipped: skipped.to_vec(),
            chunks: self.chunks,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_file(&self.root.join(MANIFEST), text.as_bytes())?;
        Ok(self.total)
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode(r: &DatasetRecord, buf: &mut Vec<u8>) -> std::result::Result<(), String> {
    if r.shapes.len() > MAX_SHAPE_SLOTS {
        return Err(format!("record {} has {} shapes, at most {MAX_SHAPE_SLOTS} fit", r.index, r.shapes.len()));
    }
    put_u64(buf, r.index);
    put_u64(buf, r.seed);
    put_u64(buf, r.source_index.unwrap_or(NO_SOURCE));
    put_u64(buf, r.point_count);
    buf.push(u8::from(r.split == Split::Test));
    buf.push(r.shapes.len() as u8);
    buf.extend_from_slice(&[0; 6]);
    for k in 0..MAX_SHAPE_SLOTS {
        let (kind, c, size) = match r.shapes.get(k) {
            None => (0u8, Point::ORIGIN, 0.0),
            Some(s) => {
                let code = match s.kind {
                    ShapeKind::Disc => 1,
                    ShapeKind::Square => 2,
                    ShapeKind::PixelMask => 3,
                };
                (code, s.center, s.size)
            }
        };
        buf.push(kind);
        buf.extend_from_slice(&[0; 7]);
        put_f64(buf, c.x);
        put_f64(buf, c.y);
        put_f64(buf, size);
    }
    for v in r.e.iter().chain(&r.e_incident) {
        put_f64(buf, v.re);
        put_f64(buf, v.im);
    }
    let mut packed = vec![0u8; r.target.values.len().div_ceil(8)];
    for (i, &v) in r.target.values.iter().enumerate() {
        if v != 0 {
            packed[i / 8] |= 0x80 >> (i % 8);
        }
    }
    buf.extend_from_slice(&packed);
    Ok(())
}

/// Little-endian cursor over one record.
struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        s
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn complex(&mut self, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(self.f64(), self.f64())).collect()
    }
}

/// An opened container. Records are decoded lazily, one chunk in memory at
/// a time.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    /// Receivers kept when decoding, ascending.
    keep: Vec<usize>,
}

/// Opens the container at `path` and validates its manifest.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let root = path.as_ref();
    let manifest_path = root.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.format != FORMAT_NAME || manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format {} v{}", manifest.format, manifest.format_version),
        ));
    }
    let cfg = &manifest.config;
    let want = record_size(manifest.receivers.len(), cfg.image_height, cfg.image_width);
    let listed: usize = manifest.chunks.iter().map(|c| c.records).sum();
    if manifest.record_size != want || listed != manifest.record_count {
        return Err(Error::format(&manifest_path, "record size or chunk index is inconsistent"));
    }
    let keep = (0..manifest.receivers.len()).collect();
    Ok(Dataset { root: root.to_path_buf(), manifest, keep })
}

/// Receiver indices `k * n / m` for `k = 0..m`; `m` must divide `n`.
pub fn subsample_indices(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Config(format!("receiver count {m} does not divide {n}")));
    }
    Ok((0..m).map(|k| k * n / m).collect())
}

impl Dataset {
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.record_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.record_count == 0
    }

    /// Receiver positions as decoded (after any subsampling).
    pub fn receivers(&self) -> Vec<Point> {
        self.keep.iter().map(|&k| self.manifest.receivers[k]).collect()
    }

    /// View that decodes only `m` equally spaced receivers out of the stored
    /// `N_r`, which must be a multiple of `m`.
    pub fn with_receiver_count(&self, m: usize) -> Result<Dataset> {
        let keep = subsample_indices(self.manifest.receivers.len(), m)?;
        Ok(Dataset { keep, ..self.clone() })
    }

    pub fn records(&self) -> Records<'_> {
        Records { dataset: self, chunk: 0, data: Vec::new(), next: 0, failed: false }
    }

    /// The record with generation index `t`, if present.
    pub fn get(&self, t: u64) -> Result<Option<DatasetRecord>> {
        let Some(k) = self.manifest.chunks.iter().position(|c| c.first_index <= t && t <= c.last_index) else {
            return Ok(None);
        };
        let data = self.load_chunk(k)?;
        let size = self.manifest.record_size;
        for slot in 0..self.manifest.chunks[k].records {
            let bytes = &data[slot * size..(slot + 1) * size];
            if u64::from_le_bytes(bytes[..8].try_into().unwrap()) == t {
                return self.decode(bytes).map(Some);
            }
        }
        Ok(None)
    }

    /// Chunk `k` without its checksum, after verifying length and CRC.
    fn load_chunk(&self, k: usize) -> Result<Vec<u8>> {
        let entry = &self.manifest.chunks[k];
        let path = self.root.join(&entry.file);
        let mut data = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let body = entry.records * self.manifest.record_size;
        let checksum_error = || Error::Checksum { chunk: k, path: path.clone() };
        if data.len() != body + 4 {
            return Err(checksum_error());
        }
        let stored = u32::from_le_bytes(data[body..].try_into().unwrap());
        if stored != crc32fast::hash(&data[..body]) || stored != entry.crc32 {
            return Err(checksum_error());
        }
        data.truncate(body);
        Ok(data)
    }

    fn decode(&self, bytes: &[u8]) -> Result<DatasetRecord> {
        let cfg = &self.manifest.config;
        let n_r = self.manifest.receivers.len();
        let mut c = Cursor { bytes, at: 0 };
        let index = c.u64();
        let seed = c.u64();
        let source = c.u64();
        let point_count = c.u64();
        let flags = c.take(8);
        let split = if flags[0] == 0 { Split::Train } else { Split::Test };
        let shape_count = flags[1] as usize;
        let mut shapes = Vec::with_capacity(shape_count);
        for k in 0..MAX_SHAPE_SLOTS {
            let code = c.take(8)[0];
            let center = Point::new(c.f64(), c.f64());
            let size = c.f64();
            if k >= shape_count {
                continue;
            }
            let kind = match code {
                1 => ShapeKind::Disc,
                2 => ShapeKind::Square,
                3 => ShapeKind::PixelMask,
                other => {
                    return Err(Error::format(&self.root, format!("record {index}: unknown shape code {other}")));
                }
            };
            shapes.push(ShapeSlot { kind, center, size });
        }
        let e_all = c.complex(n_r);
        let inc_all = c.complex(n_r);
        let (h, w) = (cfg.image_height, cfg.image_width);
        let packed = c.take((h * w).div_ceil(8));
        let values = (0..h * w).map(|i| (packed[i / 8] >> (7 - i % 8)) & 1).collect();
        Ok(DatasetRecord {
            index,
            seed,
            source_index: (source != NO_SOURCE).then_some(source),
            split,
            point_count,
            shapes,
            e: self.keep.iter().map(|&k| e_all[k]).collect(),
            e_incident: self.keep.iter().map(|&k| inc_all[k]).collect(),
            target: ImageRaster { height: h, width: w, side: cfg.image_side, values },
        })
    }
}

/// Streaming iterator over a container's records in index order. Stops
/// after the first error.
pub struct Records<'a> {
    dataset: &'a Dataset,
    chunk: usize,
    data: Vec<u8>,
    next: usize,
    failed: bool,
}

impl Iterator for Records<'_> {
    type Item = Result<DatasetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let size = self.dataset.manifest.record_size;
        while self.next * size >= self.data.len() {
            if self.chunk >= self.dataset.manifest.chunks.len() {
                return None;
            }
            match self.dataset.load_chunk(self.chunk) {
                Ok(data) => self.data = data,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
            self.chunk += 1;
            self.next = 0;
        }
        let bytes = &self.data[self.next * size..(self.next + 1) * size];
        self.next += 1;
        let out = self.dataset.decode(bytes);
        self.failed = out.is_err();
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_size_matches_the_layout() {
        assert_eq!(record_size(64, 128, 128), 40 + 96 + 2048 + 2048);
        assert_eq!(record_size(1, 3, 3), 40 + 96 + 32 + 2);
    }

    #[test]
    fn subsampling_is_every_nth_receiver() {
        for m in [8, 16, 32] {
            let got = subsample_indices(64, m).unwrap();
            let stride = 64 / m;
            let brute: Vec<usize> = (0..64).filter(|k| k % stride == 0).collect();
            assert_eq!(got, brute);
        }
        assert_eq!(subsample_indices(64, 64).unwrap(), (0..64).collect::<Vec<_>>());
        assert!(subsample_indices(64, 12).is_err());
        assert!(subsample_indices(64, 0).is_err());
    }

    #[test]
    fn bits_pack_msb_first() {
        let mut values = vec![0u8; 10];
        values[0] = 1;
        values[9] = 1;
        let r = DatasetRecord {
            index: 0,
            seed: 0,
            source_index: None,
            split: Split::Train,
            point_count: 0,
            shapes: Vec::new(),
            e: Vec::new(),
            e_incident: Vec::new(),
            target: ImageRaster { height: 2, width: 5, side: 1.0, values },
        };
        let mut buf = Vec::new();
        encode(&r, &mut buf).unwrap();
        assert_eq!(&buf[HEADER_LEN + 3 * SLOT_LEN..], &[0x80, 0x40]);
    }
}
