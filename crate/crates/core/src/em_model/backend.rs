//! Storage backends behind [`Disk`](super::Disk).
//!
//! A backend only stores and returns words. All counting, fill tracking and
//! budget checks live in the disk itself so both backends report identical
//! statistics for identical operation sequences.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub trait BlockDevice: Send {
    /// Reads `count` words of block `index` starting at word `start`.
    fn read(&mut self, index: usize, start: usize, count: usize) -> Result<Vec<u64>>;

    /// Overwrites block `index` with `data` (at most one block).
    fn write(&mut self, index: usize, data: &[u64]) -> Result<()>;

    /// Persists the per-block fill counts, if the backend has somewhere to put them.
    fn sync(&mut self, _fills: &[Option<usize>]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct MemDevice {
    blocks: Vec<Vec<u64>>,
}

impl MemDevice {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlockDevice for MemDevice {
    fn read(&mut self, index: usize, start: usize, count: usize) -> Result<Vec<u64>> {
        Ok(self.blocks[index][start..start + count].to_vec())
    }

    fn write(&mut self, index: usize, data: &[u64]) -> Result<()> {
        if index >= self.blocks.len() {
            self.blocks.resize_with(index + 1, Vec::new);
        }
        let block = &mut self.blocks[index];
        block.clear();
        block.extend_from_slice(data);
        Ok(())
    }
}

/// Sidecar contents written next to a file-backed disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskMetadata {
    pub block_size: usize,
    /// Fill count per block index; `None` marks a free slot.
    pub fills: Vec<Option<usize>>,
}

/// Flat little-endian `u64` file, block `i` at byte offset `i * B * 8`.
#[derive(Debug)]
pub struct FileDevice {
    file: File,
    block_size: usize,
    meta_path: PathBuf,
}

impl FileDevice {
    pub fn create(path: &Path, block_size: usize) -> Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        Ok(Self {
            file,
            block_size,
            meta_path: sidecar_path(path),
        })
    }

    /// Opens an existing disk file and returns its recorded metadata.
    pub fn open(path: &Path) -> Result<(Self, DiskMetadata)> {
        let meta_path = sidecar_path(path);
        let meta: DiskMetadata = serde_json::from_reader(File::open(&meta_path)?)?;
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        Ok((
            Self {
                file,
                block_size: meta.block_size,
                meta_path,
            },
            meta,
        ))
    }

    fn offset(&self, index: usize, start: usize) -> u64 {
        ((index * self.block_size + start) * 8) as u64
    }
}

/// `disk.bin` -> `disk.bin.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

impl BlockDevice for FileDevice {
    fn read(&mut self, index: usize, start: usize, count: usize) -> Result<Vec<u64>> {
        let mut bytes = vec![0u8; count * 8];
        self.file.seek(SeekFrom::Start(self.offset(index, start)))?;
        self.file.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn write(&mut self, index: usize, data: &[u64]) -> Result<()> {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.file.seek(SeekFrom::Start(self.offset(index, 0)))?;
        self.file.write_all(&bytes)?;
        Ok(())
    }

    fn sync(&mut self, fills: &[Option<usize>]) -> Result<()> {
        self.file.flush()?;
        let meta = DiskMetadata {
            block_size: self.block_size,
            fills: fills.to_vec(),
        };
        let out = File::create(&self.meta_path)?;
        serde_json::to_writer(out, &meta)?;
        Ok(())
    }
}
