use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{BlockDevice, FileDevice, MemDevice};
use crate::error::{Error, Result};

/// Internal memory capacity `M` and block size `B`, both in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskConfig {
    pub capacity_m: usize,
    pub block_size_b: usize,
    /// When set, any operation that would push the resident element count
    /// above `M` fails with [`Error::BudgetExceeded`].
    pub enforce_budget: bool,
}

impl DiskConfig {
    /// Budget enforcement is on by default.
    pub fn new(capacity_m: usize, block_size_b: usize) -> Result<Self> {
        let config = Self {
            capacity_m,
            block_size_b,
            enforce_budget: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_budget(mut self, enforce: bool) -> Self {
        self.enforce_budget = enforce;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size_b < 2 {
            return Err(Error::InvalidConfig(format!(
                "block size B={} must be at least 2",
                self.block_size_b
            )));
        }
        if self.capacity_m < 2 * self.block_size_b {
            return Err(Error::InvalidConfig(format!(
                "M={} must be at least 2B={}",
                self.capacity_m,
                2 * self.block_size_b
            )));
        }
        Ok(())
    }

    /// Number of whole blocks that fit in internal memory.
    pub fn blocks_in_memory(&self) -> usize {
        self.capacity_m / self.block_size_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Transfer counters. `io_count` is the number of I/Os (T) and
/// `elements_transferred` the sum of elements moved by them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoStats {
    pub io_count: u64,
    pub elements_transferred: u64,
    pub reads: u64,
    pub writes: u64,
    pub peak_resident: usize,
}

impl IoStats {
    /// Average number of elements moved per I/O.
    pub fn average_transfer(&self) -> f64 {
        if self.io_count == 0 {
            0.0
        } else {
            self.elements_transferred as f64 / self.io_count as f64
        }
    }

    /// Counter difference `self - earlier`; the peak is kept from `self`.
    pub fn since(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            io_count: self.io_count - earlier.io_count,
            elements_transferred: self.elements_transferred - earlier.elements_transferred,
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            peak_resident: self.peak_resident,
        }
    }
}

/// Simulated external memory.
///
/// Besides storing blocks, the disk owns the workspace accounting: the number
/// of original elements (or copies) currently held in internal memory.
/// Reads add to it, writes subtract from it, and [`Disk::acquire`] /
/// [`Disk::release`] cover elements that enter or leave memory any other way.
pub struct Disk {
    config: DiskConfig,
    device: Box<dyn BlockDevice>,
    fills: Vec<Option<usize>>,
    free: Vec<usize>,
    stats: IoStats,
    resident: usize,
}

impl fmt::Debug for Disk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Disk")
            .field("config", &self.config)
            .field("allocated", &self.allocated_blocks())
            .field("stats", &self.stats)
            .field("resident", &self.resident)
            .finish()
    }
}

/// Creates an in-memory simulated disk.
pub fn create_disk(config: DiskConfig) -> Result<Disk> {
    Disk::new(config)
}

impl Disk {
    pub fn new(config: DiskConfig) -> Result<Self> {
        Self::with_device(config, Box::new(MemDevice::new()))
    }

    /// Creates a file-backed disk at `path`, truncating any existing file.
    pub fn create_file(config: DiskConfig, path: &Path) -> Result<Self> {
        config.validate()?;
        let device = FileDevice::create(path, config.block_size_b)?;
        Self::with_device(config, Box::new(device))
    }

    /// Reopens a file-backed disk previously synced with [`Disk::sync`].
    pub fn open_file(config: DiskConfig, path: &Path) -> Result<Self> {
        config.validate()?;
        let (device, meta) = FileDevice::open(path)?;
        if meta.block_size != config.block_size_b {
            return Err(Error::InvalidConfig(format!(
                "file was written with B={}, configuration says B={}",
                meta.block_size, config.block_size_b
            )));
        }
        let free = meta
            .fills
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(i, _)| i)
            .rev()
            .collect();
        let mut disk = Self::with_device(config, Box::new(device))?;
        disk.fills = meta.fills;
        disk.free = free;
        Ok(disk)
    }

    pub fn with_device(config: DiskConfig, device: Box<dyn BlockDevice>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            device,
            fills: Vec::new(),
            free: Vec::new(),
            stats: IoStats::default(),
            resident: 0,
        })
    }

    pub fn config(&self) -> DiskConfig {
        self.config
    }

    pub fn m(&self) -> usize {
        self.config.capacity_m
    }

    pub fn b(&self) -> usize {
        self.config.block_size_b
    }

    pub fn stats(&self) -> IoStats {
        self.stats
    }

    /// Elements currently accounted as resident in internal memory.
    pub fn resident(&self) -> usize {
        self.resident
    }

    /// Room left in internal memory, in elements.
    pub fn available(&self) -> usize {
        self.config.capacity_m.saturating_sub(self.resident)
    }

    pub fn allocated_blocks(&self) -> usize {
        self.fills.iter().filter(|f| f.is_some()).count()
    }

    /// Allocation is bookkeeping only and costs no I/O. Freed ids are reused.
    pub fn alloc_block(&mut self) -> BlockId {
        match self.free.pop() {
            Some(index) => {
                self.fills[index] = Some(0);
                BlockId(index)
            }
            None => {
                self.fills.push(Some(0));
                BlockId(self.fills.len() - 1)
            }
        }
    }

    pub fn free_block(&mut self, id: BlockId) -> Result<()> {
        match self.fills.get_mut(id.0) {
            Some(slot @ Some(_)) => {
                *slot = None;
                self.free.push(id.0);
                Ok(())
            }
            Some(None) => Err(Error::DoubleFree(id)),
            None => Err(Error::UnallocatedBlock(id)),
        }
    }

    /// Number of elements stored in block `id`.
    pub fn fill(&self, id: BlockId) -> Result<usize> {
        self.fills
            .get(id.0)
            .copied()
            .flatten()
            .ok_or(Error::UnallocatedBlock(id))
    }

    /// Reads the first `count` elements of a block: one I/O moving `count`
    /// elements into internal memory.
    pub fn read_block(&mut self, id: BlockId, count: usize) -> Result<Vec<u64>> {
        self.read_block_range(id, 0, count)
    }

    /// Reads `count` elements of a block starting at element `start`.
    /// Still one I/O; only the requested elements are transferred.
    pub fn read_block_range(
        &mut self,
        id: BlockId,
        start: usize,
        count: usize,
    ) -> Result<Vec<u64>> {
        let stored = self.fill(id)?;
        if start + count > stored {
            return Err(Error::ShortBlock {
                id,
                start,
                end: start + count,
                stored,
            });
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        self.acquire(count)?;
        let data = self.device.read(id.0, start, count)?;
        self.stats.io_count += 1;
        self.stats.reads += 1;
        self.stats.elements_transferred += count as u64;
        Ok(data)
    }

    /// Writes up to `B` elements to a block, replacing its contents. The
    /// elements leave internal memory.
    pub fn write_block(&mut self, id: BlockId, elements: &[u64]) -> Result<()> {
        self.fill(id)?;
        if elements.len() > self.config.block_size_b {
            return Err(Error::BlockOverflow {
                len: elements.len(),
                block_size: self.config.block_size_b,
            });
        }
        self.release(elements.len())?;
        if !elements.is_empty() {
            self.device.write(id.0, elements)?;
            self.stats.io_count += 1;
            self.stats.writes += 1;
            self.stats.elements_transferred += elements.len() as u64;
        }
        self.fills[id.0] = Some(elements.len());
        Ok(())
    }

    /// Accounts for `n` elements entering internal memory without an I/O
    /// (a copy being made, or an element handed in by a caller).
    pub fn acquire(&mut self, n: usize) -> Result<()> {
        let next = self.resident + n;
        if self.config.enforce_budget && next > self.config.capacity_m {
            return Err(Error::BudgetExceeded {
                resident: self.resident,
                requested: n,
                capacity: self.config.capacity_m,
            });
        }
        self.resident = next;
        self.stats.peak_resident = self.stats.peak_resident.max(next);
        Ok(())
    }

    /// Accounts for `n` elements leaving internal memory without an I/O.
    pub fn release(&mut self, n: usize) -> Result<()> {
        if n > self.resident {
            return Err(Error::AccountingUnderflow {
                resident: self.resident,
                requested: n,
            });
        }
        self.resident -= n;
        Ok(())
    }

    /// Uncounted read of a whole block, for inspection and verification only.
    pub fn peek_block(&mut self, id: BlockId) -> Result<Vec<u64>> {
        let stored = self.fill(id)?;
        if stored == 0 {
            return Ok(Vec::new());
        }
        self.device.read(id.0, 0, stored)
    }

    /// Uncounted write used to stage inputs before an experiment starts.
    pub fn place_block(&mut self, id: BlockId, elements: &[u64]) -> Result<()> {
        self.fill(id)?;
        if elements.len() > self.config.block_size_b {
            return Err(Error::BlockOverflow {
                len: elements.len(),
                block_size: self.config.block_size_b,
            });
        }
        if !elements.is_empty() {
            self.device.write(id.0, elements)?;
        }
        self.fills[id.0] = Some(elements.len());
        Ok(())
    }

    /// Flushes the backend and, for file-backed disks, rewrites the sidecar.
    pub fn sync(&mut self) -> Result<()> {
        self.device.sync(&self.fills)
    }
}

impl Drop for Disk {
    fn drop(&mut self) {
        let _ = self.device.sync(&self.fills);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(m: usize, b: usize) -> Disk {
        Disk::new(DiskConfig::new(m, b).unwrap()).unwrap()
    }

    #[test]
    fn config_bounds() {
        assert!(DiskConfig::new(256, 16).is_ok());
        assert!(DiskConfig::new(1 << 14, 1 << 8).is_ok());
        assert!(matches!(
            DiskConfig::new(16, 16),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            DiskConfig::new(64, 1),
            Err(Error::InvalidConfig(_))
        ));
        assert!(DiskConfig::new(4, 2).is_ok());
    }

    #[test]
    fn fresh_disk_counts_nothing() {
        let d = disk(256, 16);
        assert_eq!(d.stats(), IoStats::default());
        assert_eq!(d.resident(), 0);
    }

    #[test]
    fn full_and_partial_reads() {
        let mut d = disk(256, 16);
        let id = d.alloc_block();
        let data: Vec<u64> = (0..16).collect();
        d.acquire(16).unwrap();
        d.write_block(id, &data).unwrap();
        assert_eq!(d.read_block(id, 16).unwrap(), data);
        let s = d.stats();
        assert_eq!((s.io_count, s.elements_transferred), (2, 32));
        d.release(16).unwrap();

        assert_eq!(d.read_block(id, 3).unwrap(), vec![0, 1, 2]);
        let s = d.stats();
        assert_eq!(
            (s.io_count, s.elements_transferred, s.reads, s.writes),
            (3, 35, 2, 1)
        );
        assert_eq!(d.read_block_range(id, 14, 2).unwrap(), vec![14, 15]);
    }

    #[test]
    fn single_element_write_costs_one_io() {
        let mut d = disk(256, 16);
        let id = d.alloc_block();
        d.acquire(1).unwrap();
        d.write_block(id, &[7]).unwrap();
        assert_eq!(d.stats().io_count, 1);
        assert_eq!(d.stats().elements_transferred, 1);
        assert_eq!(d.fill(id).unwrap(), 1);
    }

    #[test]
    fn oversized_write_rejected() {
        let mut d = disk(256, 16);
        let id = d.alloc_block();
        d.acquire(17).unwrap();
        let err = d.write_block(id, &[0; 17]).unwrap_err();
        assert!(matches!(
            err,
            Error::BlockOverflow {
                len: 17,
                block_size: 16
            }
        ));
        assert_eq!(d.stats().io_count, 0);
    }

    #[test]
    fn read_past_budget_fails() {
        let mut d = disk(32, 16);
        let id = d.alloc_block();
        d.acquire(16).unwrap();
        d.write_block(id, &[1; 16]).unwrap();
        d.acquire(32).unwrap();
        let err = d.read_block(id, 16).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert_eq!(d.stats().reads, 0);
    }

    #[test]
    fn budget_off_only_tracks_peak() {
        let mut d = Disk::new(DiskConfig::new(32, 16).unwrap().with_budget(false)).unwrap();
        d.acquire(100).unwrap();
        assert_eq!(d.stats().peak_resident, 100);
    }

    #[test]
    fn alloc_free_lifecycle() {
        let mut d = disk(256, 16);
        let a = d.alloc_block();
        let b = d.alloc_block();
        assert_ne!(a, b);
        d.free_block(a).unwrap();
        assert!(matches!(
            d.read_block(a, 1),
            Err(Error::UnallocatedBlock(_))
        ));
        assert!(matches!(d.free_block(a), Err(Error::DoubleFree(_))));
        // freed ids may be handed out again
        let c = d.alloc_block();
        assert_eq!(c, a);
        assert_eq!(d.stats().io_count, 0);
    }

    #[test]
    fn release_underflow_is_an_error() {
        let mut d = disk(256, 16);
        assert!(matches!(
            d.release(1),
            Err(Error::AccountingUnderflow { .. })
        ));
    }

    #[test]
    fn file_backend_round_trips_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("disk.bin");
        let cfg = DiskConfig::new(64, 4).unwrap();
        let (a, b);
        {
            let mut d = Disk::create_file(cfg, &path).unwrap();
            a = d.alloc_block();
            b = d.alloc_block();
            d.acquire(6).unwrap();
            d.write_block(a, &[1, 2, 3, u64::MAX]).unwrap();
            d.write_block(b, &[9, 8]).unwrap();
            assert_eq!(d.read_block(b, 2).unwrap(), vec![9, 8]);
            assert_eq!(d.stats().io_count, 3);
            d.sync().unwrap();
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..8], &1u64.to_le_bytes());
        assert_eq!(&bytes[32..40], &9u64.to_le_bytes());
        let mut d = Disk::open_file(cfg, &path).unwrap();
        assert_eq!(d.fill(a).unwrap(), 4);
        assert_eq!(d.fill(b).unwrap(), 2);
        assert_eq!(d.read_block(a, 4).unwrap(), vec![1, 2, 3, u64::MAX]);
    }
}
