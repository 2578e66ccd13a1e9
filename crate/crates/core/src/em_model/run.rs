use std::collections::VecDeque;

use super::disk::{BlockId, Disk};
use crate::error::Result;

/// A sequence of blocks on one disk holding `len` elements.
///
/// Blocks may be partially filled; the disk records each block's fill count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Run {
    pub blocks: Vec<BlockId>,
    pub len: usize,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stores `data` in full blocks without counting I/Os. Used to place an
    /// input on the disk before measuring an algorithm.
    pub fn stage(disk: &mut Disk, data: &[u64]) -> Result<Run> {
        let mut run = Run::new();
        for chunk in data.chunks(disk.b()) {
            let id = disk.alloc_block();
            disk.place_block(id, chunk)?;
            run.blocks.push(id);
        }
        run.len = data.len();
        Ok(run)
    }

    /// Uncounted read of the whole run, for verification.
    pub fn peek_all(&self, disk: &mut Disk) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.len);
        for &id in &self.blocks {
            out.extend(disk.peek_block(id)?);
        }
        Ok(out)
    }

    /// Per-block element counts.
    pub fn block_fills(&self, disk: &Disk) -> Result<Vec<usize>> {
        self.blocks.iter().map(|&id| disk.fill(id)).collect()
    }

    /// Appends `other`'s blocks. No I/O.
    pub fn append(&mut self, other: Run) {
        self.blocks.extend(other.blocks);
        self.len += other.len;
    }

    pub fn concat(runs: impl IntoIterator<Item = Run>) -> Run {
        let mut out = Run::new();
        for r in runs {
            out.append(r);
        }
        out
    }

    /// Returns the blocks to the disk's free list.
    pub fn free(self, disk: &mut Disk) -> Result<()> {
        for id in self.blocks {
            disk.free_block(id)?;
        }
        Ok(())
    }

    /// Splits into the first `pos` elements and the rest. At most one block
    /// straddles the cut; it is read once and rewritten as two blocks.
    pub fn split_at(self, disk: &mut Disk, pos: usize) -> Result<(Run, Run)> {
        let mut left = Run::new();
        let mut right = Run::new();
        let mut seen = 0;
        let total = self.len;
        for id in self.blocks {
            let fill = disk.fill(id)?;
            if seen + fill <= pos {
                left.blocks.push(id);
                left.len += fill;
            } else if seen >= pos {
                right.blocks.push(id);
                right.len += fill;
            } else {
                let cut = pos - seen;
                let data = disk.read_block(id, fill)?;
                let l = disk.alloc_block();
                disk.write_block(l, &data[..cut])?;
                disk.write_block(id, &data[cut..])?;
                left.blocks.push(l);
                left.len += cut;
                right.blocks.push(id);
                right.len += fill - cut;
            }
            seen += fill;
        }
        debug_assert_eq!(left.len + right.len, total);
        Ok((left, right))
    }
}

/// Block-at-a-time reader. In consuming mode each block is freed right after
/// it is read.
#[derive(Debug)]
pub struct RunReader {
    blocks: VecDeque<BlockId>,
    remaining: usize,
    consume: bool,
}

impl RunReader {
    pub fn new(run: Run, consume: bool) -> Self {
        Self {
            blocks: run.blocks.into(),
            remaining: run.len,
            consume,
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Fill count of the next block, if any.
    pub fn peek_fill(&self, disk: &Disk) -> Result<Option<usize>> {
        self.blocks.front().map(|&id| disk.fill(id)).transpose()
    }

    /// Reads the next block; its elements become resident.
    pub fn next_block(&mut self, disk: &mut Disk) -> Result<Option<Vec<u64>>> {
        loop {
            let Some(id) = self.blocks.pop_front() else {
                return Ok(None);
            };
            let fill = disk.fill(id)?;
            let data = disk.read_block(id, fill)?;
            if self.consume {
                disk.free_block(id)?;
            }
            self.remaining -= fill;
            if !data.is_empty() {
                return Ok(Some(data));
            }
        }
    }
}

/// Element-at-a-time cursor over a run, holding at most one block in memory.
#[derive(Debug)]
pub struct RunCursor {
    reader: RunReader,
    buf: VecDeque<u64>,
}

impl RunCursor {
    pub fn new(run: Run, consume: bool) -> Self {
        Self {
            reader: RunReader::new(run, consume),
            buf: VecDeque::new(),
        }
    }

    /// Smallest-index element not yet taken, loading a block if needed.
    pub fn peek(&mut self, disk: &mut Disk) -> Result<Option<u64>> {
        if self.buf.is_empty() {
            if let Some(block) = self.reader.next_block(disk)? {
                self.buf.extend(block);
            }
        }
        Ok(self.buf.front().copied())
    }

    /// Takes the next element. It stays resident; the caller owns it.
    pub fn next(&mut self, disk: &mut Disk) -> Result<Option<u64>> {
        self.peek(disk)?;
        Ok(self.buf.pop_front())
    }

    pub fn remaining(&self) -> usize {
        self.reader.remaining() + self.buf.len()
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Buffers up to one block of resident elements and writes full blocks.
#[derive(Debug, Default)]
pub struct RunWriter {
    run: Run,
    buf: Vec<u64>,
}

impl RunWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Continues writing after the end of `run`.
    pub fn append_to(run: Run) -> Self {
        Self {
            run,
            buf: Vec::new(),
        }
    }

    /// Pushes an element that is already accounted as resident.
    pub fn push(&mut self, disk: &mut Disk, e: u64) -> Result<()> {
        self.buf.push(e);
        if self.buf.len() == disk.b() {
            self.flush(disk)?;
        }
        Ok(())
    }

    pub fn extend(&mut self, disk: &mut Disk, elements: &[u64]) -> Result<()> {
        let b = disk.b();
        let mut rest = elements;
        if !self.buf.is_empty() {
            let take = (b - self.buf.len()).min(rest.len());
            self.buf.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if self.buf.len() == b {
                self.flush(disk)?;
            }
        }
        while rest.len() >= b {
            self.write(disk, &rest[..b])?;
            rest = &rest[b..];
        }
        self.buf.extend_from_slice(rest);
        Ok(())
    }

    /// Elements written or buffered so far.
    pub fn len(&self) -> usize {
        self.run.len + self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Writes out the buffer even if it is not a full block.
    pub fn flush(&mut self, disk: &mut Disk) -> Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let buf = std::mem::take(&mut self.buf);
        self.write(disk, &buf)
    }

    fn write(&mut self, disk: &mut Disk, data: &[u64]) -> Result<()> {
        let id = disk.alloc_block();
        disk.write_block(id, data)?;
        self.run.blocks.push(id);
        self.run.len += data.len();
        Ok(())
    }

    /// Appends a run behind what has been written, flushing the buffer first.
    pub fn append_run(&mut self, disk: &mut Disk, run: Run) -> Result<()> {
        self.flush(disk)?;
        self.run.append(run);
        Ok(())
    }

    pub fn finish(mut self, disk: &mut Disk) -> Result<Run> {
        self.flush(disk)?;
        Ok(self.run)
    }
}
