//! External merge sort: memory-sized sorted runs, then `(M/B - 1)`-way
//! merging level by level until one run is left.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::em_model::{Disk, Run, RunCursor, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::internal_algos::{sort_with, SortKind};

/// Priority queue over the current head element of every input run.
pub trait MergeHeap {
    fn push(&mut self, key: u64, run: usize);
    fn pop(&mut self) -> Option<(u64, usize)>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Pushes plus pops so far.
    fn ops(&self) -> u64;
}

/// Binary heap on `(key, run)`; equal keys leave in run order.
#[derive(Debug, Default)]
pub struct BinaryMergeHeap {
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    ops: u64,
}

impl MergeHeap for BinaryMergeHeap {
    fn push(&mut self, key: u64, run: usize) {
        self.ops += 1;
        self.heap.push(Reverse((key, run)));
    }

    fn pop(&mut self) -> Option<(u64, usize)> {
        let top = self.heap.pop().map(|Reverse(e)| e);
        self.ops += top.is_some() as u64;
        top
    }

    fn len(&self) -> usize {
        self.heap.len()
    }

    fn ops(&self) -> u64 {
        self.ops
    }
}

/// Radix heap for word keys. Keys must never go below the last popped key,
/// which holds for merging sorted runs. Ties come out in no fixed order.
#[derive(Debug)]
pub struct RadixMergeHeap {
    buckets: Vec<Vec<(u64, usize)>>,
    last: u64,
    len: usize,
    ops: u64,
}

impl Default for RadixMergeHeap {
    fn default() -> Self {
        Self {
            buckets: vec![Vec::new(); 65],
            last: 0,
            len: 0,
            ops: 0,
        }
    }
}

impl RadixMergeHeap {
    fn slot(&self, key: u64) -> usize {
        (u64::BITS - (key ^ self.last).leading_zeros()) as usize
    }
}

impl MergeHeap for RadixMergeHeap {
    fn push(&mut self, key: u64, run: usize) {
        assert!(key >= self.last, "radix heap key below last minimum");
        self.ops += 1;
        let s = self.slot(key);
        self.buckets[s].push((key, run));
        self.len += 1;
    }

    fn pop(&mut self) -> Option<(u64, usize)> {
        if self.len == 0 {
            return None;
        }
        self.ops += 1;
        if self.buckets[0].is_empty() {
            let i = (1..self.buckets.len())
                .find(|&i| !self.buckets[i].is_empty())
                .expect("non-empty heap");
            let moved = std::mem::take(&mut self.buckets[i]);
            self.last = moved.iter().map(|&(k, _)| k).min().expect("non-empty");
            for (k, r) in moved {
                self.ops += 1;
                let s = self.slot(k);
                self.buckets[s].push((k, r));
            }
        }
        self.len -= 1;
        self.buckets[0].pop()
    }

    fn len(&self) -> usize {
        self.len
    }

    fn ops(&self) -> u64 {
        self.ops
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MergeHeapKind {
    #[default]
    Binary,
    Radix,
}

impl MergeHeapKind {
    fn build(self) -> Box<dyn MergeHeap> {
        match self {
            Self::Binary => Box::<BinaryMergeHeap>::default(),
            Self::Radix => Box::<RadixMergeHeap>::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MergeOptions {
    pub heap: MergeHeapKind,
    pub sort: SortKind,
}

#[derive(Debug)]
pub struct MergeSortOutcome {
    pub run: Run,
    pub runs_formed: usize,
    pub phases: usize,
    pub heap_ops: u64,
}

pub fn fan_in(disk: &Disk) -> usize {
    disk.m() / disk.b() - 1
}

/// Cuts `input` into sorted runs of `M` elements. Consumes the input.
pub fn form_runs(disk: &mut Disk, input: Run, sort: SortKind) -> Result<Vec<Run>> {
    let m = disk.m();
    let mut runs = Vec::new();
    let mut reader = RunReader::new(input, true);
    let mut load: Vec<u64> = Vec::with_capacity(m);
    loop {
        let next = reader.peek_fill(disk)?;
        if next.is_none_or(|f| load.len() + f > m) && !load.is_empty() {
            sort_with(sort, &mut load);
            let mut w = RunWriter::new();
            w.extend(disk, &load)?;
            runs.push(w.finish(disk)?);
            load.clear();
        }
        match reader.next_block(disk)? {
            Some(block) => load.extend(block),
            None => break,
        }
    }
    Ok(runs)
}

/// Merges up to `M/B - 1` sorted runs into one. A single run comes back
/// unchanged with no I/O. Returns the merged run and the heap operation
/// count.
pub fn merge_runs(disk: &mut Disk, runs: Vec<Run>, heap: MergeHeapKind) -> Result<(Run, u64)> {
    let f = fan_in(disk);
    if runs.len() > f {
        return Err(Error::TooManyRuns {
            runs: runs.len(),
            fan_in: f,
        });
    }
    let mut runs: Vec<Run> = runs.into_iter().filter(|r| !r.is_empty()).collect();
    match runs.len() {
        0 => return Ok((Run::new(), 0)),
        1 => return Ok((runs.pop().expect("one run"), 0)),
        _ => {}
    }
    let mut cursors: Vec<RunCursor> = runs.into_iter().map(|r| RunCursor::new(r, true)).collect();
    let mut pq = heap.build();
    for (i, c) in cursors.iter_mut().enumerate() {
        if let Some(e) = c.peek(disk)? {
            pq.push(e, i);
        }
    }
    let mut out = RunWriter::new();
    while let Some((_, i)) = pq.pop() {
        let e = cursors[i].next(disk)?.expect("heap entry has an element");
        out.push(disk, e)?;
        if let Some(next) = cursors[i].peek(disk)? {
            pq.push(next, i);
        }
    }
    Ok((out.finish(disk)?, pq.ops()))
}

/// Sorts `input` (consumed) by run formation and repeated merging.
pub fn external_merge_sort(disk: &mut Disk, input: Run) -> Result<MergeSortOutcome> {
    external_merge_sort_with(disk, input, MergeOptions::default())
}

pub fn external_merge_sort_with(
    disk: &mut Disk,
    input: Run,
    opts: MergeOptions,
) -> Result<MergeSortOutcome> {
    let f = fan_in(disk);
    if f < 2 {
        return Err(Error::InvalidConfig(format!(
            "merging needs M/B >= 3, got M = {}, B = {}",
            disk.m(),
            disk.b()
        )));
    }
    let mut runs = form_runs(disk, input, opts.sort)?;
    let runs_formed = runs.len();
    let mut phases = 0;
    let mut heap_ops = 0;
    while runs.len() > 1 {
        let mut next = Vec::with_capacity(runs.len().div_ceil(f));
        let mut level = runs.into_iter().peekable();
        while level.peek().is_some() {
            let group: Vec<Run> = level.by_ref().take(f).collect();
            let (merged, ops) = merge_runs(disk, group, opts.heap)?;
            heap_ops += ops;
            next.push(merged);
        }
        runs = next;
        phases += 1;
        log::debug!("merge phase {phases}: {} runs left", runs.len());
    }
    Ok(MergeSortOutcome {
        run: runs.pop().unwrap_or_default(),
        runs_formed,
        phases,
        heap_ops,
    })
}
