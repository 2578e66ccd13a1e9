//! Buffer-tree priority queue.
//!
//! A B-tree of fan-out `f = max(2, floor(sqrt(M/B)))` whose leaves hold
//! `M/2..=M` unsorted elements and whose internal nodes carry a FIFO buffer
//! on disk. New elements gather in an insertion buffer of `B` elements and
//! enter the root buffer a block at a time; a buffer over `M/2` pushes its
//! `M/2` oldest elements one level down. The smallest elements live in an
//! in-memory mini-queue that is refilled from the leftmost leaf after the
//! leftmost root-to-leaf path has been flushed.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::em_model::{BlockId, Disk, Run, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::internal_algos::{internal_sort, linear_split, SplitterSet};
use crate::select::{split_run, SplitMode};

type NodeId = usize;

/// Part of one disk block that still belongs to a chain.
#[derive(Debug, Clone, Copy)]
struct Seg {
    id: BlockId,
    start: usize,
    len: usize,
    min: u64,
    max: u64,
}

/// Element list stored as a queue of (possibly partial) blocks. Appends go
/// to the back, reads come from the front, so the front holds the oldest
/// elements.
#[derive(Debug, Default)]
struct BlockChain {
    segs: VecDeque<Seg>,
    len: usize,
}

fn span_of(data: &[u64]) -> (u64, u64) {
    data.iter()
        .fold((u64::MAX, u64::MIN), |(lo, hi), &e| (lo.min(e), hi.max(e)))
}

impl BlockChain {
    fn push_block(&mut self, disk: &mut Disk, data: &[u64]) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        let id = disk.alloc_block();
        disk.write_block(id, data)?;
        let (min, max) = span_of(data);
        self.segs.push_back(Seg {
            id,
            start: 0,
            len: data.len(),
            min,
            max,
        });
        self.len += data.len();
        Ok(())
    }

    /// Writes resident `data` as full blocks plus one partial block.
    fn push_all(&mut self, disk: &mut Disk, data: &[u64]) -> Result<()> {
        for chunk in data.chunks(disk.b()) {
            self.push_block(disk, chunk)?;
        }
        Ok(())
    }

    /// Reads up to `max` of the oldest elements from the front block.
    fn pop_front(&mut self, disk: &mut Disk, max: usize) -> Result<Vec<u64>> {
        let Some(seg) = self.segs.front_mut() else {
            return Ok(Vec::new());
        };
        let take = seg.len.min(max);
        let data = disk.read_block_range(seg.id, seg.start, take)?;
        self.len -= take;
        if take == seg.len {
            let id = seg.id;
            self.segs.pop_front();
            disk.free_block(id)?;
        } else {
            seg.start += take;
            seg.len -= take;
            // span bookkeeping only; not a transfer
            let rest = disk.peek_block(seg.id)?;
            let (min, max) = span_of(&rest[seg.start..seg.start + seg.len]);
            seg.min = min;
            seg.max = max;
        }
        Ok(data)
    }

    /// Reads and frees the whole chain.
    fn read_all(&mut self, disk: &mut Disk) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.len);
        while self.len > 0 {
            let b = disk.b();
            out.extend(self.pop_front(disk, b)?);
        }
        Ok(out)
    }

    fn append(&mut self, other: BlockChain) {
        self.len += other.len;
        self.segs.extend(other.segs);
    }

    fn span(&self) -> Option<(u64, u64)> {
        self.segs.iter().fold(None, |acc, s| {
            Some(match acc {
                None => (s.min, s.max),
                Some((lo, hi)) => (lo.min(s.min), hi.max(s.max)),
            })
        })
    }

    /// Converts to a [`Run`], rewriting any block whose live part does not
    /// start at offset zero.
    fn into_run(self, disk: &mut Disk) -> Result<Run> {
        let mut run = Run::new();
        for seg in self.segs {
            if seg.start != 0 || seg.len != disk.fill(seg.id)? {
                let data = disk.read_block_range(seg.id, seg.start, seg.len)?;
                disk.write_block(seg.id, &data)?;
            }
            run.blocks.push(seg.id);
            run.len += seg.len;
        }
        Ok(run)
    }

    fn from_run(disk: &mut Disk, run: Run) -> Result<Self> {
        let mut chain = BlockChain::default();
        for id in run.blocks {
            let data = disk.peek_block(id)?;
            if data.is_empty() {
                disk.free_block(id)?;
                continue;
            }
            let (min, max) = span_of(&data);
            chain.segs.push_back(Seg {
                id,
                start: 0,
                len: data.len(),
                min,
                max,
            });
            chain.len += data.len();
        }
        Ok(chain)
    }
}

#[derive(Debug)]
enum Body {
    Leaf(BlockChain),
    Internal {
        splitters: Vec<u64>,
        children: Vec<NodeId>,
        buffer: BlockChain,
    },
}

#[derive(Debug)]
struct Node {
    parent: Option<NodeId>,
    body: Body,
}

/// In-memory double-ended priority queue holding the smallest elements.
#[derive(Debug, Default)]
struct MiniQueue {
    counts: BTreeMap<u64, usize>,
    len: usize,
    ops: u64,
}

impl MiniQueue {
    fn push(&mut self, e: u64) {
        self.ops += 1;
        *self.counts.entry(e).or_insert(0) += 1;
        self.len += 1;
    }

    fn take(&mut self, e: u64) {
        let c = self.counts.get_mut(&e).expect("present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&e);
        }
        self.len -= 1;
    }

    fn pop_min(&mut self) -> Option<u64> {
        self.ops += 1;
        let e = *self.counts.keys().next()?;
        self.take(e);
        Some(e)
    }

    fn pop_max(&mut self) -> Option<u64> {
        self.ops += 1;
        let e = *self.counts.keys().next_back()?;
        self.take(e);
        Some(e)
    }

    fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }
}

/// Operation and cost counters.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PqStats {
    pub inserts: u64,
    pub deletes: u64,
    pub refills: u64,
    pub emptyings: u64,
    pub forced_emptyings: u64,
    /// I/Os spent flushing the leftmost path during refills.
    pub forced_flush_ios: u64,
    pub leaf_splits: u64,
    pub node_splits: u64,
    pub fuses: u64,
    pub mini_ops: u64,
}

enum Work {
    Empty(NodeId),
    SplitLeaf(NodeId),
}

/// External priority queue on word keys. All operations take the disk the
/// queue was created on.
#[derive(Debug)]
pub struct BufferTreePq {
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
    root: NodeId,
    mini: MiniQueue,
    ins: Vec<u64>,
    fanout: usize,
    mini_cap: usize,
    m: usize,
    b: usize,
    len: usize,
    degenerate: bool,
    stats: PqStats,
}

fn isqrt(x: usize) -> usize {
    let mut r = (x as f64).sqrt() as usize;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

impl BufferTreePq {
    pub fn new(disk: &Disk) -> Result<Self> {
        let (m, b) = (disk.m(), disk.b());
        let q = m / b;
        if q < 4 {
            return Err(Error::InvalidConfig(format!(
                "priority queue needs M/B >= 4 for fan-out 2, got M = {m}, B = {b}"
            )));
        }
        let fanout = isqrt(q).max(2);
        let degenerate = fanout == 2;
        if degenerate {
            log::warn!("M/B = {q} gives fan-out 2; the tree degenerates to binary");
        }
        // room for a leaf split or a buffer emptying, plus one caller block
        let reserve = 7.max(fanout + 2) * b + fanout + b;
        let mini_cap = (m / 2).min(m.saturating_sub(reserve)).max(1);
        Ok(Self {
            nodes: vec![Some(Node {
                parent: None,
                body: Body::Leaf(BlockChain::default()),
            })],
            free: Vec::new(),
            root: 0,
            mini: MiniQueue::default(),
            ins: Vec::new(),
            fanout,
            mini_cap,
            m,
            b,
            len: 0,
            degenerate,
            stats: PqStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn degenerate_fanout(&self) -> bool {
        self.degenerate
    }

    pub fn mini_capacity(&self) -> usize {
        self.mini_cap
    }

    pub fn mini_is_empty(&self) -> bool {
        self.mini.len == 0
    }

    pub fn stats(&self) -> PqStats {
        PqStats {
            mini_ops: self.mini.ops,
            ..self.stats
        }
    }

    /// Inserts `e`, which the caller hands over; one element of workspace is
    /// acquired for it.
    pub fn insert(&mut self, disk: &mut Disk, e: u64) -> Result<()> {
        disk.acquire(1)?;
        self.insert_resident(disk, e)
    }

    /// Inserts an element already counted as resident.
    pub fn insert_resident(&mut self, disk: &mut Disk, e: u64) -> Result<()> {
        self.stats.inserts += 1;
        self.len += 1;
        let mut e = e;
        if let Some(top) = self.mini.max() {
            if e < top {
                self.mini.push(e);
                if self.mini.len > self.mini_cap {
                    e = self.mini.pop_max().expect("non-empty");
                } else {
                    return Ok(());
                }
            }
        }
        self.ins.push(e);
        if self.ins.len() >= self.b {
            self.flush_insertion(disk)?;
        }
        Ok(())
    }

    /// Removes and returns the smallest element; its workspace is released.
    pub fn delete_min(&mut self, disk: &mut Disk) -> Result<u64> {
        let e = self.delete_min_resident(disk)?;
        disk.release(1)?;
        Ok(e)
    }

    /// Like [`delete_min`](Self::delete_min) but the element stays counted
    /// as resident for the caller.
    pub fn delete_min_resident(&mut self, disk: &mut Disk) -> Result<u64> {
        if self.len == 0 {
            return Err(Error::EmptyQueue);
        }
        if self.mini.len == 0 {
            self.refill(disk)?;
        }
        let e = self.mini.pop_min().ok_or(Error::EmptyQueue)?;
        self.len -= 1;
        self.stats.deletes += 1;
        Ok(e)
    }

    // ---- arena helpers ----

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id].as_mut().expect("live node")
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    fn release_node(&mut self, id: NodeId) -> Node {
        self.free.push(id);
        self.nodes[id].take().expect("live node")
    }

    fn children(&self, id: NodeId) -> &[NodeId] {
        match &self.node(id).body {
            Body::Internal { children, .. } => children,
            Body::Leaf(_) => &[],
        }
    }

    /// Where elements handed to `id` are stored: a leaf's chain or an
    /// internal node's buffer.
    fn inbox(&mut self, id: NodeId) -> &mut BlockChain {
        match &mut self.node_mut(id).body {
            Body::Leaf(chain) => chain,
            Body::Internal { buffer, .. } => buffer,
        }
    }

    fn set_parent(&mut self, id: NodeId, parent: Option<NodeId>) {
        self.node_mut(id).parent = parent;
    }

    fn leftmost_path(&self) -> Vec<NodeId> {
        let mut path = vec![self.root];
        while let Some(&c) = self.children(*path.last().expect("root")).first() {
            path.push(c);
        }
        path
    }

    // ---- buffer emptying ----

    fn flush_insertion(&mut self, disk: &mut Disk) -> Result<()> {
        if self.ins.is_empty() {
            return Ok(());
        }
        let data = std::mem::take(&mut self.ins);
        let root = self.root;
        self.inbox(root).push_block(disk, &data)?;
        self.settle(disk)
    }

    /// Moves the `amount` oldest elements of `v`'s buffer to its children.
    fn empty_node(&mut self, disk: &mut Disk, v: NodeId, amount: usize) -> Result<()> {
        let (splitters, children) = match &self.node(v).body {
            Body::Internal {
                splitters,
                children,
                ..
            } => (splitters.clone(), children.clone()),
            Body::Leaf(_) => unreachable!("leaves have no buffer"),
        };
        self.stats.emptyings += 1;
        let router = SplitterSet::new(splitters.clone()).ok();
        disk.acquire(splitters.len())?;
        let b = self.b;
        let mut outs: Vec<Vec<u64>> = vec![Vec::new(); children.len()];
        let mut left = amount;
        while left > 0 {
            let data = match &mut self.node_mut(v).body {
                Body::Internal { buffer, .. } => buffer.pop_front(disk, left)?,
                Body::Leaf(_) => unreachable!(),
            };
            if data.is_empty() {
                break;
            }
            left -= data.len();
            let dest = match &router {
                Some(r) => linear_split(&data, r),
                None => data
                    .iter()
                    .map(|&e| splitters.partition_point(|&x| x <= e))
                    .collect(),
            };
            for (&e, &i) in data.iter().zip(&dest) {
                outs[i].push(e);
                if outs[i].len() == b {
                    self.inbox(children[i]).push_block(disk, &outs[i])?;
                    outs[i].clear();
                }
            }
        }
        for (i, out) in outs.iter().enumerate() {
            self.inbox(children[i]).push_block(disk, out)?;
        }
        disk.release(splitters.len())?;
        Ok(())
    }

    /// Shallowest node whose buffer is over `M/2`, else any leaf over `M`.
    fn find_work(&self) -> Option<Work> {
        let mut queue = VecDeque::from([self.root]);
        while let Some(id) = queue.pop_front() {
            match &self.node(id).body {
                Body::Leaf(chain) => {
                    if chain.len > self.m {
                        return Some(Work::SplitLeaf(id));
                    }
                }
                Body::Internal {
                    children, buffer, ..
                } => {
                    if buffer.len > self.m / 2 {
                        return Some(Work::Empty(id));
                    }
                    queue.extend(children.iter().copied());
                }
            }
        }
        None
    }

    fn settle(&mut self, disk: &mut Disk) -> Result<()> {
        while let Some(work) = self.find_work() {
            match work {
                Work::Empty(v) => self.empty_node(disk, v, self.m / 2)?,
                Work::SplitLeaf(l) => self.split_leaf(disk, l)?,
            }
        }
        Ok(())
    }

    // ---- splits ----

    fn split_leaf(&mut self, disk: &mut Disk, l: NodeId) -> Result<()> {
        self.stats.leaf_splits += 1;
        let chain = match &mut self.node_mut(l).body {
            Body::Leaf(chain) => std::mem::take(chain),
            Body::Internal { .. } => unreachable!("not a leaf"),
        };
        let n = chain.len;
        let run = chain.into_run(disk)?;
        let out = split_run(disk, run, n.div_ceil(2) + 1, SplitMode::Rank)?;
        let left = BlockChain::from_run(disk, out.left)?;
        let right = BlockChain::from_run(disk, out.right)?;
        self.node_mut(l).body = Body::Leaf(left);
        let parent = self.node(l).parent;
        let r = self.alloc(Node {
            parent,
            body: Body::Leaf(right),
        });
        self.attach_right(disk, l, r, out.pivot)
    }

    /// Places `b` right after `a` under `a`'s parent, separated by `key`.
    fn attach_right(&mut self, disk: &mut Disk, a: NodeId, b: NodeId, key: u64) -> Result<()> {
        match self.node(a).parent {
            None => {
                let root = self.alloc(Node {
                    parent: None,
                    body: Body::Internal {
                        splitters: vec![key],
                        children: vec![a, b],
                        buffer: BlockChain::default(),
                    },
                });
                self.set_parent(a, Some(root));
                self.set_parent(b, Some(root));
                self.root = root;
                Ok(())
            }
            Some(p) => {
                self.set_parent(b, Some(p));
                let over = match &mut self.node_mut(p).body {
                    Body::Internal {
                        splitters,
                        children,
                        ..
                    } => {
                        let idx = children.iter().position(|&c| c == a).expect("child");
                        children.insert(idx + 1, b);
                        splitters.insert(idx, key);
                        children.len() > self.fanout
                    }
                    Body::Leaf(_) => unreachable!("parent is internal"),
                };
                if over {
                    self.split_node(disk, p)?;
                }
                Ok(())
            }
        }
    }

    fn split_node(&mut self, disk: &mut Disk, v: NodeId) -> Result<()> {
        self.stats.node_splits += 1;
        let (right_splitters, right_children, key, mut buffer) = match &mut self.node_mut(v).body {
            Body::Internal {
                splitters,
                children,
                buffer,
            } => {
                let keep = children.len().div_ceil(2);
                let rc = children.split_off(keep);
                let rs = splitters.split_off(keep);
                let key = splitters.pop().expect("promoted splitter");
                (rs, rc, key, std::mem::take(buffer))
            }
            Body::Leaf(_) => unreachable!("not internal"),
        };
        // route the buffer by the promoted key, oldest first
        let b = self.b;
        let mut lo = BlockChain::default();
        let mut hi = BlockChain::default();
        let (mut lo_buf, mut hi_buf) = (Vec::new(), Vec::new());
        while buffer.len > 0 {
            for e in buffer.pop_front(disk, b)? {
                let (chain, out) = if e < key {
                    (&mut lo, &mut lo_buf)
                } else {
                    (&mut hi, &mut hi_buf)
                };
                out.push(e);
                if out.len() == b {
                    chain.push_block(disk, out)?;
                    out.clear();
                }
            }
        }
        lo.push_block(disk, &lo_buf)?;
        hi.push_block(disk, &hi_buf)?;
        if let Body::Internal { buffer, .. } = &mut self.node_mut(v).body {
            *buffer = lo;
        }
        let parent = self.node(v).parent;
        let w = self.alloc(Node {
            parent,
            body: Body::Internal {
                splitters: right_splitters,
                children: right_children.clone(),
                buffer: hi,
            },
        });
        for c in right_children {
            self.set_parent(c, Some(w));
        }
        self.attach_right(disk, v, w, key)
    }

    // ---- refill and rebalancing ----

    fn flush_leftmost(&mut self, disk: &mut Disk) -> Result<()> {
        let before = disk.stats().io_count;
        loop {
            let target = self.leftmost_path().into_iter().find(|&id| {
                matches!(&self.node(id).body, Body::Internal { buffer, .. } if buffer.len > 0)
            });
            let Some(v) = target else { break };
            let amount = match &self.node(v).body {
                Body::Internal { buffer, .. } => buffer.len.min(self.m / 2),
                Body::Leaf(_) => unreachable!(),
            };
            self.stats.forced_emptyings += 1;
            self.empty_node(disk, v, amount)?;
            self.settle(disk)?;
        }
        self.stats.forced_flush_ios += disk.stats().io_count - before;
        Ok(())
    }

    fn refill(&mut self, disk: &mut Disk) -> Result<()> {
        self.stats.refills += 1;
        self.flush_insertion(disk)?;
        self.flush_leftmost(disk)?;
        let leaf = *self.leftmost_path().last().expect("leaf");
        let mut data = match &mut self.node_mut(leaf).body {
            Body::Leaf(chain) => chain.read_all(disk)?,
            Body::Internal { .. } => unreachable!("path ends at a leaf"),
        };
        internal_sort(&mut data);
        let take = data.len().min(self.mini_cap);
        for &e in &data[..take] {
            self.mini.push(e);
        }
        let mut rest = BlockChain::default();
        rest.push_all(disk, &data[take..])?;
        if leaf == self.root || rest.len >= self.m / 2 {
            self.inbox(leaf).append(rest);
            return Ok(());
        }
        self.remove_leftmost_leaf(disk, leaf)?;
        let next = *self.leftmost_path().last().expect("leaf");
        self.inbox(next).append(rest);
        self.settle(disk)?;
        self.flush_leftmost(disk)
    }

    /// Drops the (emptied) leftmost leaf and repairs fan-outs up the path.
    fn remove_leftmost_leaf(&mut self, disk: &mut Disk, leaf: NodeId) -> Result<()> {
        let mut child = leaf;
        let mut parent = self.node(leaf).parent.expect("leaf below an internal root");
        self.release_node(child);
        loop {
            let now_empty = match &mut self.node_mut(parent).body {
                Body::Internal {
                    splitters,
                    children,
                    ..
                } => {
                    let idx = children.iter().position(|&c| c == child).expect("child");
                    children.remove(idx);
                    if !splitters.is_empty() {
                        splitters.remove(idx.min(splitters.len() - 1));
                    }
                    children.is_empty()
                }
                Body::Leaf(_) => unreachable!(),
            };
            if !now_empty {
                break;
            }
            child = parent;
            parent = self.node(child).parent.expect("root keeps a child");
            self.release_node(child);
        }
        self.fuse_up(disk, parent)?;
        self.collapse_root(disk)
    }

    fn fuse_up(&mut self, disk: &mut Disk, start: NodeId) -> Result<()> {
        let min_fan = self.fanout.div_ceil(2);
        let mut v = start;
        while let Some(q) = self.node(v).parent {
            if self.children(v).len() >= min_fan {
                break;
            }
            self.stats.fuses += 1;
            let siblings = self.children(q).to_vec();
            let idx = siblings.iter().position(|&c| c == v).expect("child");
            let (l, r, sep_at) = if idx + 1 < siblings.len() {
                (v, siblings[idx + 1], idx)
            } else {
                (siblings[idx - 1], v, idx - 1)
            };
            let sep = match &mut self.node_mut(q).body {
                Body::Internal {
                    splitters,
                    children,
                    ..
                } => {
                    children.remove(sep_at + 1);
                    splitters.remove(sep_at)
                }
                Body::Leaf(_) => unreachable!(),
            };
            let right = self.release_node(r);
            let Body::Internal {
                splitters: rs,
                children: rc,
                buffer: rb,
            } = right.body
            else {
                unreachable!("fused nodes are internal")
            };
            for &c in &rc {
                self.set_parent(c, Some(l));
            }
            let over = match &mut self.node_mut(l).body {
                Body::Internal {
                    splitters,
                    children,
                    buffer,
                } => {
                    splitters.push(sep);
                    splitters.extend(rs);
                    children.extend(rc);
                    buffer.append(rb);
                    children.len() > self.fanout
                }
                Body::Leaf(_) => unreachable!(),
            };
            if over {
                self.split_node(disk, l)?;
            }
            v = q;
        }
        Ok(())
    }

    fn collapse_root(&mut self, disk: &mut Disk) -> Result<()> {
        loop {
            let only = match &self.node(self.root).body {
                Body::Internal { children, .. } if children.len() == 1 => children[0],
                _ => return Ok(()),
            };
            let old = self.release_node(self.root);
            if let Body::Internal { buffer, .. } = old.body {
                if buffer.len > 0 {
                    self.inbox(only).append(buffer);
                }
            }
            self.set_parent(only, None);
            self.root = only;
            self.settle(disk)?;
        }
    }

    // ---- inspection ----

    /// Checks structure, sizes, key ranges and mini-queue dominance using
    /// block metadata only.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Verification(msg));
        if self.mini.len > self.mini_cap {
            return fail(format!(
                "mini-queue holds {} > {}",
                self.mini.len, self.mini_cap
            ));
        }
        if self.ins.len() >= self.b {
            return fail(format!("insertion buffer holds {}", self.ins.len()));
        }
        if self.node(self.root).parent.is_some() {
            return fail("root has a parent".into());
        }
        let mut leaf_depth = None;
        let mut total = self.mini.len + self.ins.len();
        let span = self.check_node(self.root, 0, &mut leaf_depth, &mut total)?;
        if total != self.len {
            return fail(format!("counted {total} elements, expected {}", self.len));
        }
        if let Some(top) = self.mini.max() {
            let below = span.is_some_and(|(lo, _)| lo < top) || self.ins.iter().any(|&e| e < top);
            if below {
                return fail(format!("element below mini-queue maximum {top}"));
            }
        }
        Ok(())
    }

    fn check_node(
        &self,
        id: NodeId,
        depth: usize,
        leaf_depth: &mut Option<usize>,
        total: &mut usize,
    ) -> Result<Option<(u64, u64)>> {
        let fail = |msg: String| Err(Error::Verification(msg));
        let is_root = id == self.root;
        match &self.node(id).body {
            Body::Leaf(chain) => {
                match *leaf_depth {
                    None => *leaf_depth = Some(depth),
                    Some(d) if d != depth => {
                        return fail(format!("leaf {id} at depth {depth}, others at {d}"))
                    }
                    _ => {}
                }
                if chain.len > self.m || (!is_root && chain.len < self.m / 2) {
                    return fail(format!("leaf {id} holds {} elements", chain.len));
                }
                *total += chain.len;
                Ok(chain.span())
            }
            Body::Internal {
                splitters,
                children,
                buffer,
            } => {
                let c = children.len();
                let min_fan = if is_root { 2 } else { self.fanout.div_ceil(2) };
                if c < min_fan || c > self.fanout {
                    return fail(format!("node {id} has {c} children"));
                }
                if splitters.len() + 1 != c || splitters.windows(2).any(|w| w[0] > w[1]) {
                    return fail(format!("node {id} splitters {splitters:?}"));
                }
                if buffer.len > self.m {
                    return fail(format!("node {id} buffer holds {}", buffer.len));
                }
                *total += buffer.len;
                let mut span = buffer.span();
                for (i, &ch) in children.iter().enumerate() {
                    if self.node(ch).parent != Some(id) {
                        return fail(format!("node {ch} has a stale parent link"));
                    }
                    let sub = self.check_node(ch, depth + 1, leaf_depth, total)?;
                    if let Some((lo, hi)) = sub {
                        if i > 0 && lo < splitters[i - 1] {
                            return fail(format!("child {ch} holds {lo} below splitter"));
                        }
                        if i < c - 1 && hi > splitters[i] {
                            return fail(format!("child {ch} holds {hi} above splitter"));
                        }
                        span = Some(match span {
                            None => (lo, hi),
                            Some((a, b)) => (a.min(lo), b.max(hi)),
                        });
                    }
                }
                Ok(span)
            }
        }
    }

    /// Text rendering of the tree, one node per line, children indented.
    pub fn dump(&self) -> String {
        let mut s = format!(
            "pq len={} mini={} ins={}\n",
            self.len,
            self.mini.len,
            self.ins.len()
        );
        self.dump_node(self.root, 1, &mut s);
        s
    }

    fn dump_node(&self, id: NodeId, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match &self.node(id).body {
            Body::Leaf(chain) => {
                let _ = writeln!(out, "{pad}leaf #{id} count={}", chain.len);
            }
            Body::Internal {
                splitters,
                children,
                buffer,
            } => {
                let _ = writeln!(
                    out,
                    "{pad}node #{id} splitters={splitters:?} buffer={}",
                    buffer.len
                );
                for &c in children {
                    self.dump_node(c, depth + 1, out);
                }
            }
        }
    }

    /// Height of the tree; a single leaf has height 0.
    pub fn height(&self) -> usize {
        self.leftmost_path().len() - 1
    }

    /// Elements stored in buffers along the leftmost root-to-leaf path.
    pub fn leftmost_buffered(&self) -> usize {
        self.leftmost_path()
            .into_iter()
            .map(|id| match &self.node(id).body {
                Body::Internal { buffer, .. } => buffer.len,
                Body::Leaf(_) => 0,
            })
            .sum()
    }
}

#[derive(Debug)]
pub struct PqSortOutcome {
    pub run: Run,
    pub stats: PqStats,
    /// Tree height once every element has been inserted.
    pub height: usize,
}

/// Sorts `input` (consumed) by inserting everything and deleting the
/// minimum until empty.
pub fn pq_sort(disk: &mut Disk, input: Run) -> Result<PqSortOutcome> {
    let mut pq = BufferTreePq::new(disk)?;
    let mut reader = RunReader::new(input, true);
    while let Some(block) = reader.next_block(disk)? {
        for e in block {
            pq.insert_resident(disk, e)?;
        }
    }
    let height = pq.height();
    let mut out = RunWriter::new();
    while !pq.is_empty() {
        if pq.mini_is_empty() {
            out.flush(disk)?;
        }
        let e = pq.delete_min_resident(disk)?;
        out.push(disk, e)?;
    }
    Ok(PqSortOutcome {
        run: out.finish(disk)?,
        stats: pq.stats(),
        height,
    })
}
