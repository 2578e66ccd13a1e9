//! Internal-memory primitives: word-key sorting, multi-way splitting over a
//! splitter set, and in-memory selection.

use crate::error::{Error, Result};

/// Strictly increasing split elements `x_1 < ... < x_s`.
///
/// Element `e` belongs to bucket `i` where `i` is the number of splitters
/// `<= e`, so an element equal to a splitter goes to the bucket on its right.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitterSet {
    splitters: Vec<u64>,
}

impl SplitterSet {
    pub fn new(splitters: Vec<u64>) -> Result<Self> {
        if splitters.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnorderedSplitters);
        }
        Ok(Self { splitters })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.splitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splitters.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.splitters
    }

    pub fn bucket_count(&self) -> usize {
        self.splitters.len() + 1
    }

    pub fn bucket_of(&self, e: u64) -> usize {
        self.splitters.partition_point(|&x| x <= e)
    }

    /// Inserts `x` keeping the set strictly increasing; returns the index
    /// it landed at. The bucket at that index is the one `x` splits.
    pub fn insert(&mut self, x: u64) -> Result<usize> {
        let at = self.splitters.partition_point(|&s| s < x);
        if self.splitters.get(at) == Some(&x) {
            return Err(Error::UnorderedSplitters);
        }
        self.splitters.insert(at, x);
        Ok(at)
    }
}

/// Which internal sort backs a "sort this memory load" step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SortKind {
    /// LSD radix sort on 64-bit keys.
    #[default]
    Radix,
    /// Comparison sort, for comparison-model baselines.
    Comparison,
}

pub fn sort_with(kind: SortKind, data: &mut [u64]) {
    match kind {
        SortKind::Radix => internal_sort(data),
        SortKind::Comparison => data.sort(),
    }
}

/// LSD radix sort, eight 8-bit passes. Passes whose digit is constant across
/// the input are skipped.
pub fn internal_sort(data: &mut [u64]) {
    if data.len() < 64 {
        data.sort_unstable();
        return;
    }
    let mut counts = [[0usize; 256]; 8];
    for &v in data.iter() {
        for (pass, c) in counts.iter_mut().enumerate() {
            c[((v >> (pass * 8)) & 0xff) as usize] += 1;
        }
    }
    let mut scratch = vec![0u64; data.len()];
    let mut src_is_data = true;
    for (pass, count) in counts.iter().enumerate() {
        if count.contains(&data.len()) {
            continue;
        }
        let mut offsets = [0usize; 256];
        let mut sum = 0;
        for (o, &c) in offsets.iter_mut().zip(count.iter()) {
            *o = sum;
            sum += c;
        }
        let shift = pass * 8;
        let (src, dst): (&[u64], &mut [u64]) = if src_is_data {
            (&*data, &mut scratch)
        } else {
            (&scratch, &mut *data)
        };
        for &v in src {
            let d = ((v >> shift) & 0xff) as usize;
            dst[offsets[d]] = v;
            offsets[d] += 1;
        }
        src_is_data = !src_is_data;
    }
    if !src_is_data {
        data.copy_from_slice(&scratch);
    }
}

/// Bucket index for every element, by the [`SplitterSet`] rule.
pub fn linear_split(elements: &[u64], splitters: &SplitterSet) -> Vec<usize> {
    linear_split_counted(elements, splitters).0
}

/// [`linear_split`] plus the number of elementary operations it performed
/// (table cells built, probes, and binary-search steps).
///
/// Dispatch goes through a jump table indexed by the high bits of
/// `e - x_1`, so for splitters spread over their range each element costs a
/// constant number of steps. Inside one table cell a binary search resolves
/// the remaining splitters.
pub fn linear_split_counted(elements: &[u64], splitters: &SplitterSet) -> (Vec<usize>, u64) {
    let xs = splitters.as_slice();
    let s = xs.len();
    if s == 0 {
        return (vec![0; elements.len()], elements.len() as u64);
    }
    let lo = xs[0];
    let hi = xs[s - 1];
    let bits = (usize::BITS - s.leading_zeros()) as usize + 1;
    let cells = 1usize << bits;
    let span = hi - lo;
    let span_bits = (u64::BITS - span.leading_zeros()) as usize;
    let shift = span_bits.saturating_sub(bits);
    // first[p]: number of splitters whose cell is < p
    let mut first = vec![0usize; cells + 1];
    for &x in xs {
        first[(((x - lo) >> shift) as usize) + 1] += 1;
    }
    for p in 0..cells {
        first[p + 1] += first[p];
    }
    let mut ops = (cells + s) as u64;

    let mut out = Vec::with_capacity(elements.len());
    for &e in elements {
        ops += 1;
        let bucket = if e < lo {
            0
        } else if e >= hi {
            s
        } else {
            let cell = ((e - lo) >> shift) as usize;
            let (a, b) = (first[cell], first[cell + 1]);
            let width = b - a;
            if width > 0 {
                ops += (usize::BITS - width.leading_zeros()) as u64;
            }
            a + xs[a..b].partition_point(|&x| x <= e)
        };
        out.push(bucket);
    }
    (out, ops)
}

/// The `k`-th smallest element (1-based, multiset rank).
pub fn select_kth(elements: &[u64], k: usize) -> Result<u64> {
    if k == 0 || k > elements.len() {
        return Err(Error::RankOutOfRange {
            k,
            len: elements.len(),
        });
    }
    let mut v = elements.to_vec();
    let (_, kth, _) = v.select_nth_unstable(k - 1);
    Ok(*kth)
}
