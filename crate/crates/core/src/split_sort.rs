//! Distribution sort with online splitter discovery.
//!
//! A level starts with a single bucket. Elements are streamed into buckets
//! in half-memory batches; whenever a bucket reaches `ceil(2n/s)` elements
//! the stream pauses, all bucket buffers are flushed, and that bucket is cut
//! at its median into two buckets with a new splitter between them.

use std::collections::VecDeque;

use crate::distribution_sort::{forced_split, layout_fits};
use crate::em_model::{Disk, Run, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::internal_algos::{internal_sort, linear_split, SplitterSet};
use crate::select::{load_all, split_run, SplitMode};

/// `max(1, floor(sqrt(M/B)) - 1)`.
pub fn split_fanout(m: usize, b: usize) -> usize {
    let q = m / b;
    let mut r = (q as f64).sqrt() as usize;
    while r * r > q {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= q {
        r += 1;
    }
    r.saturating_sub(1).max(1)
}

/// Bucket-splitting state of one level.
#[derive(Debug)]
pub struct OnlineSplitState {
    pub splitters: SplitterSet,
    pub counts: Vec<usize>,
    /// `(min, max)` bounds per bucket; exact when both ends are equal.
    pub ranges: Vec<Option<(u64, u64)>>,
    /// Buckets holding a single repeated key; not split while that holds.
    pub exempt: Vec<bool>,
    pub threshold: usize,
    pub s: usize,
    writers: Vec<RunWriter>,
}

impl OnlineSplitState {
    pub fn new(n: usize, s: usize) -> Self {
        Self {
            splitters: SplitterSet::empty(),
            counts: vec![0],
            ranges: vec![None],
            exempt: vec![false],
            threshold: (2 * n).div_ceil(s.max(1)),
            s,
            writers: vec![RunWriter::new()],
        }
    }

    fn wants_split(&self, i: usize) -> bool {
        self.counts[i] >= self.threshold && !self.exempt[i] && self.splitters.len() < self.s
    }

    fn add(&mut self, disk: &mut Disk, i: usize, e: u64) -> Result<()> {
        self.counts[i] += 1;
        let (lo, hi) = match self.ranges[i] {
            Some((lo, hi)) => (lo.min(e), hi.max(e)),
            None => (e, e),
        };
        self.ranges[i] = Some((lo, hi));
        if lo != hi {
            // a later key reached a bucket exempted as single-valued
            self.exempt[i] = false;
        }
        self.writers[i].push(disk, e)
    }
}

/// Counters for one [`online_split_pass`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SplitPassStats {
    pub splits: usize,
    /// Buckets found to hold one repeated key when they hit the threshold.
    pub exempted: usize,
    /// Threshold hits refused because all `s` splitters were in use.
    pub oversize: usize,
    /// I/Os spent inside pauses (flushes and bucket splits).
    pub split_ios: u64,
    /// Element visits charged to median finding.
    pub select_work: u64,
}

#[derive(Debug)]
pub struct SplitPass {
    pub buckets: Vec<Run>,
    pub ranges: Vec<Option<(u64, u64)>>,
    pub exempt: Vec<bool>,
    pub splitters: SplitterSet,
    pub stats: SplitPassStats,
}

/// One level of online splitting over `input` (consumed).
pub fn online_split_pass(disk: &mut Disk, input: Run) -> Result<SplitPass> {
    let (m, b) = (disk.m(), disk.b());
    let s = split_fanout(m, b);
    if !layout_fits(s, m, b) {
        return Err(Error::Layout(format!(
            "{s} splitters and {} bucket buffers do not fit next to M/2 = {}",
            s + 1,
            m / 2
        )));
    }
    let n = input.len;
    let mut st = OnlineSplitState::new(n, s);
    let mut stats = SplitPassStats::default();
    let mut sources: VecDeque<RunReader> = VecDeque::from([RunReader::new(input, true)]);
    let mut batch: Vec<u64> = Vec::with_capacity(m / 2);
    loop {
        let next = match sources.front() {
            Some(r) => r.peek_fill(disk)?,
            None => None,
        };
        if next.is_none_or(|f| batch.len() + f > m / 2) && !batch.is_empty() {
            dispatch(disk, &mut st, &mut batch, &mut sources, &mut stats)?;
        }
        let Some(front) = sources.front_mut() else {
            break;
        };
        match front.next_block(disk)? {
            Some(block) => batch.extend(block),
            None => {
                sources.pop_front();
            }
        }
    }
    disk.release(st.splitters.len())?;
    let buckets = std::mem::take(&mut st.writers)
        .into_iter()
        .map(|w| w.finish(disk))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitPass {
        buckets,
        ranges: st.ranges,
        exempt: st.exempt,
        splitters: st.splitters,
        stats,
    })
}

fn dispatch(
    disk: &mut Disk,
    st: &mut OnlineSplitState,
    batch: &mut Vec<u64>,
    sources: &mut VecDeque<RunReader>,
    stats: &mut SplitPassStats,
) -> Result<()> {
    let b = disk.b();
    let mut pos = 0;
    'outer: while pos < batch.len() {
        let dest = linear_split(&batch[pos..], &st.splitters);
        for (j, &i) in dest.iter().enumerate() {
            st.add(disk, i, batch[pos + j])?;
            if st.counts[i] >= st.threshold && !st.exempt[i] {
                if !st.wants_split(i) {
                    stats.oversize += (st.counts[i] == st.threshold) as usize;
                    continue;
                }
                pos += j + 1;
                let io_before = disk.stats().io_count;
                for w in st.writers.iter_mut() {
                    w.flush(disk)?;
                }
                if disk.available() < 7 * b && pos < batch.len() {
                    // not enough room to split next to the rest of the batch
                    let mut spill = RunWriter::new();
                    spill.extend(disk, &batch[pos..])?;
                    sources.push_front(RunReader::new(spill.finish(disk)?, true));
                    batch.truncate(pos);
                }
                split_bucket(disk, st, i, stats)?;
                stats.split_ios += disk.stats().io_count - io_before;
                continue 'outer;
            }
        }
        break;
    }
    batch.clear();
    Ok(())
}

/// Cuts bucket `i` at its median, inserting one splitter. A bucket whose
/// median is also its minimum is cut after the last copy of the minimum; a
/// bucket of one repeated key is marked exempt instead.
pub fn split_bucket(
    disk: &mut Disk,
    st: &mut OnlineSplitState,
    i: usize,
    stats: &mut SplitPassStats,
) -> Result<()> {
    let run = std::mem::take(&mut st.writers[i]).finish(disk)?;
    let count = run.len;
    let (lo, hi) = st.ranges[i].expect("bucket at threshold is non-empty");
    let half = split_run(disk, run, count / 2 + 1, SplitMode::Value)?;
    stats.select_work += half.work;
    let (left, right, pivot) = if !half.left.is_empty() {
        (half.left, half.right, half.pivot)
    } else if half.pivot_copies == count {
        st.writers[i] = RunWriter::append_to(half.right);
        st.ranges[i] = Some((half.pivot, half.pivot));
        st.exempt[i] = true;
        stats.exempted += 1;
        return Ok(());
    } else {
        let again = split_run(disk, half.right, half.pivot_copies + 1, SplitMode::Value)?;
        stats.select_work += again.work;
        (again.left, again.right, again.pivot)
    };
    disk.acquire(1)?;
    let at = st.splitters.insert(pivot)?;
    debug_assert_eq!(at, i);
    let (lc, rc) = (left.len, right.len);
    st.writers[i] = RunWriter::append_to(left);
    st.writers.insert(i + 1, RunWriter::append_to(right));
    st.counts[i] = lc;
    st.counts.insert(i + 1, rc);
    st.ranges[i] = Some((lo, pivot - 1));
    st.ranges.insert(i + 1, Some((pivot, hi)));
    st.exempt.insert(i + 1, false);
    stats.splits += 1;
    Ok(())
}

#[derive(Debug, Default)]
pub struct SplitSortOutcome {
    pub run: Run,
    pub depth: usize,
    pub splits: usize,
    pub forced_splits: usize,
    pub exempted: usize,
    pub oversize: usize,
    pub split_ios: u64,
    pub select_work: u64,
}

/// Sorts `input` (consumed) level by level with online splitting.
pub fn split_sort(disk: &mut Disk, input: Run) -> Result<SplitSortOutcome> {
    let m = disk.m();
    let mut out = RunWriter::new();
    let mut res = SplitSortOutcome::default();
    // (set, level, exact key range when known to be constant)
    type Task = (Run, usize, Option<(u64, u64)>);
    let mut stack: Vec<Task> = vec![(input, 0, None)];
    while let Some((run, level, range)) = stack.pop() {
        let n = run.len;
        if n == 0 {
            run.free(disk)?;
            continue;
        }
        if matches!(range, Some((lo, hi)) if lo == hi) {
            out.append_run(disk, run)?;
            continue;
        }
        if n <= m {
            if out.buffered() + n > m {
                out.flush(disk)?;
            }
            let mut all = load_all(disk, &run, true)?;
            internal_sort(&mut all);
            out.extend(disk, &all)?;
            continue;
        }
        res.depth = res.depth.max(level + 1);
        let pass = online_split_pass(disk, run)?;
        res.splits += pass.stats.splits;
        res.exempted += pass.stats.exempted;
        res.oversize += pass.stats.oversize;
        res.split_ios += pass.stats.split_ios;
        res.select_work += pass.stats.select_work;
        let stuck = pass.buckets.len() == 1 && !pass.exempt[0];
        if stuck {
            let whole = pass.buckets.into_iter().next().expect("one bucket");
            match pass.ranges[0] {
                Some((lo, hi)) if lo == hi => out.append_run(disk, whole)?,
                _ => {
                    res.forced_splits += 1;
                    let (left, right) = forced_split(disk, whole)?;
                    stack.push((right, level + 1, None));
                    stack.push((left, level + 1, None));
                }
            }
            continue;
        }
        for ((run, range), exempt) in pass
            .buckets
            .into_iter()
            .zip(pass.ranges)
            .zip(pass.exempt)
            .rev()
        {
            let range = if exempt {
                range
            } else {
                range.filter(|(lo, hi)| lo == hi)
            };
            stack.push((run, level + 1, range));
        }
    }
    res.run = out.finish(disk)?;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_model::DiskConfig;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(m: usize, b: usize) -> Disk {
        Disk::new(DiskConfig::new(m, b).unwrap()).unwrap()
    }

    fn bucket_contents(d: &mut Disk, p: &SplitPass) -> Vec<Vec<u64>> {
        p.buckets.iter().map(|r| r.peek_all(d).unwrap()).collect()
    }

    #[test]
    fn fanout_values() {
        assert_eq!(split_fanout(256, 16), 3);
        assert_eq!(split_fanout(1 << 10, 1 << 5), 4);
        assert_eq!(split_fanout(64, 16), 1);
        assert_eq!(split_fanout(32, 16), 1);
    }

    #[test]
    fn bucket_law_on_shuffled_4096() {
        let mut data: Vec<u64> = (0..4096).collect();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let p = online_split_pass(&mut d, run).unwrap();
        assert!(p.buckets.len() <= 4);
        assert!(p.buckets.len() > 1);
        for r in &p.buckets {
            assert!((1365..=2730).contains(&r.len), "bucket {}", r.len);
        }
        let xs = p.splitters.as_slice().to_vec();
        for (i, b) in bucket_contents(&mut d, &p).into_iter().enumerate() {
            for e in b {
                assert_eq!(xs.iter().filter(|&&x| x <= e).count(), i);
            }
        }
        assert!(d.stats().peak_resident <= 256);
    }

    #[test]
    fn sorted_input_keeps_bucket_law() {
        let data: Vec<u64> = (0..4096).collect();
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let p = online_split_pass(&mut d, run).unwrap();
        for r in &p.buckets {
            assert!((1365..=2730).contains(&r.len), "bucket {}", r.len);
        }
    }

    #[test]
    fn s_of_one_never_splits() {
        let data: Vec<u64> = (0..256).rev().collect();
        let mut d = disk(128, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let p = online_split_pass(&mut d, run).unwrap();
        assert_eq!(p.buckets.len(), 1);
        let mut d = disk(128, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_sort(&mut d, run).unwrap();
        assert_eq!(
            out.run.peek_all(&mut d).unwrap(),
            (0..256).collect::<Vec<_>>()
        );
        assert!(out.forced_splits >= 1);
    }

    #[test]
    fn split_of_2730_distinct() {
        let mut data: Vec<u64> = (0..2730).collect();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let mut d = disk(256, 16);
        let mut st = OnlineSplitState::new(4096, 3);
        for &e in &data {
            d.acquire(1).unwrap();
            st.add(&mut d, 0, e).unwrap();
        }
        let mut stats = SplitPassStats::default();
        split_bucket(&mut d, &mut st, 0, &mut stats).unwrap();
        assert_eq!(st.counts, vec![1365, 1365]);
        assert_eq!(st.splitters.as_slice(), &[1365]);
    }

    #[test]
    fn one_value_never_splits() {
        let data = vec![5u64; 3000];
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_sort(&mut d, run).unwrap();
        assert_eq!(out.splits, 0);
        assert_eq!(out.run.peek_all(&mut d).unwrap(), data);
    }

    #[test]
    fn exemption_ends_when_other_keys_arrive() {
        // the first threshold-many keys are equal, the rest are not
        let mut data = vec![7u64; 2800];
        data.extend((0..1296u64).map(|i| (i * 37) % 500));
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let pass = online_split_pass(&mut d, run).unwrap();
        for (i, r) in pass.ranges.iter().enumerate() {
            if pass.exempt[i] {
                assert!(matches!(r, Some((lo, hi)) if lo == hi));
            }
        }
        assert!(pass.buckets.len() > 1);

        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_sort(&mut d, run).unwrap();
        let mut want = data.clone();
        want.sort();
        assert_eq!(out.run.peek_all(&mut d).unwrap(), want);
    }

    #[test]
    fn sorts_2_16() {
        let mut data: Vec<u64> = (0..1 << 16)
            .map(|i: u64| i.wrapping_mul(0x2545_F491_4F6C_DD1D))
            .collect();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let mut d = disk(1 << 10, 1 << 5);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_sort(&mut d, run).unwrap();
        data.sort();
        assert_eq!(out.run.peek_all(&mut d).unwrap(), data);
        assert!(d.stats().peak_resident <= 1 << 10);
        assert_eq!(d.resident(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn sorts_like_oracle(data in prop::collection::vec(0u64..300, 0..4000), tiny in any::<bool>()) {
            let (m, b) = if tiny { (40, 4) } else { (64, 4) };
            let mut d = disk(m, b);
            let run = Run::stage(&mut d, &data).unwrap();
            let out = split_sort(&mut d, run).unwrap();
            let mut expect = data.clone();
            expect.sort();
            prop_assert_eq!(out.run.peek_all(&mut d).unwrap(), expect);
            prop_assert!(d.stats().peak_resident <= m);
            prop_assert_eq!(d.resident(), 0);
        }

        #[test]
        fn pass_respects_bucket_rule(data in prop::collection::vec(any::<u64>(), 200..3000)) {
            let mut d = disk(64, 4);
            let n = data.len();
            let run = Run::stage(&mut d, &data).unwrap();
            let p = online_split_pass(&mut d, run).unwrap();
            let xs = p.splitters.as_slice().to_vec();
            prop_assert!(xs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(xs.len() <= 3);
            let t = (2 * n).div_ceil(3);
            for (i, b) in bucket_contents(&mut d, &p).into_iter().enumerate() {
                prop_assert!(b.len() < t || p.exempt[i]);
                for e in b {
                    prop_assert_eq!(xs.iter().filter(|&&x| x <= e).count(), i);
                }
            }
        }
    }
}
