//! External distribution sort with sampled splitters.
//!
//! Each level samples candidates from sorted memory loads, selects `s`
//! equally spaced candidates as splitters and streams the set into `s + 1`
//! buckets, with `s = floor(sqrt(M/B)) - 1`. Buckets are handled from an
//! explicit stack in key order; a bucket that fits in memory is sorted and
//! appended to the output.

use crate::em_model::{Disk, Run, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::internal_algos::{internal_sort, linear_split, SplitterSet};
use crate::select::{
    load_all, sample_gap, select_many, select_with_sample, split_run, Sample, SplitMode,
};

/// Number of splitters per level for the disk's `M` and `B`.
pub fn splitter_count(disk: &Disk) -> usize {
    isqrt(disk.m() / disk.b()).saturating_sub(1)
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

#[derive(Debug, Clone)]
pub struct SplitterChoice {
    pub splitters: SplitterSet,
    /// Fewer than the requested number of distinct splitters were found.
    pub degenerate: bool,
    pub candidates: usize,
}

/// Picks up to `s` splitters from a sample of `input`. The input is kept.
pub fn compute_splitters(disk: &mut Disk, input: &Run, s: usize) -> Result<SplitterChoice> {
    if s == 0 || input.is_empty() {
        return Ok(SplitterChoice {
            splitters: SplitterSet::empty(),
            degenerate: false,
            candidates: 0,
        });
    }
    let b = disk.b();
    let step = (isqrt(disk.m() / b) / 4).max(1);
    let load_cap = disk.available().saturating_sub(2 * b);
    if load_cap < b {
        return Err(Error::Layout(format!(
            "sampling needs three free blocks, {} elements available",
            disk.available()
        )));
    }
    let gap = sample_gap(load_cap / step, s);

    let mut cand = RunWriter::new();
    let mut sample = RunWriter::new();
    let mut chunks = 0;
    let mut reader = RunReader::new(input.clone(), false);
    let mut load: Vec<u64> = Vec::with_capacity(load_cap);
    loop {
        let next = reader.peek_fill(disk)?;
        if next.is_none_or(|f| load.len() + f > load_cap) && !load.is_empty() {
            internal_sort(&mut load);
            for (j, idx) in (step - 1..load.len()).step_by(step).enumerate() {
                disk.acquire(1)?;
                cand.push(disk, load[idx])?;
                if (j + 1) % gap == 0 {
                    disk.acquire(1)?;
                    sample.push(disk, load[idx])?;
                }
            }
            disk.release(load.len())?;
            load.clear();
            chunks += 1;
        }
        match reader.next_block(disk)? {
            Some(block) => load.extend(block),
            None => break,
        }
    }
    let cand = cand.finish(disk)?;
    let sample = Sample {
        run: sample.finish(disk)?,
        gap,
        chunks,
    };
    let c = cand.len;
    if c == 0 {
        sample.run.free(disk)?;
        return Ok(SplitterChoice {
            splitters: SplitterSet::empty(),
            degenerate: true,
            candidates: 0,
        });
    }
    let ranks: Vec<usize> = (1..=s).map(|i| (i * c).div_ceil(s + 1).max(1)).collect();
    let mut work = 0;
    let mut values = if c <= disk.available() {
        sample.run.free(disk)?;
        select_many(disk, &cand, &ranks, &mut work)?
    } else {
        select_with_sample(disk, &cand, &ranks, sample, &mut work)?
    };
    cand.free(disk)?;
    values.sort_unstable();
    values.dedup();
    let degenerate = values.len() < s;
    Ok(SplitterChoice {
        splitters: SplitterSet::new(values)?,
        degenerate,
        candidates: c,
    })
}

/// Output of [`distribute`]: one run per bucket plus each bucket's key range.
#[derive(Debug, Default)]
pub struct DistBuckets {
    pub buckets: Vec<Run>,
    /// `(min, max)` of each non-empty bucket.
    pub ranges: Vec<Option<(u64, u64)>>,
}

/// `s/B + (s+1)B < M/2`: room for splitters and one buffer per bucket next
/// to a half-memory batch.
pub fn layout_fits(s: usize, m: usize, b: usize) -> bool {
    let used = (s as f64) / (b as f64) + ((s + 1) * b) as f64;
    used < (m as f64) / 2.0
}

/// Streams `input` (consumed) into one run per bucket.
pub fn distribute(disk: &mut Disk, input: Run, splitters: &SplitterSet) -> Result<DistBuckets> {
    let (m, b) = (disk.m(), disk.b());
    let s = splitters.len();
    if !layout_fits(s, m, b) {
        return Err(Error::Layout(format!(
            "{s} splitters do not fit: s/B + (s+1)B must stay below M/2 = {}",
            m / 2
        )));
    }
    let buckets = s + 1;
    let mut writers: Vec<RunWriter> = (0..buckets).map(|_| RunWriter::new()).collect();
    let mut ranges: Vec<Option<(u64, u64)>> = vec![None; buckets];
    let mut reader = RunReader::new(input, true);
    let mut batch: Vec<u64> = Vec::with_capacity(m / 2);
    loop {
        let next = reader.peek_fill(disk)?;
        if next.is_none_or(|f| batch.len() + f > m / 2) && !batch.is_empty() {
            let dest = linear_split(&batch, splitters);
            for (&e, &i) in batch.iter().zip(&dest) {
                ranges[i] = Some(match ranges[i] {
                    Some((lo, hi)) => (lo.min(e), hi.max(e)),
                    None => (e, e),
                });
                writers[i].push(disk, e)?;
            }
            batch.clear();
        }
        match reader.next_block(disk)? {
            Some(block) => batch.extend(block),
            None => break,
        }
    }
    let buckets = writers
        .into_iter()
        .map(|w| w.finish(disk))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistBuckets { buckets, ranges })
}

#[derive(Debug)]
pub struct DistSortOutcome {
    pub run: Run,
    /// Deepest level of splitting; 0 when the input fit in memory.
    pub depth: usize,
    /// Levels where sampling found fewer distinct splitters than asked for.
    pub degenerate_levels: usize,
    /// Splits done by rank because sampled splitters made no progress.
    pub forced_splits: usize,
}

struct Pending {
    run: Run,
    level: usize,
    range: Option<(u64, u64)>,
}

/// Sorts `input` (consumed) by recursive distribution.
pub fn external_distribution_sort(disk: &mut Disk, input: Run) -> Result<DistSortOutcome> {
    let (m, b) = (disk.m(), disk.b());
    let s = splitter_count(disk);
    if s == 0 {
        return Err(Error::InvalidConfig(format!(
            "distribution needs M/B >= 4, got M = {m}, B = {b}"
        )));
    }
    let mut out = RunWriter::new();
    let mut stats = DistSortOutcome {
        run: Run::new(),
        depth: 0,
        degenerate_levels: 0,
        forced_splits: 0,
    };
    let mut stack = vec![Pending {
        run: input,
        level: 0,
        range: None,
    }];
    while let Some(Pending { run, level, range }) = stack.pop() {
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
        stats.depth = stats.depth.max(level + 1);
        let choice = compute_splitters(disk, &run, s)?;
        stats.degenerate_levels += choice.degenerate as usize;
        let parts = distribute(disk, run, &choice.splitters)?;
        let stuck = parts
            .buckets
            .iter()
            .zip(&parts.ranges)
            .any(|(r, range)| r.len == n && matches!(range, Some((lo, hi)) if lo < hi));
        if stuck {
            let whole = parts
                .buckets
                .into_iter()
                .find(|r| r.len == n)
                .expect("stuck bucket");
            stats.forced_splits += 1;
            let (left, right) = forced_split(disk, whole)?;
            stack.push(Pending {
                run: right,
                level: level + 1,
                range: None,
            });
            stack.push(Pending {
                run: left,
                level: level + 1,
                range: None,
            });
            continue;
        }
        for (run, range) in parts.buckets.into_iter().zip(parts.ranges).rev() {
            if level == 0 && n >= 2 * m && !run.is_empty() && run.len <= b {
                log::warn!("bucket of {} elements at or below one block", run.len);
            }
            stack.push(Pending {
                run,
                level: level + 1,
                range,
            });
        }
    }
    stats.run = out.finish(disk)?;
    Ok(stats)
}

/// Splits a set with at least two distinct keys into two non-empty parts,
/// all of the left below all of the right.
pub(crate) fn forced_split(disk: &mut Disk, run: Run) -> Result<(Run, Run)> {
    let n = run.len;
    let half = split_run(disk, run, n / 2 + 1, SplitMode::Value)?;
    if !half.left.is_empty() {
        return Ok((half.left, half.right));
    }
    // the median is the minimum; cut after all of its copies
    let rest = half.right;
    let again = split_run(disk, rest, half.pivot_copies + 1, SplitMode::Value)?;
    Ok((again.left, again.right))
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

    fn shuffled(n: u64, seed: u64) -> Vec<u64> {
        let mut v: Vec<u64> = (0..n).collect();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        v
    }

    #[test]
    fn layout_example() {
        assert!(layout_fits(3, 256, 16));
        assert!(!layout_fits(7, 256, 16));
    }

    #[test]
    fn distribute_small_example() {
        let mut d = disk(64, 4);
        let run = Run::stage(&mut d, &[5, 1, 9, 7]).unwrap();
        let s = SplitterSet::new(vec![4, 8]).unwrap();
        let out = distribute(&mut d, run, &s).unwrap();
        let got: Vec<Vec<u64>> = out
            .buckets
            .iter()
            .map(|r| r.peek_all(&mut d).unwrap())
            .collect();
        assert_eq!(got, vec![vec![1], vec![5, 7], vec![9]]);
        assert_eq!(out.ranges[1], Some((5, 7)));
    }

    #[test]
    fn sampled_splitters_balance_buckets() {
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &shuffled(4096, 1)).unwrap();
        let choice = compute_splitters(&mut d, &run, 3).unwrap();
        assert_eq!(choice.splitters.len(), 3);
        assert!(!choice.degenerate);
        assert!(choice.candidates <= 4 * 4096 / 4);
        let before = d.stats().io_count;
        let out = distribute(&mut d, run, &choice.splitters).unwrap();
        assert!(d.stats().io_count - before <= 2 * 256 + 4);
        for r in &out.buckets {
            assert!(r.len <= 2 * 4096 / 4, "bucket {}", r.len);
        }
        assert!(d.stats().peak_resident <= 256);
    }

    #[test]
    fn no_splitters_requested() {
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &[1, 2, 3]).unwrap();
        assert!(compute_splitters(&mut d, &run, 0)
            .unwrap()
            .splitters
            .is_empty());
    }

    #[test]
    fn all_equal_is_degenerate() {
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &vec![9; 1000]).unwrap();
        let c = compute_splitters(&mut d, &run, 3).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.splitters.as_slice(), &[9]);
    }

    #[test]
    fn sorts_4096_within_depth_and_io() {
        let mut d = disk(256, 16);
        let data = shuffled(4096, 2);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = external_distribution_sort(&mut d, run).unwrap();
        assert_eq!(
            out.run.peek_all(&mut d).unwrap(),
            (0..4096).collect::<Vec<_>>()
        );
        // ceil(log_4(4096/256)) + 1
        assert!(out.depth <= 3, "depth {}", out.depth);
        let io = d.stats().io_count;
        assert!(io <= 6 * 256 * (out.depth as u64 + 1), "io {io}");
        assert!(d.stats().peak_resident <= 256);
        assert_eq!(d.resident(), 0);
        assert_eq!(d.allocated_blocks(), out.run.blocks.len());
    }

    #[test]
    fn double_memory_splits_once() {
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &shuffled(512, 3)).unwrap();
        let out = external_distribution_sort(&mut d, run).unwrap();
        assert_eq!(out.depth, 1);
        assert_eq!(
            out.run.peek_all(&mut d).unwrap(),
            (0..512).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sorted_input_round_trips() {
        let mut d = disk(256, 16);
        let data: Vec<u64> = (0..3000).collect();
        let run = Run::stage(&mut d, &data).unwrap();
        let out = external_distribution_sort(&mut d, run).unwrap();
        assert_eq!(out.run.peek_all(&mut d).unwrap(), data);
    }

    #[test]
    fn two_values_force_progress() {
        let mut d = disk(64, 4);
        let mut data = vec![1u64; 900];
        data.extend(vec![2u64; 3]);
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let run = Run::stage(&mut d, &data).unwrap();
        let out = external_distribution_sort(&mut d, run).unwrap();
        let mut expect = data.clone();
        expect.sort();
        assert_eq!(out.run.peek_all(&mut d).unwrap(), expect);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn sorts_like_oracle(data in prop::collection::vec(0u64..500, 0..4000)) {
            let mut d = disk(64, 4);
            let run = Run::stage(&mut d, &data).unwrap();
            let out = external_distribution_sort(&mut d, run).unwrap();
            let mut expect = data.clone();
            expect.sort();
            prop_assert_eq!(out.run.peek_all(&mut d).unwrap(), expect);
            prop_assert!(d.stats().peak_resident <= 64);
            prop_assert_eq!(d.resident(), 0);
        }

        #[test]
        fn bucket_rule_holds(data in prop::collection::vec(any::<u64>(), 0..500), mut xs in prop::collection::vec(any::<u64>(), 0..3)) {
            xs.sort();
            xs.dedup();
            let s = SplitterSet::new(xs.clone()).unwrap();
            let mut d = disk(64, 4);
            let run = Run::stage(&mut d, &data).unwrap();
            let out = distribute(&mut d, run, &s).unwrap();
            let mut all = Vec::new();
            for (i, r) in out.buckets.iter().enumerate() {
                for e in r.peek_all(&mut d).unwrap() {
                    prop_assert_eq!(xs.iter().filter(|&&x| x <= e).count(), i);
                    all.push(e);
                }
            }
            all.sort();
            let mut expect = data.clone();
            expect.sort();
            prop_assert_eq!(all, expect);
        }
    }
}
