//! Deterministic external selection in a linear number of I/Os.
//!
//! Selection works by bracketing. A first pass reads the run in memory-sized
//! chunks, sorts each chunk and keeps every `g`-th element as a sample. If
//! the run was cut into `C` chunks, the sample element of sample rank `j`
//! has between `j*g` and `(j+C)*g` elements at or below it, so sample ranks
//! `floor(r/g) - C` and `ceil(r/g)` bracket the element of rank `r`. A
//! second pass counts what falls below, on, and above the bracket ends and
//! keeps only the strictly-inside elements, of which there are fewer than
//! `(2C+1)*g`. Sample and inside sets are handled recursively.

use crate::em_model::{Disk, Run, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::internal_algos::internal_sort;

/// How [`split_run`] treats copies of the pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Left gets every element strictly below the pivot; the right side gets
    /// the pivot and everything above it.
    Value,
    /// Left gets exactly `k - 1` elements; copies of the pivot may land on
    /// both sides.
    Rank,
}

#[derive(Debug)]
pub struct SplitOutcome {
    pub left: Run,
    pub right: Run,
    /// The element of rank `k`.
    pub pivot: u64,
    /// Number of elements equal to the pivot in the whole run.
    pub pivot_copies: usize,
    /// Element visits spent on sampling, bracketing and partitioning.
    pub work: u64,
}

/// Element of rank `k` (1-based) of a run that stays on disk.
pub fn external_select(disk: &mut Disk, run: &Run, k: usize) -> Result<u64> {
    let mut work = 0;
    Ok(select_many(disk, run, &[k], &mut work)?[0])
}

/// Several ranks at once, sharing the sampling and bracketing passes.
/// Returns the selected elements in the order of `ranks`.
pub fn external_select_many(disk: &mut Disk, run: &Run, ranks: &[usize]) -> Result<Vec<u64>> {
    let mut work = 0;
    select_many(disk, run, ranks, &mut work)
}

pub(crate) fn select_many(
    disk: &mut Disk,
    run: &Run,
    ranks: &[usize],
    work: &mut u64,
) -> Result<Vec<u64>> {
    let n = run.len;
    if let Some(&k) = ranks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::RankOutOfRange { k, len: n });
    }
    if ranks.is_empty() {
        return Ok(Vec::new());
    }
    if n <= disk.available() {
        let mut all = load_all(disk, run, false)?;
        *work += n as u64;
        internal_sort(&mut all);
        let out = ranks.iter().map(|&k| all[k - 1]).collect();
        disk.release(n)?;
        return Ok(out);
    }
    let sample = sample_pass(disk, run, ranks.len(), work)?;
    select_with_sample(disk, run, ranks, sample, work)
}

/// Sample of a run: every `gap`-th element of each of `chunks` sorted chunks.
#[derive(Debug)]
pub(crate) struct Sample {
    pub run: Run,
    pub gap: usize,
    pub chunks: usize,
}

impl Sample {
    /// Sample ranks bracketing run rank `r` (each `None` means unbounded).
    fn bracket(&self, r: usize) -> (Option<usize>, Option<usize>) {
        let lo = (r / self.gap).checked_sub(self.chunks).filter(|&j| j >= 1);
        let hi = Some(r.div_ceil(self.gap)).filter(|&j| j <= self.run.len);
        (lo, hi)
    }
}

/// Sample gap for chunks of `chunk` elements serving `ranks` ranks.
pub(crate) fn sample_gap(chunk: usize, ranks: usize) -> usize {
    let target = chunk / (2 * ranks.max(1));
    ((target as f64).sqrt() as usize).max(2)
}

fn sample_pass(disk: &mut Disk, run: &Run, ranks: usize, work: &mut u64) -> Result<Sample> {
    let b = disk.b();
    let limit = disk.available().saturating_sub(b);
    if limit < b {
        return Err(Error::Layout(format!(
            "external selection needs two free blocks, {} elements available",
            disk.available()
        )));
    }
    let gap = sample_gap(limit, ranks);
    let mut writer = RunWriter::new();
    let mut reader = RunReader::new(run.clone(), false);
    let mut chunk: Vec<u64> = Vec::with_capacity(limit);
    let mut chunks = 0;
    loop {
        let next = reader.peek_fill(disk)?;
        let flush = match next {
            Some(fill) => chunk.len() + fill > limit,
            None => true,
        };
        if flush && !chunk.is_empty() {
            internal_sort(&mut chunk);
            *work += chunk.len() as u64;
            for idx in (gap - 1..chunk.len()).step_by(gap) {
                disk.acquire(1)?;
                writer.push(disk, chunk[idx])?;
            }
            disk.release(chunk.len())?;
            chunk.clear();
            chunks += 1;
        }
        match reader.next_block(disk)? {
            Some(block) => chunk.extend(block),
            None => break,
        }
    }
    Ok(Sample {
        run: writer.finish(disk)?,
        gap,
        chunks,
    })
}

/// Values at the bracket sample ranks for each `r`.
fn bracket_values(
    disk: &mut Disk,
    sample: &Sample,
    ranks: &[usize],
    work: &mut u64,
) -> Result<Vec<(Option<u64>, Option<u64>)>> {
    let brackets: Vec<_> = ranks.iter().map(|&r| sample.bracket(r)).collect();
    let mut wanted: Vec<usize> = brackets
        .iter()
        .flat_map(|&(l, h)| [l, h])
        .flatten()
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let values = select_many(disk, &sample.run, &wanted, work)?;
    let lookup = |j: Option<usize>| j.map(|j| values[wanted.binary_search(&j).expect("rank")]);
    Ok(brackets
        .into_iter()
        .map(|(l, h)| (lookup(l), lookup(h)))
        .collect())
}

#[derive(Debug)]
struct Window {
    lo: Option<u64>,
    hi: Option<u64>,
    /// (position in caller's rank list, rank)
    ranks: Vec<(usize, usize)>,
}

#[derive(Debug, Default, Clone, Copy)]
struct WindowCounts {
    below: usize,
    at_lo: usize,
    inside: usize,
    at_hi: usize,
}

enum Place {
    Below,
    AtLo,
    Inside,
    AtHi,
    Above,
}

fn place(e: u64, lo: Option<u64>, hi: Option<u64>) -> Place {
    match lo {
        Some(l) if e < l => return Place::Below,
        Some(l) if e == l => return Place::AtLo,
        _ => {}
    }
    match hi {
        Some(h) if e > h => Place::Above,
        Some(h) if e == h => Place::AtHi,
        _ => Place::Inside,
    }
}

fn overlaps(cur_hi: Option<u64>, next_lo: Option<u64>) -> bool {
    match (cur_hi, next_lo) {
        (Some(h), Some(l)) => l <= h,
        _ => true,
    }
}

/// Selection once a sample of `run` exists. `sample` is consumed.
pub(crate) fn select_with_sample(
    disk: &mut Disk,
    run: &Run,
    ranks: &[usize],
    sample: Sample,
    work: &mut u64,
) -> Result<Vec<u64>> {
    let n = run.len;
    let mut order: Vec<(usize, usize)> = ranks.iter().copied().enumerate().collect();
    order.sort_by_key(|&(_, r)| r);
    let sorted_ranks: Vec<usize> = order.iter().map(|&(_, r)| r).collect();
    let values = bracket_values(disk, &sample, &sorted_ranks, work)?;
    sample.run.free(disk)?;

    let mut windows: Vec<Window> = Vec::new();
    for (&(pos, r), (lo, hi)) in order.iter().zip(values) {
        match windows.last_mut() {
            Some(w) if overlaps(w.hi, lo) => {
                w.hi = match (w.hi, hi) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
                w.ranks.push((pos, r));
            }
            _ => windows.push(Window {
                lo,
                hi,
                ranks: vec![(pos, r)],
            }),
        }
    }

    let b = disk.b();
    let mut out = vec![0u64; ranks.len()];
    let per_pass = (disk.available() / b).saturating_sub(1).max(1);
    for group in windows.chunks(per_pass) {
        let mut counts = vec![WindowCounts::default(); group.len()];
        let mut inside: Vec<RunWriter> = group.iter().map(|_| RunWriter::new()).collect();
        let mut reader = RunReader::new(run.clone(), false);
        while let Some(block) = reader.next_block(disk)? {
            *work += (block.len() * group.len()) as u64;
            for &e in &block {
                for (w, win) in group.iter().enumerate() {
                    let c = &mut counts[w];
                    match place(e, win.lo, win.hi) {
                        Place::Below => c.below += 1,
                        Place::AtLo => c.at_lo += 1,
                        Place::AtHi => c.at_hi += 1,
                        Place::Above => {}
                        Place::Inside => {
                            c.inside += 1;
                            disk.acquire(1)?;
                            inside[w].push(disk, e)?;
                        }
                    }
                }
            }
            disk.release(block.len())?;
        }
        for ((win, c), writer) in group.iter().zip(counts).zip(inside) {
            let mid = writer.finish(disk)?;
            let mut deferred = Vec::new();
            for &(pos, r) in &win.ranks {
                if r <= c.below {
                    return Err(Error::Verification(format!(
                        "selection bracket misses rank {r} ({} below)",
                        c.below
                    )));
                }
                let r = r - c.below;
                if r <= c.at_lo {
                    out[pos] = win.lo.expect("at_lo > 0 implies a lower end");
                } else if r - c.at_lo <= c.inside {
                    deferred.push((pos, r - c.at_lo));
                } else if r - c.at_lo - c.inside <= c.at_hi {
                    out[pos] = win.hi.expect("at_hi > 0 implies an upper end");
                } else {
                    return Err(Error::Verification(format!(
                        "selection bracket misses rank above window ({n} elements)"
                    )));
                }
            }
            if !deferred.is_empty() {
                if mid.len >= n && deferred.len() == 1 {
                    return Err(Error::Layout(
                        "external selection made no progress; memory too small".into(),
                    ));
                }
                if mid.len >= n {
                    // Merged windows can span everything; single ranks still narrow.
                    for (pos, r) in deferred {
                        out[pos] = select_many(disk, &mid, &[r], work)?[0];
                    }
                } else {
                    let rs: Vec<usize> = deferred.iter().map(|&(_, r)| r).collect();
                    let vals = select_many(disk, &mid, &rs, work)?;
                    for ((pos, _), v) in deferred.into_iter().zip(vals) {
                        out[pos] = v;
                    }
                }
            }
            mid.free(disk)?;
        }
    }
    Ok(out)
}

/// Reads a whole run into memory.
pub(crate) fn load_all(disk: &mut Disk, run: &Run, consume: bool) -> Result<Vec<u64>> {
    let mut all = Vec::with_capacity(run.len);
    let mut reader = RunReader::new(run.clone(), consume);
    while let Some(block) = reader.next_block(disk)? {
        all.extend(block);
    }
    Ok(all)
}

/// Splits a run around its rank-`k` element.
///
/// Two read passes plus one write pass over the run, with small recursive
/// work on the sample and on the bracketed middle.
pub fn split_run(disk: &mut Disk, run: Run, k: usize, mode: SplitMode) -> Result<SplitOutcome> {
    let mut work = 0;
    let mut out = split_run_inner(disk, run, k, mode, &mut work)?;
    out.work = work;
    Ok(out)
}

fn split_run_inner(
    disk: &mut Disk,
    run: Run,
    k: usize,
    mode: SplitMode,
    work: &mut u64,
) -> Result<SplitOutcome> {
    let n = run.len;
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, len: n });
    }
    let b = disk.b();
    if n <= disk.available() {
        let mut all = load_all(disk, &run, true)?;
        *work += n as u64;
        internal_sort(&mut all);
        let pivot = all[k - 1];
        let first = all.partition_point(|&x| x < pivot);
        let end = all.partition_point(|&x| x <= pivot);
        let cut = match mode {
            SplitMode::Value => first,
            SplitMode::Rank => k - 1,
        };
        let mut left = RunWriter::new();
        left.extend(disk, &all[..cut])?;
        let left = left.finish(disk)?;
        let mut right = RunWriter::new();
        right.extend(disk, &all[cut..])?;
        let right = right.finish(disk)?;
        return Ok(SplitOutcome {
            left,
            right,
            pivot,
            pivot_copies: end - first,
            work: 0,
        });
    }
    if disk.available() < 6 * b {
        return Err(Error::Layout(format!(
            "splitting a run needs six free blocks, {} elements available",
            disk.available()
        )));
    }

    let sample = sample_pass(disk, &run, 1, work)?;
    let (lo, hi) = bracket_values(disk, &sample, &[k], work)?[0];
    sample.run.free(disk)?;

    let mut parts: [RunWriter; 5] = Default::default();
    let mut reader = RunReader::new(run, true);
    while let Some(block) = reader.next_block(disk)? {
        *work += block.len() as u64;
        for e in block {
            let slot = match place(e, lo, hi) {
                Place::Below => 0,
                Place::AtLo => 1,
                Place::Inside => 2,
                Place::AtHi => 3,
                Place::Above => 4,
            };
            parts[slot].push(disk, e)?;
        }
    }
    let [below, at_lo, inside, at_hi, above] = parts;
    let below = below.finish(disk)?;
    let at_lo = at_lo.finish(disk)?;
    let inside = inside.finish(disk)?;
    let at_hi = at_hi.finish(disk)?;
    let above = above.finish(disk)?;
    let (a, bl, c, d) = (below.len, at_lo.len, inside.len, at_hi.len);

    if k <= a {
        return Err(Error::Verification(format!(
            "split bracket misses rank {k} ({a} below)"
        )));
    }
    if k <= a + bl {
        let pivot = lo.expect("elements at the lower end");
        let (take, rest) = match mode {
            SplitMode::Value => (Run::new(), at_lo),
            SplitMode::Rank => at_lo.split_at(disk, k - 1 - a)?,
        };
        return Ok(SplitOutcome {
            left: Run::concat([below, take]),
            right: Run::concat([rest, inside, at_hi, above]),
            pivot,
            pivot_copies: bl,
            work: 0,
        });
    }
    if k <= a + bl + c {
        if c >= n {
            return Err(Error::Layout("run split made no progress".into()));
        }
        let sub = split_run_inner(disk, inside, k - a - bl, mode, work)?;
        return Ok(SplitOutcome {
            left: Run::concat([below, at_lo, sub.left]),
            right: Run::concat([sub.right, at_hi, above]),
            pivot: sub.pivot,
            pivot_copies: sub.pivot_copies,
            work: 0,
        });
    }
    if k <= a + bl + c + d {
        let pivot = hi.expect("elements at the upper end");
        let (take, rest) = match mode {
            SplitMode::Value => (Run::new(), at_hi),
            SplitMode::Rank => at_hi.split_at(disk, k - 1 - a - bl - c)?,
        };
        return Ok(SplitOutcome {
            left: Run::concat([below, at_lo, inside, take]),
            right: Run::concat([rest, above]),
            pivot,
            pivot_copies: d,
            work: 0,
        });
    }
    Err(Error::Verification(format!(
        "split bracket misses rank {k} above the window"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_model::DiskConfig;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(m: usize, b: usize) -> Disk {
        Disk::new(DiskConfig::new(m, b).unwrap()).unwrap()
    }

    fn sorted(v: &[u64]) -> Vec<u64> {
        let mut s = v.to_vec();
        s.sort();
        s
    }

    #[test]
    fn every_rank_with_little_free_memory() {
        let mut d = disk(64, 4);
        d.acquire(30).unwrap();
        let data: Vec<u64> = (0..35u64).map(|i| (i * 17) % 23).collect();
        let run = Run::stage(&mut d, &data).unwrap();
        let ranks: Vec<usize> = (1..=35).collect();
        let got = external_select_many(&mut d, &run, &ranks).unwrap();
        assert_eq!(got, sorted(&data));
        assert_eq!(d.resident(), 30);
    }

    #[test]
    fn tiny_run_selects_in_memory() {
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &[3, 1, 2]).unwrap();
        assert_eq!(external_select(&mut d, &run, 2).unwrap(), 2);
        assert_eq!(external_select(&mut d, &run, 3).unwrap(), 3);
        assert!(matches!(
            external_select(&mut d, &run, 4),
            Err(Error::RankOutOfRange { k: 4, len: 3 })
        ));
        assert_eq!(d.resident(), 0);
    }

    #[test]
    fn median_of_2731_matches_oracle_with_linear_io() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<u64> = (0..2731).map(|_| rng.gen()).collect();
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let got = external_select(&mut d, &run, 1366).unwrap();
        assert_eq!(got, sorted(&data)[1365]);
        let blocks = 2731usize.div_ceil(16) as u64;
        assert!(d.stats().io_count <= 6 * blocks, "{:?}", d.stats());
        assert!(d.stats().peak_resident <= 256);
        assert_eq!(d.resident(), 0);
        assert_eq!(d.allocated_blocks(), run.blocks.len());
    }

    #[test]
    fn maximum_rank() {
        let data: Vec<u64> = (0..5000u64).rev().collect();
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        assert_eq!(external_select(&mut d, &run, 5000).unwrap(), 4999);
        assert_eq!(external_select(&mut d, &run, 1).unwrap(), 0);
    }

    #[test]
    fn many_ranks_with_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<u64> = (0..6000).map(|_| rng.gen_range(0..7)).collect();
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let ranks = [1, 1500, 3000, 4500, 6000, 17];
        let got = external_select_many(&mut d, &run, &ranks).unwrap();
        let s = sorted(&data);
        let want: Vec<u64> = ranks.iter().map(|&r| s[r - 1]).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn all_equal_split_puts_everything_right_in_value_mode() {
        let data = vec![42u64; 3000];
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_run(&mut d, run, 1501, SplitMode::Value).unwrap();
        assert_eq!(out.left.len, 0);
        assert_eq!(out.right.len, 3000);
        assert_eq!(out.pivot_copies, 3000);
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_run(&mut d, run, 1501, SplitMode::Rank).unwrap();
        assert_eq!((out.left.len, out.right.len), (1500, 1500));
    }

    #[test]
    fn split_2730_distinct_into_halves() {
        let mut data: Vec<u64> = (0..2730).collect();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
        let mut d = disk(256, 16);
        let run = Run::stage(&mut d, &data).unwrap();
        let out = split_run(&mut d, run, 1366, SplitMode::Value).unwrap();
        assert_eq!(out.pivot, 1365);
        assert_eq!((out.left.len, out.right.len), (1365, 1365));
        let l = out.left.peek_all(&mut d).unwrap();
        let r = out.right.peek_all(&mut d).unwrap();
        assert!(l.iter().all(|&e| e < 1365));
        assert!(r.iter().all(|&e| e >= 1365));
        assert_eq!(d.resident(), 0);
        assert!(d.stats().peak_resident <= 256);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn split_partitions_by_rank(
            data in prop::collection::vec(0u64..40, 1..3000),
            k in 1usize..3000,
            by_rank in any::<bool>(),
        ) {
            let k = 1 + (k - 1) % data.len();
            let mode = if by_rank { SplitMode::Rank } else { SplitMode::Value };
            let mut d = disk(128, 8);
            let run = Run::stage(&mut d, &data).unwrap();
            let out = split_run(&mut d, run, k, mode).unwrap();
            let s = sorted(&data);
            prop_assert_eq!(out.pivot, s[k - 1]);
            let l = out.left.peek_all(&mut d).unwrap();
            let r = out.right.peek_all(&mut d).unwrap();
            prop_assert!(l.iter().all(|&e| e <= out.pivot));
            prop_assert!(r.iter().all(|&e| e >= out.pivot));
            match mode {
                SplitMode::Value => {
                    prop_assert!(l.iter().all(|&e| e < out.pivot));
                }
                SplitMode::Rank => prop_assert_eq!(l.len(), k - 1),
            }
            let mut both = l;
            both.extend(r);
            prop_assert_eq!(sorted(&both), s.clone());
            prop_assert_eq!(out.pivot_copies, s.iter().filter(|&&e| e == out.pivot).count());
            prop_assert_eq!(d.resident(), 0);
            prop_assert!(d.stats().peak_resident <= 128);
        }

        #[test]
        fn select_matches_sort(data in prop::collection::vec(any::<u64>(), 1..2500), k in 1usize..2500) {
            let k = 1 + (k - 1) % data.len();
            let mut d = disk(128, 8);
            let run = Run::stage(&mut d, &data).unwrap();
            prop_assert_eq!(external_select(&mut d, &run, k).unwrap(), sorted(&data)[k - 1]);
            prop_assert_eq!(d.resident(), 0);
        }
    }
}
