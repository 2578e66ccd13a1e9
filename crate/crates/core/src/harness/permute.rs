use crate::em_model::{Disk, Run, RunCursor, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::split_sort::{split_sort, SplitSortOutcome};

#[derive(Debug)]
pub struct PermuteOutcome {
    /// Output run; block `i` holds exactly the elements assigned to `i`.
    pub run: Run,
    pub sort: SplitSortOutcome,
}

/// Bits needed for a destination index below `blocks`.
fn dest_bits(blocks: usize) -> u32 {
    if blocks <= 1 {
        0
    } else {
        usize::BITS - (blocks - 1).leading_zeros()
    }
}

/// Largest value that fits next to a destination tag for `blocks` blocks.
pub fn max_permutable_value(blocks: usize) -> u64 {
    let w = 64 - dest_bits(blocks);
    if w == 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

fn validate(disk: &mut Disk, input: &Run, assignment: &Run) -> Result<()> {
    let (n, b) = (input.len, disk.b());
    if assignment.len != n {
        return Err(Error::MalformedAssignment(format!(
            "{} destinations for {n} elements",
            assignment.len
        )));
    }
    if n % b != 0 {
        return Err(Error::MalformedAssignment(format!(
            "{n} elements cannot fill blocks of {b} exactly"
        )));
    }
    let blocks = n / b;
    let mut counts = vec![0usize; blocks];
    for d in assignment.peek_all(disk)? {
        let slot = counts.get_mut(d as usize).ok_or_else(|| {
            Error::MalformedAssignment(format!("destination {d} is not below {blocks}"))
        })?;
        *slot += 1;
    }
    if let Some(i) = counts.iter().position(|&c| c != b) {
        return Err(Error::MalformedAssignment(format!(
            "block {i} receives {} elements instead of {b}",
            counts[i]
        )));
    }
    Ok(())
}

/// Moves element `i` of `input` into block `assignment[i]` of the output.
///
/// Both runs are consumed. Every element is tagged with its destination in
/// the high bits, the tags are sorted with [`split_sort`], and the tags are
/// stripped again. Keys must fit in `64 - ceil(log2(N/B))` bits.
pub fn permute(disk: &mut Disk, input: Run, assignment: Run) -> Result<PermuteOutcome> {
    validate(disk, &input, &assignment)?;
    let blocks = input.len / disk.b();
    let shift = 64 - dest_bits(blocks);
    let limit = max_permutable_value(blocks);

    let mut values = RunCursor::new(input, true);
    let mut dests = RunCursor::new(assignment, true);
    let mut tagged = RunWriter::new();
    while let Some(v) = values.next(disk)? {
        let d = dests.next(disk)?.expect("lengths validated");
        disk.release(1)?;
        if v > limit {
            return Err(Error::MalformedAssignment(format!(
                "value {v} does not fit beside a destination tag"
            )));
        }
        let tag = if shift == 64 { v } else { (d << shift) | v };
        tagged.push(disk, tag)?;
    }
    let tagged = tagged.finish(disk)?;

    let mut sort = split_sort(disk, tagged)?;
    let sorted = std::mem::take(&mut sort.run);
    let mut reader = RunReader::new(sorted, true);
    let mut out = RunWriter::new();
    while let Some(block) = reader.next_block(disk)? {
        for t in block {
            out.push(disk, t & limit)?;
        }
    }
    Ok(PermuteOutcome {
        run: out.finish(disk)?,
        sort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_model::DiskConfig;
    use crate::harness::workload::random_assignment;

    fn disk() -> Disk {
        Disk::new(DiskConfig::new(256, 16).unwrap()).unwrap()
    }

    #[test]
    fn tag_widths() {
        assert_eq!(dest_bits(1), 0);
        assert_eq!(dest_bits(2), 1);
        assert_eq!(dest_bits(256), 8);
        assert_eq!(dest_bits(257), 9);
        assert_eq!(max_permutable_value(1), u64::MAX);
        assert_eq!(max_permutable_value(256), (1 << 56) - 1);
    }

    #[test]
    fn places_every_element_in_its_block() {
        let mut d = disk();
        let n = 2048;
        let values: Vec<u64> = (0..n as u64).map(|i| i * 7919 % 4099).collect();
        let dest = random_assignment(n, 16, 11).unwrap();
        let input = Run::stage(&mut d, &values).unwrap();
        let asg = Run::stage(&mut d, &dest).unwrap();
        let out = permute(&mut d, input, asg).unwrap();
        let got = out.run.peek_all(&mut d).unwrap();
        assert_eq!(out.run.block_fills(&d).unwrap(), vec![16; n / 16]);
        for (blk, chunk) in got.chunks(16).enumerate() {
            let mut want: Vec<u64> = (0..n)
                .filter(|&i| dest[i] as usize == blk)
                .map(|i| values[i])
                .collect();
            want.sort_unstable();
            let mut have = chunk.to_vec();
            have.sort_unstable();
            assert_eq!(have, want, "block {blk}");
        }
        assert_eq!(d.resident(), 0);
    }

    #[test]
    fn rejects_bad_assignments() {
        let mut d = disk();
        let values = vec![1u64; 64];
        let mut dest = random_assignment(64, 16, 1).unwrap();
        dest[0] = (dest[0] + 1) % 4;
        let input = Run::stage(&mut d, &values).unwrap();
        let asg = Run::stage(&mut d, &dest).unwrap();
        assert!(matches!(
            permute(&mut d, input, asg),
            Err(Error::MalformedAssignment(_))
        ));

        let input = Run::stage(&mut d, &values[..60]).unwrap();
        let asg = Run::stage(&mut d, &dest[..60]).unwrap();
        assert!(matches!(
            permute(&mut d, input, asg),
            Err(Error::MalformedAssignment(_))
        ));
    }

    #[test]
    fn rejects_values_that_collide_with_tags() {
        let mut d = disk();
        let values = vec![u64::MAX; 64];
        let dest = random_assignment(64, 16, 2).unwrap();
        let input = Run::stage(&mut d, &values).unwrap();
        let asg = Run::stage(&mut d, &dest).unwrap();
        assert!(matches!(
            permute(&mut d, input, asg),
            Err(Error::MalformedAssignment(_))
        ));
    }
}
