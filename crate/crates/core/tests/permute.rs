use xmem::harness::{permute, random_assignment};
use xmem::{Disk, DiskConfig, Run};

const N: usize = 4096;
const B: usize = 16;

fn disk() -> Disk {
    Disk::new(DiskConfig::new(256, B).unwrap()).unwrap()
}

/// Direct in-memory permutation: block contents sorted for comparison.
fn oracle(values: &[u64], dest: &[u64]) -> Vec<Vec<u64>> {
    let mut blocks = vec![Vec::new(); values.len() / B];
    for (&v, &d) in values.iter().zip(dest) {
        blocks[d as usize].push(v);
    }
    for blk in &mut blocks {
        blk.sort_unstable();
    }
    blocks
}

fn permuted(values: &[u64], dest: &[u64]) -> (Vec<Vec<u64>>, Disk) {
    let mut d = disk();
    let input = Run::stage(&mut d, values).unwrap();
    let asg = Run::stage(&mut d, dest).unwrap();
    let out = permute(&mut d, input, asg).unwrap();
    assert!(out.run.block_fills(&d).unwrap().iter().all(|&f| f == B));
    let flat = out.run.peek_all(&mut d).unwrap();
    let blocks = flat
        .chunks(B)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect();
    (blocks, d)
}

fn values() -> Vec<u64> {
    (0..N as u64)
        .map(|i| (i * 2_654_435_761) % 1_000_003)
        .collect()
}

#[test]
fn identity_keeps_blocks() {
    let v = values();
    let dest: Vec<u64> = (0..N).map(|i| (i / B) as u64).collect();
    let (got, d) = permuted(&v, &dest);
    assert_eq!(got, oracle(&v, &dest));
    assert_eq!(d.resident(), 0);
}

#[test]
fn reversal_moves_block_i_to_the_mirror() {
    let v = values();
    let blocks = N / B;
    let dest: Vec<u64> = (0..N).map(|i| (blocks - 1 - i / B) as u64).collect();
    let (got, _) = permuted(&v, &dest);
    let want = oracle(&v, &dest);
    assert_eq!(got, want);
    let mut first_in = v[..B].to_vec();
    first_in.sort_unstable();
    assert_eq!(got[blocks - 1], first_in);
}

#[test]
fn random_assignment_matches_oracle() {
    let v = values();
    let dest = random_assignment(N, B, 42).unwrap();
    let (got, d) = permuted(&v, &dest);
    assert_eq!(got, oracle(&v, &dest));
    assert!(d.stats().peak_resident <= 256);
}

#[test]
fn duplicate_values_are_kept() {
    let v: Vec<u64> = (0..N as u64).map(|i| i % 3).collect();
    let dest = random_assignment(N, B, 9).unwrap();
    let (got, _) = permuted(&v, &dest);
    assert_eq!(got, oracle(&v, &dest));
}
