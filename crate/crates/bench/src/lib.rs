//! Shared setup for the criterion benchmarks.

use xmem::harness::{generate, Distribution};
use xmem::{Disk, DiskConfig, Run};

/// A fresh simulated disk holding `n` generated keys.
pub fn staged(n: usize, m: usize, b: usize, dist: Distribution, seed: u64) -> (Disk, Run) {
    let mut disk = Disk::new(DiskConfig::new(m, b).expect("valid shape")).expect("disk");
    let run = Run::stage(&mut disk, &generate(dist, n, seed)).expect("stage");
    (disk, run)
}
