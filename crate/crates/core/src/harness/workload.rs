use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input key distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Independent uniform 64-bit keys.
    Uniform,
    /// `0, 1, .., n-1`.
    Sorted,
    /// `n-1, .., 1, 0`.
    Reverse,
    /// Uniform keys drawn from 16 distinct values.
    Dupes,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Uniform,
        Distribution::Sorted,
        Distribution::Reverse,
        Distribution::Dupes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Sorted => "sorted",
            Distribution::Reverse => "reverse",
            Distribution::Dupes => "dupes",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Distribution::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::UnknownDistribution(s.to_string()))
    }
}

/// Deterministic input of `n` keys.
pub fn generate(dist: Distribution, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        Distribution::Uniform => (0..n).map(|_| rng.gen()).collect(),
        Distribution::Sorted => (0..n as u64).collect(),
        Distribution::Reverse => (0..n as u64).rev().collect(),
        Distribution::Dupes => {
            let values: Vec<u64> = (0..16).map(|_| rng.gen()).collect();
            (0..n).map(|_| values[rng.gen_range(0..16)]).collect()
        }
    }
}

/// Random destination-block assignment with exactly `b` elements per block.
/// `n` must be a multiple of `b`.
pub fn random_assignment(n: usize, b: usize, seed: u64) -> Result<Vec<u64>> {
    if b == 0 || !n.is_multiple_of(b) {
        return Err(Error::MalformedAssignment(format!(
            "{n} elements cannot fill blocks of {b} exactly"
        )));
    }
    let mut dest: Vec<u64> = (0..(n / b) as u64)
        .flat_map(|blk| std::iter::repeat_n(blk, b))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    dest.shuffle(&mut rng);
    Ok(dest)
}
