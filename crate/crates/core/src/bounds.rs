//! Closed-form cost expressions. All logarithms are base 2 and lower bounds
//! are returned without hidden constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem shape for the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: u64,
    pub m: u64,
    pub b_block: u64,
    /// Average number of elements moved per I/O.
    pub b_avg: f64,
}

impl BoundInputs {
    /// Inputs with `b_avg = b_block`.
    pub fn new(n: u64, m: u64, b_block: u64) -> Result<Self> {
        Self::with_avg(n, m, b_block, b_block as f64)
    }

    pub fn with_avg(n: u64, m: u64, b_block: u64, b_avg: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidBoundInputs(msg));
        if b_block < 2 {
            return bad(format!("B = {b_block} must be at least 2"));
        }
        if m < 2 * b_block {
            return bad(format!("M = {m} must be at least 2B = {}", 2 * b_block));
        }
        if n < 2 * m {
            return bad(format!("N = {n} must be at least 2M = {}", 2 * m));
        }
        if !(1.0..=b_block as f64).contains(&b_avg) {
            return bad(format!("average transfer {b_avg} outside [1, {b_block}]"));
        }
        Ok(Self {
            n,
            m,
            b_block,
            b_avg,
        })
    }
}

/// `max(1, ceil(log_{M/B}(N/B)))`, evaluated in integers.
pub fn sort_e(n: u64, m: u64, b_block: u64) -> Result<u64> {
    BoundInputs::new(n, m, b_block)?;
    Ok(sort_e_unchecked(n, m, b_block))
}

/// [`sort_e`] without the shape checks; any `B >= 1`, `M >= 2B`.
pub fn sort_e_unchecked(n: u64, m: u64, b_block: u64) -> u64 {
    let blocks = n.div_ceil(b_block.max(1));
    let base = (m / b_block.max(1)).max(2);
    ceil_log(blocks, base).max(1)
}

/// Smallest `p` with `base^p >= x` (0 for `x <= 1`).
fn ceil_log(x: u64, base: u64) -> u64 {
    let mut p = 0;
    let mut reach: u128 = 1;
    while reach < x as u128 {
        reach *= base as u128;
        p += 1;
    }
    p
}

/// Merge fan-in with one block of memory kept for output.
pub fn merge_fan_in(m: u64, b_block: u64) -> u64 {
    (m / b_block).saturating_sub(1)
}

/// Merge phases after run formation: `ceil(log_f(ceil(N/M)))` with
/// `f = floor(M/B) - 1`. Zero when a single run remains.
pub fn merge_phases(n: u64, m: u64, b_block: u64) -> u64 {
    let runs = n.div_ceil(m);
    ceil_log(runs, merge_fan_in(m, b_block).max(2))
}

/// `N log(N/B) / (log N + b log(M/b))`.
pub fn permute_lb(inputs: &BoundInputs) -> f64 {
    let n = inputs.n as f64;
    let m = inputs.m as f64;
    let bb = inputs.b_block as f64;
    let b = inputs.b_avg;
    n * (n / bb).log2() / (n.log2() + b * (m / b).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferBound {
    /// `N * sort_E(N)` elements.
    pub value: u64,
    /// Whether `(N/B) * sort_E(N) < N`, the regime the bound speaks about.
    pub in_regime: bool,
}

pub fn transfer_lb(inputs: &BoundInputs) -> TransferBound {
    let se = sort_e_unchecked(inputs.n, inputs.m, inputs.b_block);
    let block_cost = inputs.n.div_ceil(inputs.b_block) * se;
    TransferBound {
        value: inputs.n * se,
        in_regime: block_cost < inputs.n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TallCacheBound {
    /// `N log N / log M` elements.
    pub value: f64,
    /// Algorithms using fewer than `eps N / 4` I/Os fall under the bound.
    pub io_threshold: f64,
    /// `B <= M^(1-eps)`.
    pub assumption_holds: bool,
}

pub fn tall_cache_transfer_lb(inputs: &BoundInputs, eps: f64) -> Result<TallCacheBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidBoundInputs(format!(
            "eps = {eps} must lie in (0, 1)"
        )));
    }
    let n = inputs.n as f64;
    let log_m = (inputs.m as f64).log2();
    let holds = (inputs.b_block as f64).log2() <= (1.0 - eps) * log_m + 1e-12;
    Ok(TallCacheBound {
        value: n * n.log2() / log_m,
        io_threshold: eps * n / 4.0,
        assumption_holds: holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_e_table() {
        assert_eq!(sort_e(4096, 256, 16).unwrap(), 2);
        assert_eq!(sort_e(1 << 20, 1 << 14, 1 << 8).unwrap(), 2);
        assert_eq!(sort_e(512, 256, 16).unwrap(), 2);
        assert_eq!(sort_e(1 << 14, 1 << 10, 1 << 5).unwrap(), 2);
        assert_eq!(sort_e(1 << 18, 1 << 10, 1 << 5).unwrap(), 3);
        assert!(sort_e(256, 256, 16).is_err());
        assert!(sort_e(4096, 16, 16).is_err());
    }

    #[test]
    fn merge_phase_predictor() {
        // 16 runs at fan-in 15
        assert_eq!(merge_phases(4096, 256, 16), 2);
        assert_eq!(merge_phases(3840, 256, 16), 1);
        assert_eq!(merge_phases(256, 256, 16), 0);
        assert_eq!(merge_phases(1 << 20, 1 << 14, 1 << 8), 2);
        assert_eq!(merge_fan_in(1 << 14, 1 << 8), 63);
    }

    #[test]
    fn permute_lb_values() {
        let i = BoundInputs::new(1 << 20, 1 << 14, 1 << 8).unwrap();
        let v = permute_lb(&i);
        assert!((v - 8086.704).abs() < 1e-3, "{v}");
        let one = BoundInputs::with_avg(1 << 20, 1 << 14, 1 << 8, 1.0).unwrap();
        assert!((permute_lb(&one) - 370085.6).abs() < 0.1);
    }

    #[test]
    fn transfer_regime() {
        let t = transfer_lb(&BoundInputs::new(1 << 20, 1 << 14, 1 << 8).unwrap());
        assert_eq!(
            t,
            TransferBound {
                value: 2097152,
                in_regime: true
            }
        );
        assert_eq!(
            transfer_lb(&BoundInputs::new(4096, 256, 16).unwrap()).value,
            8192
        );
    }

    #[test]
    fn tall_cache() {
        let i = BoundInputs::new(1 << 20, 1 << 14, 1 << 8).unwrap();
        let t = tall_cache_transfer_lb(&i, 0.4).unwrap();
        assert!(t.assumption_holds);
        assert!((t.io_threshold - 104857.6).abs() < 1e-9);
        assert!((t.value - 1497965.7).abs() < 0.1);
        // 2^8 == (2^16)^0.5
        let edge = BoundInputs::new(1 << 20, 1 << 16, 1 << 8).unwrap();
        assert!(tall_cache_transfer_lb(&edge, 0.5).unwrap().assumption_holds);
        assert!(
            !tall_cache_transfer_lb(&edge, 0.51)
                .unwrap()
                .assumption_holds
        );
        assert!(tall_cache_transfer_lb(&edge, 0.0).is_err());
    }

    #[test]
    fn inputs_are_validated() {
        assert!(BoundInputs::with_avg(4096, 256, 16, 0.5).is_err());
        assert!(BoundInputs::with_avg(4096, 256, 16, 17.0).is_err());
        assert!(BoundInputs::new(4096, 256, 1).is_err());
    }
}
