use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::sort_e_unchecked;
use crate::buffer_pq::pq_sort;
use crate::distribution_sort::external_distribution_sort;
use crate::em_model::{Disk, DiskConfig, IoStats, Run};
use crate::error::{Error, Result};
use crate::merge_sort::external_merge_sort;
use crate::split_sort::split_sort;

use super::permute::{max_permutable_value, permute};
use super::workload::{generate, random_assignment, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Merge,
    Dist,
    Split,
    Pq,
    Permute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Merge,
        Algorithm::Dist,
        Algorithm::Split,
        Algorithm::Pq,
        Algorithm::Permute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Merge => "merge",
            Algorithm::Dist => "dist",
            Algorithm::Split => "split",
            Algorithm::Pq => "pq",
            Algorithm::Permute => "permute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Where the blocks live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Sim,
    /// A block file created at this path (plus its sidecar).
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algo: Algorithm,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub dist: Distribution,
    pub seed: u64,
    pub backend: Backend,
    pub enforce_budget: bool,
}

impl ExperimentSpec {
    pub fn new(
        algo: Algorithm,
        n: usize,
        m: usize,
        b: usize,
        dist: Distribution,
        seed: u64,
    ) -> Self {
        Self {
            algo,
            n,
            m,
            b,
            dist,
            seed,
            backend: Backend::Sim,
            enforce_budget: true,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub algo: Algorithm,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub dist: Distribution,
    pub seed: u64,
    pub ios: u64,
    pub reads: u64,
    pub writes: u64,
    pub transferred: u64,
    pub peak_resident: usize,
    /// Merge phases, recursion depth, or tree height, depending on `algo`.
    pub phases: usize,
    /// `ios / ((N/B) * sortE)`.
    pub ratio_io: f64,
    /// `transferred / (N * sortE)`.
    pub ratio_transfer: f64,
    pub wall_ms: f64,
}

impl ExperimentReport {
    /// Same run, ignoring wall-clock time.
    pub fn same_counts(&self, other: &ExperimentReport) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        a == *other
    }
}

fn open_disk(spec: &ExperimentSpec) -> Result<Disk> {
    let config = DiskConfig::new(spec.m, spec.b)?.with_budget(spec.enforce_budget);
    match &spec.backend {
        Backend::Sim => Disk::new(config),
        Backend::File(path) => Disk::create_file(config, path),
    }
}

fn check_sorted(input: &[u64], output: &[u64]) -> Result<()> {
    let mut want = input.to_vec();
    want.sort_unstable();
    if want.len() != output.len() {
        return Err(Error::Verification(format!(
            "output has {} elements, expected {}",
            output.len(),
            want.len()
        )));
    }
    if let Some(i) = (0..want.len()).find(|&i| want[i] != output[i]) {
        return Err(Error::Verification(format!(
            "position {i}: got {}, expected {}",
            output[i], want[i]
        )));
    }
    Ok(())
}

fn check_permuted(
    input: &[u64],
    dest: &[u64],
    b: usize,
    fills: &[usize],
    output: &[u64],
) -> Result<()> {
    if fills.iter().any(|&f| f != b) || output.len() != input.len() {
        return Err(Error::Verification("output blocks are not full".into()));
    }
    let mut want: Vec<Vec<u64>> = vec![Vec::with_capacity(b); input.len() / b];
    for (&v, &d) in input.iter().zip(dest) {
        want[d as usize].push(v);
    }
    for (i, (w, got)) in want.iter_mut().zip(output.chunks(b)).enumerate() {
        let mut got = got.to_vec();
        got.sort_unstable();
        w.sort_unstable();
        if *w != got {
            return Err(Error::Verification(format!(
                "block {i} holds the wrong elements"
            )));
        }
    }
    Ok(())
}

/// Runs one algorithm on a generated input, verifies the output against an
/// in-memory oracle and reports the counters.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mut disk = open_disk(spec)?;
    let mut data = generate(spec.dist, spec.n, spec.seed);
    let dest = if spec.algo == Algorithm::Permute {
        let limit = max_permutable_value(spec.n / spec.b);
        data.iter_mut().for_each(|v| *v &= limit);
        Some(random_assignment(spec.n, spec.b, spec.seed)?)
    } else {
        None
    };
    let input = Run::stage(&mut disk, &data)?;
    let assignment = match &dest {
        Some(d) => Some(Run::stage(&mut disk, d)?),
        None => None,
    };

    let start = Instant::now();
    let (run, phases) = match spec.algo {
        Algorithm::Merge => {
            let o = external_merge_sort(&mut disk, input)?;
            (o.run, o.phases)
        }
        Algorithm::Dist => {
            let o = external_distribution_sort(&mut disk, input)?;
            (o.run, o.depth)
        }
        Algorithm::Split => {
            let o = split_sort(&mut disk, input)?;
            (o.run, o.depth)
        }
        Algorithm::Pq => {
            let o = pq_sort(&mut disk, input)?;
            (o.run, o.height)
        }
        Algorithm::Permute => {
            let o = permute(&mut disk, input, assignment.expect("staged"))?;
            (o.run, o.sort.depth)
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let stats = disk.stats();

    let output = run.peek_all(&mut disk)?;
    match &dest {
        Some(d) => check_permuted(&data, d, spec.b, &run.block_fills(&disk)?, &output)?,
        None => check_sorted(&data, &output)?,
    }
    if disk.resident() != 0 {
        return Err(Error::Verification(format!(
            "{} elements still resident after the run",
            disk.resident()
        )));
    }
    Ok(report(spec, stats, phases, wall_ms))
}

fn report(spec: &ExperimentSpec, stats: IoStats, phases: usize, wall_ms: f64) -> ExperimentReport {
    let (n, m, b) = (spec.n as u64, spec.m as u64, spec.b as u64);
    let se = sort_e_unchecked(n, m, b) as f64;
    let blocks = (n as f64 / b as f64).max(1.0);
    ExperimentReport {
        algo: spec.algo,
        n: spec.n,
        m: spec.m,
        b: spec.b,
        dist: spec.dist,
        seed: spec.seed,
        ios: stats.io_count,
        reads: stats.reads,
        writes: stats.writes,
        transferred: stats.elements_transferred,
        peak_resident: stats.peak_resident,
        phases,
        ratio_io: stats.io_count as f64 / (blocks * se),
        ratio_transfer: stats.elements_transferred as f64 / ((n.max(1)) as f64 * se),
        wall_ms,
    }
}

/// Runs independent experiments in parallel; results keep the input order.
pub fn run_many(specs: &[ExperimentSpec]) -> Vec<Result<ExperimentReport>> {
    specs.par_iter().map(run_experiment).collect()
}

/// Writes `reports` as CSV rows, with a header line when `header` is set.
pub fn write_csv<W: Write>(out: W, reports: &[ExperimentReport], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(out);
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!(
            "bogo".parse::<Algorithm>(),
            Err(Error::UnknownAlgorithm(s)) if s == "bogo"
        ));
    }

    #[test]
    fn every_algorithm_sorts_and_verifies() {
        for algo in Algorithm::ALL {
            for dist in Distribution::ALL {
                let spec = ExperimentSpec::new(algo, 4096, 256, 16, dist, 3);
                let r = run_experiment(&spec).unwrap_or_else(|e| panic!("{algo} {dist}: {e}"));
                assert!(r.peak_resident <= 256);
                assert_eq!(r.ios, r.reads + r.writes);
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = ExperimentSpec::new(Algorithm::Split, 4096, 256, 16, Distribution::Uniform, 9);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert!(a.same_counts(&b));
    }

    #[test]
    fn run_many_keeps_order() {
        let specs: Vec<_> = Algorithm::ALL
            .into_iter()
            .map(|a| ExperimentSpec::new(a, 2048, 256, 16, Distribution::Uniform, 1))
            .collect();
        let out = run_many(&specs);
        for (s, r) in specs.iter().zip(out) {
            assert_eq!(r.unwrap().algo, s.algo);
        }
    }

    #[test]
    fn csv_columns() {
        let spec = ExperimentSpec::new(Algorithm::Merge, 1024, 256, 16, Distribution::Sorted, 0);
        let r = run_experiment(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "algo,n,m,b,dist,seed,ios,reads,writes,transferred,peak_resident,phases,ratio_io,ratio_transfer,wall_ms"
        );
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("merge,1024,256,16,sorted,0,"));
    }
}
