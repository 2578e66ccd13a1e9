//! Workload generation, block permutation and verified experiment runs.

mod experiment;
mod permute;
mod workload;

pub use experiment::{
    run_experiment, run_many, write_csv, Algorithm, Backend, ExperimentReport, ExperimentSpec,
};
pub use permute::{max_permutable_value, permute, PermuteOutcome};
pub use workload::{generate, random_assignment, Distribution};
