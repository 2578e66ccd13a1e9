//! External-memory sorting lab: a counted block-transfer model and sorting
//! algorithms that run inside it.

pub mod bounds;
pub mod buffer_pq;
pub mod distribution_sort;
pub mod em_model;
pub mod error;
pub mod harness;
pub mod internal_algos;
pub mod merge_sort;
pub mod select;
pub mod split_sort;

pub use bounds::{sort_e, BoundInputs};
pub use buffer_pq::{pq_sort, BufferTreePq};
pub use distribution_sort::external_distribution_sort;
pub use em_model::{create_disk, BlockId, Disk, DiskConfig, IoStats, Run, RunReader, RunWriter};
pub use error::{Error, Result};
pub use harness::{run_experiment, Algorithm, Distribution, ExperimentReport, ExperimentSpec};
pub use internal_algos::{internal_sort, linear_split, select_kth, SplitterSet};
pub use merge_sort::external_merge_sort;
pub use select::{external_select, split_run, SplitMode, SplitOutcome};
pub use split_sort::split_sort;
