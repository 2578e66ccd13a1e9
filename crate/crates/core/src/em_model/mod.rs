//! The external memory model: a block device with I/O counters and an
//! internal-memory element budget.

mod backend;
mod disk;
mod run;

pub use backend::{sidecar_path, BlockDevice, DiskMetadata, FileDevice, MemDevice};
pub use disk::{create_disk, BlockId, Disk, DiskConfig, IoStats};
pub use run::{Run, RunCursor, RunReader, RunWriter};
