use crate::em_model::BlockId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid disk configuration: {0}")]
    InvalidConfig(String),

    #[error("block {0} is not allocated")]
    UnallocatedBlock(BlockId),

    #[error("block {0} freed twice")]
    DoubleFree(BlockId),

    #[error("block overflow: {len} elements do not fit a block of {block_size}")]
    BlockOverflow { len: usize, block_size: usize },

    #[error("short block {id}: requested elements {start}..{end} but only {stored} are stored")]
    ShortBlock {
        id: BlockId,
        start: usize,
        end: usize,
        stored: usize,
    },

    #[error(
        "memory budget exceeded: {resident} resident + {requested} requested > capacity {capacity}"
    )]
    BudgetExceeded {
        resident: usize,
        requested: usize,
        capacity: usize,
    },

    #[error("workspace accounting underflow: releasing {requested} with only {resident} resident")]
    AccountingUnderflow { resident: usize, requested: usize },

    #[error("input of {n} elements is too small: at least {required} required")]
    InputTooSmall { n: usize, required: usize },

    #[error("cannot merge {runs} runs with fan-in {fan_in}")]
    TooManyRuns { runs: usize, fan_in: usize },

    #[error("memory layout violated: {0}")]
    Layout(String),

    #[error("rank {k} out of range for {len} elements")]
    RankOutOfRange { k: usize, len: usize },

    #[error("splitters are not strictly increasing")]
    UnorderedSplitters,

    #[error("priority queue is empty")]
    EmptyQueue,

    #[error("malformed block assignment: {0}")]
    MalformedAssignment(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid bound inputs: {0}")]
    InvalidBoundInputs(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
