use crate::packing::PackingMode;

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("trit value {0} is outside {{-1, 0, +1}}")]
    InvalidTrit(i8),

    #[error("K={0} is not representable as 4a+5b with a,b >= 0")]
    UnrepresentableK(usize),

    #[error("mode {mode} requires {divisor} | K, got K={k}")]
    ModeMismatch {
        mode: PackingMode,
        divisor: usize,
        k: usize,
    },

    #[error("index {index} out of range for group size {g} (max {max})")]
    IndexOutOfRange { index: u8, g: u8, max: u8 },

    #[error("corrupt payload: byte {byte} at offset {offset} exceeds 3^{g}-1")]
    CorruptPayload { byte: u8, g: u8, offset: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration infeasible: {0}")]
    ConfigInfeasible(String),

    #[error("block size {block_b} exceeds the INT16 accumulation bound {bound} for g={g}")]
    BlockBoundViolation { block_b: usize, bound: usize, g: u8 },

    #[error("non-finite input at element {0}")]
    NonFiniteInput(usize),

    #[error("group size {g} does not divide K={k}")]
    DivisibilityError { k: usize, g: u8 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
