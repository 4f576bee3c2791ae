use thiserror::Error;

use crate::kernel::KernelError;
use crate::set::SetError;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("block of {threads} threads exceeds max_threads_per_block {limit}")]
    BlockTooLarge { threads: i64, limit: i64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Set(#[from] SetError),
}
