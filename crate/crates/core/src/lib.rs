//! Analytic estimates of cache and memory data volumes for GPU loop kernels,
//! and a four-limiter performance bound built on them.

pub mod bundled;
pub mod calibrate;
pub mod cachesim;
pub mod hardware;
pub mod error;
pub mod kernel;
pub mod l1;
pub mod perf;
pub mod report;
pub mod set;
pub mod sweep;
pub mod volume;

pub use error::EstimateError;
pub use hardware::{Gompertz, HardwareModel, HitRateModel};
pub use kernel::{Access, AccessKind, Field, KernelSpec, LaunchConfig, ThreadFolding};
pub use set::{AffineMap, AffineSet, QuasiAffine};
pub use perf::{Estimate, Limiter, PerfPrediction};
pub use volume::{AddressMode, VolumeBreakdown};
