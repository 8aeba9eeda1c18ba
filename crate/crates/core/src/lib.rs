//! Signature-based optimal stopping: truncated tensor and shuffle algebra,
//! path signatures, process samplers, randomized stopping policies and the
//! experiment pipeline.

pub mod error;
pub mod free_tensor;
pub mod shuffle;
pub mod process;
pub mod signature;
pub mod stopping;
pub mod policy;
pub mod h0;
pub mod linearized;
pub mod experiment;

pub use error::{Error, Result};
pub use free_tensor::{pair, FreeTensor, Word};
pub use shuffle::{DualPoly, LambdaPoly, PayoffPolys, SymbolicDualPoly};
pub use signature::{dims, LyndonBasis, LogSigStream, SigStream};
pub use process::{CovModel, GridSpec, PathBatch, Payoff, Sampler};
pub use stopping::{StopEvaluation, StoppingPolicy, ZDistribution};
pub use policy::{DeepPolicy, FittedPolicy, LinearPolicy, Policy, TrainConfig};
