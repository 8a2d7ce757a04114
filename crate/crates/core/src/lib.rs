//! Complete verification of feedforward ReLU networks against linear output
//! specifications over box-shaped input regions.
//!
//! The search ([`bab::verify`]) bounds each sub-domain with a backward linear
//! relaxation ([`relax`]), extracts the minimizer of that bound as a
//! candidate counterexample ([`witness`]), and when the candidate is spurious
//! chooses a ReLU to split with a score evaluated at that point
//! ([`heuristics`]). [`oracle`] provides exact answers for tiny instances and
//! [`cli`] exposes verification, benchmarking and instance generation.

pub mod bab;
pub mod cli;
pub mod heuristics;
pub mod model;
pub mod oracle;
pub mod relax;
pub mod witness;

pub use bab::{verify, BabConfig, Fallback, RunStats, Verdict};
pub use heuristics::HeuristicKind;
pub use model::{InputBox, Network, VerificationTask};
