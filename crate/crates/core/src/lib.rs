//! Approximate-EFX allocation of indivisible chores.
//!
//! Instances, allocations and prices live in [`model`]; [`fairness`] and
//! [`market`] are the exact checkers; [`framework`] validates friendly
//! certificates and runs the chore-swap algorithm; [`initializers`] builds
//! certificates for the 2-EFX, bivalued, small-m and 4-EFX pipelines;
//! [`oracle`] holds brute-force ground truth.

pub mod cli;
pub mod fairness;
pub mod framework;
pub mod initializers;
pub mod market;
pub mod model;
pub mod oracle;

pub use fairness::{efx_factor, Factor};
pub use framework::{run_framework, CertificateMode, FriendlyCertificate, SwapTrace};
pub use initializers::{solve_2efx, solve_4efx, solve_bivalued, solve_small_m, PipelineError, PipelineOutput};
pub use model::{Allocation, Instance, PriceVector, Rational};
