//! Rayleigh eigendirections (REDs) for smooth generators.
//!
//! Given a generator `z -> image` and two groups of feature maps over its
//! latent space, REDs are the latent directions that change the *changing*
//! features as much as possible while leaving the *fixed* features
//! unchanged to first order. They are the top eigenvectors of the changing
//! features' Gram matrix `A_c = J_cᵀ J_c` restricted to the (truncated)
//! nullspace of every fixed-feature Gram `A_f = J_fᵀ J_f`.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: symmetric eigen-analysis, explained-variance truncation,
//!   nullspace intersection and the REDs solver itself.
//! - [`geometry`]: central-difference Jacobians and per-point Gram matrices.
//! - [`generators`]: deterministic toy generators (linear, quadratic,
//!   tanh-MLP, procedural blob images).
//! - [`features`]: feature maps composed on top of a generator (raw output,
//!   regions, frequency bands, random embeddings, scalar attributes).
//! - [`traversal`]: direction selectors (REDs and baselines) and the
//!   Linear / Projection path generators.
//! - [`eval`]: per-step distance bookkeeping, aggregation, log-log slope
//!   fits, brute-force optimality oracles and method comparison.
//! - [`experiment`]: JSON experiment configs, the `red` command line runner,
//!   and its output files.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod generators;
pub mod geometry;
pub mod rng;
pub mod spectral;
pub mod testbeds;
pub mod traversal;

pub use error::{RedsError, Result};
pub use features::FeatureMap;
pub use generators::{GeneratorSpec, ImageBuffer, LatentPoint};
pub use geometry::{fd_jacobian, gram, local_geometry, JacobianMatrix, LocalGeometry};
pub use spectral::{compute_reds, GramMatrix, RankMode, RedsResult, RedsStatus, SubspaceBasis};
pub use traversal::{Method, Selector, Trajectory, TraversalConfig};
