//! Difference-of-submodular (DS) minimization via DC programming.
//!
//! A DS problem asks for `min_X F(X) = G(X) - H(X)` where `G` and `H` are
//! normalized submodular set functions over a ground set `V = {0, .., d-1}`.
//! Through the Lovász extension this becomes the continuous DC program
//! `min_{x in [0,1]^d} g_L(x) - h_L(x)`, which the solvers in [`solvers`]
//! attack with DCA and its complete/rounded/accelerated variants.
//!
//! Elements are indexed from zero everywhere in this crate.
//!
//! Module map:
//! - [`setfn`]: subsets, set-function handles and concrete families.
//! - [`lovasz`]: Lovász extension, greedy base points, rounding.
//! - [`inner`]: projected subgradient (and exact enumeration) for the convex
//!   x-update, Frank–Wolfe for the concave y-update.
//! - [`solvers`]: DCA, DCAR, ADCA, ADCAR, CDCA, CDCAR and the local-minimality
//!   restart wrapper.
//! - [`baselines`]: SubSup, SupSub, ModMod, direct PGM and direct double greedy.
//! - [`oracle`]: brute-force ground truth for small ground sets.
//! - [`harness`]: instance generators, experiment orchestration, trace I/O.
//! - [`verify`]: oracle-backed invariant suites used by `dsmin verify`.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod inner;
pub mod lovasz;
pub mod oracle;
pub mod setfn;
pub mod solvers;
pub mod verify;

pub use error::{DsError, Result};
pub use lovasz::{BasePoint, Permutation, RoundedSet};
pub use setfn::{DsInstance, GroundSet, ModularVector, SetFunction, SetFunctionHandle, Subset};
pub use solvers::{CertBound, IterateState, Method, SolverConfig, SolverTrace};
