//! Statistical delay bounds for parallel queueing systems.
//!
//! The crate covers fork-join and split-merge systems, (k, l) fork-join with
//! redundant tasks, multi-path systems with thinning and resequencing, and
//! tandems of fork-join stages. Every bound can be checked against the exact
//! max-plus trajectory simulator in [`sim`].
//!
//! ```
//! use forkbound::bounds::{quantile, sojourn_bound, ServerSpec};
//!
//! // Four M|M|1 servers, lambda = 0.7, mu = 1, at the largest admissible theta.
//! let servers = vec![ServerSpec::mm1(0.7, 1.0).unwrap(); 4];
//! let bound = sojourn_bound(&servers, &[0.3; 4]).unwrap();
//! let q = quantile(&bound, 1e-6).unwrap();
//! assert!((q - 51.8616).abs() < 1e-3);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod envelope;
pub mod error;
pub mod figures;
pub mod models;
pub mod multistage;
pub mod numeric;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
pub use models::{DistributionSpec, Law, Role, SigmaRho};
