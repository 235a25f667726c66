//! Dissipativity-based analysis and control of hierarchical SIS spreading
//! networks (node → group → network).
//!
//! The crate certifies dissipativity properties of spreading networks via
//! linear matrix inequalities and redesigns inter-group transmission topology
//! to enforce an L2-gain bound (and optionally scalable mesh stability),
//! validated by ODE simulation against threshold- and degree-pruning
//! baselines.
//!
//! Modules:
//! - [`netmodel`]: the network data model, random generation, interconnection
//!   assembly and the on-disk JSON format.
//! - [`lmicore`]: an LMI modeling layer lowered to a conic program solved by
//!   an interior-point backend, with independent eigenvalue re-verification.
//! - [`dissipativity`]: node / group / network certificates, topology design,
//!   necessary conditions, SMS and the end-to-end pipeline.
//! - [`sim`]: networked SIS dynamics under time-varying recovery rates and a
//!   windowed disturbance profile.
//! - [`evaluation`]: pruning baselines, design-effort metric, effort matching
//!   and the independent certificate verification oracles.
//! - [`cli`]: the command-line front end used by the `meshdiss` binary.

extern crate openblas_src;

pub mod cli;
pub mod dissipativity;
pub mod error;
pub mod evaluation;
pub mod lmicore;
pub mod netmodel;
pub mod sim;

pub use error::{Error, Result};
