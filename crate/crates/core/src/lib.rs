//! Streaming, irrevocable sample selection from approximately periodic data.
//!
//! The crate is organised around the selection pipeline:
//!
//! - [`stream`]: observation streams, synthetic periodic generation, CSV I/O
//!   and block permutation for repeated trials.
//! - [`gp`]: squared-exponential Gaussian-process machinery (conditional
//!   variance, differential entropy, posterior prediction, grid fitting).
//! - [`utility`]: set utilities (entropy, mutual information, modular sum)
//!   with incremental gain sessions and a brute-force submodularity oracle.
//! - [`selectors`]: the periodic secretary algorithm and its baselines.
//! - [`bounds`]: closed-form performance guarantees.
//! - [`harness`]: Monte-Carlo experiment protocol (lambda tuning,
//!   algorithm comparison, held-out prediction error, bound validation).

pub mod bounds;
pub mod error;
pub mod format;
pub mod gp;
pub mod harness;
pub mod seed;
pub mod selectors;
pub mod stream;
pub mod utility;

pub use error::{Error, Result};
pub use gp::GpHyperparams;
pub use selectors::{SelectionResult, Termination};
pub use stream::{Observation, ObservationStream, PeriodicStreamSpec, QoiSample, StreamView, Waveform};
pub use utility::{SetFunction, UtilityFunction};
