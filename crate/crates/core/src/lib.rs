//! Robust transceiver design for the K-user M x N MIMO interference
//! channel under channel-state-information error.
//!
//! The crate provides:
//!
//! - a system model (channels, CSI error, unit-norm transmit/receive
//!   filters) with deterministic seeded sampling,
//! - covariance builders and SINR metrics, exact and approximate,
//! - three iterative transceiver designs: expected-SINR maximization
//!   (EM), SINR-variance minimization (VM) and the Max-SINR baseline,
//!   all alternating between the original and reciprocal networks,
//! - a Monte Carlo experiment harness (sum-rate sweeps, SINR-variance
//!   tables, approximation-accuracy curves, convergence traces) with
//!   CSV output.
//!
//! # Example
//!
//! Design filters for one channel realization and evaluate the
//! delivered sum rate:
//!
//! ```
//! use icsim_core::{sample_network, NetworkConfig, RngStream, SolverKind};
//! use icsim_core::solver::alternate_solve;
//! use icsim_core::sinr::sum_rate;
//!
//! // Four users, 3x3 antennas, one stream each, P/N0 = 10 dB,
//! // CSI error variance 0.1.
//! let config = NetworkConfig::symmetric(4, 3, 3, 1, 10.0, 1.0, 0.1)?;
//! let channels = sample_network(&config, &RngStream::new(42, 0))?;
//! let (filters, trace) =
//!     alternate_solve(&config, &channels, SolverKind::Em, 50, &RngStream::new(42, 1))?;
//!
//! let rate = sum_rate(channels.true_channels(), &filters, &config)?;
//! assert!(rate > 0.0);
//! // Interference leakage decreases as the filters adapt.
//! assert!(trace.records.last().unwrap().leakage_fraction < trace.records[0].leakage_fraction);
//! # Ok::<(), icsim_core::Error>(())
//! ```

// Index-heavy numeric kernels read better with explicit loops.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod covariance;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod sinr;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use model::{
    init_filters, reciprocal_view, sample_gaussian_matrix, sample_network, sample_network_with,
    ChannelSet, ErrorConvention, FilterSet, NetworkConfig, RngStream,
};
pub use solver::SolverKind;
