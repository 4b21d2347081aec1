//! Second-order photon correlations of disordered qubit chains coupled to a
//! one-dimensional waveguide, in the weak-drive limit.

pub mod analysis;
pub mod closedforms;
pub mod correlations;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod nppb;
pub mod selfcheck;
pub mod timedomain;

pub use error::{Error, Result};
pub use model::{ChainConfig, Channel, CorrelationValue, DisorderSample, PairIndex};
