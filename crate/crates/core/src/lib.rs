//! Strong lottery tickets from random ReLU networks.
//!
//! The library builds wide randomly initialized "mother" networks, prunes
//! them down to sparse subnetworks (tickets) that approximate prescribed
//! basis functions — linear maps, piecewise-linear univariate functions,
//! monomials, sinusoids — with only the final linear layer left to train,
//! and measures how tight the analytic error and width bounds are.

pub mod error;
pub mod families;
pub mod grid;
pub mod harness;
pub mod init;
pub mod net;
pub mod prune;
pub mod pwl;
pub mod rng;
pub mod subsum;

pub use error::{Result, TicketError};
