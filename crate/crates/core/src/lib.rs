//! Record-stopping win probabilities on proportional-increment counting
//! processes: exact values, the optimal value functions of the associated
//! HJB system, and Monte Carlo cross-checks.

pub mod cli;
pub mod error;
pub mod exact_values;
pub mod hjb_solver;
pub mod montecarlo;
pub mod negbin;
pub mod pi_process;
pub mod quadrature;

pub use error::{Error, Result};
