//! Correlated default models, tranche pricing, implied correlation and
//! static arbitrage checks for a single-period credit portfolio.

pub mod arbitrage;
pub mod bounds;
pub mod copula;
pub mod error;
pub mod implied;
pub mod io;
pub mod ladder;
pub mod matrix;
pub mod model;
pub mod normal;
pub mod pricing;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
