//! Randomized cache placement for cellular networks whose base stations form
//! a homogeneous Poisson point process.
//!
//! A user is covered by a random number of stations. Each station caches `K`
//! of `J` contents, content `j` independently with marginal probability
//! `b_j`. [`optimizer`] picks the marginals that maximize the probability that
//! a request is found in at least one covering cache, given a
//! [`popularity`] law and a [`coverage`] pmf. [`simulator`] checks the
//! analytic pieces by Monte Carlo.

pub mod coverage;
pub mod error;
pub mod optimizer;
pub mod placement;
pub mod popularity;
pub mod qmc;
pub mod quadrature;
pub mod simulator;

pub use error::{Error, Result};
