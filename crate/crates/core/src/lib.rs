//! Random-turn tug of war with noise.
//!
//! Two players push a token around a bounded domain; each turn the coin-toss
//! winner moves it by at most `eps` and the move is perturbed by a rotated,
//! scaled copy of a fixed noise measure. As `eps -> 0` the game value
//! approaches the p-harmonic extension of the boundary payoff, with `p`
//! determined by the covariance of the noise.
//!
//! Modules, bottom up:
//! - [`noise`]: noise measures, game constants, push-forward sampling
//! - [`geometry`]: domains, boundary distance and exit points, payoffs
//! - [`calculus`]: finite-difference p-Laplacians, the quadratic one-step
//!   model, radial reference solutions
//! - [`strategy`]: player strategies
//! - [`engine`]: one play of the game under each variant
//! - [`dpp`]: grid value iteration for the one-step optimality equation
//! - [`estimator`]: Monte Carlo estimates, sweeps and probes

pub mod calculus;
pub mod dpp;
pub mod engine;
pub mod estimator;
pub mod geometry;
pub mod noise;
pub mod rng;
pub mod stats;
pub mod strategy;
pub mod vector;

pub use vector::Vector;
