//! Spectral-Galerkin simulation of the stochastic Burgers equation on `(0, 1)`
//! driven by Brownian forcing and compensated compound-Poisson jumps, together
//! with Lyapunov-function checks and ergodic estimators.

pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod ensemble;
pub mod integrator;
pub mod stats;
pub mod lyapunov;
pub mod ergodics;
