//! Simulation and verification toolkit for propagation processes in wireless
//! networks.
//!
//! The toolkit generates planar transmitter patterns (lattices, Poisson,
//! alpha-Ginibre, Cox mixtures), applies radial path-gain models and random
//! fading, and assembles the process of inverse signal powers
//! `N = {h(|x_i|)/S_i}` on the positive half-line. On top of that it computes
//! the mean measures of the approximating Poisson process, total-variation
//! error certificates for the Poisson approximation of `N` restricted to
//! `(0, tau]`, and empirical goodness-of-fit diagnostics that decide whether a
//! batch of realizations looks Poisson or shows Cox-type overdispersion.
//!
//! Modules map one-to-one onto the pipeline stages:
//!
//! - [`patterns`]: transmitter patterns and radial counting
//! - [`pathloss`]: radial gain models, generalized inverses, Lambert W
//! - [`fading`]: fading/shadowing families (sampling, tails, moments)
//! - [`propagation`]: the propagation process and its power-side inversion
//! - [`measure`]: mean measures (exact sums, closed forms, Monte Carlo)
//! - [`bounds`]: total-variation bounds and the variance-ratio diagnostic
//! - [`gof`]: time rescaling, KS, dispersion and count-law tests
//! - [`simulate`]: exact replication engine for `N` restricted to `(0, tau]`
//! - [`experiment`]: reproducible multi-replication experiment drivers

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fading;
pub mod gof;
pub mod measure;
pub mod pathloss;
pub mod patterns;
pub mod propagation;
pub mod rng;
pub mod simulate;

mod numeric;

pub use error::{Error, Result};
