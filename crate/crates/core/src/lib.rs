//! Numerics for non-isotropic Heisenberg groups `H^n_ω`.
//!
//! The group is `R^{2n} × R` with coordinates `(x₁, y₁, …, x_n, y_n, z)` and
//! product `(v, z)⋆(v', z') = (v + v', z + z' + ½ω(v, v'))`, where
//! `ω(v, v') = Σ αᵢ(xᵢy'ᵢ − x'ᵢyᵢ)`.
//!
//! The crate covers
//! - [`symplectic`]: validation and Euclidean normal form of skew forms,
//! - [`group`]: exact group algebra and the structural maps `F`, `π`, `π_ω`,
//! - [`calculus`]: horizontal gradient and sub-Laplacian of scalar fields,
//! - [`heatkernel`]: the hypoelliptic heat kernel by oscillatory quadrature,
//! - [`sampler`]: hypoelliptic Brownian motion with reproducible streams,
//! - [`lsi`]: entropy / Dirichlet-energy estimators and log-Sobolev scans,
//! - [`ccdist`]: upper bounds on the Carnot–Carathéodory distance.
//!
//! Most of the math is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the checks are calibrated for.

pub mod calculus;
pub mod ccdist;
pub mod error;
pub mod group;
pub mod heatkernel;
pub mod io;
pub mod lsi;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stats;
pub mod symplectic;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Context = group::GroupContext<f64>;
pub type Element = group::GroupElement<f64>;
pub type Algebra = group::AlgebraElement<f64>;
pub type Field = calculus::ScalarField<f64>;
pub type Form = symplectic::SkewForm<f64>;
pub type Normal = symplectic::NormalForm<f64>;
pub type Query = heatkernel::KernelQuery<f64>;
pub type Brownian = sampler::BrownianConfig<f64>;
pub type Batch = sampler::SampleBatch<f64>;
pub type Path = ccdist::HorizontalPath<f64>;

pub type Context32 = group::GroupContext<f32>;
pub type Element32 = group::GroupElement<f32>;
pub type Field32 = calculus::ScalarField<f32>;
pub type Form32 = symplectic::SkewForm<f32>;
