//! Spectral laboratory for weak solutions of Fokker-Planck equations driven
//! by stochastic PDEs with additive noise whose covariance is not trace
//! class.
//!
//! The crate assembles the full verification pipeline:
//!
//! * [`spectrum`] / [`torus`] / [`space`]: diagonal spectra, divergence-free
//!   trigonometric bases on the torus, and the H/V/E norm triple;
//! * [`ou`]: exactly sampled Ornstein-Uhlenbeck regularizations of the noise,
//!   exponential-moment estimates, and the damping calibration;
//! * [`drift`]: drift models (linear growth, projected Navier-Stokes
//!   nonlinearity) with structure checks and growth/coercivity audits;
//! * [`galerkin`]: stiff-exact integration of the projected random ODE with
//!   energy, Gronwall, moment, and dissipation-budget monitors;
//! * [`measure`]: empirical product measures, cylindrical test functions,
//!   Kolmogorov-operator residuals, pushforward, and tightness diagnostics;
//! * [`experiment`] / [`io`]: reproducible experiment orchestration with
//!   manifests, binary sample clouds, and CSV/JSON reports.
//!
//! Every layer below [`experiment`] is generic over the scalar type through
//! [`scalar::Real`]; the aliases at the crate root fix the `f64`
//! instantiation used by the end-to-end pipelines.

pub mod error;
pub mod scalar;

pub mod rng;
pub mod stats;

pub mod spectrum;
pub mod torus;

pub mod space;

pub mod drift;
pub mod galerkin;
pub mod measure;
pub mod ou;
pub mod testfn;

pub mod experiment;
pub mod io;

pub use error::{Error, Result};
pub use scalar::Real;

/// Scalar used by the end-to-end pipelines.
pub type Scalar = f64;

pub type Spectrum64 = spectrum::Spectrum<Scalar>;
pub type Field64 = spectrum::FieldCoefficients<Scalar>;
pub type GammaWeights64 = spectrum::GammaWeights<Scalar>;
pub type TorusBasis64 = torus::TorusBasis<Scalar>;
pub type Space64 = space::Space<Scalar>;
pub type OuParams64 = ou::OuParams<Scalar>;
pub type OuEnsemble64 = ou::OuEnsemble<Scalar>;
pub type SolverConfig64 = galerkin::SolverConfig<Scalar>;
pub type Trajectory64 = galerkin::Trajectory<Scalar>;
pub type TestFn64 = testfn::CylindricalTestFn<Scalar>;
pub type Measure64 = measure::EmpiricalProductMeasure<Scalar>;
