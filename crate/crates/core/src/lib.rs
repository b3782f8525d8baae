//! Single-particle quantum evolution computed from fluid trajectories.
//!
//! The Lagrangian solver integrates the equation of motion of a continuum of
//! labelled fluid elements whose internal potential is built from the density
//! gradient; the wavefunction is then reconstructed from the paths alone. An
//! independent split-step Schrödinger solver, a discrete quantum trajectory
//! method and closed-form Gaussian solutions serve as cross-checks.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`). The
//! `*64` aliases below fix the scalar to `f64`, which is what the quoted
//! tolerances assume.

pub mod benchmarks;
pub mod error;
pub mod interp;
pub mod kinematics;
pub mod lagrangian;
pub mod model;
pub mod qtm;
pub mod reconstruction;
pub mod reference;
pub mod scalar;
pub mod stencil;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub use num_complex::Complex;

pub type Complex64 = Complex<f64>;
pub type PhysicsParams64 = model::PhysicsParams<f64>;
pub type Potential64 = model::Potential<f64>;
pub type InitialState64 = model::InitialState<f64>;
pub type EulerianField64 = model::EulerianField<f64>;
pub type TrajectoryState64 = model::TrajectoryState<f64>;
pub type UniformGrid64 = model::UniformGrid<f64>;
pub type DeformGradient64 = kinematics::DeformGradient<f64>;
pub type SolverConfig64 = lagrangian::SolverConfig<f64>;
pub type Evolution64 = lagrangian::Evolution<f64>;
pub type ParticleSet64 = qtm::ParticleSet<f64>;
pub type QtmConfig64 = qtm::QtmConfig<f64>;
pub type ReferenceRun64 = reference::ReferenceRun<f64>;
