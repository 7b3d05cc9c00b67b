//! Resisting-oracle hard instances for smooth convex minimization over lp balls.
//!
//! The crate builds max-affine functions adaptively against a running
//! first-order method, smooths them with a local inf-convolution kernel so the
//! final instance reproduces every answer the method saw, and certifies the
//! resulting optimality gap against the closed-form lower bound.
//!
//! All numeric code is generic over [`Scalar`] (`f32`/`f64`); the `*F64`
//! aliases below are the instantiations the harness uses.

pub mod adversary;
pub mod error;
pub mod kernel;
pub mod methods;
pub mod oracle;
pub mod reductions;
pub mod scalar;
pub mod smoothing;
pub mod space;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type NormSpecF64 = space::NormSpec<f64>;
pub type BallF64 = space::Ball<f64>;
pub type KernelF64 = kernel::SmoothingKernel<f64>;
pub type MaxAffineF64 = smoothing::MaxAffine<f64>;
pub type SmoothedInstanceF64 = smoothing::SmoothedInstance<f64>;
pub type OracleAnswerF64 = oracle::OracleAnswer<f64>;
pub type AdversaryConfigF64 = adversary::AdversaryConfig<f64>;
pub type AdversaryStateF64 = adversary::AdversaryState<f64>;
pub type HardInstanceF64 = adversary::HardInstance<f64>;
pub type MethodF64 = methods::Method<f64>;
pub type MethodTraceF64 = methods::MethodTrace<f64>;
pub type LiftMapF64 = reductions::LiftMap<f64>;
pub type LiftedInstanceF64 = reductions::LiftedInstance<f64>;

pub type NormSpecF32 = space::NormSpec<f32>;
pub type BallF32 = space::Ball<f32>;
pub type KernelF32 = kernel::SmoothingKernel<f32>;
pub type SmoothedInstanceF32 = smoothing::SmoothedInstance<f32>;
