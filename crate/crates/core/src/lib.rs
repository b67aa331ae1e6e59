//! Nonanticipative rate-distortion analysis for finite-alphabet Markov
//! sources, source-channel matching, and uncoded symbol-by-symbol
//! transmission.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices. Simulation is `f64` only.
//!
//! ```
//! use causal_rd::{matching::match_source_to_channel, nrdf::bsms_nrdf, Source64};
//!
//! let pt = bsms_nrdf(&Source64::new(0.25).unwrap(), 0.1).unwrap();
//! assert!((pt.rate - 0.4122953056414114).abs() < 1e-12);
//! assert!(match_source_to_channel(0.25, 0.1).unwrap().matched);
//! ```

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact_oracle;
pub mod matching;
pub mod montecarlo;
pub mod nrdf;
pub mod probcore;
pub mod realization;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Pmf64 = probcore::Pmf<f64>;
pub type Kernel64 = probcore::StochasticKernel<f64>;
pub type Source64 = nrdf::BsmsSource<f64>;
pub type Distortion64 = nrdf::DistortionSpec<f64>;
pub type RdPoint64 = nrdf::RdPoint<f64>;
pub type Reproduction64 = nrdf::ReproductionKernel<f64>;
pub type Scheme64 = realization::TransmissionScheme<f64>;
pub type Chain64 = realization::JointChain<f64>;
pub type Table64 = exact_oracle::JointTable<f64>;

pub type Pmf32 = probcore::Pmf<f32>;
pub type Kernel32 = probcore::StochasticKernel<f32>;
pub type Source32 = nrdf::BsmsSource<f32>;
pub type Distortion32 = nrdf::DistortionSpec<f32>;
pub type RdPoint32 = nrdf::RdPoint<f32>;
pub type Reproduction32 = nrdf::ReproductionKernel<f32>;
pub type Scheme32 = realization::TransmissionScheme<f32>;
pub type Chain32 = realization::JointChain<f32>;
pub type Table32 = exact_oracle::JointTable<f32>;
