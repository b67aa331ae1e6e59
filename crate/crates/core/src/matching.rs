//! Constrained capacity of the two-state binary channel and the
//! rate/capacity matching check for the BSMS.
//!
//! Conditioning on `s_i = x_i ⊕ y_{i-1}` splits the reproduction channel into
//! two binary symmetric channels with crossovers `1 - α` (`s = 0`) and `1 - β`
//! (`s = 1`). With `κ` the expected use of the `1 - α` channel,
//!
//! ```text
//! C(κ) = H(β(1 - κ) + (1 - α)κ) - κ H(α) - (1 - κ) H(β).
//! ```
//!
//! Setting `κ = m` makes `C(κ)` equal the nonanticipative rate `H(m) - H(D)`.
//! The cost level `κ` plays the role of the transmission cost budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nrdf::{bsms_nrdf, BsmsSource};
use crate::probcore::binary_entropy_unchecked;
use crate::scalar::Scalar;

/// Gap allowed between rate and capacity, in bits, for a match.
pub const MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint<T> {
    pub kappa: T,
    /// Bits per channel use.
    pub capacity: T,
    pub alpha: T,
    pub beta: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport<T> {
    pub p: T,
    pub distortion: T,
    /// Matched cost level `κ = m`.
    pub m: T,
    pub alpha: T,
    pub beta: T,
    pub rate: T,
    pub capacity: T,
    pub gap: T,
    pub matched: bool,
}

fn check_unit<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} outside [0, 1]")))
    }
}

pub fn constrained_capacity<T: Scalar>(alpha: T, beta: T, kappa: T) -> Result<CapacityPoint<T>> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    check_unit("kappa", kappa)?;
    let one = T::one();
    let mix = beta * (one - kappa) + (one - alpha) * kappa;
    let mut capacity = binary_entropy_unchecked(mix)
        - kappa * binary_entropy_unchecked(alpha)
        - (one - kappa) * binary_entropy_unchecked(beta);
    if capacity < T::zero() && capacity > -T::lit(1e-14) {
        capacity = T::zero();
    }
    Ok(CapacityPoint { kappa, capacity, alpha, beta })
}

pub fn capacity_curve<T: Scalar>(alpha: T, beta: T, kappa_grid: &[T]) -> Result<Vec<CapacityPoint<T>>> {
    kappa_grid.iter().map(|&k| constrained_capacity(alpha, beta, k)).collect()
}

/// Evaluates the nonanticipative rate and the capacity at `κ = m` for a
/// BSMS(p) at distortion `D`, `0 < D <= 1/2`.
pub fn match_source_to_channel<T: Scalar>(p: T, d: T) -> Result<MatchingReport<T>> {
    let source = BsmsSource::new(p)?;
    if !(d > T::zero() && d <= T::lit(0.5)) {
        return Err(Error::domain(format!("distortion {d} must lie in (0, 1/2]")));
    }
    let point = bsms_nrdf(&source, d)?;
    let (m, alpha, beta) = (point.m.unwrap(), point.alpha.unwrap(), point.beta.unwrap());
    let cap = constrained_capacity(alpha, beta, m)?;
    let gap = (point.rate - cap.capacity).abs();
    Ok(MatchingReport {
        p,
        distortion: d,
        m,
        alpha,
        beta,
        rate: point.rate,
        capacity: cap.capacity,
        gap,
        matched: gap <= T::lit(MATCH_TOLERANCE),
    })
}
