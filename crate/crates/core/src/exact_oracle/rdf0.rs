use crate::error::{Error, Result};
use crate::probcore::{binary_entropy_unchecked, Pmf};
use crate::scalar::Scalar;

/// Points per axis of the coarse search.
pub const DEFAULT_GRID: usize = 2001;

/// Single-letter binary RDF `min I(X; Y)` subject to `P(X != Y) <= D`, by
/// exhaustive search over the test channel.
///
/// The channel is `u = P(y=1 | x=0)`, `v = P(y=0 | x=1)`. A `grid x grid`
/// scan is followed by a pattern search that also slides along the
/// distortion constraint.
pub fn brute_force_rdf_n0<T: Scalar>(marginal: &Pmf<T>, d: T) -> Result<T> {
    brute_force_rdf_n0_with_grid(marginal, d, DEFAULT_GRID)
}

pub fn brute_force_rdf_n0_with_grid<T: Scalar>(marginal: &Pmf<T>, d: T, grid: usize) -> Result<T> {
    if marginal.len() != 2 {
        return Err(Error::shape(format!("binary marginal required, got {} symbols", marginal.len())));
    }
    if d.is_nan() {
        return Err(Error::domain("distortion is NaN"));
    }
    if d < T::zero() {
        return Err(Error::Range(format!("distortion {d} is infeasible")));
    }
    if grid < 2 {
        return Err(Error::domain("grid needs at least two points per axis"));
    }
    let (q0, q1) = (marginal[0], marginal[1]);
    let one = T::one();
    let info = |u: T, v: T| {
        binary_entropy_unchecked(q0 * u + q1 * (one - v))
            - q0 * binary_entropy_unchecked(u)
            - q1 * binary_entropy_unchecked(v)
    };
    let feasible = |u: T, v: T| u >= T::zero() && u <= one && v >= T::zero() && v <= one && q0 * u + q1 * v <= d;

    let scale = T::from_usize(grid - 1).unwrap();
    let mut best = (T::infinity(), T::zero(), T::zero());
    for i in 0..grid {
        let u = T::from_usize(i).unwrap() / scale;
        for j in 0..grid {
            let v = T::from_usize(j).unwrap() / scale;
            if !feasible(u, v) {
                // v only grows along the row.
                break;
            }
            let val = info(u, v);
            if val < best.0 {
                best = (val, u, v);
            }
        }
    }

    // Slide v to the constraint for a given u, and u for a given v.
    let fit_v = |u: T| if q1 > T::zero() { ((d - q0 * u) / q1).min(one) } else { one };
    let fit_u = |v: T| if q0 > T::zero() { ((d - q1 * v) / q0).min(one) } else { one };
    let (mut val, mut u, mut v) = best;
    let mut h = one / scale;
    let floor = T::epsilon() * T::lit(16.0);
    while h > floor {
        let candidates = [
            (u + h, v),
            (u - h, v),
            (u, v + h),
            (u, v - h),
            (u + h, fit_v(u + h)),
            (u - h, fit_v(u - h)),
            (fit_u(v + h), v + h),
            (fit_u(v - h), v - h),
        ];
        let mut moved = false;
        for (cu, cv) in candidates {
            if feasible(cu, cv) {
                let cand = info(cu, cv);
                if cand < val {
                    (val, u, v, moved) = (cand, cu, cv, true);
                }
            }
        }
        if !moved {
            h /= T::lit(2.0);
        }
    }
    Ok(val.max(T::zero()))
}
