use std::collections::HashMap;

use super::table::{JointTable, Var};
use crate::error::{Error, Result};
use crate::nrdf::DistortionSpec;
use crate::scalar::Scalar;

/// Relative slack when comparing an accumulated distortion with `(n + 1) d`,
/// so that grid thresholds like `k / (n + 1)` do not flip on rounding.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Law of `S_n = Σ_i ρ(X_i, Y_i)` as `(value, probability)` pairs, sorted by value.
pub fn distortion_distribution<T: Scalar>(table: &JointTable<T>, rho: &DistortionSpec<T>) -> Result<Vec<(T, T)>> {
    let xy = table.marginalize(&[Var::X, Var::Y])?;
    let ny = xy.size_of(Var::Y).unwrap();
    if xy.size_of(Var::X) != Some(rho.source_alphabet()) || ny != rho.reproduction_alphabet() {
        return Err(Error::shape("distortion table does not match the table alphabets"));
    }
    let step = xy.step();
    let n = xy.horizon();
    let letter: Vec<T> = (0..step).map(|d| rho.get(d / ny, d % ny)).collect();
    let mut buckets: HashMap<u64, (T, T)> = HashMap::new();
    let mut digits = vec![0; n + 1];
    for (idx, &w) in xy.pmf().iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let mut rest = idx;
        for d in digits.iter_mut().rev() {
            *d = rest % step;
            rest /= step;
        }
        // Accumulate in time order so equal trajectories give equal bits.
        let s = digits.iter().fold(T::zero(), |acc, &d| acc + letter[d]);
        buckets.entry(s.as_f64().to_bits()).or_insert((s, T::zero())).1 += w;
    }
    let mut out: Vec<(T, T)> = buckets.into_values().collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

pub(crate) fn exceeds<T: Scalar>(s: T, threshold: T) -> bool {
    s - threshold > T::lit(THRESHOLD_SLACK) * (T::one() + threshold.abs())
}

fn excess_from<T: Scalar>(dist: &[(T, T)], n: usize, d: T) -> T {
    if d < T::zero() {
        return dist.iter().fold(T::zero(), |acc, e| acc + e.1);
    }
    let threshold = T::from_usize(n + 1).unwrap() * d;
    // Folding from +0 keeps an empty sum from printing as -0.
    dist.iter().filter(|e| exceeds(e.0, threshold)).fold(T::zero(), |acc, e| acc + e.1)
}

/// `P{S_n > (n + 1) d}`.
pub fn excess_distortion_exact<T: Scalar>(table: &JointTable<T>, rho: &DistortionSpec<T>, d: T) -> Result<T> {
    let dist = distortion_distribution(table, rho)?;
    Ok(excess_from(&dist, table.horizon(), d))
}

/// Smallest `d` with `P{S_n > (n + 1) d} <= epsilon`.
///
/// The excess probability only drops at support points of `S_n`, so the
/// search runs over `{0} ∪ {s / (n + 1)}`. For Hamming distortion that is
/// the grid `k / (n + 1)`.
pub fn min_excess_distortion<T: Scalar>(table: &JointTable<T>, rho: &DistortionSpec<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::domain(format!("epsilon = {epsilon} must be positive")));
    }
    let dist = distortion_distribution(table, rho)?;
    let steps = T::from_usize(table.horizon() + 1).unwrap();
    let candidates = std::iter::once(T::zero()).chain(dist.iter().map(|e| e.0 / steps));
    for d in candidates {
        if excess_from(&dist, table.horizon(), d) <= epsilon {
            return Ok(d);
        }
    }
    Ok(dist.last().map_or(T::zero(), |e| e.0 / steps))
}

/// `E[S_n] / (n + 1)`.
pub fn expected_distortion<T: Scalar>(table: &JointTable<T>, rho: &DistortionSpec<T>) -> Result<T> {
    let dist = distortion_distribution(table, rho)?;
    let steps = T::from_usize(table.horizon() + 1).unwrap();
    Ok(dist.iter().map(|&(s, p)| s * p).sum::<T>() / steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_oracle::table::{enumerate_joint, EnumerationOptions};
    use crate::realization::{build_unmatched_scheme, InitialState};

    fn table(n: usize, initial: InitialState) -> JointTable<f64> {
        let s = build_unmatched_scheme(0.25f64, 0.1).unwrap();
        let opts = EnumerationOptions { initial, ..Default::default() };
        enumerate_joint(&s, n, &[Var::X, Var::Y], &opts).unwrap()
    }

    #[test]
    fn trivial_thresholds() {
        let t = table(4, InitialState::default());
        let rho = DistortionSpec::hamming(2);
        assert_eq!(excess_distortion_exact(&t, &rho, 1.0).unwrap(), 0.0);
        assert!((excess_distortion_exact(&t, &rho, -0.01).unwrap() - 1.0).abs() < 1e-12);
        // S_n = k exactly sits on the grid point k / (n + 1) and must not count.
        let dist = distortion_distribution(&t, &rho).unwrap();
        assert_eq!(dist.len(), 6);
        let at2 = excess_distortion_exact(&t, &rho, 2.0 / 5.0).unwrap();
        let above2: f64 = dist.iter().filter(|e| e.0 > 2.5).map(|e| e.1).sum();
        assert!((at2 - above2).abs() < 1e-15);
    }

    #[test]
    fn min_excess_grid() {
        let t = table(8, InitialState::default());
        let rho = DistortionSpec::hamming(2);
        assert_eq!(min_excess_distortion(&t, &rho, 1.0).unwrap(), 0.0);
        let dist = distortion_distribution(&t, &rho).unwrap();
        let max_support = dist.last().unwrap().0 / 9.0;
        assert_eq!(min_excess_distortion(&t, &rho, 1e-300).unwrap(), max_support);
        let mut last = f64::INFINITY;
        for eps in [0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.99] {
            let d = min_excess_distortion(&t, &rho, eps).unwrap();
            assert!(d <= last);
            assert!(excess_distortion_exact(&t, &rho, d).unwrap() <= eps);
            let k = (d * 9.0).round();
            assert!((d * 9.0 - k).abs() < 1e-12);
            if k > 0.0 {
                assert!(excess_distortion_exact(&t, &rho, (k - 1.0) / 9.0).unwrap() > eps);
            }
            last = d;
        }
        assert!(min_excess_distortion(&t, &rho, 0.0).is_err());
    }

    #[test]
    fn expected_distortion_is_d_under_stationary_start() {
        let rho = DistortionSpec::hamming(2);
        let e = expected_distortion(&table(6, InitialState::Stationary), &rho).unwrap();
        assert!((e - 0.1).abs() < 1e-12);
        let e = expected_distortion(&table(10, InitialState::default()), &rho).unwrap();
        assert!((e - 0.1).abs() < 2e-2);
    }
}
