//! Seeded simulation of transmission schemes, excess-distortion estimates
//! and the Hoeffding-type concentration bound for the BSMS realization.
//!
//! Trial `t` draws from its own ChaCha8 stream (`seed`, stream `t`), so the
//! records do not depend on how trials are spread over threads.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_oracle::{self, enumerate_joint, EnumerationOptions, Var};
use crate::nrdf::{bsms_nrdf, BsmsSource};
use crate::probcore::StochasticKernel;
use crate::realization::{build_scheme, joint_chain, InitialState, SchemeKind, TransmissionScheme};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Last time index; each trial has `n + 1` symbols.
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialState,
}

impl SimConfig {
    pub fn new(n: usize, trials: u64, seed: u64) -> Self {
        Self { n, trials, seed, initial: InitialState::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("at least one trial is required"));
        }
        Ok(())
    }
}

/// Per-trial totals over `n + 1` symbols.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub distortion: f64,
    pub cost: Option<f64>,
}

enum Sampler {
    Fixed(usize),
    Weighted(WeightedIndex<f64>),
}

impl Sampler {
    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            Sampler::Fixed(k) => *k,
            Sampler::Weighted(w) => w.sample(rng),
        }
    }
}

fn samplers(k: &StochasticKernel<f64>) -> Result<Vec<Sampler>> {
    k.rows()
        .iter()
        .map(|row| match row.iter().position(|&v| v == 1.0) {
            Some(i) => Ok(Sampler::Fixed(i)),
            None => WeightedIndex::new(row.iter().copied())
                .map(Sampler::Weighted)
                .map_err(|e| Error::domain(format!("unsamplable row: {e}"))),
        })
        .collect()
}

/// Draws `trials` independent trajectories and returns their distortion and
/// cost sums, in trial order.
pub fn simulate_trials(scheme: &TransmissionScheme<f64>, config: &SimConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let al = scheme.alphabets();
    let src = samplers(scheme.source())?;
    let enc = samplers(scheme.encoder())?;
    let ch = samplers(scheme.channel())?;
    let dec = samplers(scheme.decoder())?;
    let init = scheme.initial_distribution(&config.initial)?;
    let init_pick =
        WeightedIndex::new(init.iter().map(|e| e.1)).map_err(|e| Error::domain(format!("initial law: {e}")))?;
    let rho = scheme.distortion();
    let cost = scheme.cost();

    let run = |trial: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(trial);
        let start = init[if init.len() == 1 { 0 } else { init_pick.sample(&mut rng) }].0;
        let (mut xp, mut bp, mut yp) = (start.x, start.b, start.y);
        let mut s = 0.0;
        let mut c = 0.0;
        for _ in 0..=config.n {
            let x = src[xp].draw(&mut rng);
            let a = enc[x * al.b + bp].draw(&mut rng);
            let b = ch[a * al.b + bp].draw(&mut rng);
            let y = dec[b * al.y + yp].draw(&mut rng);
            s += rho.get(x, y);
            if let Some(table) = cost {
                c += table[x][yp];
            }
            (xp, bp, yp) = (x, b, y);
        }
        TrialRecord { distortion: s, cost: cost.map(|_| c) }
    };
    Ok((0..config.trials).into_par_iter().map(run).collect())
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Whether `p` lies within `k` standard errors of the empirical frequency in
/// the score-test sense, i.e. inside the Wilson interval at `z = k`.
pub fn within_standard_errors(successes: u64, trials: u64, p: f64, k: f64) -> bool {
    let (lo, hi) = wilson_interval(successes, trials, k);
    lo <= p && p <= hi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessDistortionReport {
    pub n: usize,
    pub trials: u64,
    pub d: f64,
    pub delta: Option<f64>,
    pub exceed_count: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub exact: Option<f64>,
    pub bound: Option<f64>,
    /// Average cost per symbol.
    pub avg_cost: Option<f64>,
}

/// Empirical `P{S_n > (n + 1) d}` with a 95% Wilson interval.
pub fn excess_probability(records: &[TrialRecord], n: usize, d: f64) -> Result<ExcessDistortionReport> {
    if records.is_empty() {
        return Err(Error::domain("no trial records"));
    }
    let threshold = (n + 1) as f64 * d;
    let exceed_count =
        records.iter().filter(|r| d < 0.0 || exact_oracle::exceeds(r.distortion, threshold)).count() as u64;
    let trials = records.len() as u64;
    let (ci_low, ci_high) = wilson_interval(exceed_count, trials, Z95);
    let avg_cost = records[0]
        .cost
        .map(|_| records.iter().map(|r| r.cost.unwrap_or(0.0)).sum::<f64>() / (trials as f64 * (n + 1) as f64));
    Ok(ExcessDistortionReport {
        n,
        trials,
        d,
        delta: None,
        exceed_count,
        estimate: exceed_count as f64 / trials as f64,
        ci_low,
        ci_high,
        exact: None,
        bound: None,
        avg_cost,
    })
}

/// Sample mean and standard error of a per-symbol statistic.
pub fn mean_and_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.clone().sum::<f64>() / k;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Minorization constant.
    pub lambda: f64,
    /// Sup-norm of the per-symbol distortion.
    pub f_norm: f64,
    pub m_h: f64,
    pub delta: f64,
    pub n: usize,
}

impl BoundParams {
    /// `λ = min{p, 1-p} · min{α, β, 1-α, 1-β}` with `‖f‖ = m_h = 1`.
    pub fn for_bsms(p: f64, d: f64, delta: f64, n: usize) -> Result<Self> {
        let pt = bsms_nrdf(&BsmsSource::new(p)?, d)?;
        let (a, b) = (pt.alpha.unwrap(), pt.beta.unwrap());
        let lambda = p.min(1.0 - p) * a.min(b).min(1.0 - a).min(1.0 - b);
        Ok(Self { lambda, f_norm: 1.0, m_h: 1.0, delta, n })
    }

    /// The bound holds for `n` strictly above this.
    pub fn validity_threshold(&self) -> f64 {
        2.0 * self.f_norm * self.m_h / (self.lambda * self.delta)
    }

    pub fn is_valid(&self) -> bool {
        // Relative guard so that thresholds landing on an integer stay strict.
        self.n as f64 > self.validity_threshold() * (1.0 + 1e-12)
    }
}

/// `exp(-λ²((n+1)δ - 2‖f‖m/λ)² / (2(n+1)‖f‖²m²))`, or `None` at or below
/// the validity threshold. Clamped to `[0, 1]`.
pub fn hoeffding_bound(params: &BoundParams) -> Result<Option<f64>> {
    let BoundParams { lambda, f_norm, m_h, delta, n } = *params;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain(format!("lambda = {lambda} must lie in (0, 1]")));
    }
    if !(delta > 0.0) || !(f_norm > 0.0) || !(m_h > 0.0) {
        return Err(Error::domain("delta, f_norm and m_h must be positive"));
    }
    if !params.is_valid() {
        return Ok(None);
    }
    let n1 = (n + 1) as f64;
    let shift = n1 * delta - 2.0 * f_norm * m_h / lambda;
    let exponent = -(lambda * lambda) * shift * shift / (2.0 * n1 * f_norm * f_norm * m_h * m_h);
    Ok(Some(exponent.exp().clamp(0.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub n: usize,
    pub delta: f64,
    pub lambda: f64,
    pub bound: Option<f64>,
}

/// [`hoeffding_bound`] over an ascending grid of horizons.
pub fn bound_curve(p: f64, d: f64, delta: f64, n_grid: &[usize]) -> Result<Vec<BoundPoint>> {
    if n_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("horizon grid must be sorted ascending"));
    }
    n_grid
        .iter()
        .map(|&n| {
            let params = BoundParams::for_bsms(p, d, delta, n)?;
            Ok(BoundPoint { n, delta, lambda: params.lambda, bound: hoeffding_bound(&params)? })
        })
        .collect()
}

/// Excess threshold, given directly or as a margin over the stationary
/// per-symbol distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Direct(f64),
    Margin(f64),
}

/// Full BSMS experiment: simulate, estimate, attach exact and bound values.
///
/// `exact` is filled when the `(X, Y)` table fits `budget`; `bound` when
/// `δ = d - E[S_n]/(n+1) > 0` and `n` is above the validity threshold.
pub fn run_excess_experiment(
    kind: SchemeKind,
    p: f64,
    dist: f64,
    config: &SimConfig,
    threshold: Threshold,
    budget: u128,
) -> Result<ExcessDistortionReport> {
    let scheme = build_scheme(kind, p, dist)?;
    let stationary = joint_chain(&scheme)?.expected_distortion;
    let (d, delta) = match threshold {
        Threshold::Direct(d) => (d, d - stationary),
        Threshold::Margin(delta) if delta > 0.0 => (stationary + delta, delta),
        Threshold::Margin(delta) => return Err(Error::domain(format!("margin {delta} must be positive"))),
    };
    let records = simulate_trials(&scheme, config)?;
    let mut report = excess_probability(&records, config.n, d)?;
    report.delta = Some(delta);
    let opts = EnumerationOptions { initial: config.initial, budget };
    report.exact = match enumerate_joint(&scheme, config.n, &[Var::X, Var::Y], &opts) {
        Ok(table) => Some(exact_oracle::excess_distortion_exact(&table, scheme.distortion(), d)?),
        Err(Error::Capacity { .. }) => None,
        Err(e) => return Err(e),
    };
    if delta > 0.0 {
        report.bound = hoeffding_bound(&BoundParams::for_bsms(p, dist, delta, config.n)?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nrdf::DistortionSpec;
    use crate::realization::{build_matched_scheme, build_unmatched_scheme};

    #[test]
    fn degenerate_kernels_are_deterministic() {
        let id = |c: &[usize]| c[0];
        let s = TransmissionScheme::new(
            SchemeKind::Custom,
            StochasticKernel::transition_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            StochasticKernel::deterministic(vec![2, 2], 2, id).unwrap(),
            StochasticKernel::deterministic(vec![2, 2], 2, |c| 1 - c[0]).unwrap(),
            StochasticKernel::deterministic(vec![2, 2], 2, id).unwrap(),
            DistortionSpec::hamming(2),
        )
        .unwrap();
        let cfg =
            SimConfig { initial: InitialState::Fixed { x_prev: 0, b_prev: 0, y_prev: 0 }, ..SimConfig::new(0, 1, 3) };
        let r = simulate_trials(&s, &cfg).unwrap();
        assert_eq!(r, vec![TrialRecord { distortion: 1.0, cost: None }]);
        let r = simulate_trials(&s, &SimConfig { n: 9, ..cfg }).unwrap();
        assert_eq!(r[0].distortion, 10.0);
        assert!(simulate_trials(&s, &SimConfig { trials: 0, ..cfg }).is_err());
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let s = build_matched_scheme(0.25, 0.1, true).unwrap();
        let cfg = SimConfig::new(50, 2000, 42);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_trials(&s, &cfg).unwrap())
        };
        assert_eq!(run(1), run(8));
        let other = simulate_trials(&s, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(run(2), other);
    }

    #[test]
    fn mean_distortion_near_d() {
        let s = build_unmatched_scheme(0.25, 0.1).unwrap();
        // The default start biases the mean at short horizons; the stationary one does not.
        let cfg = SimConfig { initial: InitialState::Stationary, ..SimConfig::new(100, 20_000, 1) };
        let r = simulate_trials(&s, &cfg).unwrap();
        let (mean, se) = mean_and_stderr(r.iter().map(|t| t.distortion / 101.0));
        assert!((mean - 0.1).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn excess_edges() {
        let recs = vec![TrialRecord { distortion: 1.0, cost: Some(2.0) }; 50];
        let r = excess_probability(&recs, 9, 0.5).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.ci_low == 0.0 && r.ci_high > 0.0);
        assert_eq!(r.avg_cost, Some(0.2));
        assert_eq!(excess_probability(&recs, 9, -0.1).unwrap().estimate, 1.0);
        // S = 1 sits exactly on (n + 1) d = 1.
        assert_eq!(excess_probability(&recs, 9, 0.1).unwrap().estimate, 0.0);
        assert!(excess_probability(&[], 1, 0.1).is_err());
    }

    #[test]
    fn wilson_properties() {
        let (lo, hi) = wilson_interval(30, 100, Z95);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!((lo - 0.218_948_852_949_327_6).abs() < 1e-12 && (hi - 0.395_848_546_333_466_6).abs() < 1e-12);
        assert!(within_standard_errors(30, 100, 0.3, 3.0));
        assert!(!within_standard_errors(30, 100, 0.6, 3.0));
        let (lo, hi) = wilson_interval(100, 100, Z95);
        assert!(lo < 1.0 && hi == 1.0);
    }

    #[test]
    fn lambda_and_threshold() {
        let b = BoundParams::for_bsms(0.25, 0.1, 0.01, 22_400).unwrap();
        assert!((b.lambda - 1.0 / 112.0).abs() < 1e-15);
        assert!((b.validity_threshold() - 22_400.0).abs() < 1e-8);
        assert_eq!(hoeffding_bound(&b).unwrap(), None);
        let just = hoeffding_bound(&BoundParams { n: 22_401, ..b }).unwrap().unwrap();
        assert!(just < 1.0 && just > 0.999_999);
        let mut prev = just;
        for n in [22_500, 30_000, 100_000, 1_000_000, 10_000_000_000] {
            let v = hoeffding_bound(&BoundParams { n, ..b }).unwrap().unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-6);
        assert!(hoeffding_bound(&BoundParams { lambda: 0.0, ..b }).is_err());
        assert!(hoeffding_bound(&BoundParams { delta: -1.0, ..b }).is_err());
    }

    #[test]
    fn curve() {
        let c = bound_curve(0.25, 0.1, 0.01, &[1000, 30_000, 100_000, 1_000_000]).unwrap();
        assert!(c[0].bound.is_none());
        let vals: Vec<f64> = c[1..].iter().map(|p| p.bound.unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]) && vals.iter().all(|&v| v > 0.0));
        assert_eq!(bound_curve(0.25, 0.1, 0.01, &[5]).unwrap().len(), 1);
        assert!(bound_curve(0.25, 0.1, 0.01, &[10, 5]).is_err());
    }

    // Wherever the bound is valid at an enumerable horizon, the threshold is
    // already past the largest possible per-symbol distortion.
    #[test]
    fn bound_dominates_exact_where_both_exist() {
        let mut valid = 0;
        for i in 1..19 {
            let p = 0.05 * i as f64;
            for j in 0..12 {
                let dist = 0.02 + 0.04 * j as f64;
                for n in 1..=8 {
                    let mut table = None;
                    for k in 1..=40 {
                        let delta = 0.05 * k as f64;
                        let Some(b) = hoeffding_bound(&BoundParams::for_bsms(p, dist, delta, n).unwrap()).unwrap()
                        else {
                            continue;
                        };
                        valid += 1;
                        assert!(dist + delta > 1.0, "p={p} D={dist} delta={delta} n={n}");
                        let t = table.get_or_insert_with(|| {
                            let s = build_unmatched_scheme(p, dist).unwrap();
                            enumerate_joint(&s, n, &[Var::X, Var::Y], &EnumerationOptions::default()).unwrap()
                        });
                        let rho = DistortionSpec::hamming(2);
                        assert!(exact_oracle::excess_distortion_exact(t, &rho, dist + delta).unwrap() <= b);
                    }
                }
            }
        }
        assert!(valid > 0);
    }

    #[test]
    fn experiment_attaches_exact_and_skips_bound() {
        let cfg = SimConfig::new(4, 20_000, 9);
        let r = run_excess_experiment(SchemeKind::Unmatched, 0.25, 0.1, &cfg, Threshold::Direct(0.2), 1 << 20).unwrap();
        let exact = r.exact.unwrap();
        assert!(within_standard_errors(r.exceed_count, r.trials, exact, 3.0));
        assert!(r.bound.is_none());
        assert!((r.delta.unwrap() - 0.1).abs() < 1e-12);
        let r = run_excess_experiment(SchemeKind::Matched, 0.25, 0.1, &cfg, Threshold::Margin(0.05), 16).unwrap();
        assert!(r.exact.is_none() && r.avg_cost.is_some());
        assert!((r.d - 0.15).abs() < 1e-12);
    }
}
