//! Nonanticipative rate-distortion function.
//!
//! The optimal causal reproduction kernel is an exponential tilt of its own
//! one-step output marginal,
//!
//! ```text
//! P*(y_i | x_i, y_{i-1}) = e^{s ρ(x_i, y_i)} P*(y_i | y_{i-1}) / Z(x_i, y_{i-1}),
//! ```
//!
//! and the rate is `s D - E[ln Z]` (converted to bits). For the binary
//! symmetric Markov source with Hamming distortion the solution has a closed
//! form ([`bsms_nrdf`], [`bsms_reproduction_kernel`]); for general stationary
//! Markov sources [`fixed_point_solve`] alternates the tilt with a
//! recomputation of the marginal until they agree, and
//! [`distortion_bisection`] tunes `s` to meet a distortion target.
//!
//! `s` is always on the natural-log scale. Rates are reported in bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{binary_entropy_unchecked, kl_divergence_slices, stationary_from_matrix, StochasticKernel};
use crate::scalar::Scalar;

/// Binary symmetric Markov source with flip probability `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsmsSource<T> {
    p: T,
}

impl<T: Scalar> BsmsSource<T> {
    pub fn new(p: T) -> Result<Self> {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::domain(format!("flip probability {p} must lie in (0, 1)")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// `P(x_i | x_{i-1})` as a 2x2 transition kernel.
    pub fn kernel(&self) -> StochasticKernel<T> {
        let (p, q) = (self.p, T::one() - self.p);
        StochasticKernel::transition_matrix(vec![vec![q, p], vec![p, q]]).expect("valid BSMS transition matrix")
    }

    /// `m = 1 - p - D + 2pD`, the stationary probability that `X_i = Y_{i-1}`.
    pub fn m(&self, d: T) -> T {
        T::one() - self.p - d + T::lit(2.0) * self.p * d
    }
}

/// Single-letter distortion table `ρ(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec<T> {
    rho: Vec<Vec<T>>,
}

impl<T: Scalar> DistortionSpec<T> {
    pub fn new(rho: Vec<Vec<T>>) -> Result<Self> {
        let cols = rho.first().map(Vec::len).unwrap_or(0);
        if rho.is_empty() || cols == 0 || rho.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("distortion table must be a nonempty rectangle"));
        }
        if rho.iter().flatten().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::domain("distortion entries must be finite and nonnegative"));
        }
        Ok(Self { rho })
    }

    pub fn hamming(size: usize) -> Self {
        let rho = (0..size).map(|x| (0..size).map(|y| if x == y { T::zero() } else { T::one() }).collect()).collect();
        Self { rho }
    }

    pub fn source_alphabet(&self) -> usize {
        self.rho.len()
    }

    pub fn reproduction_alphabet(&self) -> usize {
        self.rho[0].len()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.rho[x][y]
    }

    pub fn table(&self) -> &[Vec<T>] {
        &self.rho
    }
}

/// One solved point of the rate-distortion curve.
///
/// `m`, `alpha` and `beta` are filled for the binary case only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint<T> {
    pub distortion: T,
    /// Bits per symbol.
    pub rate: T,
    /// Lagrange multiplier `s <= 0`, natural-log scale.
    pub multiplier: T,
    pub m: Option<T>,
    pub alpha: Option<T>,
    pub beta: Option<T>,
}

/// The optimal reproduction `P*(y | x, y_prev)` with its marginal `P*(y | y_prev)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReproductionKernel<T> {
    pub kernel: StochasticKernel<T>,
    pub marginal: StochasticKernel<T>,
}

impl<T: Scalar> ReproductionKernel<T> {
    /// `(α, β) = (P(0 | x=0, y_prev=0), P(0 | x=0, y_prev=1))` for binary kernels.
    pub fn binary_parameters(&self) -> Option<(T, T)> {
        let k = &self.kernel;
        (k.condition_alphabets() == [2, 2] && k.output_alphabet() == 2)
            .then(|| (k.prob(&[0, 0], 0), k.prob(&[0, 1], 0)))
    }

    /// Max-norm gap between the stored marginal and the x-average of the kernel
    /// under the stationary law of `(X_i, Y_{i-1})`.
    pub fn consistency_residual(&self, source: &StochasticKernel<T>) -> Result<T> {
        let induced = induced_marginal(source, &self.kernel)?;
        self.marginal.max_abs_diff(&induced)
    }
}

fn check_source<T: Scalar>(source: &StochasticKernel<T>) -> Result<usize> {
    let nx = source.output_alphabet();
    if source.condition_alphabets() != [nx] {
        return Err(Error::shape(format!(
            "source must be a square one-step kernel, got {:?} -> {}",
            source.condition_alphabets(),
            nx
        )));
    }
    Ok(nx)
}

fn check_reproduction<T: Scalar>(source: &StochasticKernel<T>, kernel: &StochasticKernel<T>) -> Result<(usize, usize)> {
    let nx = check_source(source)?;
    let ny = kernel.output_alphabet();
    if kernel.condition_alphabets() != [nx, ny] {
        return Err(Error::shape(format!(
            "reproduction kernel must be conditioned on (x, y_prev) = [{nx}, {ny}], got {:?}",
            kernel.condition_alphabets()
        )));
    }
    Ok((nx, ny))
}

/// Stationary law of the pair chain `(X_i, Y_i)` driven by `source` and
/// `kernel(y_i | x_i, y_{i-1})`, indexed `x * |Y| + y`.
pub(crate) fn pair_stationary<T: Scalar>(source: &StochasticKernel<T>, kernel: &StochasticKernel<T>) -> Result<Vec<T>> {
    let (nx, ny) = check_reproduction(source, kernel)?;
    let nz = nx * ny;
    let mut t = vec![T::zero(); nz * nz];
    for x in 0..nx {
        for y in 0..ny {
            let from = x * ny + y;
            for x2 in 0..nx {
                let px = source.prob(&[x], x2);
                let row = kernel.row(&[x2, y]);
                for (y2, &py) in row.iter().enumerate() {
                    t[from * nz + x2 * ny + y2] = px * py;
                }
            }
        }
    }
    stationary_from_matrix(&t, nz)
}

/// Stationary law of `(X_i, Y_{i-1})` from the pair law of `(X_{i-1}, Y_{i-1})`.
pub(crate) fn predecessor_law<T: Scalar>(source: &StochasticKernel<T>, pair: &[T], ny: usize) -> Vec<T> {
    let nx = source.output_alphabet();
    let mut out = vec![T::zero(); nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            let w = pair[x * ny + y];
            for x2 in 0..nx {
                out[x2 * ny + y] += w * source.prob(&[x], x2);
            }
        }
    }
    out
}

/// `Σ_x P(x | y_prev) kernel(y | x, y_prev)` under the stationary law.
fn induced_marginal<T: Scalar>(
    source: &StochasticKernel<T>,
    kernel: &StochasticKernel<T>,
) -> Result<StochasticKernel<T>> {
    let (nx, ny) = check_reproduction(source, kernel)?;
    let pair = pair_stationary(source, kernel)?;
    Ok(marginal_from_pair(source, kernel, &pair, nx, ny))
}

fn marginal_from_pair<T: Scalar>(
    source: &StochasticKernel<T>,
    kernel: &StochasticKernel<T>,
    pair: &[T],
    nx: usize,
    ny: usize,
) -> StochasticKernel<T> {
    let pred = predecessor_law(source, pair, ny);
    // Fallback for output symbols that are never produced: the stationary
    // source marginal one step ahead.
    let fallback: Vec<T> = (0..nx).map(|x2| (0..ny).map(|y| pred[x2 * ny + y]).sum()).collect();
    let rows = (0..ny)
        .map(|yp| {
            let weight: T = (0..nx).map(|x| pred[x * ny + yp]).sum();
            let cond: Vec<T> = if weight > T::zero() {
                (0..nx).map(|x| pred[x * ny + yp] / weight).collect()
            } else {
                fallback.clone()
            };
            let mut row = vec![T::zero(); ny];
            for (x, &px) in cond.iter().enumerate() {
                for (y, &k) in kernel.row(&[x, yp]).iter().enumerate() {
                    row[y] += px * k;
                }
            }
            renormalize(&mut row);
            row
        })
        .collect();
    StochasticKernel::unchecked(vec![ny], ny, rows)
}

fn renormalize<T: Scalar>(row: &mut [T]) {
    let total: T = row.iter().copied().sum();
    if total > T::zero() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

#[inline]
fn tilt_factor<T: Scalar>(s: T, rho: T) -> T {
    if rho == T::zero() {
        T::one()
    } else {
        (s * rho).exp()
    }
}

/// Closed-form nonanticipative RDF of a BSMS with Hamming distortion.
///
/// For `D >= 1/2` the rate is zero, `s = 0`, and `m`, `α`, `β` are reported
/// at their `D = 1/2` values (the reproduction independent of the source).
pub fn bsms_nrdf<T: Scalar>(source: &BsmsSource<T>, d: T) -> Result<RdPoint<T>> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::domain(format!("distortion {d} must be positive")));
    }
    let half = T::lit(0.5);
    let p = source.p();
    if d >= half {
        return Ok(RdPoint {
            distortion: d,
            rate: T::zero(),
            multiplier: T::zero(),
            m: Some(half),
            alpha: Some(T::one() - p),
            beta: Some(p),
        });
    }
    let m = source.m(d);
    let (alpha, beta) = bsms_alpha_beta(p, d, m);
    let rate = (binary_entropy_unchecked(m) - binary_entropy_unchecked(d)).max(T::zero());
    Ok(RdPoint {
        distortion: d,
        rate,
        multiplier: (d / (T::one() - d)).ln(),
        m: Some(m),
        alpha: Some(alpha),
        beta: Some(beta),
    })
}

fn bsms_alpha_beta<T: Scalar>(p: T, d: T, m: T) -> (T, T) {
    let one = T::one();
    let alpha = (one - p) * (one - d) / m;
    let beta = p * (one - d) / (p + d - T::lit(2.0) * p * d);
    (alpha, beta)
}

/// The closed-form optimal reproduction kernel of a BSMS, `0 < D <= 1/2`.
///
/// `P(y = x | x, y_prev)` is `α` when `x = y_prev` and `β` otherwise.
pub fn bsms_reproduction_kernel<T: Scalar>(source: &BsmsSource<T>, d: T) -> Result<ReproductionKernel<T>> {
    if !(d > T::zero() && d <= T::lit(0.5)) {
        return Err(Error::domain(format!("distortion {d} must lie in (0, 1/2]")));
    }
    let m = source.m(d);
    let (alpha, beta) = bsms_alpha_beta(source.p(), d, m);
    let kernel = StochasticKernel::from_fn(vec![2, 2], 2, |c, y| {
        let stay = if c[0] == c[1] { alpha } else { beta };
        if y == c[0] {
            stay
        } else {
            T::one() - stay
        }
    })?;
    // P(y = y_prev | y_prev) = m α + (1 - m)(1 - β).
    let same = m * alpha + (T::one() - m) * (T::one() - beta);
    let marginal = StochasticKernel::from_fn(vec![2], 2, |c, y| if y == c[0] { same } else { T::one() - same })?;
    Ok(ReproductionKernel { kernel, marginal })
}

/// Exponential tilt of `marginal(y | y_prev)` by `e^{s ρ(x, y)}`, renormalized
/// per `(x, y_prev)`.
pub fn tilted_update<T: Scalar>(
    marginal: &StochasticKernel<T>,
    s: T,
    rho: &DistortionSpec<T>,
) -> Result<StochasticKernel<T>> {
    if s > T::zero() || s.is_nan() {
        return Err(Error::domain(format!("multiplier {s} must be <= 0")));
    }
    let ny = marginal.output_alphabet();
    if marginal.condition_alphabets() != [ny] || rho.reproduction_alphabet() != ny {
        return Err(Error::shape(format!(
            "marginal {:?} -> {} incompatible with distortion table {}x{}",
            marginal.condition_alphabets(),
            ny,
            rho.source_alphabet(),
            rho.reproduction_alphabet()
        )));
    }
    let nx = rho.source_alphabet();
    let mut rows = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for yp in 0..ny {
            let base = marginal.row(&[yp]);
            let mut row: Vec<T> = base.iter().enumerate().map(|(y, &q)| q * tilt_factor(s, rho.get(x, y))).collect();
            let z: T = row.iter().copied().sum();
            if !(z > T::zero()) || !z.is_finite() {
                return Err(Error::Degeneracy { condition: vec![x, yp] });
            }
            for v in row.iter_mut() {
                *v /= z;
            }
            rows.push(row);
        }
    }
    Ok(StochasticKernel::unchecked(vec![nx, ny], ny, rows))
}

#[derive(Clone, Debug)]
pub struct SolverOptions<T> {
    /// Max-norm tolerance on successive marginals.
    pub tol: T,
    pub max_iter: usize,
    /// Weight of the new marginal in each update; 1 means no damping.
    pub damping: T,
    /// Starting marginal; uniform rows when absent.
    pub initial_marginal: Option<StochasticKernel<T>>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 10_000, damping: T::one(), initial_marginal: None }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPoint<T> {
    pub reproduction: ReproductionKernel<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Solves for the self-consistent tilted kernel at a fixed multiplier `s`.
///
/// Each round tilts the current marginal, solves the stationary law of the
/// pair chain `(X, Y)` it induces, and replaces the marginal by the
/// x-average of the tilted kernel under `P(x_i | y_{i-1})`.
pub fn fixed_point_solve<T: Scalar>(
    source: &StochasticKernel<T>,
    rho: &DistortionSpec<T>,
    s: T,
    opts: &SolverOptions<T>,
) -> Result<FixedPoint<T>> {
    let nx = check_source(source)?;
    if rho.source_alphabet() != nx {
        return Err(Error::shape(format!(
            "distortion table has {} source rows, source alphabet is {nx}",
            rho.source_alphabet()
        )));
    }
    if !(opts.damping > T::zero() && opts.damping <= T::one()) {
        return Err(Error::domain("damping must lie in (0, 1]"));
    }
    let ny = rho.reproduction_alphabet();
    let mut marginal = match &opts.initial_marginal {
        Some(m) if m.condition_alphabets() == [ny] && m.output_alphabet() == ny => m.clone(),
        Some(_) => return Err(Error::shape("initial marginal has the wrong shape")),
        None => {
            let w = T::one() / T::from_usize(ny).unwrap();
            StochasticKernel::unchecked(vec![ny], ny, vec![vec![w; ny]; ny])
        }
    };
    let mut residual = T::infinity();
    for iteration in 1..=opts.max_iter {
        let kernel = tilted_update(&marginal, s, rho)?;
        let pair = pair_stationary(source, &kernel)?;
        let fresh = marginal_from_pair(source, &kernel, &pair, nx, ny);
        residual = fresh.max_abs_diff(&marginal)?;
        let next = if opts.damping == T::one() {
            fresh
        } else {
            let rows = marginal
                .rows()
                .iter()
                .zip(fresh.rows())
                .map(|(old, new)| old.iter().zip(new).map(|(&o, &n)| o + opts.damping * (n - o)).collect())
                .collect();
            StochasticKernel::unchecked(vec![ny], ny, rows)
        };
        marginal = next;
        if residual <= opts.tol {
            let kernel = tilted_update(&marginal, s, rho)?;
            return Ok(FixedPoint {
                reproduction: ReproductionKernel { kernel, marginal },
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual: residual.as_f64() })
}

/// Stationary average distortion `E[ρ(X_i, Y_i)]` of a reproduction kernel.
pub fn stationary_distortion<T: Scalar>(
    source: &StochasticKernel<T>,
    rho: &DistortionSpec<T>,
    kernel: &StochasticKernel<T>,
) -> Result<T> {
    let (nx, ny) = check_reproduction(source, kernel)?;
    if rho.source_alphabet() != nx || rho.reproduction_alphabet() != ny {
        return Err(Error::shape("distortion table does not match kernel alphabets"));
    }
    let pair = pair_stationary(source, kernel)?;
    Ok(expected_distortion(&pair, rho, ny))
}

fn expected_distortion<T: Scalar>(pair: &[T], rho: &DistortionSpec<T>, ny: usize) -> T {
    pair.iter().enumerate().map(|(z, &w)| w * rho.get(z / ny, z % ny)).sum()
}

/// Per-symbol rate `s D - E[ln Z(X_i, Y_{i-1})]`, in bits, of a converged
/// fixed point.
pub fn nrdf_value<T: Scalar>(
    source: &StochasticKernel<T>,
    rho: &DistortionSpec<T>,
    s: T,
    reproduction: &ReproductionKernel<T>,
) -> Result<T> {
    let (_, ny) = check_reproduction(source, &reproduction.kernel)?;
    if s > T::zero() || s.is_nan() {
        return Err(Error::domain(format!("multiplier {s} must be <= 0")));
    }
    let pair = pair_stationary(source, &reproduction.kernel)?;
    let d = expected_distortion(&pair, rho, ny);
    let pred = predecessor_law(source, &pair, ny);
    let mut log_norm = T::zero();
    for (z, &w) in pred.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        let (x, yp) = (z / ny, z % ny);
        let norm: T =
            reproduction.marginal.row(&[yp]).iter().enumerate().map(|(y, &q)| q * tilt_factor(s, rho.get(x, y))).sum();
        log_norm += w * norm.ln();
    }
    let nats = s * d - log_norm;
    Ok((nats / T::LN_2()).max(T::zero()))
}

/// `I(X_i; Y_i | Y_{i-1})` in bits under the stationary pair law, computed as
/// an average of relative entropies between kernel rows and the induced
/// output marginal.
pub fn information_rate<T: Scalar>(source: &StochasticKernel<T>, kernel: &StochasticKernel<T>) -> Result<T> {
    let (nx, ny) = check_reproduction(source, kernel)?;
    let pair = pair_stationary(source, kernel)?;
    let pred = predecessor_law(source, &pair, ny);
    let marginal = marginal_from_pair(source, kernel, &pair, nx, ny);
    let mut acc = T::zero();
    for (z, &w) in pred.iter().enumerate() {
        if w > T::zero() {
            let (x, yp) = (z / ny, z % ny);
            acc += w * kl_divergence_slices(kernel.row(&[x, yp]), marginal.row(&[yp]))?;
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug)]
pub struct BisectionOptions<T> {
    /// Lower end of the multiplier bracket; the upper end is 0.
    pub s_lo: T,
    /// Tolerance on the achieved distortion.
    pub tol: T,
    pub max_steps: usize,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for BisectionOptions<T> {
    fn default() -> Self {
        Self { s_lo: T::lit(-50.0), tol: T::lit(1e-8), max_steps: 200, solver: SolverOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SolvedPoint<T> {
    pub point: RdPoint<T>,
    pub reproduction: ReproductionKernel<T>,
}

/// Finds `s` such that the fixed point's stationary distortion meets `target`.
///
/// Distortion is nondecreasing in `s`, so the bracket `[s_lo, 0]` covers every
/// target between the distortion at `s_lo` and the zero-rate distortion at
/// `s = 0` (the latter evaluated from the configured initial marginal).
pub fn distortion_bisection<T: Scalar>(
    source: &StochasticKernel<T>,
    rho: &DistortionSpec<T>,
    target: T,
    opts: &BisectionOptions<T>,
) -> Result<SolvedPoint<T>> {
    if !target.is_finite() {
        return Err(Error::Range(format!("target distortion {target} is not finite")));
    }
    let solve = |s: T, warm: Option<&StochasticKernel<T>>| -> Result<(FixedPoint<T>, T)> {
        let mut o = opts.solver.clone();
        if let Some(w) = warm {
            o.initial_marginal = Some(w.clone());
        }
        let fp = fixed_point_solve(source, rho, s, &o)?;
        let d = stationary_distortion(source, rho, &fp.reproduction.kernel)?;
        Ok((fp, d))
    };
    let finish = |s: T, d: T, fp: FixedPoint<T>| -> Result<SolvedPoint<T>> {
        let rate = nrdf_value(source, rho, s, &fp.reproduction)?;
        let params = fp.reproduction.binary_parameters();
        Ok(SolvedPoint {
            point: RdPoint {
                distortion: d,
                rate,
                multiplier: s,
                m: None,
                alpha: params.map(|p| p.0),
                beta: params.map(|p| p.1),
            },
            reproduction: fp.reproduction,
        })
    };

    let (fp_hi, d_hi) = solve(T::zero(), None)?;
    let (fp_lo, d_lo) = solve(opts.s_lo, None)?;
    if d_lo > d_hi + opts.tol {
        return Err(Error::Bracketing(format!(
            "distortion at s = {} ({d_lo}) exceeds distortion at s = 0 ({d_hi})",
            opts.s_lo
        )));
    }
    if target > d_hi + opts.tol || target < d_lo - opts.tol {
        return Err(Error::Range(format!("target {target} outside achievable range [{d_lo}, {d_hi}]")));
    }
    if (target - d_hi).abs() <= opts.tol {
        return finish(T::zero(), d_hi, fp_hi);
    }
    if (target - d_lo).abs() <= opts.tol {
        return finish(opts.s_lo, d_lo, fp_lo);
    }
    let (mut lo, mut hi) = (opts.s_lo, T::zero());
    let mut warm = fp_lo.reproduction.marginal.clone();
    for _ in 0..opts.max_steps {
        let mid = (lo + hi) * T::lit(0.5);
        let (fp, d) = solve(mid, Some(&warm))?;
        if (d - target).abs() <= opts.tol {
            return finish(mid, d, fp);
        }
        warm = fp.reproduction.marginal.clone();
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Bracketing(format!("no multiplier in [{lo}, {hi}] met target {target} within {} steps", opts.max_steps)))
}
