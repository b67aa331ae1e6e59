//! Probability and information primitives over finite alphabets.
//!
//! Everything here works in bits (base-2 logarithms) and uses the
//! `0 · log 0 = 0` convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability mass function over `0..len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar")]
pub struct Pmf<T> {
    probs: Vec<T>,
}

impl<T: Scalar> Pmf<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        check_row(&probs).map_err(|defect| Error::InvalidPmf(defect.to_string()))?;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidPmf("empty alphabet".into()));
        }
        let w = T::one() / T::from_usize(size).unwrap();
        Ok(Self { probs: vec![w; size] })
    }

    pub fn point_mass(size: usize, at: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::InvalidPmf(format!("point {at} outside alphabet of size {size}")));
        }
        let mut probs = vec![T::zero(); size];
        probs[at] = T::one();
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for Pmf<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl<T> From<Pmf<T>> for Vec<T> {
    fn from(p: Pmf<T>) -> Vec<T> {
        p.probs
    }
}

impl<T> std::ops::Index<usize> for Pmf<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.probs[i]
    }
}

/// What is wrong with one row of a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Defect {
    /// No row exists for the condition tuple.
    Missing,
    WrongLength {
        expected: usize,
        found: usize,
    },
    /// An entry lies outside `[0, 1]` or is not finite.
    OutOfRange {
        index: usize,
        value: f64,
    },
    /// Entries sum to `sum`; `defect = |sum - 1|`.
    BadSum {
        sum: f64,
        defect: f64,
    },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::Missing => write!(f, "missing row"),
            Defect::WrongLength { expected, found } => {
                write!(f, "row has {found} entries, expected {expected}")
            }
            Defect::OutOfRange { index, value } => {
                write!(f, "entry {index} = {value} outside [0, 1]")
            }
            Defect::BadSum { sum, defect } => write!(f, "row sums to {sum} (defect {defect:e})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Vec<usize>,
    pub defect: Defect,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "condition {:?}: {}", self.condition, self.defect)
    }
}

fn check_row<T: Scalar>(row: &[T]) -> std::result::Result<(), Defect> {
    if row.is_empty() {
        return Err(Defect::WrongLength { expected: 1, found: 0 });
    }
    for (index, &v) in row.iter().enumerate() {
        if !v.is_finite() || v < T::zero() || v > T::one() {
            return Err(Defect::OutOfRange { index, value: v.as_f64() });
        }
    }
    let sum: T = row.iter().copied().sum();
    let defect = (sum - T::one()).abs();
    if defect > T::prob_tolerance() {
        return Err(Defect::BadSum { sum: sum.as_f64(), defect: defect.as_f64() });
    }
    Ok(())
}

/// A conditional probability table `P(output | c_0, ..., c_{k-1})`.
///
/// Rows are stored densely in mixed-radix order of the condition tuple, the
/// first coordinate being the most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel<T>", bound = "T: Scalar")]
pub struct StochasticKernel<T> {
    condition_alphabets: Vec<usize>,
    output_alphabet: usize,
    rows: Vec<Vec<T>>,
}

#[derive(Deserialize)]
struct RawKernel<T> {
    condition_alphabets: Vec<usize>,
    output_alphabet: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> TryFrom<RawKernel<T>> for StochasticKernel<T> {
    type Error = Error;

    fn try_from(raw: RawKernel<T>) -> Result<Self> {
        StochasticKernel::new(raw.condition_alphabets, raw.output_alphabet, raw.rows)
    }
}

impl<T: Scalar> StochasticKernel<T> {
    /// Builds a kernel and checks every row.
    pub fn new(condition_alphabets: Vec<usize>, output_alphabet: usize, rows: Vec<Vec<T>>) -> Result<Self> {
        let k = Self::unchecked(condition_alphabets, output_alphabet, rows);
        validate_kernel(&k).map_err(Error::InvalidKernel)?;
        Ok(k)
    }

    /// Builds a kernel without validation; use [`validate_kernel`] to inspect it.
    pub fn unchecked(condition_alphabets: Vec<usize>, output_alphabet: usize, rows: Vec<Vec<T>>) -> Self {
        Self { condition_alphabets, output_alphabet, rows }
    }

    /// Builds a kernel from `f(condition, output)`.
    pub fn from_fn(
        condition_alphabets: Vec<usize>,
        output_alphabet: usize,
        mut f: impl FnMut(&[usize], usize) -> T,
    ) -> Result<Self> {
        let rows = ConditionIter::new(&condition_alphabets)
            .map(|c| (0..output_alphabet).map(|y| f(&c, y)).collect())
            .collect();
        Self::new(condition_alphabets, output_alphabet, rows)
    }

    /// A deterministic kernel mapping each condition tuple to `f(condition)`.
    pub fn deterministic(
        condition_alphabets: Vec<usize>,
        output_alphabet: usize,
        mut f: impl FnMut(&[usize]) -> usize,
    ) -> Result<Self> {
        Self::from_fn(condition_alphabets, output_alphabet, |c, y| if f(c) == y { T::one() } else { T::zero() })
    }

    /// A square one-step transition matrix.
    pub fn transition_matrix(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        Self::new(vec![n], n, rows)
    }

    pub fn condition_alphabets(&self) -> &[usize] {
        &self.condition_alphabets
    }

    pub fn condition_arity(&self) -> usize {
        self.condition_alphabets.len()
    }

    pub fn output_alphabet(&self) -> usize {
        self.output_alphabet
    }

    /// Number of condition tuples in the declared product space.
    pub fn num_conditions(&self) -> usize {
        self.condition_alphabets.iter().product()
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn row_index(&self, condition: &[usize]) -> usize {
        debug_assert_eq!(condition.len(), self.condition_alphabets.len());
        condition.iter().zip(&self.condition_alphabets).fold(0, |acc, (&c, &size)| {
            debug_assert!(c < size);
            acc * size + c
        })
    }

    pub fn row(&self, condition: &[usize]) -> &[T] {
        &self.rows[self.row_index(condition)]
    }

    pub fn prob(&self, condition: &[usize], output: usize) -> T {
        self.row(condition)[output]
    }

    /// Every condition tuple, in storage order.
    pub fn conditions(&self) -> ConditionIter {
        ConditionIter::new(&self.condition_alphabets)
    }

    /// True when every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.iter().filter(|&&v| v != T::zero()).count() == 1)
    }

    /// Largest absolute entry-wise difference against `other`, or a shape error.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.condition_alphabets != other.condition_alphabets || self.output_alphabet != other.output_alphabet {
            return Err(Error::shape(format!(
                "kernel shapes differ: {:?}->{} vs {:?}->{}",
                self.condition_alphabets, self.output_alphabet, other.condition_alphabets, other.output_alphabet
            )));
        }
        Ok(self
            .rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (x - y).abs()))
            .fold(T::zero(), T::max))
    }

    pub fn cast<U: Scalar>(&self) -> StochasticKernel<U> {
        StochasticKernel {
            condition_alphabets: self.condition_alphabets.clone(),
            output_alphabet: self.output_alphabet,
            rows: self.rows.iter().map(|r| r.iter().map(|&v| U::from_f64(v.as_f64()).unwrap()).collect()).collect(),
        }
    }
}

/// Mixed-radix iterator over a product of finite alphabets.
#[derive(Clone, Debug)]
pub struct ConditionIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl ConditionIter {
    pub fn new(sizes: &[usize]) -> Self {
        let next = if sizes.contains(&0) { None } else { Some(vec![0; sizes.len()]) };
        Self { sizes: sizes.to_vec(), next }
    }
}

impl Iterator for ConditionIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for (digit, &size) in succ.iter_mut().zip(&self.sizes).rev() {
            *digit += 1;
            if *digit < size {
                carried = false;
                break;
            }
            *digit = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// Reports every row that fails the probability invariants.
pub fn validate_kernel<T: Scalar>(kernel: &StochasticKernel<T>) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for (i, condition) in kernel.conditions().enumerate() {
        let defect = match kernel.rows.get(i) {
            None => Some(Defect::Missing),
            Some(row) if row.len() != kernel.output_alphabet => {
                Some(Defect::WrongLength { expected: kernel.output_alphabet, found: row.len() })
            }
            Some(row) => check_row(row).err(),
        };
        if let Some(defect) = defect {
            violations.push(Violation { condition, defect });
        }
    }
    if kernel.output_alphabet == 0 {
        violations.push(Violation { condition: vec![], defect: Defect::WrongLength { expected: 1, found: 0 } });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[inline]
pub(crate) fn xlog2x<T: Scalar>(q: T) -> T {
    if q > T::zero() {
        q * q.log2()
    } else {
        T::zero()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy<T: Scalar>(q: T) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::domain(format!("binary entropy argument {q} outside [0, 1]")));
    }
    Ok(binary_entropy_unchecked(q))
}

/// Binary entropy for callers that have already validated `q`; clamps round-off.
#[inline]
pub(crate) fn binary_entropy_unchecked<T: Scalar>(q: T) -> T {
    let q = q.max(T::zero()).min(T::one());
    -(xlog2x(q) + xlog2x(T::one() - q))
}

/// Shannon entropy in bits.
pub fn entropy<T: Scalar>(pmf: &Pmf<T>) -> T {
    -pmf.probs.iter().map(|&q| xlog2x(q)).sum::<T>()
}

/// Relative entropy `D(p || q)` in bits.
pub fn kl_divergence<T: Scalar>(p: &Pmf<T>, q: &Pmf<T>) -> Result<T> {
    kl_divergence_slices(p.as_slice(), q.as_slice())
}

pub(crate) fn kl_divergence_slices<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("alphabet sizes differ: {} vs {}", p.len(), q.len())));
    }
    let mut acc = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= T::zero() {
            continue;
        }
        if qi <= T::zero() {
            return Err(Error::domain(format!("absolute continuity violated at symbol {i}: p = {pi}, q = 0")));
        }
        acc += pi * (pi / qi).log2();
    }
    Ok(acc.max(T::zero()))
}

/// Stationary distribution of a square one-step transition kernel.
///
/// Solves `π (K - I) = 0` with one balance equation replaced by `Σ π = 1`.
/// The replaced system is singular exactly when the stationary law is not
/// unique.
pub fn stationary_distribution<T: Scalar>(kernel: &StochasticKernel<T>) -> Result<Pmf<T>> {
    if kernel.condition_arity() != 1 || kernel.condition_alphabets[0] != kernel.output_alphabet {
        return Err(Error::shape(format!(
            "expected a square one-step kernel, got {:?} -> {}",
            kernel.condition_alphabets, kernel.output_alphabet
        )));
    }
    let n = kernel.output_alphabet;
    let flat: Vec<T> = kernel.rows.iter().flatten().copied().collect();
    let pi = stationary_from_matrix(&flat, n)?;
    Ok(Pmf { probs: pi })
}

/// Same as [`stationary_distribution`] on a row-major `n x n` matrix.
pub(crate) fn stationary_from_matrix<T: Scalar>(matrix: &[T], n: usize) -> Result<Vec<T>> {
    debug_assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return Err(Error::shape("empty transition matrix"));
    }
    // a[i][j] = K[j][i] - δ_ij, last equation replaced by normalization.
    let w = n + 1;
    let mut a = vec![T::zero(); n * w];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { T::one() } else { T::zero() };
            a[i * w + j] = matrix[j * n + i] - delta;
        }
    }
    for j in 0..n {
        a[(n - 1) * w + j] = T::one();
    }
    a[(n - 1) * w + n] = T::one();

    let pivot_floor = T::epsilon() * T::lit(1e3) * T::from_usize(n).unwrap();
    for col in 0..n {
        let (pivot_row, pivot_abs) =
            (col..n)
                .map(|r| (r, a[r * w + col].abs()))
                .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= pivot_floor {
            return Err(Error::Multiplicity);
        }
        if pivot_row != col {
            for j in 0..w {
                a.swap(col * w + j, pivot_row * w + j);
            }
        }
        let pivot = a[col * w + col];
        for r in (col + 1)..n {
            let factor = a[r * w + col] / pivot;
            if factor == T::zero() {
                continue;
            }
            for j in col..w {
                let v = a[col * w + j];
                a[r * w + j] -= factor * v;
            }
        }
    }
    let mut pi = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = a[i * w + n];
        for j in (i + 1)..n {
            acc -= a[i * w + j] * pi[j];
        }
        pi[i] = acc / a[i * w + i];
    }
    for v in pi.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let total: T = pi.iter().copied().sum();
    for v in pi.iter_mut() {
        *v /= total;
    }
    Ok(pi)
}
