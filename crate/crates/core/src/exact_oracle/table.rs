use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::realization::{InitialState, TransmissionScheme};
use crate::scalar::Scalar;

/// Default cap on dense table entries.
pub const DEFAULT_BUDGET: u128 = 1 << 26;

/// Minimum number of prefix blocks handed to the thread pool.
const MIN_BLOCKS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    A,
    B,
    Y,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::A, Var::B, Var::Y];

    pub fn letter(self) -> char {
        match self {
            Var::X => 'X',
            Var::A => 'A',
            Var::B => 'B',
            Var::Y => 'Y',
        }
    }
}

/// Tolerance on total mass: `1e-10` for f64.
pub(crate) fn mass_tolerance<T: Scalar>() -> T {
    T::prob_tolerance() * T::lit(100.0)
}

/// Dense law of `(V_0, ..., V_n)` where each `V_t` is the tuple of kept
/// variables at time `t`, listed in `X, A, B, Y` order.
///
/// Entries are time-major: time 0 is the most significant digit, and within a
/// time step the earliest variable is the most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct JointTable<T> {
    n: usize,
    vars: Vec<Var>,
    sizes: Vec<usize>,
    pmf: Vec<T>,
}

fn dense_len(step: usize, n: usize) -> u128 {
    (0..=n).try_fold(1u128, |acc, _| acc.checked_mul(step as u128)).unwrap_or(u128::MAX)
}

impl<T: Scalar> JointTable<T> {
    /// Wraps a dense pmf. `vars` pairs each variable with its alphabet size.
    pub fn new(n: usize, vars: &[(Var, usize)], pmf: Vec<T>) -> Result<Self> {
        let mut sorted = vars.to_vec();
        sorted.sort();
        if sorted.is_empty() || sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::shape("variable list must be nonempty and without repeats"));
        }
        if sorted != vars {
            return Err(Error::shape("variables must be listed in X, A, B, Y order"));
        }
        let (vars, sizes): (Vec<Var>, Vec<usize>) = sorted.into_iter().unzip();
        if sizes.contains(&0) {
            return Err(Error::shape("empty alphabet"));
        }
        let table = Self { n, vars, sizes, pmf };
        if dense_len(table.step(), n) != table.pmf.len() as u128 {
            return Err(Error::shape(format!(
                "pmf has {} entries, expected {}",
                table.pmf.len(),
                dense_len(table.step(), n)
            )));
        }
        if table.pmf.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::InvalidPmf("negative or NaN entry".into()));
        }
        let mass = table.total_mass();
        if (mass - T::one()).abs() > mass_tolerance() {
            return Err(Error::InvalidPmf(format!("total mass {mass}")));
        }
        Ok(table)
    }

    /// Builds a table from `f(symbols)`, `symbols[t * vars.len() + j]` being
    /// variable `j` at time `t`.
    pub fn from_fn(n: usize, vars: &[(Var, usize)], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let step: usize = vars.iter().map(|v| v.1).product();
        let len = dense_len(step, n);
        if len > DEFAULT_BUDGET {
            return Err(Error::Capacity { required: len, allowed: DEFAULT_BUDGET });
        }
        let shell = Self {
            n,
            vars: vars.iter().map(|v| v.0).collect(),
            sizes: vars.iter().map(|v| v.1).collect(),
            pmf: Vec::new(),
        };
        let pmf = (0..len as usize).map(|i| f(&shell.symbols(i))).collect();
        Self::new(n, vars, pmf)
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn pmf(&self) -> &[T] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Number of joint symbols per time step.
    pub fn step(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn position(&self, v: Var) -> Option<usize> {
        self.vars.iter().position(|&w| w == v)
    }

    pub fn size_of(&self, v: Var) -> Option<usize> {
        self.position(v).map(|j| self.sizes[j])
    }

    pub fn total_mass(&self) -> T {
        self.pmf.iter().copied().sum()
    }

    /// Splits a per-step digit into per-variable symbols.
    pub(crate) fn split_digit(&self, mut d: usize, out: &mut [usize]) {
        for j in (0..self.sizes.len()).rev() {
            out[j] = d % self.sizes[j];
            d /= self.sizes[j];
        }
    }

    /// Flat time-major symbol list of entry `index`.
    pub fn symbols(&self, mut index: usize) -> Vec<usize> {
        let k = self.vars.len();
        let step = self.step();
        let mut out = vec![0; k * (self.n + 1)];
        for t in (0..=self.n).rev() {
            self.split_digit(index % step, &mut out[t * k..(t + 1) * k]);
            index /= step;
        }
        out
    }

    /// Law of the first `len` time steps (`1 <= len <= n + 1`).
    pub fn prefix_marginal(&self, len: usize) -> Vec<T> {
        assert!((1..=self.n + 1).contains(&len));
        if len == self.n + 1 {
            return self.pmf.clone();
        }
        let block = dense_len(self.step(), self.n - len) as usize;
        self.pmf.chunks(block).map(|c| c.iter().copied().sum()).collect()
    }

    pub fn require(&self, needed: &[Var]) -> Result<()> {
        match needed.iter().find(|v| self.position(**v).is_none()) {
            None => Ok(()),
            Some(v) => Err(Error::shape(format!("table lacks variable {}", v.letter()))),
        }
    }

    /// Sums out every variable not in `keep`.
    pub fn marginalize(&self, keep: &[Var]) -> Result<JointTable<T>> {
        self.require(keep)?;
        let mut keep = keep.to_vec();
        keep.sort();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::shape("nothing to keep"));
        }
        if keep == self.vars {
            return Ok(self.clone());
        }
        let pos: Vec<usize> = keep.iter().map(|v| self.position(*v).unwrap()).collect();
        let sizes: Vec<usize> = pos.iter().map(|&j| self.sizes[j]).collect();
        let new_step: usize = sizes.iter().product();
        // Map each old per-step digit to its new digit.
        let mut digit_map = vec![0; self.step()];
        let mut sym = vec![0; self.vars.len()];
        for (d, slot) in digit_map.iter_mut().enumerate() {
            self.split_digit(d, &mut sym);
            *slot = pos.iter().zip(&sizes).fold(0, |acc, (&j, &s)| acc * s + sym[j]);
        }
        let mut pmf = vec![T::zero(); dense_len(new_step, self.n) as usize];
        let step = self.step();
        for (i, &w) in self.pmf.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let (mut rest, mut idx, mut scale) = (i, 0usize, 1usize);
            for _ in 0..=self.n {
                idx += digit_map[rest % step] * scale;
                scale *= new_step;
                rest /= step;
            }
            pmf[idx] += w;
        }
        Ok(JointTable { n: self.n, vars: keep, sizes, pmf })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.n != other.n || self.vars != other.vars || self.sizes != other.sizes {
            return Err(Error::shape("tables differ in horizon or variables"));
        }
        Ok(self.pmf.iter().zip(&other.pmf).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Writes `X0,Y0,...,prob` rows, one per trajectory.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = Vec::new();
        for t in 0..=self.n {
            header.extend(self.vars.iter().map(|v| format!("{}{t}", v.letter())));
        }
        header.push("prob".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, p) in self.pmf.iter().enumerate() {
            let syms: Vec<String> = self.symbols(i).iter().map(usize::to_string).collect();
            writeln!(w, "{},{:.16e}", syms.join(","), p.as_f64())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    pub initial: InitialState,
    /// Max dense entries; larger requests fail with a capacity error.
    pub budget: u128,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { initial: InitialState::default(), budget: DEFAULT_BUDGET }
    }
}

/// Sparse one-step transfer for one kept digit: `(state, next_state, weight)`.
type Transfer<T> = Vec<(usize, usize, T)>;

/// Exact law of the kept variables over times `0..=n`.
///
/// Unkept variables are summed out during enumeration by carrying a weight
/// vector over the hidden state `(x_{t-1}, b_{t-1}, y_{t-1})`, so the cost is
/// set by the table size rather than by the full trajectory count. Results
/// are bit-identical for any thread count.
pub fn enumerate_joint<T: Scalar>(
    scheme: &TransmissionScheme<T>,
    n: usize,
    vars: &[Var],
    opts: &EnumerationOptions,
) -> Result<JointTable<T>> {
    let mut vars = vars.to_vec();
    vars.sort();
    vars.dedup();
    if vars.is_empty() {
        return Err(Error::shape("no variables requested"));
    }
    let al = scheme.alphabets();
    let size_of = |v: Var| match v {
        Var::X => al.x,
        Var::A => al.a,
        Var::B => al.b,
        Var::Y => al.y,
    };
    let sizes: Vec<usize> = vars.iter().map(|&v| size_of(v)).collect();
    let step: usize = sizes.iter().product();
    let required = dense_len(step, n);
    if required > opts.budget {
        return Err(Error::Capacity { required, allowed: opts.budget });
    }

    let ns = al.x * al.b * al.y;
    let state = |x: usize, b: usize, y: usize| (x * al.b + b) * al.y + y;
    let mut dense = vec![T::zero(); step * ns * ns];
    let (src, enc, ch, dec) = (scheme.source(), scheme.encoder(), scheme.channel(), scheme.decoder());
    for xp in 0..al.x {
        for bp in 0..al.b {
            for yp in 0..al.y {
                let s = state(xp, bp, yp);
                for x in 0..al.x {
                    let px = src.prob(&[xp], x);
                    if px == T::zero() {
                        continue;
                    }
                    for a in 0..al.a {
                        let pa = px * enc.prob(&[x, bp], a);
                        if pa == T::zero() {
                            continue;
                        }
                        for b in 0..al.b {
                            let pb = pa * ch.prob(&[a, bp], b);
                            if pb == T::zero() {
                                continue;
                            }
                            for y in 0..al.y {
                                let w = pb * dec.prob(&[b, yp], y);
                                if w == T::zero() {
                                    continue;
                                }
                                let sym = [x, a, b, y];
                                let k = vars.iter().zip(&sizes).fold(0, |acc, (&v, &sz)| acc * sz + sym[v as usize]);
                                dense[(k * ns + s) * ns + state(x, b, y)] += w;
                            }
                        }
                    }
                }
            }
        }
    }
    let transfers: Vec<Transfer<T>> = (0..step)
        .map(|k| {
            let mut t = Vec::new();
            for s in 0..ns {
                for s2 in 0..ns {
                    let w = dense[(k * ns + s) * ns + s2];
                    if w != T::zero() {
                        t.push((s, s2, w));
                    }
                }
            }
            t
        })
        .collect();

    let mut w0 = vec![T::zero(); ns];
    for (st, w) in scheme.initial_distribution(&opts.initial)? {
        w0[state(st.x, st.b, st.y)] += w;
    }

    let total = required as usize;
    let mut depth = 1;
    while depth < n + 1 && dense_len(step, depth - 1) < MIN_BLOCKS as u128 {
        depth += 1;
    }
    // `depth` leading time steps are expanded per block; the rest by DFS.
    let block = total / dense_len(step, depth - 1) as usize;
    let mut pmf = vec![T::zero(); total];
    pmf.par_chunks_mut(block).enumerate().for_each(|(c, out)| {
        let mut w = w0.clone();
        let mut next = vec![T::zero(); ns];
        let mut digits = vec![0; depth];
        let mut rest = c;
        for d in digits.iter_mut().rev() {
            *d = rest % step;
            rest /= step;
        }
        for &k in &digits {
            apply(&transfers[k], &w, &mut next);
            std::mem::swap(&mut w, &mut next);
        }
        if depth == n + 1 {
            out[0] = w.iter().copied().sum();
        } else if w.iter().any(|&v| v != T::zero()) {
            let mut scratch = vec![T::zero(); ns * (n + 1 - depth)];
            fill(out, &w, &transfers, step, &mut scratch);
        }
    });
    Ok(JointTable { n, vars, sizes, pmf })
}

fn apply<T: Scalar>(transfer: &Transfer<T>, w: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for &(s, s2, p) in transfer {
        out[s2] += w[s] * p;
    }
}

/// Fills `out` (one entry per continuation) from the hidden weights `w`.
fn fill<T: Scalar>(out: &mut [T], w: &[T], transfers: &[Transfer<T>], step: usize, scratch: &mut [T]) {
    let ns = w.len();
    let sub = out.len() / step;
    let (next, deeper) = scratch.split_at_mut(ns);
    for (k, slot) in out.chunks_mut(sub).enumerate() {
        apply(&transfers[k], w, next);
        if sub == 1 {
            slot[0] = next.iter().copied().sum();
        } else if next.iter().any(|&v| v != T::zero()) {
            fill(slot, next, transfers, step, deeper);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nrdf::{bsms_reproduction_kernel, BsmsSource};
    use crate::realization::{build_matched_scheme, build_unmatched_scheme};

    const XY: [Var; 2] = [Var::X, Var::Y];

    #[test]
    fn horizon_zero_is_single_step_product() {
        let s = build_unmatched_scheme(0.25f64, 0.1).unwrap();
        let t = enumerate_joint(&s, 0, &XY, &EnumerationOptions::default()).unwrap();
        assert_eq!(t.len(), 4);
        let k = bsms_reproduction_kernel(&BsmsSource::new(0.25).unwrap(), 0.1).unwrap().kernel;
        for x in 0..2 {
            for y in 0..2 {
                assert!((t.pmf()[x * 2 + y] - 0.5 * k.prob(&[x, 0], y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn source_path_law() {
        let p = 0.25f64;
        let s = build_unmatched_scheme(p, 0.1).unwrap();
        let t = enumerate_joint(&s, 5, &[Var::X], &EnumerationOptions::default()).unwrap();
        assert_eq!(t.len(), 64);
        for (i, &v) in t.pmf().iter().enumerate() {
            let x = t.symbols(i);
            let flips = x.windows(2).filter(|w| w[0] != w[1]).count() as i32;
            let want = 0.5 * p.powi(flips) * (1.0 - p).powi(5 - flips);
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_and_marginals_agree() {
        let s = build_matched_scheme(0.3f64, 0.15, true).unwrap();
        let opts = EnumerationOptions::default();
        let full = enumerate_joint(&s, 3, &Var::ALL, &opts).unwrap();
        assert_eq!(full.len(), 1 << 16);
        assert!((full.total_mass() - 1.0).abs() < 1e-12);
        let direct = enumerate_joint(&s, 3, &[Var::X, Var::B], &opts).unwrap();
        assert!(full.marginalize(&[Var::B, Var::X]).unwrap().max_abs_diff(&direct).unwrap() < 1e-15);
        let t8 = enumerate_joint(&s, 8, &XY, &opts).unwrap();
        assert!((t8.total_mass() - 1.0).abs() < 1e-10);
        let pre = t8.prefix_marginal(3);
        let short = enumerate_joint(&s, 2, &XY, &opts).unwrap();
        assert!(pre.iter().zip(short.pmf()).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn budget_is_enforced() {
        let s = build_unmatched_scheme(0.25f64, 0.1).unwrap();
        let opts = EnumerationOptions { budget: 1 << 10, ..Default::default() };
        match enumerate_joint(&s, 5, &XY, &opts) {
            Err(Error::Capacity { required, allowed }) => assert_eq!((required, allowed), (4096, 1024)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(enumerate_joint(&s, 20, &XY, &EnumerationOptions::default()), Err(Error::Capacity { .. })));
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let s = build_matched_scheme(0.2f64, 0.1, true).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| enumerate_joint(&s, 7, &XY, &EnumerationOptions::default()).unwrap())
        };
        let (a, b) = (run(1), run(8));
        assert!(a.pmf().iter().zip(b.pmf()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn table_construction_and_csv() {
        let t = JointTable::from_fn(1, &[(Var::X, 2), (Var::Y, 2)], |_| 0.0625f64).unwrap();
        assert_eq!(t.symbols(6), vec![0, 1, 1, 0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("X0,Y0,X1,Y1,prob\n0,0,0,0,6.2500000000000000e-2\n"));
        assert_eq!(text.lines().count(), 17);
        assert!(JointTable::new(0, &[(Var::Y, 2), (Var::X, 2)], vec![0.25f64; 4]).is_err());
        assert!(JointTable::new(0, &[(Var::X, 2)], vec![0.5f64, 0.6]).is_err());
        assert!(JointTable::new(0, &[(Var::X, 2)], vec![1.0f64]).is_err());
        assert!(t.marginalize(&[Var::B]).is_err());
    }
}
