use serde::{Deserialize, Serialize};

use super::table::{JointTable, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed by [`check_dpi`], in bits.
pub const DPI_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport<T> {
    pub horizon: usize,
    /// `I(X^n -> Y^n)` in bits.
    pub directed_information_xy: T,
    /// `I(X^n -> B^n)` in bits, when the table carries `B`.
    pub directed_information_xb: Option<T>,
    /// `directed_information_xy / (n + 1)`.
    pub per_symbol: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpiReport<T> {
    pub xy: T,
    pub xb: T,
    /// `xb - xy`; nonnegative up to [`DPI_SLACK`] when the inequality holds.
    pub gap: T,
    pub holds: bool,
}

impl<T: Scalar> DpiReport<T> {
    pub fn new(xy: T, xb: T) -> Self {
        let gap = xb - xy;
        Self { xy, xb, gap, holds: gap >= -T::lit(DPI_SLACK) }
    }
}

/// Prefix statistics of a two-variable table `(U_t, V_t)`.
struct Layers<T> {
    n: usize,
    step: usize,
    nu: usize,
    /// `joint[i]`: law of `(U^i, V^i)`, indexed like the table prefix.
    joint: Vec<Vec<T>>,
    /// `half[i]`: law of `(U^i, V^{i-1})`, index `prefix_{i-1} * nu + u_i`.
    half: Vec<Vec<T>>,
    /// `v_index[i][prefix]`: index of `v^i` in `v_law[i]`.
    v_index: Vec<Vec<usize>>,
    v_law: Vec<Vec<T>>,
}

impl<T: Scalar> Layers<T> {
    fn new(table: &JointTable<T>, from: Var, to: Var) -> Result<Self> {
        if from == to {
            return Err(Error::shape("directed information needs two distinct variables"));
        }
        let pair = table.marginalize(&[from, to])?;
        let (nu, nv) = (pair.size_of(from).unwrap(), pair.size_of(to).unwrap());
        let from_first = from < to;
        let split = |d: usize| if from_first { (d / nv, d % nv) } else { (d % nu, d / nu) };
        let step = nu * nv;
        let n = pair.horizon();
        let mut layers = Layers { n, step, nu, joint: vec![], half: vec![], v_index: vec![], v_law: vec![] };
        for i in 0..=n {
            let joint = pair.prefix_marginal(i + 1);
            let prev_len = joint.len() / step;
            let mut half = vec![T::zero(); prev_len * nu];
            let mut v_index = vec![0; joint.len()];
            let mut v_law = vec![T::zero(); layers.v_law.last().map_or(1, Vec::len) * nv];
            for (idx, &w) in joint.iter().enumerate() {
                let (prev, (u, v)) = (idx / step, split(idx % step));
                let vp = if i == 0 { 0 } else { layers.v_index[i - 1][prev] };
                v_index[idx] = vp * nv + v;
                half[prev * nu + u] += w;
                v_law[v_index[idx]] += w;
            }
            layers.joint.push(joint);
            layers.half.push(half);
            layers.v_index.push(v_index);
            layers.v_law.push(v_law);
        }
        Ok(layers)
    }

    fn u_of(&self, digit: usize, from_first: bool, nv: usize) -> usize {
        if from_first {
            digit / nv
        } else {
            digit % self.nu
        }
    }
}

/// `Σ_i I(U^i; V_i | V^{i-1})` summed stage by stage, in bits.
pub fn directed_information_between<T: Scalar>(table: &JointTable<T>, from: Var, to: Var) -> Result<T> {
    let l = Layers::new(table, from, to)?;
    let nv = l.step / l.nu;
    let from_first = from < to;
    let mut total = T::zero();
    for i in 0..=l.n {
        let mut stage = T::zero();
        for (idx, &w) in l.joint[i].iter().enumerate() {
            if w <= T::zero() {
                continue;
            }
            let prev = idx / l.step;
            let u = l.u_of(idx % l.step, from_first, nv);
            let v_prev = if i == 0 { T::one() } else { l.v_law[i - 1][l.v_index[i - 1][prev]] };
            let ratio = (w * v_prev) / (l.half[i][prev * l.nu + u] * l.v_law[i][l.v_index[i][idx]]);
            stage += w * ratio.log2();
        }
        total += stage;
    }
    Ok(total.max(T::zero()))
}

/// Same quantity as a single divergence `D(P || Q)` over whole trajectories,
/// with `Q(u^n, v^n) = P(v^n) Π_i P(u_i | u^{i-1}, v^{i-1})`.
pub fn directed_information_kl<T: Scalar>(table: &JointTable<T>, from: Var, to: Var) -> Result<T> {
    let l = Layers::new(table, from, to)?;
    let nv = l.step / l.nu;
    let from_first = from < to;
    let powers: Vec<usize> = (0..=l.n).map(|k| l.step.pow(k as u32)).collect();
    let mut acc = T::zero();
    for (idx, &w) in l.joint[l.n].iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        let mut log_q = l.v_law[l.n][l.v_index[l.n][idx]].log2();
        for i in 0..=l.n {
            let pre = idx / powers[l.n - i];
            let prev = pre / l.step;
            let u = l.u_of(pre % l.step, from_first, nv);
            let before = if i == 0 { T::one() } else { l.joint[i - 1][prev] };
            log_q += (l.half[i][prev * l.nu + u] / before).log2();
        }
        acc += w * (w.log2() - log_q);
    }
    Ok(acc.max(T::zero()))
}

/// Directed information from `X` to `Y`, and to `B` when present.
pub fn directed_information<T: Scalar>(table: &JointTable<T>) -> Result<InfoReport<T>> {
    table.require(&[Var::X, Var::Y])?;
    let xy = directed_information_between(table, Var::X, Var::Y)?;
    let xb = match table.position(Var::B) {
        Some(_) => Some(directed_information_between(table, Var::X, Var::B)?),
        None => None,
    };
    let steps = T::from_usize(table.horizon() + 1).unwrap();
    Ok(InfoReport {
        horizon: table.horizon(),
        directed_information_xy: xy,
        directed_information_xb: xb,
        per_symbol: xy / steps,
    })
}

/// `I(X^n -> Y^n) <= I(X^n -> B^n)`.
pub fn check_dpi<T: Scalar>(table: &JointTable<T>) -> Result<DpiReport<T>> {
    table.require(&[Var::X, Var::B, Var::Y])?;
    let xy = directed_information_between(table, Var::X, Var::Y)?;
    let xb = directed_information_between(table, Var::X, Var::B)?;
    Ok(DpiReport::new(xy, xb))
}
