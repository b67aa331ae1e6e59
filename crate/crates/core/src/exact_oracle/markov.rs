use serde::{Deserialize, Serialize};

use super::table::{JointTable, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conditioning events lighter than this are skipped.
pub const NEGLIGIBLE_MASS: f64 = 1e-14;

/// Largest deviation of each factorization-implied conditional independence,
/// over all times `i = 0..=n`:
///
/// ```text
/// mc1  (A^{i-1}, B^{i-1}, Y^{i-1}) - X^{i-1} - X_i
/// mc2  Y^{i-1} - (A^{i-1}, B^{i-1}, X^i) - A_i
/// mc3  Y^{i-1} - (A^i, B^{i-1}, X^i) - B_i
/// mc4  (A^i, X^i) - (B^i, Y^{i-1}) - Y_i
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport<T> {
    pub mc1: T,
    pub mc2: T,
    pub mc3: T,
    pub mc4: T,
}

impl<T: Scalar> MarkovReport<T> {
    pub fn max(&self) -> T {
        self.mc1.max(self.mc2).max(self.mc3).max(self.mc4)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    U,
    V,
    W,
    Skip,
}

/// Role of variable `var` at time `t` in chain `which` at stage `i`.
fn role(which: usize, var: Var, t: usize, i: usize) -> Role {
    use Role::*;
    let past = t < i;
    let now = t == i;
    match (which, var) {
        (1, Var::A | Var::B | Var::Y) if past => U,
        (1, Var::X) if past => V,
        (1, Var::X) if now => W,
        (2, Var::Y) if past => U,
        (2, Var::A | Var::B) if past => V,
        (2, Var::X) => V,
        (2, Var::A) if now => W,
        (3, Var::Y) if past => U,
        (3, Var::A | Var::X) => V,
        (3, Var::B) if past => V,
        (3, Var::B) if now => W,
        (4, Var::A | Var::X) => U,
        (4, Var::B) => V,
        (4, Var::Y) if past => V,
        (4, Var::Y) if now => W,
        _ => Skip,
    }
}

/// Max over `(u, v)` of `max_w |P(w | u, v) - P(w | v)|` for the chain at stage `i`.
fn chain_violation<T: Scalar>(table: &JointTable<T>, prefix: &[T], which: usize, i: usize) -> T {
    let k = table.vars().len();
    let sizes = table.sizes();
    let step = table.step();
    let mut dims = [1usize; 3];
    let mut layout = Vec::with_capacity(k * (i + 1));
    for t in 0..=i {
        for (j, &v) in table.vars().iter().enumerate() {
            let r = role(which, v, t, i);
            if let Some(slot) = [Role::U, Role::V, Role::W].iter().position(|&x| x == r) {
                dims[slot] *= sizes[j];
            }
            layout.push(r);
        }
    }
    let (nu, nv, nw) = (dims[0], dims[1], dims[2]);
    let mut joint = vec![T::zero(); nu * nv * nw];
    let mut sym = vec![0; k];
    for (idx, &p) in prefix.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        let mut c = [0usize; 3];
        let mut rest = idx;
        let mut scale = [1usize; 3];
        for t in (0..=i).rev() {
            table.split_digit(rest % step, &mut sym);
            rest /= step;
            for j in (0..k).rev() {
                let slot = match layout[t * k + j] {
                    Role::U => 0,
                    Role::V => 1,
                    Role::W => 2,
                    Role::Skip => continue,
                };
                c[slot] += sym[j] * scale[slot];
                scale[slot] *= sizes[j];
            }
        }
        joint[(c[0] * nv + c[1]) * nw + c[2]] += p;
    }
    let mut vw = vec![T::zero(); nv * nw];
    for u in 0..nu {
        for v in 0..nv {
            for w in 0..nw {
                vw[v * nw + w] += joint[(u * nv + v) * nw + w];
            }
        }
    }
    let floor = T::lit(NEGLIGIBLE_MASS);
    let mut worst = T::zero();
    for v in 0..nv {
        let pv: T = vw[v * nw..(v + 1) * nw].iter().copied().sum();
        if pv < floor {
            continue;
        }
        for u in 0..nu {
            let row = &joint[(u * nv + v) * nw..(u * nv + v + 1) * nw];
            let puv: T = row.iter().copied().sum();
            if puv < floor {
                continue;
            }
            for w in 0..nw {
                worst = worst.max((row[w] / puv - vw[v * nw + w] / pv).abs());
            }
        }
    }
    worst
}

/// Checks the four chains on a table carrying `X, A, B, Y`.
pub fn check_markov_chains<T: Scalar>(table: &JointTable<T>) -> Result<MarkovReport<T>> {
    if table.vars() != Var::ALL {
        return Err(Error::shape("Markov chain checks need the full X, A, B, Y table"));
    }
    let mut out = [T::zero(); 4];
    for i in 0..=table.horizon() {
        let prefix = table.prefix_marginal(i + 1);
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = slot.max(chain_violation(table, &prefix, c + 1, i));
        }
    }
    Ok(MarkovReport { mc1: out[0], mc2: out[1], mc3: out[2], mc4: out[3] })
}
