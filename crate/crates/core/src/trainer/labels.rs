use serde::{Deserialize, Serialize};

use crate::cover::JointDataset;
use crate::error::Result;
use crate::nn::{InterfaceFn, Scratch, ValueFn};
use crate::parallel::{map_reduce, CHUNK};
use crate::scalar::{dist_inf, Scalar};
use crate::system::SystemDef;

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Undecided,
}

/// Classification of every `T_d` pair for the current interface.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLabels<T> {
    pub labels: Vec<Label>,
    /// `max_û ‖h(f(x, K(x,x̂,û))) − ĥ(f̂(x̂,û))‖∞` per pair.
    pub max_err: Vec<T>,
}

impl<T: Scalar> DatasetLabels<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Positive).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Negative).count()
    }

    /// Labels built directly, without successors (for checks on hand-made
    /// datasets).
    pub fn from_labels(labels: Vec<Label>) -> Self {
        let max_err = vec![T::zero(); labels.len()];
        Self { labels, max_err }
    }
}

/// Labels every pair positive iff the next-output error stays below `ε − γ`
/// for every `û ∈ Û_d`, negative otherwise.
pub fn label_dataset<T: Scalar, K: InterfaceFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    target: &SystemDef<T>,
    k: &K,
    cfg: &TrainConfig,
) -> Result<DatasetLabels<T>> {
    let budget = T::lit(cfg.error_budget()?);
    let (n, nh, mh, m, l) = (ds.n(), ds.n_hat(), ds.m_hat(), ds.m(), ds.l());
    let nu = ds.inputs.len();
    type Part<T> = (Vec<Label>, Vec<T>);
    let part = map_reduce(
        ds.len(),
        CHUNK,
        |range| {
            let mut labels = Vec::with_capacity(range.len());
            let mut errs = Vec::with_capacity(range.len());
            let mut z = vec![T::zero(); n + nh + mh];
            let mut u = vec![T::zero(); m];
            let mut xn = vec![T::zero(); n];
            let mut y = vec![T::zero(); l];
            let mut scratch = Scratch::default();
            for p in range {
                let (x, rest) = z.split_at_mut(n);
                ds.pair_into(p, x, &mut rest[..nh]);
                let j = ds.pairs[p].1 as usize;
                let mut worst = T::zero();
                for kk in 0..nu {
                    ds.inputs.center_into(kk, &mut z[n + nh..]);
                    k.act(&z, &mut u, &mut scratch);
                    target.step_into(&z[..n], &u, &mut xn);
                    target.output_into(&xn, &mut y);
                    let err = dist_inf(&y, ds.source_next_output(j, kk));
                    // NaN compares false and counts as the worst case
                    if !(err <= worst) {
                        worst = err;
                    }
                }
                labels.push(if worst < budget { Label::Positive } else { Label::Negative });
                errs.push(worst);
            }
            (labels, errs)
        },
        (Vec::new(), Vec::new()),
        |mut a: Part<T>, b: Part<T>| {
            a.0.extend(b.0);
            a.1.extend(b.1);
            a
        },
    );
    Ok(DatasetLabels {
        labels: part.0,
        max_err: part.1,
    })
}

/// Best initial witness per `X̂₀ᵈ` cell: `(argmax V, max V)`, first index on
/// ties; `None` when the cell has no output-close candidate.
pub fn best_initial_witnesses<T: Scalar, V: ValueFn<T> + ?Sized>(ds: &JointDataset<T>, v: &V) -> Vec<Option<(u32, T)>> {
    let (n, nh) = (ds.n(), ds.n_hat());
    map_reduce(
        ds.initial_hat.len(),
        64,
        |range| {
            let mut z = vec![T::zero(); n + nh];
            let mut scratch = Scratch::default();
            range
                .map(|b| {
                    ds.initial_hat.center_into(b, &mut z[n..]);
                    let mut best: Option<(u32, T)> = None;
                    for &a in &ds.init_candidates[b] {
                        ds.initial.center_into(a as usize, &mut z[..n]);
                        let val = v.value(&z, &mut scratch);
                        if best.is_none_or(|(_, bv)| val > bv) {
                            best = Some((a, val));
                        }
                    }
                    best
                })
                .collect::<Vec<_>>()
        },
        Vec::new(),
        |mut a, b| {
            a.extend(b);
            a
        },
    )
}

/// `X_nsi`: for each `x̂₀` whose best witness has `V < threshold`, the pair
/// (best `x₀`, `x̂₀`) as `(X₀ᵈ index, X̂₀ᵈ index)`.
pub fn initial_violations<T: Scalar, V: ValueFn<T> + ?Sized>(ds: &JointDataset<T>, v: &V, threshold: f64) -> Vec<(u32, u32)> {
    let thr = T::lit(threshold);
    best_initial_witnesses(ds, v)
        .into_iter()
        .enumerate()
        .filter_map(|(b, w)| match w {
            Some((a, val)) if val < thr => Some((a, b as u32)),
            _ => None,
        })
        .collect()
}
