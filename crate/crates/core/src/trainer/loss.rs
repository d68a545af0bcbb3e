use serde::{Deserialize, Serialize};

use crate::cover::JointDataset;
use crate::nn::{Cache, Gradients, InterfaceFn, Mlp, Scratch, ValueFn};
use crate::parallel::{map_reduce, CHUNK};
use crate::scalar::Scalar;
use crate::system::SystemDef;

use super::{DatasetLabels, KLoss, Label, StepMode, TrainConfig};

/// Probabilities are clamped to `[CE_CLAMP, 1 − CE_CLAMP]` inside the log.
pub const CE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy `−[y log p + (1−y) log(1−p)]`.
pub fn ce(p: f64, y: f64) -> f64 {
    let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Loss terms and how many samples contributed to each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub lk: f64,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub n4: u64,
    pub nk: u64,
}

impl LossBreakdown {
    pub fn total_v(&self) -> f64 {
        self.l1 + self.l2 + self.l3 + self.l4
    }

    pub fn is_finite(&self) -> bool {
        [self.l1, self.l2, self.l3, self.l4, self.lk].iter().all(|v| v.is_finite())
    }

    fn merge(mut self, o: &Self) -> Self {
        self.l1 += o.l1;
        self.l2 += o.l2;
        self.l3 += o.l3;
        self.l4 += o.l4;
        self.lk += o.lk;
        self.n1 += o.n1;
        self.n2 += o.n2;
        self.n3 += o.n3;
        self.n4 += o.n4;
        self.nk += o.nk;
        self
    }
}

fn merge_parts<T: Scalar>(a: (LossBreakdown, Gradients<T>), b: (LossBreakdown, Gradients<T>)) -> (LossBreakdown, Gradients<T>) {
    let (la, mut ga) = a;
    ga.add_assign(&b.1);
    (la.merge(&b.0), ga)
}

/// Adds `ce(V(z), y)` to `acc` and its gradient (logit form `p − y`) to `g`.
fn ce_term<T: Scalar>(v: &Mlp<T>, cache: &Cache<T>, p: f64, y: f64, g: &mut Gradients<T>) -> f64 {
    v.backward_from_logits(cache, vec![T::lit(p - y)], g, None);
    ce(p, y)
}

/// Classifier losses `l₁…l₄` and their gradients with respect to `V`; the
/// frozen interface `k` only produces the successors of `l₃`.
///
/// `pairs` selects `T_d` indices (all of them when `None`); `x_nsi` lists
/// `(X₀ᵈ, X̂₀ᵈ)` index pairs currently violating the initial condition.
/// A term is skipped once its predicate holds with slack `cfg.ce_margin`,
/// so zero loss implies (7)–(9) on the evaluated points. Losses and
/// gradients are sums over samples.
#[allow(clippy::too_many_arguments)]
pub fn loss_v<T: Scalar, K: InterfaceFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    labels: &DatasetLabels<T>,
    x_nsi: &[(u32, u32)],
    v: &Mlp<T>,
    k: &K,
    target: &SystemDef<T>,
    cfg: &TrainConfig,
    pairs: Option<&[usize]>,
) -> (LossBreakdown, Gradients<T>) {
    let kappa = cfg.ce_margin;
    let hi = 0.5 + cfg.eta;
    let lo = 0.5 - cfg.eta;
    let (n, nh, mh, m) = (ds.n(), ds.n_hat(), ds.m_hat(), ds.m());
    let nu = ds.inputs.len();
    let count = pairs.map_or(ds.len(), |p| p.len());
    let zero = (LossBreakdown::default(), Gradients::zeros_like(v));

    let main = map_reduce(
        count,
        CHUNK,
        |range| {
            let mut lb = LossBreakdown::default();
            let mut g = Gradients::zeros_like(v);
            let mut cache = Cache::default();
            let mut scratch = Scratch::default();
            let mut z = vec![T::zero(); n + nh];
            let mut zk = vec![T::zero(); n + nh + mh];
            let mut u = vec![T::zero(); m];
            for i in range {
                let p = pairs.map_or(i, |ps| ps[i]);
                let (x, xh) = z.split_at_mut(n);
                ds.pair_into(p, x, xh);
                let here = v.forward_cached(&z, &mut cache)[0].as_f64();
                match labels.labels[p] {
                    Label::Positive if here < hi + kappa => {
                        lb.l2 += ce_term(v, &cache, here, 1.0, &mut g);
                        lb.n2 += 1;
                    }
                    Label::Negative if here >= lo - kappa => {
                        lb.l4 += ce_term(v, &cache, here, 0.0, &mut g);
                        lb.n4 += 1;
                    }
                    _ => {}
                }
                if here >= hi {
                    zk[..n + nh].copy_from_slice(&z);
                    let thr = match cfg.mode {
                        StepMode::Relaxed => 0.5 + 2.0 * cfg.eta,
                        StepMode::Strict => here + cfg.eta,
                    };
                    let j = ds.pairs[p].1 as usize;
                    for kk in 0..nu {
                        ds.inputs.center_into(kk, &mut zk[n + nh..]);
                        k.act(&zk, &mut u, &mut scratch);
                        target.step_into(&zk[..n], &u, &mut z[..n]);
                        z[n..].copy_from_slice(ds.source_next_state(j, kk));
                        let next = v.forward_cached(&z, &mut cache)[0].as_f64();
                        if next < thr + kappa {
                            lb.l3 += ce_term(v, &cache, next, 1.0, &mut g);
                            lb.n3 += 1;
                        }
                    }
                }
            }
            (lb, g)
        },
        (LossBreakdown::default(), Gradients::zeros_like(v)),
        merge_parts,
    );

    let init = map_reduce(
        x_nsi.len(),
        CHUNK,
        |range| {
            let mut lb = LossBreakdown::default();
            let mut g = Gradients::zeros_like(v);
            let mut cache = Cache::default();
            let mut z = vec![T::zero(); n + nh];
            for &(a, b) in &x_nsi[range] {
                ds.initial.center_into(a as usize, &mut z[..n]);
                ds.initial_hat.center_into(b as usize, &mut z[n..]);
                let val = v.forward_cached(&z, &mut cache)[0].as_f64();
                if val < hi + kappa {
                    lb.l1 += ce_term(v, &cache, val, 1.0, &mut g);
                    lb.n1 += 1;
                }
            }
            (lb, g)
        },
        zero,
        merge_parts,
    );
    merge_parts(main, init)
}

fn discrepancy<T: Scalar>(y: &[T], yh: &[T], kind: KLoss) -> f64 {
    let l = y.len() as f64;
    let s: f64 = y
        .iter()
        .zip(yh)
        .map(|(&a, &b)| {
            let d = (a - b).as_f64();
            match kind {
                KLoss::MeanAbs => d.abs(),
                KLoss::Squared => d * d,
            }
        })
        .sum();
    s / l
}

/// Interface loss over pairs with `V(x, x̂) ≥ 0.5 + η` and every `û ∈ Û_d`,
/// with gradients reaching `K` through central differences of the target
/// dynamics in the control input.
pub fn loss_k<T: Scalar, V: ValueFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    v: &V,
    k: &Mlp<T>,
    target: &SystemDef<T>,
    cfg: &TrainConfig,
    pairs: Option<&[usize]>,
) -> (LossBreakdown, Gradients<T>) {
    let gate = T::lit(0.5 + cfg.eta);
    let (n, nh, mh, m, l) = (ds.n(), ds.n_hat(), ds.m_hat(), ds.m(), ds.l());
    let nu = ds.inputs.len();
    let delta = T::lit(cfg.fd_delta);
    let count = pairs.map_or(ds.len(), |p| p.len());
    map_reduce(
        count,
        CHUNK,
        |range| {
            let mut lb = LossBreakdown::default();
            let mut g = Gradients::zeros_like(k);
            let mut cache = Cache::default();
            let mut scratch = Scratch::default();
            let mut z = vec![T::zero(); n + nh + mh];
            let mut u = vec![T::zero(); m];
            let mut xn = vec![T::zero(); n];
            let mut y = vec![T::zero(); l];
            let mut du = vec![T::zero(); m];
            for i in range {
                let p = pairs.map_or(i, |ps| ps[i]);
                let (x, rest) = z.split_at_mut(n);
                ds.pair_into(p, x, &mut rest[..nh]);
                if !(v.value(&z[..n + nh], &mut scratch) >= gate) {
                    continue;
                }
                let j = ds.pairs[p].1 as usize;
                for kk in 0..nu {
                    ds.inputs.center_into(kk, &mut z[n + nh..]);
                    let yh = ds.source_next_output(j, kk);
                    u.copy_from_slice(k.forward_cached(&z, &mut cache));
                    let mut err_at = |u: &[T]| {
                        target.step_into(&z[..n], u, &mut xn);
                        target.output_into(&xn, &mut y);
                        discrepancy(&y, yh, cfg.k_loss)
                    };
                    lb.lk += err_at(&u);
                    lb.nk += 1;
                    for d in 0..m {
                        let base = u[d];
                        u[d] = base + delta;
                        let up = err_at(&u);
                        u[d] = base - delta;
                        let down = err_at(&u);
                        u[d] = base;
                        du[d] = T::lit((up - down) / (2.0 * cfg.fd_delta));
                    }
                    k.backward(&cache, &du, &mut g, None);
                }
            }
            (lb, g)
        },
        (LossBreakdown::default(), Gradients::zeros_like(k)),
        merge_parts,
    )
}
