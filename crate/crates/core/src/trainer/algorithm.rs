use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certifier::{full_certificate, lipschitz_caps, CertReport};
use crate::cover::JointDataset;
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, Gradients, Mlp, Scratch, TrainState, ValueFn};
use crate::parallel::map_indexed;
use crate::scalar::Scalar;
use crate::system::SystemDef;

use super::{initial_violations, label_dataset, loss_k, loss_v, DatasetLabels, KInit, LossBreakdown, TrainConfig};

/// Divergence restarts allowed before giving up.
pub const MAX_RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    K,
    V,
}

/// One optimizer iteration (losses are over the mini-batch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub phase: Phase,
    pub loss: LossBreakdown,
    pub l_v: f64,
    pub l_k: f64,
    pub lr: f64,
}

/// State after relabeling and certifying at the end of a phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub iter: usize,
    pub phase: Phase,
    pub positives: u64,
    pub negatives: u64,
    pub adjacent_label_conflicts: u64,
    pub x_nsi: u64,
    pub l_v: f64,
    pub l_k: f64,
    pub violations_init_7: u64,
    pub violations_positive_8: u64,
    pub violations_negative_9: u64,
    pub violations_step_10: u64,
    pub validity_11: bool,
    pub validity_12: bool,
    pub validity_13: bool,
    pub verdict: String,
}

impl PhaseRecord {
    /// One line of `key=value` fields.
    pub fn to_line(&self) -> String {
        format!(
            "iter={} phase={:?} positives={} negatives={} conflicts={} x_nsi={} l_v={} l_k={} v7={} v8={} v9={} v10={} c11={} c12={} c13={} verdict={}",
            self.iter,
            self.phase,
            self.positives,
            self.negatives,
            self.adjacent_label_conflicts,
            self.x_nsi,
            self.l_v,
            self.l_k,
            self.violations_init_7,
            self.violations_positive_8,
            self.violations_negative_9,
            self.violations_step_10,
            self.validity_11,
            self.validity_12,
            self.validity_13,
            self.verdict
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub iters: Vec<IterRecord>,
    pub phases: Vec<PhaseRecord>,
    pub restarts: usize,
}

pub struct PhaseEvent<'a, T> {
    pub record: &'a PhaseRecord,
    pub v: &'a Mlp<T>,
    pub k: &'a Mlp<T>,
}

pub struct TrainOutcome<T> {
    pub v: Mlp<T>,
    pub k: Mlp<T>,
    pub labels: DatasetLabels<T>,
    pub report: CertReport,
    pub history: History,
    pub success: bool,
    pub iterations: usize,
}

/// Fresh `V` and `K` for the dataset's dimensions, seeded from `cfg.seed`.
pub fn init_networks<T: Scalar>(
    ds: &JointDataset<T>,
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    cfg: &TrainConfig,
) -> Result<(Mlp<T>, Mlp<T>)> {
    let (n, nh) = (ds.n(), ds.n_hat());
    let v = Mlp::new_v(n + nh, &cfg.v_hidden, cfg.seed)?;
    let k_seed = cfg.seed.wrapping_add(1);
    let k = match cfg.k_init {
        KInit::Random => Mlp::new_k(n + nh + ds.m_hat(), &cfg.k_hidden, target.input_set.clone(), k_seed)?,
        KInit::PassThrough => {
            let gain = if cfg.k_gain.is_empty() {
                (0..ds.m())
                    .map(|i| (0..ds.m_hat()).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect()
            } else {
                cfg.k_gain.clone()
            };
            Mlp::pass_through_k(
                n + nh,
                &source.input_set,
                &gain,
                &cfg.k_hidden,
                target.input_set.clone(),
                cfg.k_init_noise,
                k_seed,
            )?
        }
    };
    Ok((v, k))
}

fn phase_record<T: Scalar>(iter: usize, phase: Phase, r: &CertReport, x_nsi: usize) -> PhaseRecord {
    let c = |name: &str| r.condition(name).map_or(0, |c| c.violations);
    PhaseRecord {
        iter,
        phase,
        positives: r.dataset.positives,
        negatives: r.dataset.negatives,
        adjacent_label_conflicts: r.dataset.adjacent_label_conflicts,
        x_nsi: x_nsi as u64,
        l_v: r.l_v,
        l_k: r.l_k,
        violations_init_7: c("init_7"),
        violations_positive_8: c("positive_8"),
        violations_negative_9: c("negative_9"),
        violations_step_10: c("step_10"),
        validity_11: r.validity.pass_11,
        validity_12: r.validity.pass_12,
        validity_13: r.validity.pass_13,
        verdict: r.verdict.clone(),
    }
}

/// Pairs where the classifier currently reaches `0.5 + η`.
fn gated_pairs<T: Scalar>(ds: &JointDataset<T>, v: &Mlp<T>, cfg: &TrainConfig) -> Vec<usize> {
    let gate = T::lit(0.5 + cfg.eta);
    let flags = map_indexed(ds.len(), |p| {
        let mut s = Scratch::default();
        ValueFn::value(v, &ds.pair_input(p), &mut s) >= gate
    });
    flags.iter().enumerate().filter(|&(_, &f)| f).map(|(p, _)| p).collect()
}

/// Cycles through a seeded permutation, reshuffling at each epoch.
struct Batcher {
    items: Vec<usize>,
    pos: usize,
}

impl Batcher {
    fn new(items: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Self { items, pos: 0 };
        b.items.shuffle(rng);
        b
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size.min(self.items.len()));
        while out.len() < size.min(self.items.len()) {
            if self.pos == self.items.len() {
                self.items.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.items[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Hinge on the Lipschitz bound above `cap`. A zero cap means no bound
/// satisfies the validity conditions, and the hinge is skipped.
fn add_lip_penalty<T: Scalar>(net: &Mlp<T>, cap: f64, weight: f64, g: &mut Gradients<T>) {
    if weight > 0.0 && cap > 0.0 && net.lipschitz_upper_bound() > cap {
        net.add_lipschitz_gradient(T::lit(weight), g);
    }
}

/// Alternating training of `K` and `V` (K phase first), relabeling and
/// certifying after every phase of `cfg.phase_len` iterations. Stops at the
/// first passing certificate or after `cfg.max_iters` iterations, returning
/// the best networks seen. `progress` is called once per phase with the
/// networks as they are after that phase.
pub fn algorithm1<T: Scalar>(
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    ds: &JointDataset<T>,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&PhaseEvent<'_, T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    cfg.error_budget()?;
    let (mut v, mut k) = init_networks(ds, target, source, cfg)?;
    let mut sv = TrainState::new(&v, cfg.lr_v, cfg.seed);
    let mut sk = TrainState::new(&k, cfg.lr_k, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::default();

    let mut labels = label_dataset(ds, target, &k, cfg)?;
    let mut report = full_certificate(ds, &labels, &v, &k, target, source, cfg);
    let mut best: Option<(Mlp<T>, Mlp<T>, DatasetLabels<T>, CertReport)> = None;
    let mut iter = 0usize;
    let mut phase = Phase::K;
    let vp = cfg.into();

    if cfg.max_iters == 0 || report.passed() {
        let rec = phase_record::<T>(0, phase, &report, 0);
        progress(&PhaseEvent { record: &rec, v: &v, k: &k });
        history.phases.push(rec);
        let success = report.passed();
        return Ok(TrainOutcome { v, k, labels, report, history, success, iterations: 0 });
    }

    while iter < cfg.max_iters {
        let len = cfg.phase_len.min(cfg.max_iters - iter);
        let x_nsi = initial_violations(ds, &v, 0.5 + cfg.eta + cfg.ce_margin);
        let checkpoint = (v.clone(), k.clone(), sv.clone(), sk.clone(), rng.clone(), history.iters.len());
        let mut restarts_here = 0;
        'attempt: loop {
            let items = match phase {
                Phase::K => gated_pairs(ds, &v, cfg),
                Phase::V => (0..ds.len()).collect(),
            };
            let mut batcher = Batcher::new(items, &mut rng);
            let mut init_batcher = Batcher::new((0..x_nsi.len()).collect(), &mut rng);
            for t in 0..len {
                let batch = batcher.next(cfg.batch_size, &mut rng);
                let (loss, grads_ok) = match phase {
                    Phase::K => {
                        let (lb, mut g) = loss_k(ds, &v, &k, target, cfg, Some(&batch));
                        if !batch.is_empty() {
                            g.scale(T::lit(1.0 / batch.len() as f64));
                        }
                        let (_, cap) = lipschitz_caps(&target.lipschitz, &source.lipschitz, v.lipschitz_upper_bound(), k.lipschitz_upper_bound(), &vp);
                        add_lip_penalty(&k, cap, cfg.lip_penalty, &mut g);
                        let ok = lb.is_finite() && optimizer_step(&mut k, &g, &mut sk).is_ok();
                        (lb, ok)
                    }
                    Phase::V => {
                        let init_batch: Vec<(u32, u32)> = init_batcher
                            .next(cfg.batch_size, &mut rng)
                            .into_iter()
                            .map(|i| x_nsi[i])
                            .collect();
                        let (mut lb, mut g) = loss_v(ds, &labels, &[], &v, &k, target, cfg, Some(&batch));
                        if !batch.is_empty() {
                            g.scale(T::lit(1.0 / batch.len() as f64));
                        }
                        if !init_batch.is_empty() {
                            let (li, mut gi) = loss_v(ds, &labels, &init_batch, &v, &k, target, cfg, Some(&[]));
                            gi.scale(T::lit(1.0 / init_batch.len() as f64));
                            g.add_assign(&gi);
                            lb.l1 = li.l1;
                            lb.n1 = li.n1;
                        }
                        let (cap, _) = lipschitz_caps(&target.lipschitz, &source.lipschitz, v.lipschitz_upper_bound(), k.lipschitz_upper_bound(), &vp);
                        add_lip_penalty(&v, cap, cfg.lip_penalty, &mut g);
                        let ok = lb.is_finite() && optimizer_step(&mut v, &g, &mut sv).is_ok();
                        (lb, ok)
                    }
                };
                if !grads_ok {
                    history.restarts += 1;
                    restarts_here += 1;
                    if history.restarts > MAX_RESTARTS {
                        return Err(Error::Diverged(format!(
                            "non-finite loss at iteration {} after {MAX_RESTARTS} learning-rate halvings",
                            iter + t
                        )));
                    }
                    let (cv, ck, csv, csk, crng, hlen) = checkpoint.clone();
                    let (lr_v, lr_k) = (sv.lr, sk.lr);
                    (v, k, sv, sk, rng) = (cv, ck, csv, csk, crng);
                    sv.lr = lr_v;
                    sk.lr = lr_k;
                    match phase {
                        Phase::K => sk.lr *= 0.5,
                        Phase::V => sv.lr *= 0.5,
                    }
                    history.iters.truncate(hlen);
                    log::warn!("non-finite loss in {phase:?} phase, restarting with halved learning rate (restart {restarts_here})");
                    continue 'attempt;
                }
                history.iters.push(IterRecord {
                    iter: iter + t,
                    phase,
                    loss,
                    l_v: v.lipschitz_upper_bound(),
                    l_k: k.lipschitz_upper_bound(),
                    lr: match phase {
                        Phase::K => sk.lr,
                        Phase::V => sv.lr,
                    },
                });
            }
            break;
        }
        iter += len;
        labels = label_dataset(ds, target, &k, cfg)?;
        report = full_certificate(ds, &labels, &v, &k, target, source, cfg);
        let rec = phase_record::<T>(iter, phase, &report, x_nsi.len());
        progress(&PhaseEvent { record: &rec, v: &v, k: &k });
        history.phases.push(rec);
        if report.passed() {
            return Ok(TrainOutcome { v, k, labels, report, history, success: true, iterations: iter });
        }
        if best.as_ref().is_none_or(|b| report.total_violations() < b.3.total_violations()) {
            best = Some((v.clone(), k.clone(), labels.clone(), report.clone()));
        }
        phase = match phase {
            Phase::K => Phase::V,
            Phase::V => Phase::K,
        };
    }
    let (v, k, labels, report) = best.expect("at least one phase ran");
    Ok(TrainOutcome { v, k, labels, report, history, success: false, iterations: iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::build_joint_dataset;
    use crate::system::builtin_system;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            e: 0.125,
            e_hat: 0.5,
            phase_len: 5,
            max_iters: 20,
            batch_size: 32,
            v_hidden: vec![8, 8],
            k_hidden: vec![8],
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_iterations_report_every_failure() {
        let p = builtin_system::<f64>("pendulum").unwrap();
        let cfg = TrainConfig { max_iters: 0, ..small_cfg() };
        let ds = build_joint_dataset(&p, &p, &cfg.dataset_params()).unwrap();
        let out = algorithm1(&p, &p, &ds, &cfg, &mut |_| {}).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 0);
        assert!(!out.report.failing.is_empty());
        assert_eq!(out.report.failing, out.report.recompute_failing());
    }

    #[test]
    fn runs_are_bit_identical() {
        let p = builtin_system::<f64>("pendulum").unwrap();
        let cfg = small_cfg();
        let ds = build_joint_dataset(&p, &p, &cfg.dataset_params()).unwrap();
        let a = algorithm1(&p, &p, &ds, &cfg, &mut |_| {}).unwrap();
        let b = algorithm1(&p, &p, &ds, &cfg, &mut |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.v, b.v);
        assert_eq!(a.k, b.k);
        assert_eq!(a.report, b.report);
        assert_eq!(a.history.phases.len(), 4);
        assert_eq!(a.history.iters.len(), 20);
    }
}
