//! Grid conditions (7)–(10), Lipschitz validity conditions (11)–(13), and
//! the combined certificate.

use serde::{Deserialize, Serialize};

use crate::cover::JointDataset;
use crate::error::{Error, Result};
use crate::nn::{InterfaceFn, Scratch, ValueFn};
use crate::parallel::{map_reduce, CHUNK};
use crate::rounding::{add, mul};
use crate::scalar::Scalar;
use crate::system::{Lipschitz, SystemDef};
use crate::trainer::{best_initial_witnesses, DatasetLabels, Label, StepMode, TrainConfig};

/// Counterexamples kept per condition.
pub const MAX_COUNTEREXAMPLES: usize = 100;

/// Outcome of one grid condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub passed: bool,
    /// Worst slack over all checked points (negative or zero where violated
    /// for strict inequalities); `inf` when nothing was checked.
    pub margin: f64,
    pub checked: u64,
    pub violations: u64,
    pub counterexamples: Vec<Vec<f64>>,
}

/// Running min-margin / violation accumulator for a grid sweep.
#[derive(Debug, Clone)]
struct Sweep {
    margin: f64,
    checked: u64,
    violations: u64,
    examples: Vec<Vec<f64>>,
}

impl Sweep {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            checked: 0,
            violations: 0,
            examples: Vec::new(),
        }
    }

    fn record<T: Scalar>(&mut self, margin: f64, ok: bool, point: impl FnOnce() -> Vec<T>) {
        self.checked += 1;
        // NaN margins are failures and poison the minimum
        if !(margin >= self.margin) {
            self.margin = margin;
        }
        if !ok {
            self.violations += 1;
            if self.examples.len() < MAX_COUNTEREXAMPLES {
                self.examples.push(point().into_iter().map(|v| v.as_f64()).collect());
            }
        }
    }

    fn merge(mut self, other: Sweep) -> Sweep {
        if !(other.margin >= self.margin) {
            self.margin = other.margin;
        }
        self.checked += other.checked;
        self.violations += other.violations;
        let room = MAX_COUNTEREXAMPLES - self.examples.len();
        self.examples.extend(other.examples.into_iter().take(room));
        self
    }

    fn finish(self, name: &str) -> ConditionReport {
        ConditionReport {
            name: name.into(),
            passed: self.violations == 0,
            margin: self.margin,
            checked: self.checked,
            violations: self.violations,
            counterexamples: self.examples,
        }
    }
}

/// Condition (7): every `x̂₀ ∈ X̂₀ᵈ` has an output-close `x₀ ∈ X₀ᵈ` with
/// `V(x₀, x̂₀) ≥ 0.5 + η`. Counterexamples are the uncovered `x̂₀`.
pub fn check_init<T: Scalar, V: ValueFn<T> + ?Sized>(ds: &JointDataset<T>, v: &V, cfg: &TrainConfig) -> ConditionReport {
    let thr = 0.5 + cfg.eta;
    let best = best_initial_witnesses(ds, v);
    let mut s = Sweep::new();
    for (b, w) in best.into_iter().enumerate() {
        let val = w.map_or(f64::NEG_INFINITY, |(_, v)| v.as_f64());
        s.record(val - thr, val >= thr, || ds.initial_hat.center(b));
    }
    s.finish("init_7")
}

/// Conditions (8) and (9): positives need `V ≥ 0.5 + η`, negatives need
/// `V < 0.5 − η`.
pub fn check_classification<T: Scalar, V: ValueFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    labels: &DatasetLabels<T>,
    v: &V,
    cfg: &TrainConfig,
) -> (ConditionReport, ConditionReport) {
    let hi = 0.5 + cfg.eta;
    let lo = 0.5 - cfg.eta;
    let (pos, neg) = map_reduce(
        ds.len(),
        CHUNK,
        |range| {
            let (mut pos, mut neg) = (Sweep::new(), Sweep::new());
            let mut scratch = Scratch::default();
            for p in range {
                let z = ds.pair_input(p);
                let val = v.value(&z, &mut scratch).as_f64();
                match labels.labels[p] {
                    Label::Positive => pos.record(val - hi, val >= hi, || z),
                    Label::Negative => neg.record(lo - val, val < lo, || z),
                    Label::Undecided => {}
                }
            }
            (pos, neg)
        },
        (Sweep::new(), Sweep::new()),
        |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
    );
    (pos.finish("positive_8"), neg.finish("negative_9"))
}

/// Condition (10) on every pair with `V ≥ 0.5 + η` and every `û ∈ Û_d`.
/// Counterexamples are `(x, x̂, û)`.
pub fn check_step<T: Scalar, V: ValueFn<T> + ?Sized, K: InterfaceFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    v: &V,
    k: &K,
    target: &SystemDef<T>,
    cfg: &TrainConfig,
) -> ConditionReport {
    let gate = T::lit(0.5 + cfg.eta);
    let (n, nh, mh, m) = (ds.n(), ds.n_hat(), ds.m_hat(), ds.m());
    let nu = ds.inputs.len();
    let s = map_reduce(
        ds.len(),
        CHUNK,
        |range| {
            let mut s = Sweep::new();
            let mut scratch = Scratch::default();
            let mut z = vec![T::zero(); n + nh + mh];
            let mut succ = vec![T::zero(); n + nh];
            let mut u = vec![T::zero(); m];
            for p in range {
                let (x, rest) = z.split_at_mut(n);
                ds.pair_into(p, x, &mut rest[..nh]);
                let here = v.value(&z[..n + nh], &mut scratch);
                if !(here >= gate) {
                    continue;
                }
                let thr = match cfg.mode {
                    StepMode::Strict => here.as_f64() + cfg.eta,
                    StepMode::Relaxed => 0.5 + 2.0 * cfg.eta,
                };
                let j = ds.pairs[p].1 as usize;
                for kk in 0..nu {
                    ds.inputs.center_into(kk, &mut z[n + nh..]);
                    k.act(&z, &mut u, &mut scratch);
                    target.step_into(&z[..n], &u, &mut succ[..n]);
                    succ[n..].copy_from_slice(ds.source_next_state(j, kk));
                    let val = v.value(&succ, &mut scratch).as_f64();
                    s.record(val - thr, val >= thr, || z.clone());
                }
            }
            s
        },
        Sweep::new(),
        Sweep::merge,
    );
    s.finish("step_10")
}

/// Constants entering (11)–(13).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityParams {
    pub eta: f64,
    pub gamma: f64,
    pub e: f64,
    pub e_hat: f64,
}

impl From<&TrainConfig> for ValidityParams {
    fn from(c: &TrainConfig) -> Self {
        Self {
            eta: c.eta,
            gamma: c.gamma,
            e: c.e,
            e_hat: c.e_hat,
        }
    }
}

/// Left- and right-hand sides of the validity conditions. Left-hand sides
/// are rounded upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub l_v: f64,
    pub l_k: f64,
    pub lhs_11: f64,
    pub rhs_11: f64,
    pub pass_11: bool,
    pub lhs_12: f64,
    pub rhs_12: f64,
    pub pass_12: bool,
    /// (12) with `K`'s perturbation taken as `max(𝔢/2, 𝔢̂/2)`, reference only.
    pub lhs_12_alt: f64,
    pub pass_12_alt: bool,
    pub lhs_13: f64,
    pub rhs_13: f64,
    pub pass_13: bool,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.pass_11 && self.pass_12 && self.pass_13
    }
}

fn lhs_11(t: &Lipschitz, s: &Lipschitz, l_k: f64, e: f64, e_hat: f64) -> f64 {
    let (he, hu) = (e / 2.0, e_hat / 2.0);
    let target = mul(t.output, add(mul(t.state, he), mul(mul(t.input, l_k), he.max(hu))));
    let source = mul(s.output, add(mul(s.state, he), mul(s.input, hu)));
    add(target, source)
}

fn lhs_12(t: &Lipschitz, s: &Lipschitz, l_v: f64, l_k: f64, e: f64, e_hat: f64, k_pert: f64) -> f64 {
    let (he, hu) = (e / 2.0, e_hat / 2.0);
    let inner = add(
        mul(t.state.max(s.state), he),
        mul(mul(t.input, l_k), k_pert).max(mul(s.input, hu)),
    );
    mul(l_v, inner)
}

/// Evaluates (11)–(13) for target constants `t`, source constants `s`.
pub fn check_validity(t: &Lipschitz, s: &Lipschitz, l_v: f64, l_k: f64, p: &ValidityParams) -> ValidityReport {
    let (he, hu) = (p.e / 2.0, p.e_hat / 2.0);
    let a11 = lhs_11(t, s, l_k, p.e, p.e_hat);
    let a12 = lhs_12(t, s, l_v, l_k, p.e, p.e_hat, he);
    let a12_alt = lhs_12(t, s, l_v, l_k, p.e, p.e_hat, he.max(hu));
    let lhs_13 = mul(l_v, he);
    let rhs_12 = 2.0 * p.eta;
    ValidityReport {
        l_v,
        l_k,
        lhs_11: a11,
        rhs_11: p.gamma,
        pass_11: a11 <= p.gamma,
        lhs_12: a12,
        rhs_12,
        pass_12: a12 <= rhs_12,
        lhs_12_alt: a12_alt,
        pass_12_alt: a12_alt <= rhs_12,
        lhs_13,
        rhs_13: p.eta,
        pass_13: lhs_13 <= p.eta,
    }
}

/// Advisory bounds on the discretization before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecheckReport {
    /// Largest `𝔢` with `L_V_max·𝔢/2 ≤ η`.
    pub e_max_13: f64,
    /// Largest `𝔢` satisfying (12) at the configured `𝔢̂`.
    pub e_max_12: f64,
    /// Largest `𝔢` satisfying (11) at the configured `𝔢̂`.
    pub e_max_11: f64,
    pub e_max: f64,
    /// Smallest `γ` admitted by (11) at the configured `𝔢`, `𝔢̂`.
    pub gamma_min: f64,
    /// The configured `𝔢`, `𝔢̂` satisfy (11)–(13) under the assumed caps.
    pub feasible: bool,
}

/// Largest `x ∈ [0, ∞)` with `f(x) ≤ bound` for nondecreasing `f`.
fn invert_monotone(f: impl Fn(f64) -> f64, bound: f64) -> f64 {
    if !(f(0.0) <= bound) {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) <= bound {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn precheck(t: &Lipschitz, s: &Lipschitz, p: &ValidityParams, l_v_max: f64, l_k_max: f64) -> PrecheckReport {
    let e_max_13 = if p.eta <= 0.0 {
        0.0
    } else if l_v_max == 0.0 {
        f64::INFINITY
    } else {
        2.0 * p.eta / l_v_max
    };
    let e_max_12 = invert_monotone(|e| lhs_12(t, s, l_v_max, l_k_max, e, p.e_hat, e / 2.0), 2.0 * p.eta);
    let e_max_11 = invert_monotone(|e| lhs_11(t, s, l_k_max, e, p.e_hat), p.gamma);
    let e_max = e_max_13.min(e_max_12).min(e_max_11);
    let gamma_min = lhs_11(t, s, l_k_max, p.e, p.e_hat);
    let report = check_validity(t, s, l_v_max, l_k_max, p);
    PrecheckReport {
        e_max_13,
        e_max_12,
        e_max_11,
        e_max,
        gamma_min,
        feasible: p.eta > 0.0 && e_max > 0.0 && report.passed(),
    }
}

/// Largest `L_V` and `L_K` admitted by (11)–(13) given the other network's
/// current bound.
pub fn lipschitz_caps(t: &Lipschitz, s: &Lipschitz, l_v: f64, l_k: f64, p: &ValidityParams) -> (f64, f64) {
    let (he, hu) = (p.e / 2.0, p.e_hat / 2.0);
    let v_12 = 2.0 * p.eta / (t.state.max(s.state) * he + (t.input * l_k * he).max(s.input * hu));
    let v_cap = (p.eta / he).min(v_12);
    let fixed = t.output * t.state * he + s.output * (s.state * he + s.input * hu);
    let per_k = t.output * t.input * he.max(hu);
    let k_11 = if per_k > 0.0 { (p.gamma - fixed) / per_k } else { f64::INFINITY };
    let k_12 = if t.input * he > 0.0 && l_v > 0.0 {
        (2.0 * p.eta / l_v - t.state.max(s.state) * he) / (t.input * he)
    } else {
        f64::INFINITY
    };
    (v_cap, k_11.min(k_12).max(0.0))
}

/// Sizes and diagnostics of the certified dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub pairs: u64,
    pub positives: u64,
    pub negatives: u64,
    pub inputs: u64,
    pub initial: u64,
    pub initial_hat: u64,
    /// Grid-adjacent `T_d` pairs with opposite labels. Any such pair forces
    /// `L_V > 2η/𝔢`, which contradicts (13).
    pub adjacent_label_conflicts: u64,
}

/// Full Theorem-1 certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub verdict: String,
    pub failing: Vec<String>,
    pub mode: StepMode,
    pub note: String,
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    pub e: f64,
    pub e_hat: f64,
    pub l_v: f64,
    pub l_k: f64,
    pub l_v_spectral: f64,
    pub l_k_spectral: f64,
    pub config_hash: String,
    pub dataset: DatasetSummary,
    pub validity: ValidityReport,
    pub conditions: Vec<ConditionReport>,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    /// Names of failing checks recomputed from the individual results.
    pub fn recompute_failing(&self) -> Vec<String> {
        let mut f: Vec<String> = self.conditions.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        let v = &self.validity;
        for (ok, name) in [(v.pass_11, "validity_11"), (v.pass_12, "validity_12"), (v.pass_13, "validity_13")] {
            if !ok {
                f.push(name.into());
            }
        }
        f
    }

    /// The stored verdict agrees with the stored condition results.
    pub fn is_consistent(&self) -> bool {
        let f = self.recompute_failing();
        f == self.failing && (self.verdict == "pass") == f.is_empty()
    }

    /// Sum of violation counts plus one per failing validity inequality.
    pub fn total_violations(&self) -> u64 {
        let v = &self.validity;
        self.conditions.iter().map(|c| c.violations).sum::<u64>()
            + [v.pass_11, v.pass_12, v.pass_13].iter().filter(|&&ok| !ok).count() as u64
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Counts grid-adjacent pairs of `T_d` carrying opposite labels.
pub fn adjacent_label_conflicts<T: Scalar>(ds: &JointDataset<T>, labels: &DatasetLabels<T>) -> u64 {
    map_reduce(
        ds.len(),
        CHUNK,
        |range| {
            let mut c = 0u64;
            for p in range {
                let a = labels.labels[p];
                for q in ds.upper_neighbors(p) {
                    let b = labels.labels[q];
                    if a != b && a != Label::Undecided && b != Label::Undecided {
                        c += 1;
                    }
                }
            }
            c
        },
        0,
        |a, b| a + b,
    )
}

/// Runs every check; the verdict passes iff all of (7)–(13) hold.
pub fn full_certificate<T: Scalar, V: ValueFn<T> + ?Sized, K: InterfaceFn<T> + ?Sized>(
    ds: &JointDataset<T>,
    labels: &DatasetLabels<T>,
    v: &V,
    k: &K,
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    cfg: &TrainConfig,
) -> CertReport {
    let init = check_init(ds, v, cfg);
    let (pos, neg) = check_classification(ds, labels, v, cfg);
    let step = check_step(ds, v, k, target, cfg);
    let (l_v, l_k) = (v.lipschitz_bound(), k.lipschitz_bound());
    let validity = check_validity(&target.lipschitz, &source.lipschitz, l_v, l_k, &cfg.into());
    let note = match cfg.mode {
        StepMode::Relaxed => "condition 10 checked as V(successor) >= 0.5 + 2 eta".to_string(),
        StepMode::Strict => "condition 10 checked as V(successor) >= V(x, xhat) + eta".to_string(),
    };
    let mut report = CertReport {
        verdict: String::new(),
        failing: Vec::new(),
        mode: cfg.mode,
        note,
        epsilon: cfg.epsilon,
        eta: cfg.eta,
        gamma: cfg.gamma,
        e: cfg.e,
        e_hat: cfg.e_hat,
        l_v,
        l_k,
        l_v_spectral: v.spectral_bound(),
        l_k_spectral: k.spectral_bound(),
        config_hash: String::new(),
        dataset: DatasetSummary {
            pairs: ds.len() as u64,
            positives: labels.positives() as u64,
            negatives: labels.negatives() as u64,
            inputs: ds.inputs.len() as u64,
            initial: ds.initial.len() as u64,
            initial_hat: ds.initial_hat.len() as u64,
            adjacent_label_conflicts: adjacent_label_conflicts(ds, labels),
        },
        validity,
        conditions: vec![init, pos, neg, step],
    };
    report.failing = report.recompute_failing();
    report.verdict = if report.failing.is_empty() { "pass" } else { "fail" }.into();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{build_joint_dataset, DatasetParams};
    use crate::geometry::BoxSet;
    use crate::nn::{ConstValue, FnInterface, FnValue};
    use crate::system::{OutputFn, StepFn};
    use std::sync::Arc;

    fn vehicle() -> (Lipschitz, Lipschitz, ValidityParams) {
        let l = Lipschitz { state: 1.1, input: 0.1, output: 1.0 };
        (l, l, ValidityParams { eta: 0.3, gamma: 0.016, e: 0.002, e_hat: 0.0005 })
    }

    fn pendulum() -> (Lipschitz, Lipschitz, ValidityParams) {
        (
            Lipschitz { state: 1.098, input: 0.39, output: 1.0 },
            Lipschitz { state: 1.098, input: 0.091, output: 1.0 },
            ValidityParams { eta: 0.1, gamma: 0.02, e: 0.015, e_hat: 0.0005 },
        )
    }

    #[test]
    fn vehicle_validity_arithmetic() {
        let (t, s, p) = vehicle();
        let r = check_validity(&t, &s, 23.0, 8.32e-5, &p);
        assert!((r.lhs_11 - 0.002_225_008_32).abs() < 1e-12, "{}", r.lhs_11);
        assert!((r.lhs_12 - 0.025875).abs() < 1e-12);
        assert!((r.lhs_13 - 0.023).abs() < 1e-15);
        assert!(r.passed());
    }

    #[test]
    fn pendulum_validity_arithmetic() {
        let (t, s, mut p) = pendulum();
        let r = check_validity(&t, &s, 13.3, 5.17e-2, &p);
        assert!((r.lhs_11 - 0.016_643_972_5).abs() < 1e-12, "{}", r.lhs_11);
        assert!((r.lhs_12 - 0.111_536_759_25).abs() < 1e-11, "{}", r.lhs_12);
        assert!((r.lhs_13 - 0.09975).abs() < 1e-15);
        assert!(r.passed());
        p.e *= 2.0;
        let r = check_validity(&t, &s, 13.3, 5.17e-2, &p);
        assert!(!r.pass_13);
        assert!((r.lhs_13 - 0.1995).abs() < 1e-15);
    }

    #[test]
    fn validity_monotone_in_e() {
        let (t, s, p) = pendulum();
        let mut e = 0.015;
        let mut prev = check_validity(&t, &s, 13.3, 0.0517, &p);
        while e > 1e-6 {
            e /= 1.7;
            let r = check_validity(&t, &s, 13.3, 0.0517, &ValidityParams { e, ..p });
            assert!(r.lhs_11 <= prev.lhs_11 && r.lhs_12 <= prev.lhs_12 && r.lhs_13 <= prev.lhs_13);
            assert!(!prev.passed() || r.passed());
            prev = r;
        }
    }

    #[test]
    fn precheck_examples() {
        let (t, s, p) = vehicle();
        let r = precheck(&t, &s, &p, 23.0, 8.32e-5);
        assert!((r.e_max_13 - 0.6 / 23.0).abs() < 1e-15);
        assert!((r.e_max_13 - 0.026086).abs() < 1e-6);
        assert!(r.feasible);
        let r0 = precheck(&t, &s, &ValidityParams { eta: 0.0, ..p }, 23.0, 8.32e-5);
        assert_eq!(r0.e_max, 0.0);
        assert!(!r0.feasible);
        let a = precheck(&t, &s, &p, 23.0, 0.0);
        let b = precheck(&t, &s, &p, 23.0, 0.0);
        let no_k = s.output * (s.state * p.e / 2.0 + s.input * p.e_hat / 2.0) + t.output * t.state * p.e / 2.0;
        assert!((a.gamma_min - no_k).abs() < 1e-15);
        assert_eq!(a, b);
        // the (11) inversion lands on the boundary
        let at = check_validity(&t, &s, 0.0, 8.32e-5, &ValidityParams { e: r.e_max_11, ..p });
        assert!(at.pass_11 && (at.lhs_11 - p.gamma).abs() < 1e-12);
    }

    #[test]
    fn caps_reach_validity_boundary() {
        let (t, s, p) = pendulum();
        let (vc, kc) = lipschitz_caps(&t, &s, 13.3, 0.0517, &p);
        let r = check_validity(&t, &s, vc, kc, &p);
        assert!((r.lhs_13 - p.eta).abs() < 1e-12 || (r.lhs_12 - 2.0 * p.eta).abs() < 1e-9);
        assert!((r.lhs_11 - p.gamma).abs() < 1e-12 || (r.lhs_12 - 2.0 * p.eta).abs() < 1e-9);
    }

    fn line() -> SystemDef<f64> {
        let step: StepFn<f64> = Arc::new(|x: &[f64], u: &[f64], n: &mut [f64]| n[0] = 0.5 * x[0] + 0.1 * u[0]);
        let out: OutputFn<f64> = Arc::new(|x: &[f64], y: &mut [f64]| y[0] = x[0]);
        SystemDef::new(
            "line",
            BoxSet::cube(1, -1.0, 1.0),
            BoxSet::cube(1, -1.0, 1.0),
            BoxSet::cube(1, -1.0, 1.0),
            BoxSet::cube(1, -1.0, 1.0),
            Lipschitz { state: 0.5, input: 0.1, output: 1.0 },
            step,
            out,
        )
        .unwrap()
    }

    fn point_system() -> SystemDef<f64> {
        let step: StepFn<f64> = Arc::new(|x: &[f64], _: &[f64], n: &mut [f64]| n[0] = x[0]);
        let out: OutputFn<f64> = Arc::new(|x: &[f64], y: &mut [f64]| y[0] = x[0]);
        SystemDef::new(
            "point",
            BoxSet::cube(1, 0.0, 0.0),
            BoxSet::cube(1, 0.0, 0.0),
            BoxSet::cube(1, 0.0, 0.0),
            BoxSet::cube(1, 0.0, 0.0),
            Lipschitz { state: 1.0, input: 0.0, output: 1.0 },
            step,
            out,
        )
        .unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig { epsilon: 0.5, gamma: 0.1, eta: 0.1, e: 0.4, e_hat: 0.5, ..Default::default() }
    }

    fn ds(sys: &SystemDef<f64>) -> JointDataset<f64> {
        build_joint_dataset(sys, sys, &DatasetParams { epsilon: 0.5, e: 0.4, e_hat: 0.5, filter_slack: 0.0 }).unwrap()
    }

    #[test]
    fn init_condition_cases() {
        let s = line();
        let d = ds(&s);
        let c = cfg();
        let r = check_init(&d, &ConstValue(1.0), &c);
        assert!(r.passed);
        assert!((r.margin - (0.5 - c.eta)).abs() < 1e-15);
        let r = check_init(&d, &ConstValue(0.5), &c);
        assert!(!r.passed);
        assert_eq!(r.violations as usize, d.initial_hat.len());
        let p = point_system();
        let dp = ds(&p);
        assert_eq!(dp.initial.len(), 1);
        let r = check_init(&dp, &ConstValue(0.5 + c.eta), &c);
        assert!(r.passed);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn classification_boundaries() {
        let p = point_system();
        let d = ds(&p);
        let c = cfg();
        let pos = DatasetLabels::<f64>::from_labels(vec![Label::Positive]);
        let (a, b) = check_classification(&d, &pos, &ConstValue(0.5 + c.eta), &c);
        assert!(a.passed && b.passed);
        assert_eq!(a.margin, 0.0);
        let neg = DatasetLabels::<f64>::from_labels(vec![Label::Negative]);
        let (_, b) = check_classification(&d, &neg, &ConstValue(0.5 - c.eta), &c);
        assert!(!b.passed);
        let (_, b) = check_classification(&d, &neg, &ConstValue(0.39), &c);
        assert!(b.passed);
    }

    #[test]
    fn step_condition_modes() {
        let s = line();
        let d = ds(&s);
        let mut c = cfg();
        let pass = FnInterface { f: |z: &[f64], u: &mut [f64]| u[0] = z[2], lipschitz: 1.0 };
        let vacuous = check_step(&d, &ConstValue(0.5), &pass, &s, &c);
        assert!(vacuous.passed && vacuous.checked == 0);
        let one = check_step(&d, &ConstValue(1.0), &pass, &s, &c);
        assert!(one.passed && one.checked as usize == d.len() * d.inputs.len());
        c.mode = StepMode::Strict;
        let r = check_step(&d, &ConstValue(0.95), &pass, &s, &c);
        assert!(!r.passed);
        assert_eq!(r.violations, r.checked);
        assert_eq!(r.counterexamples[0].len(), 3);
    }

    #[test]
    fn full_certificate_names_failures_and_round_trips() {
        let s = line();
        let d = ds(&s);
        let c = cfg();
        let pass = FnInterface { f: |z: &[f64], u: &mut [f64]| u[0] = z[2], lipschitz: 1.0 };
        let labels = crate::trainer::label_dataset(&d, &s, &pass, &c).unwrap();
        let v = FnValue { f: |z: &[f64]| if (z[0] - z[1]).abs() < 1e-9 { 1.0 } else { 0.0 }, lipschitz: 1.0 };
        let r = full_certificate(&d, &labels, &v, &pass, &s, &s, &c);
        assert!(r.is_consistent());
        let text = r.to_toml().unwrap();
        let back = CertReport::from_toml(&text).unwrap();
        assert_eq!(back.verdict, r.verdict);
        assert!(back.is_consistent());
        assert_eq!(back.to_toml().unwrap(), text);
        let bad = full_certificate(&d, &labels, &ConstValue(0.5), &pass, &s, &s, &c);
        assert_eq!(bad.verdict, "fail");
        assert!(bad.failing.contains(&"init_7".to_string()));
    }

    #[test]
    fn conflicts_counted() {
        let s = line();
        let d = ds(&s);
        let c = TrainConfig { gamma: 0.45, ..cfg() };
        let pass = FnInterface { f: |z: &[f64], u: &mut [f64]| u[0] = z[2], lipschitz: 1.0 };
        let labels = crate::trainer::label_dataset(&d, &s, &pass, &c).unwrap();
        // diagonal positive; neighbors 0.4 apart miss the 0.05 budget
        assert!(labels.positives() > 0 && labels.negatives() > 0);
        assert!(adjacent_label_conflicts(&d, &labels) > 0);
    }
}
