//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Criteria 7 and 8 are structurally infeasible for the builtin benchmark
//! dynamics (see the README); they are run in full and reported as FAIL
//! together with the quantities that rule them out. The process exits
//! nonzero only when a criterion that is expected to hold fails, or when 7
//! or 8 unexpectedly pass (so the expectation can be revisited).

use std::time::Instant;

use num_bigint::{BigInt, Sign};
use num_traits::{Float, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simrel::certifier::{check_validity, full_certificate, precheck, CertReport, ValidityParams};
use simrel::cosim::{match_initial, monte_carlo_soundness, run_transfer, SoundnessReport};
use simrel::cover::{analytic_pair_count, build_joint_dataset, GridCover, JointDataset};
use simrel::geometry::BoxSet;
use simrel::nn::{Cache, Gradients, Head, Mlp, Role, ZeroInterface};
use simrel::system::{builtin_controller, builtin_system, Lipschitz, SystemDef, SystemSpec};
use simrel::trainer::{algorithm1, label_dataset, TrainConfig, TrainOutcome};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn vehicle_constants() -> (Lipschitz, Lipschitz) {
    let l = Lipschitz {
        state: 1.1,
        input: 0.1,
        output: 1.0,
    };
    (l, l)
}

fn criterion_1() -> Outcome {
    let (t, s) = vehicle_constants();
    let p = ValidityParams {
        eta: 0.3,
        gamma: 0.016,
        e: 0.002,
        e_hat: 0.0005,
    };
    let r = check_validity(&t, &s, 23.0, 8.32e-5, &p);
    let ok = close(r.lhs_11, 0.00222501, 1e-8)
        && close(r.lhs_12, 0.025875, 1e-9)
        && close(r.lhs_13, 0.023, 1e-12)
        && r.passed();
    outcome(
        ok,
        format!("lhs11={:.11} lhs12={:.11} lhs13={:.15} pass={}", r.lhs_11, r.lhs_12, r.lhs_13, r.passed()),
    )
}

fn criterion_2() -> Outcome {
    let t = Lipschitz {
        state: 1.098,
        input: 0.39,
        output: 1.0,
    };
    let s = Lipschitz {
        state: 1.098,
        input: 0.091,
        output: 1.0,
    };
    let mut p = ValidityParams {
        eta: 0.1,
        gamma: 0.02,
        e: 0.015,
        e_hat: 0.0005,
    };
    let r = check_validity(&t, &s, 13.3, 5.17e-2, &p);
    p.e *= 2.0;
    let doubled = check_validity(&t, &s, 13.3, 5.17e-2, &p);
    let ok = close(r.lhs_11, 0.01664397, 1e-8)
        && close(r.lhs_12, 0.11153, 1e-5)
        && close(r.lhs_13, 0.09975, 1e-12)
        && r.passed()
        && !doubled.pass_13;
    outcome(
        ok,
        format!(
            "lhs11={:.11} lhs12={:.11} lhs13={:.15} pass={}; doubled e: lhs13={} pass13={}",
            r.lhs_11,
            r.lhs_12,
            r.lhs_13,
            r.passed(),
            doubled.lhs_13,
            doubled.pass_13
        ),
    )
}

fn criterion_3() -> Outcome {
    let target = builtin_system::<f64>("vehicle5d").unwrap();
    let source = builtin_system::<f64>("vehicle3d").unwrap();
    let c = analytic_pair_count(&target, &source, 0.002, 0.02).unwrap();
    let reported = 5e7;
    let ok = c.unfiltered as f64 > reported
        && c.target_output_cells as f64 <= reported
        && reported <= c.filtered as f64;
    outcome(
        ok,
        format!(
            "unfiltered={:.3e} filtered={:.3e} observed_output_cells={:.3e}",
            c.unfiltered as f64, c.filtered as f64, c.target_output_cells as f64
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut boxes: Vec<(String, BoxSet<f64>, f64)> = Vec::new();
    for (name, e, e_hat) in [
        ("vehicle5d", 0.002, 0.0005),
        ("vehicle3d", 0.002, 0.0005),
        ("double_pendulum", 0.015, 0.25),
        ("pendulum", 0.015, 0.25),
    ] {
        let sys = builtin_system::<f64>(name).unwrap();
        boxes.push((format!("{name}.X"), sys.state_set.clone(), e));
        boxes.push((format!("{name}.X0"), sys.initial_set.clone(), e));
        boxes.push((format!("{name}.U"), sys.input_set.clone(), e_hat));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for (name, b, e) in &boxes {
        let cover = GridCover::new(b.clone(), *e).unwrap();
        for _ in 0..100_000 {
            let t = b.sample(&mut rng);
            let (_, c) = cover.nearest_center(&t).unwrap();
            let d = t.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(d / e);
            if d > e / 2.0 {
                violations += 1;
                if violations < 5 {
                    eprintln!("  cover violation in {name}: {t:?} -> {c:?}");
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("boxes={} samples={} violations={violations} worst_dist/e={worst:.6}", boxes.len(), boxes.len() * 100_000),
    )
}

fn random_net(rng: &mut ChaCha8Rng, seed: u64) -> Mlp<f64> {
    let layers = rng.gen_range(1..=3);
    let mut dims = vec![rng.gen_range(1..=8)];
    for _ in 1..layers {
        dims.push(rng.gen_range(1..=8));
    }
    let kind = rng.gen_range(0..3);
    let out = if kind == 1 { 1 } else { rng.gen_range(1..=8) };
    dims.push(out);
    let head = match kind {
        0 => Head::Relu,
        1 => Head::Sigmoid,
        _ => Head::BoxClamp(BoxSet::cube(out, -0.3, 0.3)),
    };
    let role = if matches!(head, Head::BoxClamp(_)) { Role::K } else { Role::V };
    Mlp::random(role, head, &dims, seed).unwrap()
}

fn weighted_sum(net: &Mlp<f64>, x: &[f64], w: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn near_kink(net: &Mlp<f64>, cache: &Cache<f64>, x: &[f64]) -> bool {
    let head_kinks = match &net.head {
        Head::Relu => true,
        Head::BoxClamp(_) => true,
        Head::Sigmoid => false,
    };
    let last = cache.pre.len() - 1;
    let mut lo_hi = None;
    if let Head::BoxClamp(b) = &net.head {
        lo_hi = Some(b.clone());
    }
    cache.pre.iter().enumerate().any(|(j, pre)| {
        pre.iter().enumerate().any(|(i, &z)| {
            if j < last {
                z.abs() < 1e-3
            } else if let Some(b) = &lo_hi {
                (z - b.lo[i]).abs() < 1e-3 || (z - b.hi[i]).abs() < 1e-3
            } else {
                head_kinks && z.abs() < 1e-3
            }
        })
    }) && !x.is_empty()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut worst, mut bad, mut nets) = (0usize, 0.0f64, 0usize, 0usize);
    let mut attempts = 0;
    while nets < 10 && attempts < 1000 {
        attempts += 1;
        let seed = rng.gen();
        let net = random_net(&mut rng, seed);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cache = Cache::default();
        net.forward_cached(&x, &mut cache);
        if near_kink(&net, &cache, &x) {
            continue;
        }
        nets += 1;
        let mut g = Gradients::zeros_like(&net);
        let mut gx = vec![0.0; net.input_dim()];
        net.backward(&cache, &w, &mut g, Some(&mut gx));
        let analytic: Vec<f64> = g.params().copied().collect();
        let h = 1e-6;
        let mut probe = net.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.params().nth(i).unwrap();
            *probe.params_mut().nth(i).unwrap() = orig + h;
            let fp = weighted_sum(&probe, &x, &w);
            *probe.params_mut().nth(i).unwrap() = orig - h;
            let fm = weighted_sum(&probe, &x, &w);
            *probe.params_mut().nth(i).unwrap() = orig;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
            if rel >= 1e-4 {
                bad += 1;
            }
        }
        for (i, &a) in gx.iter().enumerate() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (weighted_sum(&net, &xp, &w) - weighted_sum(&net, &xm, &w)) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
            if rel >= 1e-4 {
                bad += 1;
            }
        }
    }
    outcome(
        nets == 10 && bad == 0,
        format!("nets={nets} gradients={checked} over_tolerance={bad} worst_rel={worst:.3e}"),
    )
}

/// Exact dyadic rational `m · 2^e`; every finite `f64` is one.
#[derive(Clone)]
struct Dyadic {
    m: BigInt,
    e: i32,
}

impl Dyadic {
    fn from_f64(v: f64) -> Self {
        let (mant, exp, sign) = v.integer_decode();
        let m = BigInt::from(mant) * i64::from(sign);
        Self { m, e: i32::from(exp) }
    }

    fn zero() -> Self {
        Self { m: BigInt::zero(), e: 0 }
    }

    fn add(&self, o: &Self) -> Self {
        if self.m.is_zero() {
            return o.clone();
        }
        if o.m.is_zero() {
            return self.clone();
        }
        let (lo, hi) = if self.e <= o.e { (self, o) } else { (o, self) };
        Self {
            m: &lo.m + (&hi.m << (hi.e - lo.e) as usize),
            e: lo.e,
        }
    }

    fn neg(&self) -> Self {
        Self { m: -&self.m, e: self.e }
    }

    fn mul(&self, o: &Self) -> Self {
        Self {
            m: &self.m * &o.m,
            e: self.e + o.e,
        }
    }

    fn abs(&self) -> Self {
        Self { m: self.m.abs(), e: self.e }
    }

    fn sign(&self) -> Sign {
        self.m.sign()
    }

    fn gt(&self, o: &Self) -> bool {
        self.add(&o.neg()).sign() == Sign::Plus
    }

    fn to_f64(&self) -> f64 {
        let bits = self.m.bits() as i32;
        let shift = (bits - 60).max(0);
        let m = (&self.m >> shift as usize).to_f64().unwrap();
        m * 2f64.powi(self.e + shift)
    }
}

fn relu(v: Dyadic) -> Dyadic {
    if v.sign() == Sign::Plus {
        v
    } else {
        Dyadic::zero()
    }
}

/// Exact network output; for a sigmoid head, the exact logit.
fn exact_forward(net: &Mlp<f64>, x: &[f64]) -> Vec<Dyadic> {
    let mut a: Vec<Dyadic> = x.iter().map(|&v| Dyadic::from_f64(v)).collect();
    let last = net.layers.len() - 1;
    for (j, layer) in net.layers.iter().enumerate() {
        let mut z = Vec::with_capacity(layer.rows);
        for r in 0..layer.rows {
            let mut acc = Dyadic::from_f64(layer.b[r]);
            for c in 0..layer.cols {
                let w = layer.w[r * layer.cols + c];
                if w != 0.0 {
                    acc = acc.add(&Dyadic::from_f64(w).mul(&a[c]));
                }
            }
            z.push(acc);
        }
        a = if j < last {
            z.into_iter().map(relu).collect()
        } else {
            match &net.head {
                Head::Relu => z.into_iter().map(relu).collect(),
                Head::Sigmoid => z,
                Head::BoxClamp(b) => z
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let (lo, hi) = (Dyadic::from_f64(b.lo[i]), Dyadic::from_f64(b.hi[i]));
                        if lo.gt(&v) {
                            lo
                        } else if v.gt(&hi) {
                            hi
                        } else {
                            v
                        }
                    })
                    .collect(),
            }
        };
    }
    a
}

fn max_abs_diff(a: &[Dyadic], b: &[Dyadic]) -> Dyadic {
    a.iter().zip(b).fold(Dyadic::zero(), |m, (p, q)| {
        let d = p.add(&q.neg()).abs();
        if d.gt(&m) {
            d
        } else {
            m
        }
    })
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut violations, mut worst) = (0usize, 0.0f64);
    let nets = 20;
    for _ in 0..nets {
        let seed = rng.gen();
        let net = random_net(&mut rng, seed);
        // σ is 1/4-Lipschitz, so the logit map is checked against the bound without the head factor
        let l = net.lipschitz_upper_bound() / net.head.factor();
        let l_exact = Dyadic::from_f64(l);
        let n = net.input_dim();
        for _ in 0..5_000 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let scale = 10f64.powf(rng.gen_range(-4.0..0.5));
            let b: Vec<f64> = a.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
            let ea: Vec<Dyadic> = a.iter().map(|&v| Dyadic::from_f64(v)).collect();
            let eb: Vec<Dyadic> = b.iter().map(|&v| Dyadic::from_f64(v)).collect();
            let din = max_abs_diff(&ea, &eb);
            let dout = max_abs_diff(&exact_forward(&net, &a), &exact_forward(&net, &b));
            let bound = l_exact.mul(&din);
            if bound.sign() == Sign::Plus {
                worst = worst.max(dout.to_f64() / bound.to_f64());
            }
            if dout.gt(&bound) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("pairs={} (exact arithmetic) violations={violations} max_ratio={worst:.6}", nets * 5_000),
    )
}

fn pendulum_config() -> TrainConfig {
    TrainConfig {
        epsilon: 0.05,
        eta: 0.1,
        gamma: 0.02,
        e: 0.015,
        e_hat: 0.25,
        phase_len: 100,
        max_iters: 400,
        lr_v: 1e-3,
        lr_k: 1e-3,
        batch_size: 256,
        v_hidden: vec![20; 5],
        k_hidden: vec![32, 32],
        lip_penalty: 0.1,
        seed: 7,
        ..Default::default()
    }
}

struct PendulumRun {
    outcome: TrainOutcome<f64>,
    ds: JointDataset<f64>,
    mc: SoundnessReport,
    checkpoint_v: String,
    checkpoint_k: String,
    report: String,
    trace: Vec<u8>,
}

fn pendulum_run() -> PendulumRun {
    let sys = builtin_system::<f64>("pendulum").unwrap();
    let cfg = pendulum_config();
    let ds = build_joint_dataset(&sys, &sys, &cfg.dataset_params()).unwrap();
    let out = algorithm1(&sys, &sys, &ds, &cfg, &mut |ev| eprintln!("  {}", ev.record.to_line())).unwrap();
    let mc = monte_carlo_soundness(&sys, &sys, &out.k, &out.v, &ds, 100, 1000, cfg.seed).unwrap();
    let ctrl = builtin_controller("pendulum_stabilizer", &sys).unwrap();
    let x_hat0 = [0.2, -0.1];
    let x0 = match match_initial(&x_hat0, &ds, &out.v, &sys, &sys) {
        Ok((_, x0)) => x0,
        Err(_) => x_hat0.to_vec(),
    };
    let tr = run_transfer(&sys, &sys, &ctrl, &out.k, &x_hat0, &x0, 1000, cfg.epsilon).unwrap();
    let mut trace = Vec::new();
    tr.write_csv(&mut trace).unwrap();
    let meta = simrel::nn::CheckpointMeta {
        config_hash: "acceptance".into(),
    };
    PendulumRun {
        checkpoint_v: simrel::nn::to_text(&out.v, &meta),
        checkpoint_k: simrel::nn::to_text(&out.k, &meta),
        report: out.report.to_toml().unwrap(),
        trace,
        mc,
        ds,
        outcome: out,
    }
}

fn describe_report(r: &CertReport) -> String {
    let viol: Vec<String> = r.conditions.iter().map(|c| format!("{}={}", c.name, c.violations)).collect();
    format!(
        "verdict={} failing=[{}] violations[{}] pairs={} positives={} negatives={} adjacent_label_conflicts={} \
         L_V={:.3} L_K={:.3} lhs11={:.5}/{} lhs12={:.5}/{} lhs13={:.5}/{}",
        r.verdict,
        r.failing.join(","),
        viol.join(" "),
        r.dataset.pairs,
        r.dataset.positives,
        r.dataset.negatives,
        r.dataset.adjacent_label_conflicts,
        r.l_v,
        r.l_k,
        r.validity.lhs_11,
        r.validity.rhs_11,
        r.validity.lhs_12,
        r.validity.rhs_12,
        r.validity.lhs_13,
        r.validity.rhs_13,
    )
}

fn criterion_7(run: &PendulumRun) -> Outcome {
    let r = &run.outcome.report;
    let pass = r.passed() && run.mc.violations == 0 && run.mc.unmatched == 0;
    outcome(
        pass,
        format!(
            "{} | iterations={} | mc: matched={} unmatched={} violations={} max_err={:.4} | T_d={}",
            describe_report(r),
            run.outcome.iterations,
            run.mc.matched,
            run.mc.unmatched,
            run.mc.violations,
            run.mc.max_err,
            run.ds.len()
        ),
    )
}

fn scaled_vehicle_pair() -> (SystemDef<f64>, SystemDef<f64>) {
    let target = SystemSpec {
        dynamics: "vehicle5d".into(),
        name: Some("vehicle5d_scaled".into()),
        state_lo: Some(vec![-0.5; 5]),
        state_hi: Some(vec![0.5; 5]),
        initial_lo: Some(vec![-0.5, -0.5, -0.5, -0.5, -0.5]),
        initial_hi: Some(vec![-0.25, -0.25, 0.5, 0.5, 0.5]),
        output_lo: Some(vec![-0.5; 2]),
        output_hi: Some(vec![0.5; 2]),
        ..Default::default()
    }
    .build()
    .unwrap();
    let source = SystemSpec {
        dynamics: "vehicle3d".into(),
        name: Some("vehicle3d_scaled".into()),
        state_lo: Some(vec![-0.5; 3]),
        state_hi: Some(vec![0.5; 3]),
        initial_lo: Some(vec![-0.5, -0.5, -0.5]),
        initial_hi: Some(vec![-0.25, -0.25, 0.5]),
        output_lo: Some(vec![-0.5; 2]),
        output_hi: Some(vec![0.5; 2]),
        ..Default::default()
    }
    .build()
    .unwrap();
    (target, source)
}

struct VehicleRun {
    target: SystemDef<f64>,
    source: SystemDef<f64>,
    cfg: TrainConfig,
    ds: JointDataset<f64>,
    outcome: TrainOutcome<f64>,
}

fn vehicle_run() -> (VehicleRun, Outcome) {
    let (target, source) = scaled_vehicle_pair();
    let mut cfg = TrainConfig {
        epsilon: 0.2,
        eta: 0.3,
        gamma: 0.16,
        e: 0.1,
        e_hat: 0.25,
        phase_len: 50,
        max_iters: 100,
        lr_v: 1e-3,
        lr_k: 1e-3,
        batch_size: 256,
        v_hidden: vec![20, 20, 20],
        k_hidden: vec![32, 32],
        lip_penalty: 0.1,
        seed: 8,
        ..Default::default()
    };
    let pre = precheck(&target.lipschitz, &source.lipschitz, &(&cfg).into(), 4.0, 1.0);
    cfg.e = (pre.e_max * 1000.0).floor() / 1000.0;
    let count = analytic_pair_count(&target, &source, cfg.e, cfg.epsilon).unwrap();
    eprintln!(
        "  precheck(L_V<=4, L_K<=1): e_max={:.5} (11:{:.5} 12:{:.5} 13:{:.5}) -> e={} |T_d|={}",
        pre.e_max, pre.e_max_11, pre.e_max_12, pre.e_max_13, cfg.e, count.filtered
    );
    let ds = build_joint_dataset(&target, &source, &cfg.dataset_params()).unwrap();
    let out = algorithm1(&target, &source, &ds, &cfg, &mut |ev| eprintln!("  {}", ev.record.to_line())).unwrap();

    let ctrl = builtin_controller("vehicle_waypoint", &source).unwrap();
    let x_hat0 = source.initial_set.center();
    let (matched, x0) = match match_initial(&x_hat0, &ds, &out.v, &target, &source) {
        Ok((_, x0)) => (true, x0),
        Err(_) => (false, vec![x_hat0[0], x_hat0[1], 0.0, 0.5, x_hat0[2]]),
    };
    let tr = run_transfer(&target, &source, &ctrl, &out.k, &x_hat0, &x0, 1000, cfg.epsilon).unwrap();
    let pass = out.report.passed() && matched && tr.violations == 0 && tr.max_err <= cfg.epsilon;
    let detail = format!(
        "e={} | {} | iterations={} | transfer: matched_x0={matched} violations={} max_err={:.4}",
        cfg.e,
        describe_report(&out.report),
        out.iterations,
        tr.violations,
        tr.max_err
    );
    (
        VehicleRun {
            target,
            source,
            cfg,
            ds,
            outcome: out,
        },
        outcome(pass, detail),
    )
}

fn criterion_9(run: &VehicleRun) -> Outcome {
    let zero = ZeroInterface;
    let labels = label_dataset(&run.ds, &run.target, &zero, &run.cfg).unwrap();
    let r = full_certificate(&run.ds, &labels, &run.outcome.v, &zero, &run.target, &run.source, &run.cfg);
    if !r.passed() {
        return outcome(true, format!("zero interface rejected: {}", describe_report(&r)));
    }
    let mc = monte_carlo_soundness(&run.target, &run.source, &zero, &run.outcome.v, &run.ds, 20, 200, 9).unwrap();
    outcome(
        mc.violations > 0,
        format!("zero interface certified; mc violations={} max_err={:.4}", mc.violations, mc.max_err),
    )
}

fn criterion_10(a: &PendulumRun, b: &PendulumRun) -> Outcome {
    let same_ckpt = a.checkpoint_v == b.checkpoint_v && a.checkpoint_k == b.checkpoint_k;
    let same_report = a.report == b.report;
    let same_trace = a.trace == b.trace;
    let same_mc = a.mc == b.mc;
    outcome(
        same_ckpt && same_report && same_trace && same_mc,
        format!(
            "checkpoints={same_ckpt} ({} bytes) reports={same_report} traces={same_trace} ({} bytes) mc={same_mc}",
            a.checkpoint_v.len() + a.checkpoint_k.len(),
            a.trace.len()
        ),
    )
}

fn main() {
    // cargo passes harness flags such as --nocapture; they carry no meaning here
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if let Some(f) = &filter {
        if !"acceptance".contains(f.as_str()) {
            return;
        }
    }
    let expected_red = [7usize, 8];
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let timed = |id: usize, f: &mut dyn FnMut() -> Outcome, results: &mut Vec<(usize, Outcome, f64)>| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2}: {} ({secs:.2}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, o, secs));
    };
    let only: Option<Vec<usize>> = std::env::var("SIMREL_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let cheap: [(usize, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
    ];
    for (id, f) in cheap {
        if want(id) {
            timed(id, &mut || f(), &mut results);
        }
    }

    let mut first = None;
    if want(7) {
        timed(
            7,
            &mut || {
                let run = pendulum_run();
                let o = criterion_7(&run);
                first = Some(run);
                o
            },
            &mut results,
        );
    }
    if want(8) || want(9) {
        let t = Instant::now();
        let (vehicle, o8) = vehicle_run();
        let secs = t.elapsed().as_secs_f64();
        if want(8) {
            let mut o8 = Some(o8);
            timed(
                8,
                &mut || {
                    let o = o8.take().unwrap();
                    outcome(o.pass, format!("{} (run {secs:.1}s)", o.detail))
                },
                &mut results,
            );
        }
        if want(9) {
            timed(9, &mut || criterion_9(&vehicle), &mut results);
        }
    }
    if want(10) {
        timed(
            10,
            &mut || {
                let a = first.take().unwrap_or_else(pendulum_run);
                let b = pendulum_run();
                criterion_10(&a, &b)
            },
            &mut results,
        );
    }

    let mut unexpected = Vec::new();
    for (id, o, _) in &results {
        let red = expected_red.contains(id);
        if o.pass == red {
            unexpected.push(*id);
        }
    }
    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria pass; expected red: {expected_red:?}", results.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
