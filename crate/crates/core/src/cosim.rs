//! Deployment of a learned interface: initial-state matching, closed-loop
//! co-simulation of source and target, and Monte-Carlo soundness trials.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cover::JointDataset;
use crate::error::{Error, Result};
use crate::nn::{InterfaceFn, Scratch, ValueFn};
use crate::parallel::map_indexed;
use crate::scalar::{dist_inf, Scalar};
use crate::system::{random_controller, ControllerDef, SystemDef};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub t: usize,
    pub x_hat: Vec<T>,
    pub u_hat: Vec<T>,
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub y_hat: Vec<T>,
    pub y: Vec<T>,
    pub err: T,
}

/// Closed-loop run of both systems; rows cover `t = 0..=horizon` unless the
/// run was cut short by a non-finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub horizon: usize,
    pub epsilon: f64,
    pub rows: Vec<TraceRow<T>>,
    pub max_err: f64,
    /// Steps with `err_t > ε`.
    pub violations: usize,
    /// Steps where either state was outside its declared box.
    pub excursions: Vec<usize>,
    pub diagnostic: Option<String>,
}

impl<T: Scalar> Trace<T> {
    /// `t, xhat0.., uhat0.., x0.., u0.., yhat0.., y0.., err`.
    pub fn header(&self) -> Vec<String> {
        let Some(r) = self.rows.first() else {
            return vec!["t".into(), "err".into()];
        };
        let mut h = vec!["t".to_string()];
        for (name, len) in [
            ("xhat", r.x_hat.len()),
            ("uhat", r.u_hat.len()),
            ("x", r.x.len()),
            ("u", r.u.len()),
            ("yhat", r.y_hat.len()),
            ("y", r.y.len()),
        ] {
            h.extend((0..len).map(|i| format!("{name}{i}")));
        }
        h.push("err".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string()];
            for part in [&r.x_hat, &r.u_hat, &r.x, &r.u, &r.y_hat, &r.y] {
                rec.extend(part.iter().map(|v| v.to_string()));
            }
            rec.push(r.err.to_string());
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Picks `x₀ ∈ X₀ᵈ` maximizing `V(x₀, x̂₀)` among grid points whose output is
/// `ε`-close to `ĥ(x̂₀)`, first in enumeration order on ties. Fails when the
/// best value is below 0.5.
pub fn match_initial<T: Scalar, V: ValueFn<T> + ?Sized>(
    x_hat0: &[T],
    ds: &JointDataset<T>,
    v: &V,
    target: &SystemDef<T>,
    source: &SystemDef<T>,
) -> Result<(usize, Vec<T>)> {
    let eps = T::lit(ds.params.epsilon);
    let (n, nh) = (ds.n(), ds.n_hat());
    if x_hat0.len() != nh {
        return Err(Error::Dimension {
            context: "source initial state".into(),
            expected: nh,
            found: x_hat0.len(),
        });
    }
    let yh = source.output(x_hat0);
    let mut z = vec![T::zero(); n + nh];
    z[n..].copy_from_slice(x_hat0);
    let mut y = vec![T::zero(); ds.l()];
    let mut scratch = Scratch::default();
    let mut best: Option<(usize, T)> = None;
    for a in 0..ds.initial.len() {
        ds.initial.center_into(a, &mut z[..n]);
        target.output_into(&z[..n], &mut y);
        if !(dist_inf(&y, &yh) <= eps) {
            continue;
        }
        let val = v.value(&z, &mut scratch);
        if best.is_none_or(|(_, b)| val > b) {
            best = Some((a, val));
        }
    }
    match best {
        Some((a, val)) if val >= T::lit(0.5) => Ok((a, ds.initial.center(a))),
        other => Err(Error::NoMatchingInitialState {
            best: other.map_or(f64::NEG_INFINITY, |(_, v)| v.as_f64()),
        }),
    }
}

fn finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs `x̂_{t+1} = f̂(x̂_t, û_t)` under `controller` and
/// `x_{t+1} = f(x_t, K(x_t, x̂_t, û_t))` side by side for `horizon` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer<T: Scalar, K: InterfaceFn<T> + ?Sized>(
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    controller: &ControllerDef<T>,
    k: &K,
    x_hat0: &[T],
    x0: &[T],
    horizon: usize,
    epsilon: f64,
) -> Result<Trace<T>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be >= 1"));
    }
    if x0.len() != target.n() || x_hat0.len() != source.n() {
        return Err(Error::Dimension {
            context: "initial states".into(),
            expected: target.n() + source.n(),
            found: x0.len() + x_hat0.len(),
        });
    }
    let (n, nh) = (target.n(), source.n());
    let mut trace = Trace {
        horizon,
        epsilon,
        rows: Vec::with_capacity(horizon + 1),
        max_err: 0.0,
        violations: 0,
        excursions: Vec::new(),
        diagnostic: None,
    };
    let mut x = x0.to_vec();
    let mut xh = x_hat0.to_vec();
    let mut z = vec![T::zero(); n + nh + source.m()];
    let mut scratch = Scratch::default();
    for t in 0..=horizon {
        if !finite(&x) || !finite(&xh) {
            trace.diagnostic = Some(format!("non-finite state at t = {t}; trace truncated"));
            break;
        }
        let uh = controller.act(&xh, t);
        z[..n].copy_from_slice(&x);
        z[n..n + nh].copy_from_slice(&xh);
        z[n + nh..].copy_from_slice(&uh);
        let mut u = vec![T::zero(); target.m()];
        k.act(&z, &mut u, &mut scratch);
        let y = target.output(&x);
        let yh = source.output(&xh);
        let err = dist_inf(&y, &yh);
        let e = err.as_f64();
        if !(e <= trace.max_err) {
            trace.max_err = e;
        }
        if !(e <= epsilon) {
            trace.violations += 1;
        }
        if !target.state_set.contains(&x) || !source.state_set.contains(&xh) {
            trace.excursions.push(t);
        }
        let (nx, nxh) = if t < horizon {
            (target.step(&x, &u), source.step(&xh, &uh))
        } else {
            (Vec::new(), Vec::new())
        };
        trace.rows.push(TraceRow {
            t,
            x_hat: xh,
            u_hat: uh,
            x,
            u,
            y_hat: yh,
            y,
            err,
        });
        x = nx;
        xh = nxh;
    }
    Ok(trace)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub trials: usize,
    pub matched: usize,
    /// Trials without an admissible initial match.
    pub unmatched: usize,
    /// Trials with some `err_t > ε`, plus unmatched trials.
    pub violations: usize,
    pub max_err: f64,
    pub excursions: usize,
}

/// Samples `x̂₀ ∈ X̂₀` and a seeded random source controller per trial,
/// matches `x₀`, and runs [`run_transfer`].
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_soundness<T: Scalar, K: InterfaceFn<T> + ?Sized, V: ValueFn<T> + ?Sized>(
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    k: &K,
    v: &V,
    ds: &JointDataset<T>,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<SoundnessReport> {
    let eps = ds.params.epsilon;
    let outcomes = map_indexed(trials, |i| -> Result<Option<Trace<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x_hat0 = source.initial_set.sample(&mut rng);
        let controller = random_controller(&source.input_set, rng.gen());
        match match_initial(&x_hat0, ds, v, target, source) {
            Ok((_, x0)) => run_transfer(target, source, &controller, k, &x_hat0, &x0, horizon, eps).map(Some),
            Err(Error::NoMatchingInitialState { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut r = SoundnessReport {
        trials,
        ..Default::default()
    };
    for o in outcomes {
        match o? {
            Some(tr) => {
                r.matched += 1;
                if tr.violations > 0 || tr.diagnostic.is_some() {
                    r.violations += 1;
                }
                if !tr.excursions.is_empty() {
                    r.excursions += 1;
                }
                r.max_err = r.max_err.max(tr.max_err);
            }
            None => {
                r.unmatched += 1;
                r.violations += 1;
            }
        }
    }
    Ok(r)
}
