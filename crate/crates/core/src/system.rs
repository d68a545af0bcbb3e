//! Black-box discrete-time control systems, the benchmark catalog and the
//! stand-in source controllers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::scalar::{dist_inf, Scalar};

/// `(x, u, x⁺)`: writes the successor state into the last argument.
pub type StepFn<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;
/// `(x, y)`: writes the output into the last argument.
pub type OutputFn<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;
/// `(x̂, t, û)`: writes the source input into the last argument.
pub type PolicyFn<T> = Arc<dyn Fn(&[T], usize, &mut [T]) + Send + Sync>;

pub const BUILTIN_SYSTEMS: [&str; 4] = ["vehicle5d", "vehicle3d", "double_pendulum", "pendulum"];
pub const BUILTIN_CONTROLLERS: [&str; 4] =
    ["vehicle_waypoint", "pendulum_stabilizer", "zero", "random(seed)"];

/// Declared ∞-norm Lipschitz constants of a system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    /// Constant of the step map with respect to the state.
    pub state: f64,
    /// Constant of the step map with respect to the input.
    pub input: f64,
    /// Constant of the output map.
    pub output: f64,
}

/// A discrete-time control system `x⁺ = f(x, u)`, `y = h(x)` known only
/// through its evaluators.
#[derive(Clone)]
pub struct SystemDef<T> {
    pub name: String,
    pub state_set: BoxSet<T>,
    pub initial_set: BoxSet<T>,
    pub input_set: BoxSet<T>,
    pub output_set: BoxSet<T>,
    pub lipschitz: Lipschitz,
    /// Sampling time of the discretization, when the system has one.
    pub sampling_time: Option<f64>,
    /// Set when `h` selects state coordinates; enables analytic grid counts.
    pub output_projection: Option<Vec<usize>>,
    step: StepFn<T>,
    output: OutputFn<T>,
}

impl<T> fmt::Debug for SystemDef<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("name", &self.name)
            .field("state_set", &self.state_set)
            .field("initial_set", &self.initial_set)
            .field("input_set", &self.input_set)
            .field("output_set", &self.output_set)
            .field("lipschitz", &self.lipschitz)
            .field("sampling_time", &self.sampling_time)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> SystemDef<T> {
    pub fn new(
        name: impl Into<String>,
        state_set: BoxSet<T>,
        initial_set: BoxSet<T>,
        input_set: BoxSet<T>,
        output_set: BoxSet<T>,
        lipschitz: Lipschitz,
        step: StepFn<T>,
        output: OutputFn<T>,
    ) -> Result<Self> {
        let name = name.into();
        if initial_set.dim() != state_set.dim() {
            return Err(Error::Dimension {
                context: format!("{name}: initial set"),
                expected: state_set.dim(),
                found: initial_set.dim(),
            });
        }
        if !initial_set.is_subset_of(&state_set) {
            return Err(Error::invalid(
                format!("{name}: initial set"),
                "must be contained in the state set",
            ));
        }
        for (what, v) in [
            ("state", lipschitz.state),
            ("input", lipschitz.input),
            ("output", lipschitz.output),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    format!("{name}: {what} Lipschitz constant"),
                    format!("must be finite and nonnegative, got {v}"),
                ));
            }
        }
        Ok(Self {
            name,
            state_set,
            initial_set,
            input_set,
            output_set,
            lipschitz,
            sampling_time: None,
            output_projection: None,
            step,
            output,
        })
    }

    pub fn with_sampling_time(mut self, tau: f64) -> Self {
        self.sampling_time = Some(tau);
        self
    }

    pub fn with_output_projection(mut self, coords: Vec<usize>) -> Self {
        self.output_projection = Some(coords);
        self
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.state_set.dim()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.input_set.dim()
    }

    /// Output dimension.
    pub fn l(&self) -> usize {
        self.output_set.dim()
    }

    pub fn step_into(&self, x: &[T], u: &[T], next: &mut [T]) {
        (self.step)(x, u, next)
    }

    pub fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut next = vec![T::zero(); self.n()];
        self.step_into(x, u, &mut next);
        next
    }

    pub fn output_into(&self, x: &[T], y: &mut [T]) {
        (self.output)(x, y)
    }

    pub fn output(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.l()];
        self.output_into(x, &mut y);
        y
    }

    /// Same dynamics with different declared constants (used to exercise the
    /// sampling check).
    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Self {
        self.lipschitz = lipschitz;
        self
    }
}

fn boxed<T: Scalar>(lo: &[f64], hi: &[f64]) -> BoxSet<T> {
    BoxSet::from_f64(lo, hi).expect("builtin box bounds are valid")
}

/// One of the four benchmark systems, with the exact constants of its model.
pub fn builtin_system<T: Scalar>(name: &str) -> Result<SystemDef<T>> {
    let sys = match name {
        "vehicle5d" => {
            // x = [x1, x2, δ, v, ψ]; y = [x1, x2]
            let tau = T::lit(0.1);
            let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T], nx: &mut [T]| {
                let (delta, v, psi) = (x[2], x[3], x[4]);
                nx[0] = x[0] + tau * v * psi.sin();
                nx[1] = x[1] + tau * v * psi.cos();
                nx[2] = delta + tau * u[0];
                nx[3] = v + tau * u[1];
                nx[4] = psi + tau * v * delta.tan();
            });
            let output: OutputFn<T> = Arc::new(|x: &[T], y: &mut [T]| {
                y[0] = x[0];
                y[1] = x[1];
            });
            SystemDef::new(
                name,
                boxed(&[-2.0, 0.0, -1.0, -1.0, -1.0], &[3.0, 8.0, 1.0, 1.0, 1.0]),
                boxed(&[-2.0, 0.0, -1.0, -1.0, -1.0], &[-1.0, 2.0, 1.0, 1.0, 1.0]),
                boxed(&[-1.0, -1.0], &[1.0, 1.0]),
                boxed(&[-2.0, 0.0], &[3.0, 8.0]),
                Lipschitz {
                    state: 1.1,
                    input: 0.1,
                    output: 1.0,
                },
                step,
                output,
            )?
            .with_sampling_time(0.1)
            .with_output_projection(vec![0, 1])
        }
        "vehicle3d" => {
            let tau = T::lit(0.1);
            let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T], nx: &mut [T]| {
                nx[0] = x[0] + tau * x[2].sin();
                nx[1] = x[1] + tau * x[2].cos();
                nx[2] = x[2] + tau * u[0];
            });
            let output: OutputFn<T> = Arc::new(|x: &[T], y: &mut [T]| {
                y[0] = x[0];
                y[1] = x[1];
            });
            SystemDef::new(
                name,
                boxed(&[-2.0, 0.0, -1.0], &[3.0, 8.0, 1.0]),
                boxed(&[-2.0, 0.0, -1.0], &[-1.0, 2.0, 1.0]),
                boxed(&[-0.5], &[0.5]),
                boxed(&[-2.0, 0.0], &[3.0, 8.0]),
                Lipschitz {
                    state: 1.1,
                    input: 0.1,
                    output: 1.0,
                },
                step,
                output,
            )?
            .with_sampling_time(0.1)
            .with_output_projection(vec![0, 1])
        }
        "double_pendulum" => {
            // x = [θ1, ω1, θ2, ω2]; y = [θ1, ω1]
            let tau = T::lit(0.01);
            let g = T::lit(9.8);
            let (b1, b2) = (T::lit(30.0), T::lit(39.0));
            let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T], nx: &mut [T]| {
                let (th1, w1, th2, w2) = (x[0], x[1], x[2], x[3]);
                let s12 = (th1 - th2).sin();
                nx[0] = th1 + tau * w1;
                nx[1] = w1 + tau * (g * th1.sin() - s12 * w1 * w1) + tau * b1 * u[0];
                nx[2] = th2 + tau * w2;
                nx[3] = w2 + tau * (g * th2.sin() + s12 * w2 * w2) + tau * b2 * u[1];
            });
            let output: OutputFn<T> = Arc::new(|x: &[T], y: &mut [T]| {
                y[0] = x[0];
                y[1] = x[1];
            });
            SystemDef::new(
                name,
                BoxSet::cube(4, -0.5, 0.5),
                BoxSet::cube(4, -0.5, 0.5),
                BoxSet::cube(2, -1.0, 1.0),
                BoxSet::cube(2, -0.5, 0.5),
                Lipschitz {
                    state: 1.098,
                    input: 0.39,
                    output: 1.0,
                },
                step,
                output,
            )?
            .with_sampling_time(0.01)
            .with_output_projection(vec![0, 1])
        }
        "pendulum" => {
            let tau = T::lit(0.01);
            let g = T::lit(9.8);
            let b = T::lit(9.1);
            let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T], nx: &mut [T]| {
                nx[0] = x[0] + tau * x[1];
                nx[1] = x[1] + tau * g * x[0].sin() + tau * b * u[0];
            });
            let output: OutputFn<T> = Arc::new(|x: &[T], y: &mut [T]| {
                y[0] = x[0];
                y[1] = x[1];
            });
            SystemDef::new(
                name,
                BoxSet::cube(2, -0.5, 0.5),
                BoxSet::cube(2, -0.5, 0.5),
                BoxSet::cube(1, -1.0, 1.0),
                BoxSet::cube(2, -0.5, 0.5),
                Lipschitz {
                    state: 1.098,
                    input: 0.091,
                    output: 1.0,
                },
                step,
                output,
            )?
            .with_sampling_time(0.01)
            .with_output_projection(vec![0, 1])
        }
        _ => {
            return Err(Error::UnknownSystem {
                name: name.to_string(),
                valid: BUILTIN_SYSTEMS.join(", "),
            })
        }
    };
    Ok(sys)
}

/// A system described in a config file: dynamics come from the builtin
/// registry, every set and constant may be overridden.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dynamics: String,
    pub name: Option<String>,
    pub state_lo: Option<Vec<f64>>,
    pub state_hi: Option<Vec<f64>>,
    pub initial_lo: Option<Vec<f64>>,
    pub initial_hi: Option<Vec<f64>>,
    pub input_lo: Option<Vec<f64>>,
    pub input_hi: Option<Vec<f64>>,
    pub output_lo: Option<Vec<f64>>,
    pub output_hi: Option<Vec<f64>>,
    pub lipschitz_state: Option<f64>,
    pub lipschitz_input: Option<f64>,
    pub lipschitz_output: Option<f64>,
    /// `x⁺ = A x + B u`, `y = C x`, rows of each matrix; only read when
    /// `dynamics = "linear"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
}

fn row_sum_norm(m: &[Vec<f64>]) -> f64 {
    m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn matrix<T: Scalar>(what: &str, m: &Option<Vec<Vec<f64>>>, cols: usize) -> Result<Vec<Vec<T>>> {
    let m = m
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("linear system: {what}"), "is required"))?;
    for r in m {
        if r.len() != cols {
            return Err(Error::Dimension {
                context: format!("linear system: row of {what}"),
                expected: cols,
                found: r.len(),
            });
        }
    }
    Ok(m.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect())
}

impl SystemSpec {
    fn linear<T: Scalar>(&self) -> Result<SystemDef<T>> {
        let need = |what: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            v.clone()
                .ok_or_else(|| Error::invalid(format!("linear system: {what}"), "is required"))
        };
        let state = BoxSet::from_f64(&need("state_lo", &self.state_lo)?, &need("state_hi", &self.state_hi)?)?;
        let input = BoxSet::from_f64(&need("input_lo", &self.input_lo)?, &need("input_hi", &self.input_hi)?)?;
        let output = BoxSet::from_f64(&need("output_lo", &self.output_lo)?, &need("output_hi", &self.output_hi)?)?;
        let (n, m) = (state.dim(), input.dim());
        let a = matrix::<T>("a", &self.a, n)?;
        let b = matrix::<T>("b", &self.b, m)?;
        let c = matrix::<T>("c", &self.c, n)?;
        if a.len() != n || b.len() != n || c.len() != output.dim() {
            return Err(Error::invalid(
                "linear system",
                format!("a and b need {n} rows and c needs {} rows", output.dim()),
            ));
        }
        let lip = Lipschitz {
            state: row_sum_norm(self.a.as_ref().unwrap()),
            input: row_sum_norm(self.b.as_ref().unwrap()),
            output: row_sum_norm(self.c.as_ref().unwrap()),
        };
        let projection: Option<Vec<usize>> = self
            .c
            .as_ref()
            .unwrap()
            .iter()
            .map(|r| {
                let ones: Vec<usize> = (0..r.len()).filter(|&j| r[j] == 1.0).collect();
                (ones.len() == 1 && r.iter().filter(|&&v| v != 0.0).count() == 1).then(|| ones[0])
            })
            .collect();
        let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T], nx: &mut [T]| {
            for i in 0..nx.len() {
                let ax = a[i].iter().zip(x).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                nx[i] = b[i].iter().zip(u).fold(ax, |acc, (&p, &q)| acc + p * q);
            }
        });
        let out: OutputFn<T> = Arc::new(move |x: &[T], y: &mut [T]| {
            for (yi, row) in y.iter_mut().zip(&c) {
                *yi = row.iter().zip(x).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
            }
        });
        let sys = SystemDef::new("linear", state.clone(), state, input, output, lip, step, out)?;
        Ok(match projection {
            Some(p) => sys.with_output_projection(p),
            None => sys,
        })
    }

    pub fn builtin(name: &str) -> Self {
        Self {
            dynamics: name.to_string(),
            ..Self::default()
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<SystemDef<T>> {
        let base = if self.dynamics == "linear" {
            self.linear::<T>()?
        } else {
            builtin_system::<T>(&self.dynamics)?
        };
        let name = self.name.clone().unwrap_or_else(|| base.name.clone());
        let pick = |what: &str,
                    lo: &Option<Vec<f64>>,
                    hi: &Option<Vec<f64>>,
                    default: &BoxSet<T>|
         -> Result<BoxSet<T>> {
            let lo = lo.clone().unwrap_or_else(|| default.to_f64().lo);
            let hi = hi.clone().unwrap_or_else(|| default.to_f64().hi);
            if lo.len() != default.dim() || hi.len() != default.dim() {
                return Err(Error::Dimension {
                    context: format!("{name}: {what} bounds"),
                    expected: default.dim(),
                    found: if lo.len() != default.dim() { lo.len() } else { hi.len() },
                });
            }
            BoxSet::from_f64(&lo, &hi)
        };
        let state = pick("state", &self.state_lo, &self.state_hi, &base.state_set)?;
        let initial = pick("initial", &self.initial_lo, &self.initial_hi, &base.initial_set)?;
        let input = pick("input", &self.input_lo, &self.input_hi, &base.input_set)?;
        let output = pick("output", &self.output_lo, &self.output_hi, &base.output_set)?;
        let lip = Lipschitz {
            state: self.lipschitz_state.unwrap_or(base.lipschitz.state),
            input: self.lipschitz_input.unwrap_or(base.lipschitz.input),
            output: self.lipschitz_output.unwrap_or(base.lipschitz.output),
        };
        let mut sys = SystemDef::new(
            name,
            state,
            initial,
            input,
            output,
            lip,
            base.step.clone(),
            base.output.clone(),
        )?;
        sys.sampling_time = base.sampling_time;
        sys.output_projection = base.output_projection.clone();
        Ok(sys)
    }
}

/// A source-side policy `û = π(x̂, t)`, clamped into the source input box.
#[derive(Clone)]
pub struct ControllerDef<T> {
    pub name: String,
    pub input_set: BoxSet<T>,
    policy: PolicyFn<T>,
}

impl<T: fmt::Debug> fmt::Debug for ControllerDef<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControllerDef")
            .field("name", &self.name)
            .field("input_set", &self.input_set)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> ControllerDef<T> {
    pub fn new(name: impl Into<String>, input_set: BoxSet<T>, policy: PolicyFn<T>) -> Self {
        Self {
            name: name.into(),
            input_set,
            policy,
        }
    }

    pub fn act_into(&self, x_hat: &[T], t: usize, u_hat: &mut [T]) {
        (self.policy)(x_hat, t, u_hat);
        self.input_set.clamp_into(u_hat);
    }

    pub fn act(&self, x_hat: &[T], t: usize) -> Vec<T> {
        let mut u = vec![T::zero(); self.input_set.dim()];
        self.act_into(x_hat, t, &mut u);
        u
    }
}

/// Constant zero input.
pub fn zero_controller<T: Scalar>(input_set: &BoxSet<T>) -> ControllerDef<T> {
    ControllerDef::new(
        "zero",
        input_set.clone(),
        Arc::new(|_: &[T], _: usize, u: &mut [T]| u.fill(T::zero())),
    )
}

/// Uniform samples from the input box; a pure function of `(seed, t)`.
pub fn random_controller<T: Scalar>(input_set: &BoxSet<T>, seed: u64) -> ControllerDef<T> {
    let set = input_set.clone();
    ControllerDef::new(
        format!("random({seed})"),
        input_set.clone(),
        Arc::new(move |_: &[T], t: usize, u: &mut [T]| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            u.copy_from_slice(&set.sample(&mut rng));
        }),
    )
}

/// `û = −k_θ θ̂ − k_ω ω̂` on the first two state coordinates.
pub fn pd_stabilizer<T: Scalar>(input_set: &BoxSet<T>, k_theta: f64, k_omega: f64) -> ControllerDef<T> {
    let (k1, k2) = (T::lit(k_theta), T::lit(k_omega));
    ControllerDef::new(
        "pendulum_stabilizer",
        input_set.clone(),
        Arc::new(move |x: &[T], _: usize, u: &mut [T]| {
            u.fill(T::zero());
            u[0] = -(k1 * x[0]) - k2 * x[1];
        }),
    )
}

/// Steers the 3D car (`ẋ₁ = sin x₃`, `ẋ₂ = cos x₃`) toward a goal point by
/// proportional heading correction.
pub fn waypoint_controller<T: Scalar>(input_set: &BoxSet<T>, goal: [f64; 2], gain: f64) -> ControllerDef<T> {
    let (gx, gy, k) = (T::lit(goal[0]), T::lit(goal[1]), T::lit(gain));
    let pi = T::lit(std::f64::consts::PI);
    ControllerDef::new(
        "vehicle_waypoint",
        input_set.clone(),
        Arc::new(move |x: &[T], _: usize, u: &mut [T]| {
            let desired = (gx - x[0]).atan2(gy - x[1]);
            let mut err = desired - x[2];
            // wrap to (-π, π]
            let two_pi = pi + pi;
            while err > pi {
                err = err - two_pi;
            }
            while err <= -pi {
                err = err + two_pi;
            }
            u.fill(T::zero());
            u[0] = k * err;
        }),
    )
}

/// Builtin stand-in controllers for a source system. `random(7)` selects the
/// seeded random policy; bare `random` uses seed 0.
pub fn builtin_controller<T: Scalar>(name: &str, source: &SystemDef<T>) -> Result<ControllerDef<T>> {
    let u = &source.input_set;
    let name = name.trim();
    match name {
        "zero" => Ok(zero_controller(u)),
        "pendulum_stabilizer" => Ok(pd_stabilizer(u, 4.0, 2.0)),
        "vehicle_waypoint" => {
            // goal placed inside the state box, toward its upper edge
            let c = source.state_set.center();
            let hi = source.state_set.hi[1].as_f64();
            let goal = [c[0].as_f64(), c[1].as_f64() + 0.75 * (hi - c[1].as_f64())];
            Ok(waypoint_controller(u, goal, 2.0))
        }
        "random" => Ok(random_controller(u, 0)),
        _ => {
            if let Some(arg) = name.strip_prefix("random(").and_then(|r| r.strip_suffix(')')) {
                let seed = arg.trim().parse::<u64>().map_err(|_| Error::UnknownController {
                    name: name.to_string(),
                    valid: BUILTIN_CONTROLLERS.join(", "),
                })?;
                return Ok(random_controller(u, seed));
            }
            Err(Error::UnknownController {
                name: name.to_string(),
                valid: BUILTIN_CONTROLLERS.join(", "),
            })
        }
    }
}

/// Outcome of the sampling-based Lipschitz sanity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub pairs: usize,
    /// Largest `‖f(x,u)−f(x′,u′)‖ / (L_x‖x−x′‖ + L_u‖u−u′‖)` seen.
    pub max_ratio_f: f64,
    /// Largest `‖h(x)−h(x′)‖ / (L_h‖x−x′‖)` seen.
    pub max_ratio_h: f64,
    pub violations_f: usize,
    pub violations_h: usize,
    pub violations: usize,
}

/// Ratios within this relative slack of 1 are equality cases, not violations.
const RATIO_SLACK: f64 = 1e-9;

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

/// Step of the local pairs, before clamping into the sets.
const LOCAL_STEP: f64 = 1e-4;

/// `p + LOCAL_STEP·s` for a random sign vector `s`, clamped into `set`.
fn corner_step<T: Scalar, R: Rng>(set: &BoxSet<T>, p: &[T], rng: &mut R) -> Vec<T> {
    let h = T::lit(LOCAL_STEP);
    let mut q: Vec<T> = p.iter().map(|&v| if rng.gen::<bool>() { v + h } else { v - h }).collect();
    set.clamp_into(&mut q);
    q
}

/// Draws `pairs` random `(x,u), (x′,u′)` and compares the observed growth of
/// `f` and `h` with the declared constants. Even pairs are independent
/// uniform draws from `X × U`; odd pairs move a uniform draw by a small step
/// along a random sign vector, which probes the ∞-norm of the Jacobian.
pub fn sample_lipschitz_check<T: Scalar>(sys: &SystemDef<T>, pairs: usize, seed: u64) -> LipschitzCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lip = sys.lipschitz;
    let mut out = LipschitzCheck {
        pairs,
        max_ratio_f: 0.0,
        max_ratio_h: 0.0,
        violations_f: 0,
        violations_h: 0,
        violations: 0,
    };
    for i in 0..pairs {
        let x = sys.state_set.sample(&mut rng);
        let u = sys.input_set.sample(&mut rng);
        let (xp, up) = if i % 2 == 0 {
            (sys.state_set.sample(&mut rng), sys.input_set.sample(&mut rng))
        } else {
            (corner_step(&sys.state_set, &x, &mut rng), corner_step(&sys.input_set, &u, &mut rng))
        };
        let dx = dist_inf(&x, &xp).as_f64();
        let du = dist_inf(&u, &up).as_f64();
        let df = dist_inf(&sys.step(&x, &u), &sys.step(&xp, &up)).as_f64();
        let dh = dist_inf(&sys.output(&x), &sys.output(&xp)).as_f64();

        let mut bad = false;
        if dx > 0.0 || du > 0.0 {
            if let Some(r) = ratio(df, lip.state * dx + lip.input * du) {
                out.max_ratio_f = out.max_ratio_f.max(r);
                if r > 1.0 + RATIO_SLACK {
                    out.violations_f += 1;
                    bad = true;
                }
            }
        }
        if dx > 0.0 {
            if let Some(r) = ratio(dh, lip.output * dx) {
                out.max_ratio_h = out.max_ratio_h.max(r);
                if r > 1.0 + RATIO_SLACK {
                    out.violations_h += 1;
                    bad = true;
                }
            }
        }
        if bad {
            out.violations += 1;
        }
    }
    out
}
