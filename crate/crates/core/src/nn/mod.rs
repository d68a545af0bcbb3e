//! Fully connected ReLU networks with a classifier head (`V`) or a box-clamped
//! interface head (`K`), exact backpropagation and certified ∞-norm
//! Lipschitz bounds.

mod checkpoint;
mod optim;

pub use checkpoint::{load, load_role, save, to_text, from_text, CheckpointMeta};
pub use optim::{optimizer_step, AdamConfig, TrainState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::rounding;
use crate::scalar::Scalar;

/// What the network is trained to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    V,
    K,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::V => "V",
            Role::K => "K",
        }
    }
}

/// Output transformation after the last affine layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Head<T> {
    /// ReLU on the output layer too, as in the plain network definition.
    Relu,
    /// Logistic squashing of a scalar output onto `[0, 1]`.
    Sigmoid,
    /// Componentwise clamp onto a box.
    BoxClamp(BoxSet<T>),
}

impl<T: Scalar> Head<T> {
    /// Lipschitz constant of the head itself.
    pub fn factor(&self) -> f64 {
        match self {
            Head::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Head::Relu => "relu",
            Head::Sigmoid => "sigmoid",
            Head::BoxClamp(_) => "clamp",
        }
    }
}

/// Dense layer `z = W a + b`, `W` stored row-major (`rows` outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            w: vec![T::zero(); rows * cols],
            b: vec![T::zero(); rows],
        }
    }

    pub fn from_rows(w: &[&[f64]], b: &[f64]) -> Self {
        let rows = w.len();
        let cols = w.first().map_or(0, |r| r.len());
        Self {
            rows,
            cols,
            w: w.iter().flat_map(|r| r.iter().map(|&v| T::lit(v))).collect(),
            b: b.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    fn apply(&self, a: &[T], z: &mut [T]) {
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut s = self.b[r];
            for (&w, &x) in row.iter().zip(a) {
                s = s + w * x;
            }
            z[r] = s;
        }
    }

    /// Induced ∞-norm (max absolute row sum), rounded upward.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| rounding::sum(self.w[r * self.cols..(r + 1) * self.cols].iter().map(|w| w.as_f64().abs())))
            .fold(0.0, f64::max)
    }

    /// Spectral norm estimate by power iteration on `WᵀW`.
    pub fn norm_2(&self) -> f64 {
        let w: Vec<f64> = self.w.iter().map(|v| v.as_f64()).collect();
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..100 {
            let wv: Vec<f64> = (0..self.rows)
                .map(|r| (0..self.cols).map(|c| w[r * self.cols + c] * v[c]).sum())
                .collect();
            let mut wtwv = vec![0.0; self.cols];
            for r in 0..self.rows {
                for c in 0..self.cols {
                    wtwv[c] += w[r * self.cols + c] * wv[r];
                }
            }
            let norm = wtwv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            sigma = norm.sqrt();
            v = wtwv.iter().map(|x| x / norm).collect();
        }
        sigma
    }
}

/// Reusable buffers for allocation-free forward passes.
pub type Scratch<T> = (Vec<T>, Vec<T>);

/// Multilayer perceptron: ReLU hidden layers and a [`Head`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub role: Role,
    pub head: Head<T>,
    pub layers: Vec<Layer<T>>,
    pub seed: u64,
}

/// Per-layer activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache<T> {
    /// `acts[0]` is the input, `acts[j+1]` the post-activation of layer `j`
    /// (the head output for the last layer).
    pub acts: Vec<Vec<T>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Vec<T>>,
}

/// Gradients, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, &y)| *x = *x + y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = *x * s);
            l.b.iter_mut().for_each(|x| *x = *x * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Default hidden sizes: five layers of 20 for `V`, five of 200 for `K`.
pub fn default_hidden(role: Role) -> Vec<usize> {
    match role {
        Role::V => vec![20; 5],
        Role::K => vec![200; 5],
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn from_layers(role: Role, head: Head<T>, layers: Vec<Layer<T>>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[1].cols != w[0].rows {
                return Err(Error::Dimension {
                    context: "layer chaining".into(),
                    expected: w[0].rows,
                    found: w[1].cols,
                });
            }
        }
        for l in &layers {
            if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return Err(Error::invalid("layer", "weight/bias length does not match shape"));
            }
        }
        if layers.is_empty() {
            return Err(Error::invalid("network", "needs at least one layer"));
        }
        let out = layers.last().unwrap().rows;
        match &head {
            Head::Sigmoid if out != 1 => {
                return Err(Error::Dimension {
                    context: "sigmoid head output".into(),
                    expected: 1,
                    found: out,
                })
            }
            Head::BoxClamp(b) if b.dim() != out => {
                return Err(Error::Dimension {
                    context: "clamp head output".into(),
                    expected: b.dim(),
                    found: out,
                })
            }
            _ => {}
        }
        Ok(Self {
            role,
            head,
            layers,
            seed: 0,
        })
    }

    /// Uniform fan-in initialization `U(−1/√fan_in, 1/√fan_in)`.
    pub fn random(role: Role, head: Head<T>, dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid("layer_dims", format!("{dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let s = 1.0 / (d[0] as f64).sqrt();
                let mut l = Layer::zeros(d[1], d[0]);
                l.w.iter_mut()
                    .chain(l.b.iter_mut())
                    .for_each(|v| *v = T::lit(rng.gen_range(-s..s)));
                l
            })
            .collect();
        let mut net = Self::from_layers(role, head, layers)?;
        net.seed = seed;
        Ok(net)
    }

    /// Classifier `V : ℝ^{n+n̂} → [0,1]`.
    pub fn new_v(input: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([1]).collect();
        Self::random(Role::V, Head::Sigmoid, &dims, seed)
    }

    /// Interface `K : ℝ^{n+n̂+m̂} → U`.
    pub fn new_k(input: usize, hidden: &[usize], u: BoxSet<T>, seed: u64) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain([u.dim()])
            .collect();
        Self::random(Role::K, Head::BoxClamp(u), &dims, seed)
    }

    /// Interface that starts as `u = clamp(P û)`: the last `m̂` inputs are
    /// routed through the first hidden units as `relu(û − lo(Û))` and shifted
    /// back at the output. Remaining weights get uniform noise of size `noise`.
    pub fn pass_through_k(
        state_inputs: usize,
        u_hat: &BoxSet<T>,
        gain: &[Vec<f64>],
        hidden: &[usize],
        u: BoxSet<T>,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let mh = u_hat.dim();
        let m = u.dim();
        if gain.len() != m || gain.iter().any(|r| r.len() != mh) {
            return Err(Error::invalid("pass-through gain", format!("expected {m}x{mh} matrix")));
        }
        if hidden.is_empty() || hidden.iter().any(|&h| h < mh) {
            return Err(Error::invalid("pass-through hidden sizes", format!("every layer needs at least {mh} units")));
        }
        let input = state_inputs + mh;
        let dims: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([m]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noisy = |l: &mut Layer<T>| {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|v| *v = T::lit(if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 }));
        };
        let mut layers = Vec::new();
        for (j, d) in dims.windows(2).enumerate() {
            let mut l = Layer::zeros(d[1], d[0]);
            noisy(&mut l);
            let last = j + 2 == dims.len();
            if j == 0 {
                for k in 0..mh {
                    l.w[k * l.cols..(k + 1) * l.cols].fill(T::zero());
                    l.w[k * l.cols + state_inputs + k] = T::one();
                    l.b[k] = -u_hat.lo[k];
                }
            } else if !last {
                for k in 0..mh {
                    l.w[k * l.cols..(k + 1) * l.cols].fill(T::zero());
                    l.w[k * l.cols + k] = T::one();
                    l.b[k] = T::zero();
                }
            }
            if last {
                for i in 0..m {
                    let mut shift = T::zero();
                    for k in 0..mh {
                        let g = T::lit(gain[i][k]);
                        l.w[i * l.cols + k] = g;
                        shift = shift + g * u_hat.lo[k];
                    }
                    l.b[i] = shift;
                }
            }
            layers.push(l);
        }
        let mut net = Self::from_layers(Role::K, Head::BoxClamp(u), layers)?;
        net.seed = seed;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.rows))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn max_width(&self) -> usize {
        self.layer_dims().into_iter().max().unwrap_or(0)
    }

    fn apply_head(&self, z: &[T], out: &mut [T]) {
        match &self.head {
            Head::Relu => z.iter().zip(out.iter_mut()).for_each(|(&v, o)| *o = v.max(T::zero())),
            Head::Sigmoid => out[0] = sigmoid(z[0]),
            Head::BoxClamp(b) => {
                for (d, (&v, o)) in z.iter().zip(out.iter_mut()).enumerate() {
                    *o = v.max(b.lo[d]).min(b.hi[d]);
                }
            }
        }
    }

    /// Runs the affine/ReLU stack; the pre-head output is left in `scratch.0`.
    fn logits_in_scratch(&self, x: &[T], scratch: &mut Scratch<T>) {
        let (a, z) = scratch;
        a.clear();
        a.extend_from_slice(x);
        let nl = self.layers.len();
        for (j, l) in self.layers.iter().enumerate() {
            z.resize(l.rows, T::zero());
            l.apply(a, z);
            if j + 1 < nl {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            std::mem::swap(a, z);
        }
    }

    /// Forward pass without dimension checks, reusing `scratch`.
    pub fn forward_into(&self, x: &[T], out: &mut [T], scratch: &mut Scratch<T>) {
        self.logits_in_scratch(x, scratch);
        self.apply_head(&scratch.0, out);
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input".into(),
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut out = vec![T::zero(); self.output_dim()];
        self.forward_into(x, &mut out, &mut Default::default());
        Ok(out)
    }

    /// Scalar output of a `V` network.
    pub fn value(&self, x: &[T], scratch: &mut Scratch<T>) -> T {
        let mut out = [T::zero()];
        self.forward_into(x, &mut out, scratch);
        out[0]
    }

    /// Forward pass keeping every activation for [`Mlp::backward`].
    pub fn forward_cached<'c>(&self, x: &[T], cache: &'c mut Cache<T>) -> &'c [T] {
        let nl = self.layers.len();
        cache.acts.resize(nl + 1, Vec::new());
        cache.pre.resize(nl, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for (j, l) in self.layers.iter().enumerate() {
            let mut z = std::mem::take(&mut cache.pre[j]);
            z.resize(l.rows, T::zero());
            l.apply(&cache.acts[j], &mut z);
            let mut a = std::mem::take(&mut cache.acts[j + 1]);
            a.resize(l.rows, T::zero());
            if j + 1 < nl {
                z.iter().zip(a.iter_mut()).for_each(|(&v, o)| *o = v.max(T::zero()));
            } else {
                self.apply_head(&z, &mut a);
            }
            cache.pre[j] = z;
            cache.acts[j + 1] = a;
        }
        &cache.acts[nl]
    }

    /// Accumulates into `grads` the gradient of `upstream · F(x)` for the
    /// input cached by the last [`Mlp::forward_cached`]; optionally writes the
    /// gradient with respect to the input. ReLU kinks and clamp saturation use
    /// subgradient 0.
    pub fn backward(&self, cache: &Cache<T>, upstream: &[T], grads: &mut Gradients<T>, input_grad: Option<&mut [T]>) {
        let nl = self.layers.len();
        let z = &cache.pre[nl - 1];
        let delta: Vec<T> = match &self.head {
            Head::Relu => z
                .iter()
                .zip(upstream)
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect(),
            Head::Sigmoid => {
                let p = cache.acts[nl][0];
                vec![upstream[0] * p * (T::one() - p)]
            }
            Head::BoxClamp(b) => z
                .iter()
                .zip(upstream)
                .enumerate()
                .map(|(d, (&v, &g))| if v >= b.lo[d] && v <= b.hi[d] { g } else { T::zero() })
                .collect(),
        };
        self.backward_from_logits(cache, delta, grads, input_grad);
    }

    /// Like [`Mlp::backward`] with the gradient given at the pre-head output.
    pub fn backward_from_logits(
        &self,
        cache: &Cache<T>,
        mut delta: Vec<T>,
        grads: &mut Gradients<T>,
        input_grad: Option<&mut [T]>,
    ) {
        for j in (0..self.layers.len()).rev() {
            let l = &self.layers[j];
            let g = &mut grads.layers[j];
            let a = &cache.acts[j];
            for r in 0..l.rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                g.b[r] = g.b[r] + d;
                let gw = &mut g.w[r * l.cols..(r + 1) * l.cols];
                gw.iter_mut().zip(a).for_each(|(w, &x)| *w = *w + d * x);
            }
            if j == 0 && input_grad.is_none() {
                return;
            }
            let mut prev = vec![T::zero(); l.cols];
            for r in 0..l.rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                let row = &l.w[r * l.cols..(r + 1) * l.cols];
                prev.iter_mut().zip(row).for_each(|(p, &w)| *p = *p + d * w);
            }
            if j == 0 {
                if let Some(ig) = input_grad {
                    ig.copy_from_slice(&prev);
                }
                return;
            }
            let zp = &cache.pre[j - 1];
            prev.iter_mut()
                .zip(zp)
                .for_each(|(p, &z)| if z <= T::zero() { *p = T::zero() });
            delta = prev;
        }
    }

    /// Certified ∞-norm Lipschitz bound `∏ ‖W_j‖∞ × head factor`, rounded up.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        rounding::mul(rounding::product(self.layers.iter().map(|l| l.norm_inf())), self.head.factor())
    }

    /// Product of spectral norms (2-norm bound), for reference only.
    pub fn spectral_product(&self) -> f64 {
        self.layers.iter().map(|l| l.norm_2()).product::<f64>() * self.head.factor()
    }

    /// Subgradient of [`Mlp::lipschitz_upper_bound`] scaled by `scale`,
    /// added to `grads`.
    pub fn add_lipschitz_gradient(&self, scale: T, grads: &mut Gradients<T>) {
        let norms: Vec<f64> = self.layers.iter().map(|l| l.norm_inf()).collect();
        for (j, l) in self.layers.iter().enumerate() {
            let others: f64 = norms
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &v)| v)
                .product::<f64>()
                * self.head.factor();
            let row_sum = |r: usize| l.w[r * l.cols..(r + 1) * l.cols].iter().map(|w| w.abs()).sum::<T>();
            let rmax = (0..l.rows)
                .max_by(|&a, &b| row_sum(a).partial_cmp(&row_sum(b)).unwrap())
                .unwrap();
            let s = scale * T::lit(others);
            for c in 0..l.cols {
                let w = l.w[rmax * l.cols + c];
                let gw = &mut grads.layers[j].w[rmax * l.cols + c];
                *gw = *gw + s * w.signum() * if w == T::zero() { T::zero() } else { T::one() };
            }
        }
    }

    /// Parameters as one flat list, layer by layer, weights then biases.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b))
    }
}

/// Anything usable as the relation classifier `V`.
pub trait ValueFn<T>: Sync {
    fn value(&self, z: &[T], scratch: &mut Scratch<T>) -> T;
    /// Certified ∞-norm Lipschitz bound.
    fn lipschitz_bound(&self) -> f64;
    /// Reference 2-norm bound, when available.
    fn spectral_bound(&self) -> f64 {
        f64::NAN
    }
}

/// Anything usable as the interface `K(x, x̂, û)`.
pub trait InterfaceFn<T>: Sync {
    fn act(&self, z: &[T], u: &mut [T], scratch: &mut Scratch<T>);
    fn lipschitz_bound(&self) -> f64;
    fn spectral_bound(&self) -> f64 {
        f64::NAN
    }
}

impl<T: Scalar> ValueFn<T> for Mlp<T> {
    fn value(&self, z: &[T], scratch: &mut Scratch<T>) -> T {
        Mlp::value(self, z, scratch)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_upper_bound()
    }
    fn spectral_bound(&self) -> f64 {
        self.spectral_product()
    }
}

impl<T: Scalar> InterfaceFn<T> for Mlp<T> {
    fn act(&self, z: &[T], u: &mut [T], scratch: &mut Scratch<T>) {
        self.forward_into(z, u, scratch)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_upper_bound()
    }
    fn spectral_bound(&self) -> f64 {
        self.spectral_product()
    }
}

/// Constant classifier.
#[derive(Debug, Clone, Copy)]
pub struct ConstValue(pub f64);

impl<T: Scalar> ValueFn<T> for ConstValue {
    fn value(&self, _: &[T], _: &mut Scratch<T>) -> T {
        T::lit(self.0)
    }
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// Classifier given by a closure and a declared Lipschitz constant.
pub struct FnValue<F> {
    pub f: F,
    pub lipschitz: f64,
}

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> ValueFn<T> for FnValue<F> {
    fn value(&self, z: &[T], _: &mut Scratch<T>) -> T {
        (self.f)(z)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}

/// Interface that always returns the zero input.
#[derive(Debug, Clone, Copy)]
pub struct ZeroInterface;

impl<T: Scalar> InterfaceFn<T> for ZeroInterface {
    fn act(&self, _: &[T], u: &mut [T], _: &mut Scratch<T>) {
        u.fill(T::zero())
    }
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// Interface given by a closure and a declared Lipschitz constant.
pub struct FnInterface<F> {
    pub f: F,
    pub lipschitz: f64,
}

impl<T: Scalar, F: Fn(&[T], &mut [T]) + Sync> InterfaceFn<T> for FnInterface<F> {
    fn act(&self, z: &[T], u: &mut [T], _: &mut Scratch<T>) {
        (self.f)(z, u)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}
