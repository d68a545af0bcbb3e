use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub step: u64,
    pub lr: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(net: &Mlp<T>, lr: f64, seed: u64) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
            lr,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

/// One Adam update. Non-finite gradients are rejected before anything is
/// modified.
pub fn optimizer_step<T: Scalar>(net: &mut Mlp<T>, grads: &Gradients<T>, state: &mut TrainState<T>) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient(format!("{} network", net.role.as_str())));
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.adam;
    let t = state.step as i32;
    let c1 = T::lit(1.0 - beta1.powi(t));
    let c2 = T::lit(1.0 - beta2.powi(t));
    let (b1, b2, eps, lr) = (T::lit(beta1), T::lit(beta2), T::lit(eps), T::lit(state.lr));
    let one = T::one();
    let m = state.m.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()));
    let v = state.v.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()));
    for (((p, &g), m), v) in net.params_mut().zip(grads.params()).zip(m).zip(v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p = *p - lr * mh / (vh.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Cache;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = Mlp::<f64>::new_v(3, &[4], 1).unwrap();
        let before = net.clone();
        let mut st = TrainState::new(&net, 0.01, 1);
        let g = Gradients::zeros_like(&net);
        optimizer_step(&mut net, &g, &mut st).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.step, 1);
        optimizer_step(&mut net, &g, &mut st).unwrap();
        assert_eq!(st.step, 2);
    }

    #[test]
    fn non_finite_rejected() {
        let mut net = Mlp::<f64>::new_v(2, &[3], 1).unwrap();
        let mut st = TrainState::new(&net, 0.01, 1);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].w[1] = f64::NAN;
        let before = net.clone();
        assert!(matches!(optimizer_step(&mut net, &g, &mut st), Err(Error::NonFiniteGradient(_))));
        assert_eq!(net, before);
        assert_eq!(st.step, 0);
    }

    fn run(seed: u64) -> Mlp<f64> {
        let mut net = Mlp::<f64>::new_v(2, &[5, 5], seed).unwrap();
        let mut st = TrainState::new(&net, 0.01, seed);
        let mut cache = Cache::default();
        for i in 0..100 {
            let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
            let mut g = Gradients::zeros_like(&net);
            let p = net.forward_cached(&x, &mut cache)[0];
            let y = if x[0] > 0.0 { 1.0 } else { 0.0 };
            net.backward_from_logits(&cache, vec![p - y], &mut g, None);
            optimizer_step(&mut net, &g, &mut st).unwrap();
        }
        net
    }

    #[test]
    fn replay_is_bit_identical() {
        let (a, b) = (run(4), run(4));
        let bits = |n: &Mlp<f64>| n.params().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&run(5)));
    }
}
