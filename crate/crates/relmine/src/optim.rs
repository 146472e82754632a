//! Adam with decoupled weight decay, plus the weight initializers shared
//! by every stage. The optimizer never touches frozen parameters; decay
//! applied to a frozen matrix would silently violate the freeze contract.

use ndarray::Array2;
use rand::Rng;

use crate::tape::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        Adam { m: store.zero_grads(), v: store.zero_grads(), t: 0, cfg }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array2<f64>]) {
        assert_eq!(grads.len(), store.len(), "gradient vector misaligned");
        self.t += 1;
        let b1t = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for i in 0..store.len() {
            if !store.is_trainable(i) {
                continue;
            }
            let g = &grads[i];
            self.m[i].zip_mut_with(g, |m, &g| *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * g);
            self.v[i]
                .zip_mut_with(g, |v, &g| *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * g * g);
            let lr = self.cfg.lr;
            let wd = self.cfg.weight_decay;
            let eps = self.cfg.eps;
            let m = &self.m[i];
            let v = &self.v[i];
            let p = store.value_mut(i);
            for ((p, &m), &v) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = m / b1t;
                let vhat = v / b2t;
                *p -= lr * (mhat / (vhat.sqrt() + eps) + wd * *p);
            }
        }
    }
}

/// Glorot uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), where
/// rows are output units for the row-major `x @ W.T` orientation.
pub fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

/// Gaussian init used for embedding tables and the soft prefix projection.
pub fn normal(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}
