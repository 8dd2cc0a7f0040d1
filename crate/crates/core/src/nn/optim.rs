use std::collections::BTreeMap;

use super::params::ModelParams;

/// RMSProp with a per-parameter running mean of squared gradients.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    square_avg: BTreeMap<String, Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        RmsProp {
            lr,
            decay: 0.9,
            eps: 1e-8,
            square_avg: BTreeMap::new(),
        }
    }

    /// Applies one update. Parameters without a gradient entry are left
    /// untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Vec<f64>>) {
        for (name, t) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let acc = self
                .square_avg
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            for ((w, &gi), a) in t.data_mut().iter_mut().zip(g).zip(acc.iter_mut()) {
                *a = self.decay * *a + (1.0 - self.decay) * gi * gi;
                *w -= self.lr * gi / (a.sqrt() + self.eps);
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Vec<f64>>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (name, t) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Clamps every parameter value into `[-c, c]`.
pub fn clip_weights(params: &mut ModelParams, c: f64) {
    params.map_values(|v| v.clamp(-c, c));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn single(v: f64) -> ModelParams {
        let mut p = ModelParams::new(0);
        p.set("x", Tensor::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(1.25);
        let mut opt = RmsProp::new(2e-4);
        let grads = BTreeMap::from([("x".to_string(), vec![0.0])]);
        opt.step(&mut p, &grads);
        assert_eq!(p.get("x").unwrap().data()[0], 1.25);
    }

    #[test]
    fn clip_example() {
        let mut p = ModelParams::new(0);
        p.set("w", Tensor::new(&[3], vec![-0.5, 0.005, 0.5]));
        clip_weights(&mut p, 0.01);
        assert_eq!(p.get("w").unwrap().data(), &[-0.01, 0.005, 0.01]);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        // Independent scalar simulation of the same recurrence.
        let (lr, rho, eps) = (0.01, 0.9, 1e-8);
        let (mut x_ref, mut s_ref) = (3.0f64, 0.0f64);
        let mut p = single(3.0);
        let mut opt = RmsProp::new(lr);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let x = p.get("x").unwrap().data()[0];
            let loss = (x - 1.0) * (x - 1.0);
            assert!(loss < prev, "loss rose to {loss}");
            prev = loss;
            let g = 2.0 * (x - 1.0);
            opt.step(&mut p, &BTreeMap::from([("x".to_string(), vec![g])]));

            let gr = 2.0 * (x_ref - 1.0);
            s_ref = rho * s_ref + (1.0 - rho) * gr * gr;
            x_ref -= lr * gr / (s_ref.sqrt() + eps);
            assert!((p.get("x").unwrap().data()[0] - x_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = single(-2.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..300 {
            let x = p.get("x").unwrap().data()[0];
            opt.step(&mut p, &BTreeMap::from([("x".to_string(), vec![2.0 * (x - 0.5)])]));
        }
        assert!((p.get("x").unwrap().data()[0] - 0.5).abs() < 1e-2);
    }
}
