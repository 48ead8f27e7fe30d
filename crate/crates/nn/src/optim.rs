//! Adam optimizer with optional global-norm gradient clipping.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::params::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Euclidean norm over all gradients taken together.
    pub fn global_norm(grads: &BTreeMap<String, ArrayD<f64>>) -> f64 {
        grads.values().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// One update. Only trainable parameters with a gradient entry move.
    pub fn apply(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, ArrayD<f64>>,
        clip_norm: Option<f64>,
    ) {
        let scale = match clip_norm {
            Some(max) => {
                let norm = Self::global_norm(grads);
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let param = match params.get_mut(name) {
                Some(p) if p.trainable => p,
                _ => continue,
            };
            let g = grad.mapv(|x| x * scale);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            m.zip_mut_with(&g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(&g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            let (lr, eps) = (self.lr, self.eps);
            ndarray::Zip::from(&mut param.value).and(&*m).and(&*v).for_each(|p, &mi, &vi| {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }

    pub fn moments(&self) -> (&BTreeMap<String, ArrayD<f64>>, &BTreeMap<String, ArrayD<f64>>) {
        (&self.m, &self.v)
    }

    /// Rebuild from checkpointed state.
    pub fn restore(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: BTreeMap<String, ArrayD<f64>>,
        v: BTreeMap<String, ArrayD<f64>>,
    ) -> Self {
        Adam { lr, beta1, beta2, eps, step, m, v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::Init;
    use ndarray::arr1;

    #[test]
    fn adam_moves_against_gradient() {
        let mut ps = ParamSet::new(0);
        ps.get_or_init("w", &[3], Init::Ones, true);
        let mut opt = Adam::new(0.1, 0.9, 0.999, 1e-8);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), arr1(&[1.0, 1.0, 1.0]).into_dyn());
        opt.apply(&mut ps, &grads, None);
        for &w in ps.get("w").unwrap().value.iter() {
            assert!(w < 1.0);
        }
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut ps = ParamSet::new(0);
        ps.get_or_init("w", &[2], Init::Ones, false);
        let mut opt = Adam::new(0.1, 0.9, 0.999, 1e-8);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), arr1(&[5.0, 5.0]).into_dyn());
        opt.apply(&mut ps, &grads, None);
        assert_eq!(ps.get("w").unwrap().value, arr1(&[1.0, 1.0]).into_dyn());
    }

    #[test]
    fn clipping_bounds_the_update_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), arr1(&[3.0, 4.0]).into_dyn());
        assert!((Adam::global_norm(&grads) - 5.0).abs() < 1e-12);
    }
}
