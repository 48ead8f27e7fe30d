//! Parameter initialization schemes.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Gaussian with the given standard deviation.
    Normal(f64),
    /// Kaiming-style fan-in scaling: N(0, sqrt(2 / fan_in)).
    HeNormal,
}

/// Fan-in of a weight tensor: product of all dims except the first
/// (conv `[out, in, kh, kw]`, linear stored as `[in, out]` uses dim 0).
fn fan_in(shape: &[usize]) -> usize {
    match shape.len() {
        0 | 1 => 1,
        2 => shape[0],
        _ => shape[1..].iter().product(),
    }
}

/// Materialize a tensor. The values depend only on `(seed, name, shape, init)`.
pub fn init_tensor(seed: u64, name: &str, shape: &[usize], init: Init) -> ArrayD<f64> {
    let dyn_shape = IxDyn(shape);
    match init {
        Init::Zeros => ArrayD::zeros(dyn_shape),
        Init::Ones => ArrayD::ones(dyn_shape),
        Init::Normal(std) => {
            let mut rng = stream_rng(seed, name);
            ArrayD::from_shape_simple_fn(dyn_shape, || {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
        }
        Init::HeNormal => {
            let std = (2.0 / fan_in(shape) as f64).sqrt();
            let mut rng = stream_rng(seed, name);
            ArrayD::from_shape_simple_fn(dyn_shape, || {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_name_keyed() {
        let a = init_tensor(3, "w1", &[4, 4], Init::HeNormal);
        let b = init_tensor(3, "w1", &[4, 4], Init::HeNormal);
        let c = init_tensor(3, "w2", &[4, 4], Init::HeNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn he_scale_tracks_fan_in() {
        let w = init_tensor(0, "w", &[8, 32, 3, 3], Init::HeNormal);
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / (32.0 * 9.0);
        assert!((var - expected).abs() < expected * 0.5, "var {var} vs {expected}");
    }
}
