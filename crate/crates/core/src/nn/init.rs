use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};

/// Generator used for every seeded draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Glorot-uniform draw in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Glorot fans for the layouts used here: `[out, in]` for dense weights,
/// `[filters, width, depth]` for convolution kernels, `[rows, cols]` otherwise.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [n] => (n, n),
        [out, inp] => (inp, out),
        [filters, width, depth] => (width * depth, width * filters),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

/// Weight initializer: Glorot-uniform with the fans implied by `shape`.
pub fn init_weight<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let (fan_in, fan_out) = fans(shape);
    glorot_uniform(shape, fan_in, fan_out, rng)
}

pub fn init_bias<T: Scalar>(len: usize) -> Tensor<T> {
    Tensor::zeros(&[len])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a: Tensor<f32> = init_weight(&[5, 7], &mut seeded_rng(42));
        let b: Tensor<f32> = init_weight(&[5, 7], &mut seeded_rng(42));
        let c: Tensor<f32> = init_weight(&[5, 7], &mut seeded_rng(43));
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn biases_are_zero() {
        let b: Tensor<f32> = init_bias(9);
        assert!(b.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn glorot_bound_and_mean() {
        let t: Tensor<f64> = init_weight(&[100, 100], &mut seeded_rng(0));
        assert_eq!(t.len(), 10_000);
        let limit = (6.0f64 / 200.0).sqrt();
        assert!(t.data().iter().all(|&x| x.abs() <= limit));
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        // spread should reach near the bound, not collapse to zero
        let max = t.data().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max > 0.95 * limit);
    }

    #[test]
    fn conv_fans() {
        assert_eq!(fans(&[256, 3, 128]), (384, 768));
        assert_eq!(fans(&[17, 512]), (512, 17));
    }
}
