//! Central finite differences for checking analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scalar, Tensor};

/// Perturbation used by [`numeric_grad`].
pub const FD_STEP: f64 = 1e-5;

/// `∂f/∂t` by central differences with step [`FD_STEP`].
pub fn numeric_grad<T: Scalar>(t: &Tensor<T>, mut f: impl FnMut(&Tensor<T>) -> T) -> Tensor<T> {
    let h = T::lit(FD_STEP);
    let mut probe = t.clone();
    let mut grad = Tensor::zeros(t.shape());
    for i in 0..t.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (h + h);
    }
    grad
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both are zero.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[T]| v.iter().map(|x| x.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Uniform values in `[-1, 1)` from a seeded generator.
pub fn random_tensor<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_grad_of_cubic() {
        let t = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let g = numeric_grad(&t, |t| t.data().iter().map(|v| v * v * v).sum());
        for (x, d) in t.data().iter().zip(g.data()) {
            assert!((3.0 * x * x - d).abs() < 1e-8);
        }
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0f64; 3], &[0.0; 3]), 0.0);
        assert!((relative_error(&[1.0f64, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-12);
    }
}
