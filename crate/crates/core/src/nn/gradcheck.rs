use super::Tensor;
use crate::real::Real;

/// Compares analytic gradients against central finite differences.
///
/// `f` returns the scalar value and the analytic gradient with respect to
/// every input. Returns the largest
/// `|g_fd - g_an| / max(|g_fd|, |g_an|, 1e-8)` over all coordinates.
pub fn grad_check<T, F>(mut f: F, inputs: &[Tensor<T>], epsilon: f64) -> f64
where
    T: Real,
    F: FnMut(&[Tensor<T>]) -> (f64, Vec<Tensor<T>>),
{
    let (_, analytic) = f(inputs);
    assert_eq!(analytic.len(), inputs.len(), "one gradient per input");
    let mut probe: Vec<Tensor<T>> = inputs.to_vec();
    let mut worst = 0.0f64;
    for t in 0..inputs.len() {
        assert_eq!(analytic[t].shape(), inputs[t].shape());
        for i in 0..inputs[t].len() {
            let orig = inputs[t].data()[i];
            probe[t].data_mut()[i] = orig + T::lit(epsilon);
            let (plus, _) = f(&probe);
            probe[t].data_mut()[i] = orig - T::lit(epsilon);
            let (minus, _) = f(&probe);
            probe[t].data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * epsilon);
            let an = analytic[t].data()[i].as_f64();
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
