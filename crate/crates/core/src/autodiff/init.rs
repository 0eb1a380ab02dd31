use super::rng::Rng;
use super::tensor::Tensor;

/// Fan-in and fan-out for a weight of the given shape. Weights are stored
/// `[in, out]`; rank-1 shapes are treated as `[1, n]` and trailing dimensions
/// beyond two act as a receptive field multiplier.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => {
            let rf: usize = shape[2..].iter().product();
            (shape[0] * rf, shape[1] * rf)
        }
    }
}

/// Uniform Xavier/Glorot initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(shape: &[usize], rng: &mut Rng) -> Tensor {
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}
