use rand::Rng as _;

use super::tape::Var;
use super::value::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Standard Gumbel noise `-ln(-ln u)`, `u ~ U(0, 1)`.
pub fn gumbel_noise(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            // open interval keeps both logarithms finite
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Gumbel-Softmax relaxation of categorical sampling over each row of `logits`.
///
/// Soft sample: `softmax((log_softmax(logits) + g) / tau)`. With `hard`, the
/// forward value is the one-hot argmax of the soft sample while gradients
/// follow the soft sample (straight-through).
pub fn gumbel_softmax<'t>(logits: Var<'t>, tau: f64, hard: bool, rng: &mut Rng) -> Result<Var<'t>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    let noise = gumbel_noise(&logits.shape(), rng);
    let soft = gumbel_softmax_with_noise(logits, tau, noise);
    if !hard {
        return Ok(soft);
    }
    let cols = soft.cols();
    let hard_value = Tensor::one_hot(&soft.value().argmax_rows(), cols);
    Ok(soft.straight_through(hard_value))
}

/// The soft path with caller-supplied noise (useful for gradient checks).
pub fn gumbel_softmax_with_noise<'t>(logits: Var<'t>, tau: f64, noise: Tensor) -> Var<'t> {
    let g = logits.tape().constant(noise);
    logits.log_softmax_rows().add(g).scale(1.0 / tau).softmax_rows()
}
