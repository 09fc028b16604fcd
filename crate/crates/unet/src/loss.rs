//! Mean absolute error between reconstructed and target image batches.

use bcs_core::{Error, Result};

use crate::tensor::Tensor;

fn check(output: &Tensor, target: &Tensor) -> Result<()> {
    if !output.same_shape(target) || output.data.is_empty() {
        return Err(Error::Shape(format!(
            "loss needs matching non-empty batches, got {:?} and {:?}",
            output.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// `(1/K) Σ_k (1/N) Σ_i |x̂_i − x_i|` over a batch of `K` images of `N` pixels.
pub fn mae(output: &Tensor, target: &Tensor) -> Result<f64> {
    check(output, target)?;
    let per_sample = output.sample_len() as f64;
    let total: f64 = (0..output.n)
        .map(|k| {
            output.sample(k).iter().zip(target.sample(k)).map(|(a, b)| (a - b).abs()).sum::<f64>() / per_sample
        })
        .sum();
    Ok(total / output.n as f64)
}

/// Loss value and its gradient with respect to `output`; the subgradient at
/// an exact match is taken as zero.
pub fn mae_with_grad(output: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let loss = mae(output, target)?;
    let scale = 1.0 / output.data.len() as f64;
    let mut grad = Tensor::zeros(output.n, output.c, output.h, output.w);
    for ((g, a), b) in grad.data.iter_mut().zip(&output.data).zip(&target.data) {
        let d = a - b;
        *g = if d > 0.0 {
            scale
        } else if d < 0.0 {
            -scale
        } else {
            0.0
        };
    }
    Ok((loss, grad))
}
