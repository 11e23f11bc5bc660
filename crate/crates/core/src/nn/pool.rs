use super::{mismatch, NnError, Tensor};
use crate::real::Real;

/// Flat input index of the winning element for every pooled output.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Odd spatial sizes are handled as if the
/// last row/column were replicated, giving `ceil(H/2) x ceil(W/2)` outputs.
/// Ties go to the first element in row-major window order.
pub fn maxpool2d<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let rows = [2 * oy, (2 * oy + 1).min(h - 1)];
            for ox in 0..wo {
                let cols = [2 * ox, (2 * ox + 1).min(w - 1)];
                let mut best = base + rows[0] * w + cols[0];
                for &y in &rows {
                    for &x in &cols {
                        let idx = base + y * w + x;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, ho, wo], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each output gradient to the input element that won its window.
pub fn maxpool2d_backward<T: Real>(
    indices: &PoolIndices,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if grad_out.len() != indices.argmax.len() {
        return Err(mismatch(format!(
            "pool grad has {} values, forward produced {}",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in indices.argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}
