use super::{mismatch, NnError, Tensor};
use crate::real::Real;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn cols_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

fn geometry<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, Geometry), NnError> {
    let (n, c_in, h, w) = input.dims4()?;
    let (c_out, wc_in, kh, kw) = weight.dims4()?;
    if wc_in != c_in {
        return Err(mismatch(format!(
            "weight expects {wc_in} input channels, input has {c_in}"
        )));
    }
    if kh != kw {
        return Err(mismatch(format!("non-square kernel {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(mismatch("stride must be positive"));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(mismatch(format!(
            "kernel {kh} larger than padded input {h}x{w} (pad {pad})"
        )));
    }
    let h_out = (h + 2 * pad - kh) / stride + 1;
    let w_out = (w + 2 * pad - kw) / stride + 1;
    Ok((
        n,
        c_out,
        Geometry {
            c_in,
            h,
            w,
            k: kh,
            stride,
            pad,
            h_out,
            w_out,
        },
    ))
}

/// Output-column range `[lo, hi)` whose input column `ox * stride + off - pad`
/// falls inside `[0, w)`.
fn valid_cols(g: &Geometry, off: usize) -> (usize, usize) {
    let (s, p) = (g.stride, g.pad);
    let lo = if off >= p { 0 } else { (p - off).div_ceil(s) };
    // ox*s + off - p <= w - 1  <=>  ox <= (w - 1 + p - off) / s
    let hi = if g.w + p > off {
        ((g.w - 1 + p - off) / s + 1).min(g.w_out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Real>(g: &Geometry, img: &[T], cols: &mut [T]) {
    let p_len = g.positions();
    for c in 0..g.c_in {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p_len..(row + 1) * p_len];
                let (lo, hi) = valid_cols(g, kj);
                for oy in 0..g.h_out {
                    let out_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if g.stride == 1 {
                        let start = lo + kj - g.pad;
                        out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            out_row[ox] = src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &Geometry, cols: &[T], img: &mut [T]) {
    let p_len = g.positions();
    img.fill(T::zero());
    for c in 0..g.c_in {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * p_len..(row + 1) * p_len];
                let (lo, hi) = valid_cols(g, kj);
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let in_row = &src[oy * g.w_out..(oy + 1) * g.w_out];
                    for ox in lo..hi {
                        dst[ox * g.stride + kj - g.pad] += in_row[ox];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of `(N, C_in, H, W)` input with a
/// `(C_out, C_in, k, k)` kernel, plus a per-output-channel bias.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, c_out, g) = geometry(input, weight, stride, pad)?;
    if bias.len() != c_out {
        return Err(mismatch(format!(
            "bias has {} values for {c_out} output channels",
            bias.len()
        )));
    }
    let p_len = g.positions();
    let mut out = Tensor::zeros(&[n, c_out, g.h_out, g.w_out]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.cols_rows() * p_len]
    };
    for b in 0..n {
        let o = out.item_mut(b);
        for (co, chunk) in o.chunks_mut(p_len).enumerate() {
            chunk.fill(bias.data()[co]);
        }
        let src = if g.is_pointwise() {
            input.item(b)
        } else {
            im2col(&g, input.item(b), &mut cols);
            &cols
        };
        T::gemm(
            c_out,
            g.cols_rows(),
            p_len,
            weight.data(),
            false,
            src,
            false,
            T::one(),
            o,
        );
    }
    out.debug_check_finite("conv2d");
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of a scalar loss through [`conv2d`], given `dL/d output`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<Conv2dGrads<T>, NnError> {
    let (n, c_out, g) = geometry(input, weight, stride, pad)?;
    if grad_out.shape() != [n, c_out, g.h_out, g.w_out] {
        return Err(mismatch(format!(
            "grad_out {:?} does not match conv output {:?}",
            grad_out.shape(),
            [n, c_out, g.h_out, g.w_out]
        )));
    }
    let p_len = g.positions();
    let ckk = g.cols_rows();
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb_acc = vec![0.0f64; c_out];
    let mut gin = need_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![T::zero(); ckk * p_len];
    let mut gcols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * p_len]
    };
    for b in 0..n {
        let go = grad_out.item(b);
        for (co, chunk) in go.chunks(p_len).enumerate() {
            gb_acc[co] += chunk.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let src: &[T] = if g.is_pointwise() {
            input.item(b)
        } else {
            im2col(&g, input.item(b), &mut cols);
            &cols
        };
        T::gemm(c_out, p_len, ckk, go, false, src, true, T::one(), gw.data_mut());
        if let Some(gin) = gin.as_mut() {
            if g.is_pointwise() {
                T::gemm(
                    ckk,
                    c_out,
                    p_len,
                    weight.data(),
                    true,
                    go,
                    false,
                    T::zero(),
                    gin.item_mut(b),
                );
            } else {
                T::gemm(
                    ckk,
                    c_out,
                    p_len,
                    weight.data(),
                    true,
                    go,
                    false,
                    T::zero(),
                    &mut gcols,
                );
                col2im(&g, &gcols, gin.item_mut(b));
            }
        }
    }
    let bias = Tensor::from_vec(&[c_out], gb_acc.into_iter().map(T::lit).collect())?;
    Ok(Conv2dGrads {
        input: gin,
        weight: gw,
        bias,
    })
}
