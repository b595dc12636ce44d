//! Strided 2-D convolution and its transpose, via im2col + GEMM.
//!
//! Convolution weights are `(out, in, k, k)`; transposed-convolution weights
//! are `(in, out, k, k)`, so the same tensor used by both is an adjoint pair.

use super::{NnError, Scalar, Tensor};

/// `floor((size + 2·pad − kernel) / stride) + 1`.
pub fn conv_output_size(
    size: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize, NnError> {
    if stride == 0 || size + 2 * pad < kernel {
        return Err(NnError::Shape(format!(
            "input {size} with pad {pad} is smaller than kernel {kernel}"
        )));
    }
    Ok((size + 2 * pad - kernel) / stride + 1)
}

/// `(size − 1)·stride − 2·pad + kernel`.
pub fn deconv_output_size(
    size: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize, NnError> {
    if size == 0 || stride == 0 || (size - 1) * stride + kernel <= 2 * pad {
        return Err(NnError::Shape(format!(
            "transposed convolution of {size} with kernel {kernel}, stride {stride}, pad {pad} is empty"
        )));
    }
    Ok((size - 1) * stride + kernel - 2 * pad)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source row/column for output position `o` and kernel tap `t`.
    #[inline]
    fn source(&self, o: usize, t: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

fn im2col<T: Scalar>(image: &[T], g: &Geometry, cols: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match g.source(oy, ky, g.height) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * g.width..(iy + 1) * g.width];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = g.source(ox, kx, g.width).map_or(T::zero(), |ix| src[ix]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of [`im2col`]'s layout back into an image.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, image: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst = &mut plane[iy * g.width..(iy + 1) * g.width];
                    for (ox, &v) in line.iter().enumerate() {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            dst[ix] = dst[ix] + v;
                        }
                    }
                }
            }
        }
    }
}

fn kernel_dims<T: Scalar>(weight: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    match weight.shape()[..] {
        [a, b, k, k2] if k == k2 => Ok((a, b, k)),
        _ => Err(NnError::Shape(format!(
            "expected square 4-D kernel, got {:?}",
            weight.shape()
        ))),
    }
}

fn check_bias<T: Scalar>(bias: &Tensor<T>, channels: usize) -> Result<(), NnError> {
    if bias.len() != channels {
        return Err(NnError::Shape(format!(
            "bias has {} elements, layer has {channels} output channels",
            bias.len()
        )));
    }
    Ok(())
}

fn conv_geometry<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, Geometry), NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (co, ci, k) = kernel_dims(weight)?;
    if ci != c {
        return Err(NnError::Shape(format!(
            "convolution expects {ci} input channels, got {c}"
        )));
    }
    let g = Geometry {
        channels: c,
        height: h,
        width: w,
        kernel: k,
        stride,
        pad,
        out_h: conv_output_size(h, k, stride, pad)?,
        out_w: conv_output_size(w, k, stride, pad)?,
    };
    Ok((n, co, g))
}

/// Cross-correlation of `input (N, C, H, W)` with `weight (Co, C, k, k)`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, co, g) = conv_geometry(input, weight, stride, pad)?;
    check_bias(bias, co)?;
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let in_per = g.channels * g.height * g.width;
    let mut out = Tensor::zeros(&[n, co, g.out_h, g.out_w]);
    let mut cols = vec![T::zero(); rows * cols_n];
    for b in 0..n {
        im2col(&input.data()[b * in_per..(b + 1) * in_per], &g, &mut cols);
        let dst = &mut out.data_mut()[b * co * cols_n..(b + 1) * co * cols_n];
        for (o, chunk) in dst.chunks_mut(cols_n).enumerate() {
            chunk.fill(bias.data()[o]);
        }
        T::gemm(false, false, co, rows, cols_n, T::one(), weight.data(), &cols, T::one(), dst);
    }
    Ok(out)
}

/// `(d_input, d_weight, d_bias)`
pub type Grads<T> = (Tensor<T>, Tensor<T>, Tensor<T>);

/// Gradients of [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Grads<T>, NnError> {
    let (n, co, g) = conv_geometry(input, weight, stride, pad)?;
    if grad_out.shape() != [n, co, g.out_h, g.out_w] {
        return Err(NnError::Shape(format!(
            "output gradient {:?} does not match forward output {:?}",
            grad_out.shape(),
            [n, co, g.out_h, g.out_w]
        )));
    }
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let in_per = g.channels * g.height * g.width;
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[co]);
    let mut cols = vec![T::zero(); rows * cols_n];
    let mut d_cols = vec![T::zero(); rows * cols_n];
    for b in 0..n {
        let go = &grad_out.data()[b * co * cols_n..(b + 1) * co * cols_n];
        for (o, chunk) in go.chunks(cols_n).enumerate() {
            let s: T = chunk.iter().copied().sum();
            d_bias.data_mut()[o] = d_bias.data()[o] + s;
        }
        im2col(&input.data()[b * in_per..(b + 1) * in_per], &g, &mut cols);
        T::gemm(false, true, co, cols_n, rows, T::one(), go, &cols, T::one(), d_weight.data_mut());
        T::gemm(true, false, rows, co, cols_n, T::one(), weight.data(), go, T::zero(), &mut d_cols);
        col2im(&d_cols, &g, &mut d_input.data_mut()[b * in_per..(b + 1) * in_per]);
    }
    Ok((d_input, d_weight, d_bias))
}

fn deconv_geometry<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, Geometry), NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (ci, co, k) = kernel_dims(weight)?;
    if ci != c {
        return Err(NnError::Shape(format!(
            "transposed convolution expects {ci} input channels, got {c}"
        )));
    }
    // geometry of the adjoint convolution: output image is the "input" side
    let g = Geometry {
        channels: co,
        height: deconv_output_size(h, k, stride, pad)?,
        width: deconv_output_size(w, k, stride, pad)?,
        kernel: k,
        stride,
        pad,
        out_h: h,
        out_w: w,
    };
    Ok((n, ci, g))
}

/// Transposed convolution of `input (N, Ci, H, W)` with `weight (Ci, Co, k, k)`.
pub fn deconv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, ci, g) = deconv_geometry(input, weight, stride, pad)?;
    check_bias(bias, g.channels)?;
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let out_plane = g.height * g.width;
    let out_per = g.channels * out_plane;
    let mut out = Tensor::zeros(&[n, g.channels, g.height, g.width]);
    let mut cols = vec![T::zero(); rows * cols_n];
    for b in 0..n {
        let x = &input.data()[b * ci * cols_n..(b + 1) * ci * cols_n];
        T::gemm(true, false, rows, ci, cols_n, T::one(), weight.data(), x, T::zero(), &mut cols);
        let dst = &mut out.data_mut()[b * out_per..(b + 1) * out_per];
        for (o, plane) in dst.chunks_mut(out_plane).enumerate() {
            plane.fill(bias.data()[o]);
        }
        col2im(&cols, &g, dst);
    }
    Ok(out)
}

/// Gradients `(d_input, d_weight, d_bias)` of [`deconv2d_forward`].
pub fn deconv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Grads<T>, NnError> {
    let (n, ci, g) = deconv_geometry(input, weight, stride, pad)?;
    if grad_out.shape() != [n, g.channels, g.height, g.width] {
        return Err(NnError::Shape(format!(
            "output gradient {:?} does not match forward output {:?}",
            grad_out.shape(),
            [n, g.channels, g.height, g.width]
        )));
    }
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let out_plane = g.height * g.width;
    let out_per = g.channels * out_plane;
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[g.channels]);
    let mut d_cols = vec![T::zero(); rows * cols_n];
    for b in 0..n {
        let go = &grad_out.data()[b * out_per..(b + 1) * out_per];
        for (o, plane) in go.chunks(out_plane).enumerate() {
            let s: T = plane.iter().copied().sum();
            d_bias.data_mut()[o] = d_bias.data()[o] + s;
        }
        im2col(go, &g, &mut d_cols);
        let x = &input.data()[b * ci * cols_n..(b + 1) * ci * cols_n];
        let dx = &mut d_input.data_mut()[b * ci * cols_n..(b + 1) * ci * cols_n];
        T::gemm(false, false, ci, rows, cols_n, T::one(), weight.data(), &d_cols, T::zero(), dx);
        T::gemm(false, true, ci, cols_n, rows, T::one(), x, &d_cols, T::one(), d_weight.data_mut());
    }
    Ok((d_input, d_weight, d_bias))
}
