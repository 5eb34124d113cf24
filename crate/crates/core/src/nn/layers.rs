//! Layer kernels. Every function works on plain tensors so each layer can be
//! tested and gradient-checked in isolation.

use super::{NnError, Result, Scalar, Shape3, Tensor3};

/// Output size and low-side padding for one spatial axis.
///
/// Same padding yields `ceil(input / stride)` cells. Total padding is split
/// evenly with any odd cell on the high side. Valid padding yields
/// `(input - kernel) / stride + 1`.
pub fn same_padding(input: usize, kernel: usize, stride: usize, same: bool) -> Result<(usize, usize)> {
    if kernel == 0 || stride == 0 {
        return Err(NnError::Shape(format!("kernel {kernel} / stride {stride} must be >= 1")));
    }
    if same {
        let out = input.div_ceil(stride);
        let total = ((out - 1) * stride + kernel).saturating_sub(input);
        Ok((out, total / 2))
    } else {
        if input < kernel {
            return Err(NnError::Shape(format!("input {input} smaller than kernel {kernel}")));
        }
        Ok(((input - kernel) / stride + 1, 0))
    }
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Eight independent accumulators so the loop vectorizes; the summation
    // order is fixed, so results stay deterministic.
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (ca, cb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Maps an output coordinate plus kernel offset back to an input index.
#[inline]
fn source(out: usize, stride: usize, offset: usize, pad: usize, limit: usize) -> Option<usize> {
    let pos = (out * stride + offset).checked_sub(pad)?;
    (pos < limit).then_some(pos)
}

struct ConvGeometry {
    kernel: usize,
    stride: usize,
    cin: usize,
    cout: usize,
    out: Shape3,
    pad_top: usize,
    pad_left: usize,
}

fn conv_geometry(
    input: Shape3,
    weight_len: usize,
    bias_len: usize,
    kernel: usize,
    stride: usize,
    same: bool,
) -> Result<ConvGeometry> {
    let cout = bias_len;
    if cout == 0 {
        return Err(NnError::Shape("conv layer has no output channels".into()));
    }
    if kernel == 0 || weight_len != kernel * kernel * input.channels * cout {
        return Err(NnError::Shape(format!(
            "conv kernel {kernel}x{kernel}x?x{cout} with {weight_len} weights does not match {} input channels",
            input.channels
        )));
    }
    let (oh, pad_top) = same_padding(input.height, kernel, stride, same)?;
    let (ow, pad_left) = same_padding(input.width, kernel, stride, same)?;
    Ok(ConvGeometry {
        kernel,
        stride,
        cin: input.channels,
        cout,
        out: Shape3::new(oh, ow, cout),
        pad_top,
        pad_left,
    })
}

/// Gathers every receptive field into a row of a `pixels x (k*k*cin)` matrix.
/// Padded taps stay zero.
fn im2col<T: Scalar>(input: &Tensor3<T>, g: &ConvGeometry) -> Vec<T> {
    let (h, w) = (input.height(), input.width());
    let src = input.data();
    let row_len = g.kernel * g.kernel * g.cin;
    let mut cols = vec![T::zero(); g.out.height * g.out.width * row_len];
    for oy in 0..g.out.height {
        for ox in 0..g.out.width {
            let row = &mut cols[(oy * g.out.width + ox) * row_len..][..row_len];
            for ky in 0..g.kernel {
                let Some(iy) = source(oy, g.stride, ky, g.pad_top, h) else { continue };
                for kx in 0..g.kernel {
                    let Some(ix) = source(ox, g.stride, kx, g.pad_left, w) else { continue };
                    let dst = (ky * g.kernel + kx) * g.cin;
                    row[dst..dst + g.cin].copy_from_slice(&src[(iy * w + ix) * g.cin..][..g.cin]);
                }
            }
        }
    }
    cols
}

/// Scatter-adds an im2col-shaped gradient back onto the input grid.
fn col2im<T: Scalar>(cols: &[T], input: Shape3, g: &ConvGeometry) -> Tensor3<T> {
    let (h, w) = (input.height, input.width);
    let row_len = g.kernel * g.kernel * g.cin;
    let mut out = Tensor3::zeros(input);
    let dst = out.data_mut();
    for oy in 0..g.out.height {
        for ox in 0..g.out.width {
            let row = &cols[(oy * g.out.width + ox) * row_len..][..row_len];
            for ky in 0..g.kernel {
                let Some(iy) = source(oy, g.stride, ky, g.pad_top, h) else { continue };
                for kx in 0..g.kernel {
                    let Some(ix) = source(ox, g.stride, kx, g.pad_left, w) else { continue };
                    let from = (ky * g.kernel + kx) * g.cin;
                    axpy(&mut dst[(iy * w + ix) * g.cin..][..g.cin], T::one(), &row[from..from + g.cin]);
                }
            }
        }
    }
    out
}

/// 2-D cross-correlation plus bias. `weight` is laid out `[ky][kx][cin][cout]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor3<T>,
    weight: &[T],
    bias: &[T],
    kernel: usize,
    stride: usize,
    same_padding: bool,
) -> Result<Tensor3<T>> {
    let g = conv_geometry(input.shape(), weight.len(), bias.len(), kernel, stride, same_padding)?;
    let cols = im2col(input, &g);
    let pixels = g.out.height * g.out.width;
    let row_len = g.kernel * g.kernel * g.cin;
    let mut out = Tensor3::zeros(g.out);
    let dst = out.data_mut();
    for cell in dst.chunks_exact_mut(g.cout) {
        cell.copy_from_slice(bias);
    }
    T::gemm(pixels, row_len, g.cout, &cols, row_len, 1, weight, g.cout, 1, T::one(), dst);
    Ok(out)
}

pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor3<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor3<T>,
    weight: &[T],
    kernel: usize,
    stride: usize,
    same_padding: bool,
    grad_out: &Tensor3<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let cout = grad_out.channels();
    let g = conv_geometry(input.shape(), weight.len(), cout, kernel, stride, same_padding)?;
    if grad_out.shape() != g.out {
        return Err(NnError::Shape(format!(
            "conv output gradient {} does not match output {}",
            grad_out.shape(),
            g.out
        )));
    }
    let pixels = g.out.height * g.out.width;
    let row_len = g.kernel * g.kernel * g.cin;
    let cols = im2col(input, &g);
    let go = grad_out.data();

    let mut gb = vec![T::zero(); cout];
    for cell in go.chunks_exact(cout) {
        axpy(&mut gb, T::one(), cell);
    }
    // dW = cols^T * dY
    let mut gw = vec![T::zero(); weight.len()];
    T::gemm(row_len, pixels, cout, &cols, 1, row_len, go, cout, 1, T::zero(), &mut gw);
    let gin = need_input_grad.then(|| {
        // dcols = dY * W^T
        let mut gcols = vec![T::zero(); pixels * row_len];
        T::gemm(pixels, cout, row_len, go, cout, 1, weight, 1, cout, T::zero(), &mut gcols);
        col2im(&gcols, input.shape(), &g)
    });
    Ok(ConvGrads { weight: gw, bias: gb, input: gin })
}

pub struct PoolOutput<T> {
    pub output: Tensor3<T>,
    /// Flat input index of the winning cell for every output value.
    pub argmax: Vec<usize>,
}

/// Max pooling per channel. Padded cells never win; ties go to the lowest
/// (row, col) in the window.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor3<T>,
    kernel: usize,
    stride: usize,
    same_padding: bool,
) -> Result<PoolOutput<T>> {
    let (h, w, c) = (input.height(), input.width(), input.channels());
    let (oh, pad_top) = self::same_padding(h, kernel, stride, same_padding)?;
    let (ow, pad_left) = self::same_padding(w, kernel, stride, same_padding)?;
    let mut output = Tensor3::zeros(Shape3::new(oh, ow, c));
    let mut argmax = vec![0usize; oh * ow * c];
    let src = input.data();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best: Option<(T, usize)> = None;
                for ky in 0..kernel {
                    let Some(iy) = source(oy, stride, ky, pad_top, h) else { continue };
                    for kx in 0..kernel {
                        let Some(ix) = source(ox, stride, kx, pad_left, w) else { continue };
                        let idx = (iy * w + ix) * c + ch;
                        match best {
                            Some((v, _)) if src[idx] <= v => {}
                            _ => best = Some((src[idx], idx)),
                        }
                    }
                }
                let (v, idx) = best.ok_or_else(|| {
                    NnError::Shape(format!("pool window at ({oy}, {ox}) covers only padding"))
                })?;
                let o = (oy * ow + ox) * c + ch;
                output.data_mut()[o] = v;
                argmax[o] = idx;
            }
        }
    }
    Ok(PoolOutput { output, argmax })
}

pub fn maxpool_backward<T: Scalar>(input_shape: Shape3, argmax: &[usize], grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
    if argmax.len() != grad_out.data().len() {
        return Err(NnError::Shape("pool gradient does not match recorded argmax".into()));
    }
    let mut gin = Tensor3::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gin.data_mut()[idx] += g;
    }
    Ok(gin)
}

pub fn relu<T: Scalar>(input: &Tensor3<T>) -> Tensor3<T> {
    let data = input.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor3::from_vec(input.shape(), data).expect("same shape")
}

pub fn relu_backward<T: Scalar>(input: &Tensor3<T>, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
    if input.shape() != grad_out.shape() {
        return Err(NnError::Shape(format!(
            "relu gradient {} does not match input {}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor3::from_vec(input.shape(), data)
}

/// `weights` is row-major `[out][in]`.
pub fn dense_forward<T: Scalar>(input: &[T], weights: &[T], bias: &[T]) -> Result<Vec<T>> {
    let n_out = bias.len();
    if n_out == 0 || weights.len() != n_out * input.len() {
        return Err(NnError::Shape(format!(
            "dense weights ({} values) do not match {} inputs x {} outputs",
            weights.len(),
            input.len(),
            n_out
        )));
    }
    Ok(weights
        .chunks_exact(input.len())
        .zip(bias)
        .map(|(row, &b)| b + dot(row, input))
        .collect())
}

pub struct DenseGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub input: Vec<T>,
}

pub fn dense_backward<T: Scalar>(input: &[T], weights: &[T], grad_out: &[T]) -> Result<DenseGrads<T>> {
    let n_in = input.len();
    if weights.len() != grad_out.len() * n_in {
        return Err(NnError::Shape(format!(
            "dense weights ({} values) do not match {} inputs x {} outputs",
            weights.len(),
            n_in,
            grad_out.len()
        )));
    }
    let mut gw = vec![T::zero(); weights.len()];
    let mut gin = vec![T::zero(); n_in];
    for ((row, grow), &g) in weights.chunks_exact(n_in).zip(gw.chunks_exact_mut(n_in)).zip(grad_out) {
        if g == T::zero() {
            continue;
        }
        axpy(grow, g, input);
        axpy(&mut gin, g, row);
    }
    Ok(DenseGrads { weight: gw, bias: grad_out.to_vec(), input: gin })
}
