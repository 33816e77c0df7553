//! Slice-level kernels behind the tape ops: GEMM, im2col/col2im and the
//! convolution forward/backward passes built on them.

use super::Real;

/// Output extent of a strided cross-correlation.
pub fn conv_out_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output extent of a transposed convolution.
pub fn conv_transpose_out_extent(
    len: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<usize> {
    if stride == 0 || len == 0 {
        return None;
    }
    ((len - 1) * stride + kernel).checked_sub(2 * pad).filter(|&n| n > 0)
}

/// `C[m×n] = alpha·op(A)·op(B) + beta·C` on contiguous row-major buffers.
///
/// `A` is stored `m×k` (or `k×m` when `trans_a`), `B` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: extents checked above; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of one strided square-kernel correlation between an "image" grid
/// `(h, w)` and its output grid `(oh, ow)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source index in the image for output `(oy, ox)` and kernel tap
    /// `(ky, kx)`, or `None` when it falls in the padding.
    #[inline]
    fn source(&self, oy: usize, ky: usize, ox: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Unfold a `[channels, h, w]` image into `[channels·k·k, oh·ow]`.
pub(crate) fn im2col<T: Real>(image: &[T], g: &Geometry) -> Vec<T> {
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((y, x)) = g.source(oy, ky, ox, kx) {
                            dst[oy * g.ow + ox] = plane[y * g.w + x];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add `[channels·k·k, oh·ow]` columns back
/// into a zeroed `[channels, h, w]` image.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &Geometry) -> Vec<T> {
    let mut image = vec![T::zero(); g.channels * g.h * g.w];
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((y, x)) = g.source(oy, ky, ox, kx) {
                            plane[y * g.w + x] = plane[y * g.w + x] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    image
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v = *v + b;
        }
    }
}

fn row_sums<T: Real>(grad: &[T], plane: usize) -> Vec<T> {
    grad.chunks(plane).map(|c| c.iter().copied().sum()).collect()
}

/// Cross-correlation forward pass. Returns the output and the unfolded input
/// for reuse in the backward pass. `g` describes the input image.
pub(crate) fn conv2d_forward<T: Real>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    out_channels: usize,
    g: &Geometry,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(input, g);
    let mut out = vec![T::zero(); out_channels * g.cols()];
    gemm(
        false,
        false,
        out_channels,
        g.cols(),
        g.rows(),
        T::one(),
        weight,
        &cols,
        T::zero(),
        &mut out,
    );
    add_bias(&mut out, bias, g.cols());
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    grad_out: &[T],
    cols: &[T],
    weight: &[T],
    out_channels: usize,
    g: &Geometry,
) -> ConvGrads<T> {
    let mut dweight = vec![T::zero(); out_channels * g.rows()];
    gemm(
        false,
        true,
        out_channels,
        g.rows(),
        g.cols(),
        T::one(),
        grad_out,
        cols,
        T::zero(),
        &mut dweight,
    );
    let mut dcols = vec![T::zero(); g.rows() * g.cols()];
    gemm(
        true,
        false,
        g.rows(),
        g.cols(),
        out_channels,
        T::one(),
        weight,
        grad_out,
        T::zero(),
        &mut dcols,
    );
    ConvGrads {
        input: col2im(&dcols, g),
        weight: dweight,
        bias: row_sums(grad_out, g.cols()),
    }
}

/// Transposed convolution forward pass. Here `g` describes the *output*
/// image; the input lives on the `(oh, ow)` grid with `in_channels` planes.
/// The weight is `[in_channels, out_channels, k, k]`.
pub(crate) fn conv_transpose_forward<T: Real>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    in_channels: usize,
    g: &Geometry,
) -> Vec<T> {
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    gemm(
        true,
        false,
        g.rows(),
        g.cols(),
        in_channels,
        T::one(),
        weight,
        input,
        T::zero(),
        &mut cols,
    );
    let mut out = col2im(&cols, g);
    add_bias(&mut out, bias, g.h * g.w);
    out
}

pub(crate) fn conv_transpose_backward<T: Real>(
    grad_out: &[T],
    input: &[T],
    weight: &[T],
    in_channels: usize,
    g: &Geometry,
) -> ConvGrads<T> {
    let gcols = im2col(grad_out, g);
    let mut dinput = vec![T::zero(); in_channels * g.cols()];
    gemm(
        false,
        false,
        in_channels,
        g.cols(),
        g.rows(),
        T::one(),
        weight,
        &gcols,
        T::zero(),
        &mut dinput,
    );
    let mut dweight = vec![T::zero(); in_channels * g.rows()];
    gemm(
        false,
        true,
        in_channels,
        g.rows(),
        g.cols(),
        T::one(),
        input,
        &gcols,
        T::zero(),
        &mut dweight,
    );
    ConvGrads {
        input: dinput,
        weight: dweight,
        bias: row_sums(grad_out, g.h * g.w),
    }
}

/// Per-position channel mixing: `out[:, p] = W · in[:, p] + b`.
pub(crate) fn channel_linear_forward<T: Real>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    in_channels: usize,
    out_channels: usize,
    plane: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); out_channels * plane];
    gemm(
        false,
        false,
        out_channels,
        plane,
        in_channels,
        T::one(),
        weight,
        input,
        T::zero(),
        &mut out,
    );
    add_bias(&mut out, bias, plane);
    out
}

pub(crate) fn channel_linear_backward<T: Real>(
    grad_out: &[T],
    input: &[T],
    weight: &[T],
    in_channels: usize,
    out_channels: usize,
    plane: usize,
) -> ConvGrads<T> {
    let mut dweight = vec![T::zero(); out_channels * in_channels];
    gemm(
        false,
        true,
        out_channels,
        in_channels,
        plane,
        T::one(),
        grad_out,
        input,
        T::zero(),
        &mut dweight,
    );
    let mut dinput = vec![T::zero(); in_channels * plane];
    gemm(
        true,
        false,
        in_channels,
        plane,
        out_channels,
        T::one(),
        weight,
        grad_out,
        T::zero(),
        &mut dinput,
    );
    ConvGrads {
        input: dinput,
        weight: dweight,
        bias: row_sums(grad_out, plane),
    }
}
