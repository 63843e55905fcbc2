//! Raw NHWC kernels behind the conv, pooling and normalization ops.

use serde::{Deserialize, Serialize};

use super::scalar::gemm;
use super::Scalar;
use crate::error::{Error, Result};

/// Convolution geometry. `pad_w` pads the width axis, `pad_h` the height
/// axis; weights are laid out `out_depth × F × F × in_depth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filter: usize,
    pub stride: usize,
    pub pad_w: usize,
    pub pad_h: usize,
    pub in_depth: usize,
    pub out_depth: usize,
}

impl ConvSpec {
    /// `F×F` filter, stride `S`, symmetric zero padding `P` on both axes.
    pub fn square(filter: usize, stride: usize, pad: usize, in_depth: usize, out_depth: usize) -> Self {
        Self { filter, stride, pad_w: pad, pad_h: pad, in_depth, out_depth }
    }

    /// `(H₂, W₂)` for an `H₁×W₁` input; errors unless both are positive integers.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let h2 = window_extent("conv2d", h, self.filter, self.stride, self.pad_h)?;
        let w2 = window_extent("conv2d", w, self.filter, self.stride, self.pad_w)?;
        Ok((h2, w2))
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_depth, self.filter, self.filter, self.in_depth]
    }

    fn patch_len(&self) -> usize {
        self.filter * self.filter * self.in_depth
    }

    fn is_pointwise(&self) -> bool {
        self.filter == 1 && self.stride == 1 && self.pad_w == 0 && self.pad_h == 0
    }
}

/// `(W₁ − F + 2P)/S + 1`, rejecting non-integer or non-positive results.
pub fn window_extent(op: &'static str, input: usize, filter: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || filter == 0 {
        return Err(Error::shape(op, "filter and stride must be >= 1"));
    }
    let span = input + 2 * pad;
    if span < filter {
        return Err(Error::shape(op, format!("filter {filter} exceeds padded extent {span}")));
    }
    if !(span - filter).is_multiple_of(stride) {
        return Err(Error::shape(
            op,
            format!("({input} - {filter} + 2*{pad}) / {stride} + 1 is not an integer"),
        ));
    }
    Ok((span - filter) / stride + 1)
}

fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, spec: &ConvSpec, h2: usize, w2: usize, cols: &mut [T]) {
    let d1 = spec.in_depth;
    let f = spec.filter;
    let k = spec.patch_len();
    for oy in 0..h2 {
        for ox in 0..w2 {
            let row = &mut cols[(oy * w2 + ox) * k..(oy * w2 + ox + 1) * k];
            for ky in 0..f {
                let iy = (oy * spec.stride + ky) as isize - spec.pad_h as isize;
                for kx in 0..f {
                    let ix = (ox * spec.stride + kx) as isize - spec.pad_w as isize;
                    let dst = &mut row[(ky * f + kx) * d1..(ky * f + kx + 1) * d1];
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        dst.fill(T::zero());
                    } else {
                        let src = (iy as usize * w + ix as usize) * d1;
                        dst.copy_from_slice(&x[src..src + d1]);
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], h: usize, w: usize, spec: &ConvSpec, h2: usize, w2: usize, gx: &mut [T]) {
    let d1 = spec.in_depth;
    let f = spec.filter;
    let k = spec.patch_len();
    for oy in 0..h2 {
        for ox in 0..w2 {
            let row = &cols[(oy * w2 + ox) * k..(oy * w2 + ox + 1) * k];
            for ky in 0..f {
                let iy = (oy * spec.stride + ky) as isize - spec.pad_h as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..f {
                    let ix = (ox * spec.stride + kx) as isize - spec.pad_w as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = &row[(ky * f + kx) * d1..(ky * f + kx + 1) * d1];
                    let dst = (iy as usize * w + ix as usize) * d1;
                    for (g, &s) in gx[dst..dst + d1].iter_mut().zip(src) {
                        *g += s;
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub h2: usize,
    pub w2: usize,
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], dims: &ConvDims, spec: &ConvSpec, weight: &[T], bias: &[T]) -> Vec<T> {
    let (h, w, h2, w2) = (dims.h, dims.w, dims.h2, dims.w2);
    let d2 = spec.out_depth;
    let k = spec.patch_len();
    let in_img = h * w * spec.in_depth;
    let out_img = h2 * w2 * d2;
    let mut out = vec![T::zero(); dims.n * out_img];
    let mut cols = if spec.is_pointwise() { Vec::new() } else { vec![T::zero(); h2 * w2 * k] };
    for i in 0..dims.n {
        let xi = &x[i * in_img..(i + 1) * in_img];
        let yi = &mut out[i * out_img..(i + 1) * out_img];
        for row in yi.chunks_exact_mut(d2) {
            row.copy_from_slice(bias);
        }
        let patches: &[T] = if spec.is_pointwise() {
            xi
        } else {
            im2col(xi, h, w, spec, h2, w2, &mut cols);
            &cols
        };
        gemm(h2 * w2, k, d2, patches, false, weight, true, T::one(), yi);
    }
    out
}

/// Returns `(grad_input, grad_weight, grad_bias)`; `grad_input` only when asked.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    dims: &ConvDims,
    spec: &ConvSpec,
    weight: &[T],
    gy: &[T],
    need_gx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (h, w, h2, w2) = (dims.h, dims.w, dims.h2, dims.w2);
    let d2 = spec.out_depth;
    let k = spec.patch_len();
    let in_img = h * w * spec.in_depth;
    let out_img = h2 * w2 * d2;
    let mut gw = vec![T::zero(); d2 * k];
    let mut gb = vec![T::zero(); d2];
    let mut gx = if need_gx { Some(vec![T::zero(); x.len()]) } else { None };
    let mut cols = if spec.is_pointwise() { Vec::new() } else { vec![T::zero(); h2 * w2 * k] };
    let mut gcols = if need_gx && !spec.is_pointwise() { vec![T::zero(); h2 * w2 * k] } else { Vec::new() };
    for i in 0..dims.n {
        let xi = &x[i * in_img..(i + 1) * in_img];
        let gyi = &gy[i * out_img..(i + 1) * out_img];
        for row in gyi.chunks_exact(d2) {
            for (b, &g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
        let patches: &[T] = if spec.is_pointwise() {
            xi
        } else {
            im2col(xi, h, w, spec, h2, w2, &mut cols);
            &cols
        };
        // gW (d2×k) += gYᵀ (d2×hw) · cols (hw×k)
        gemm(d2, h2 * w2, k, gyi, true, patches, false, T::one(), &mut gw);
        if let Some(gx) = gx.as_mut() {
            let gxi = &mut gx[i * in_img..(i + 1) * in_img];
            if spec.is_pointwise() {
                gemm(h2 * w2, d2, k, gyi, false, weight, false, T::one(), gxi);
            } else {
                gemm(h2 * w2, d2, k, gyi, false, weight, false, T::zero(), &mut gcols);
                col2im(&gcols, h, w, spec, h2, w2, gxi);
            }
        }
    }
    (gx, gw, gb)
}

/// Max pooling; returns outputs and, per output, the flat input index that
/// won (first in scan order on ties, which is the lowest flat index).
pub(crate) fn maxpool_forward<T: Scalar>(x: &[T], shape: &[usize], f: usize, s: usize) -> Result<(Vec<usize>, Vec<T>, Vec<usize>)> {
    let [n, h, w, d] = nhwc(shape, "maxpool2d")?;
    let h2 = window_extent("maxpool2d", h, f, s, 0)?;
    let w2 = window_extent("maxpool2d", w, f, s, 0)?;
    let mut out = Vec::with_capacity(n * h2 * w2 * d);
    let mut arg = Vec::with_capacity(n * h2 * w2 * d);
    for i in 0..n {
        for oy in 0..h2 {
            for ox in 0..w2 {
                for c in 0..d {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for ky in 0..f {
                        for kx in 0..f {
                            let idx = ((i * h + oy * s + ky) * w + ox * s + kx) * d + c;
                            if best == usize::MAX || x[idx] > best_v {
                                best = idx;
                                best_v = x[idx];
                            }
                        }
                    }
                    out.push(best_v);
                    arg.push(best);
                }
            }
        }
    }
    Ok((vec![n, h2, w2, d], out, arg))
}

pub(crate) fn avgpool_forward<T: Scalar>(x: &[T], shape: &[usize], f: usize, s: usize) -> Result<(Vec<usize>, Vec<T>)> {
    let [n, h, w, d] = nhwc(shape, "avgpool2d")?;
    let h2 = window_extent("avgpool2d", h, f, s, 0)?;
    let w2 = window_extent("avgpool2d", w, f, s, 0)?;
    let inv = T::one() / T::of((f * f) as f64);
    let mut out = vec![T::zero(); n * h2 * w2 * d];
    for i in 0..n {
        for oy in 0..h2 {
            for ox in 0..w2 {
                let o = ((i * h2 + oy) * w2 + ox) * d;
                for ky in 0..f {
                    for kx in 0..f {
                        let idx = ((i * h + oy * s + ky) * w + ox * s + kx) * d;
                        for c in 0..d {
                            out[o + c] += x[idx + c];
                        }
                    }
                }
                for v in &mut out[o..o + d] {
                    *v *= inv;
                }
            }
        }
    }
    Ok((vec![n, h2, w2, d], out))
}

pub(crate) fn avgpool_backward<T: Scalar>(gy: &[T], in_shape: &[usize], f: usize, s: usize) -> Vec<T> {
    let (n, h, w, d) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let h2 = (h - f) / s + 1;
    let w2 = (w - f) / s + 1;
    let inv = T::one() / T::of((f * f) as f64);
    let mut gx = vec![T::zero(); n * h * w * d];
    for i in 0..n {
        for oy in 0..h2 {
            for ox in 0..w2 {
                let o = ((i * h2 + oy) * w2 + ox) * d;
                for ky in 0..f {
                    for kx in 0..f {
                        let idx = ((i * h + oy * s + ky) * w + ox * s + kx) * d;
                        for c in 0..d {
                            gx[idx + c] += gy[o + c] * inv;
                        }
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn nhwc(shape: &[usize], op: &'static str) -> Result<[usize; 4]> {
    match shape {
        &[n, h, w, d] => Ok([n, h, w, d]),
        _ => Err(Error::shape(op, format!("expected N×H×W×C input, got {shape:?}"))),
    }
}

/// Per-channel (last axis) mean and population variance.
pub(crate) fn channel_moments<T: Scalar>(x: &[T], channels: usize) -> (Vec<T>, Vec<T>) {
    let m = x.len() / channels;
    let inv = T::one() / T::of(m as f64);
    let mut mean = vec![T::zero(); channels];
    for row in x.chunks_exact(channels) {
        for (a, &v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a *= inv;
    }
    let mut var = vec![T::zero(); channels];
    for row in x.chunks_exact(channels) {
        for c in 0..channels {
            let d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v *= inv;
    }
    (mean, var)
}
