//! Array kernels behind the graph ops.
//!
//! Convolutions are lowered to im2col plus a matrix product so the inner
//! loops run through `matrixmultiply`. Everything here is single-threaded
//! and evaluates in a fixed order, so results are bit-reproducible.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayD, ArrayView3, ArrayView4, Axis, Ix2, Ix4};

fn as4<'a>(x: &'a ArrayD<f64>, what: &str) -> ArrayView4<'a, f64> {
    x.view()
        .into_dimensionality::<Ix4>()
        .unwrap_or_else(|_| panic!("{what}: expected 4-d array, got shape {:?}", x.shape()))
}

/// Output spatial size of a valid convolution.
pub fn conv_out(input: usize, kernel: usize, stride: usize) -> usize {
    assert!(
        input >= kernel,
        "conv input {input} smaller than kernel {kernel}"
    );
    (input - kernel) / stride + 1
}

/// Gathers kh*kw patches of `x` into rows: `[oh*ow, c*kh*kw]`.
fn im2col(x: ArrayView3<'_, f64>, kernel: (usize, usize), stride: (usize, usize), out: (usize, usize)) -> Array2<f64> {
    let (c, _, _) = x.dim();
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (oh, ow) = out;
    let mut cols = Array2::<f64>::zeros((oh * ow, c * kh * kw));
    let xs = x.as_standard_layout();
    let xsl = xs.as_slice().expect("im2col: contiguous input");
    let (_, ih, iw) = xs.dim();
    for p in 0..oh {
        for q in 0..ow {
            let row = cols.row_mut(p * ow + q);
            let row = row.into_slice().expect("im2col: contiguous row");
            let mut k = 0;
            for ch in 0..c {
                for u in 0..kh {
                    let base = ch * ih * iw + (p * sh + u) * iw + q * sw;
                    row[k..k + kw].copy_from_slice(&xsl[base..base + kw]);
                    k += kw;
                }
            }
        }
    }
    cols
}

/// Valid 2-d convolution: `x [b,ci,ih,iw] * w [co,ci,kh,kw] -> [b,co,oh,ow]`.
pub fn conv2d(x: &ArrayD<f64>, w: &ArrayD<f64>, stride: (usize, usize)) -> ArrayD<f64> {
    let x4 = as4(x, "conv2d input");
    let w4 = as4(w, "conv2d weight");
    let (b, ci, ih, iw) = x4.dim();
    let (co, wci, kh, kw) = w4.dim();
    assert_eq!(ci, wci, "conv2d: channel mismatch");
    let oh = conv_out(ih, kh, stride.0);
    let ow = conv_out(iw, kw, stride.1);
    let ws = w4.as_standard_layout();
    let w2 = ws
        .view()
        .into_shape_with_order((co, ci * kh * kw))
        .expect("conv2d: weight reshape");
    let mut y = Array4::<f64>::zeros((b, co, oh, ow));
    for bi in 0..b {
        let cols = im2col(x4.index_axis(Axis(0), bi), (kh, kw), stride, (oh, ow));
        let mut y2 = y
            .index_axis_mut(Axis(0), bi)
            .into_shape_with_order((co, oh * ow))
            .expect("conv2d: output reshape");
        general_mat_mul(1.0, &w2, &cols.t(), 0.0, &mut y2);
    }
    y.into_dyn()
}

/// Transposed 2-d convolution (the adjoint of [`conv2d`] in its spatial map):
/// `z [b,zc,zh,zw] * w [zc,yc,kh,kw] -> [b,yc,oh,ow]` where
/// `y[b,c,p*sh+u,q*sw+v] += z[b,o,p,q] * w[o,c,u,v]`.
///
/// `out_hw` may exceed the minimal `(zh-1)*sh+kh` by at most `stride-1`;
/// the extra rows/columns stay zero.
pub fn conv_t2d(z: &ArrayD<f64>, w: &ArrayD<f64>, stride: (usize, usize), out_hw: (usize, usize)) -> ArrayD<f64> {
    let z4 = as4(z, "conv_t2d input");
    let w4 = as4(w, "conv_t2d weight");
    let (b, zc, zh, zw) = z4.dim();
    let (wzc, yc, kh, kw) = w4.dim();
    assert_eq!(zc, wzc, "conv_t2d: channel mismatch");
    let (oh, ow) = out_hw;
    let min_h = (zh - 1) * stride.0 + kh;
    let min_w = (zw - 1) * stride.1 + kw;
    assert!(
        oh >= min_h && oh < min_h + stride.0 && ow >= min_w && ow < min_w + stride.1,
        "conv_t2d: output {out_hw:?} incompatible with grid ({zh},{zw}) kernel ({kh},{kw}) stride {stride:?}"
    );
    let ws = w4.as_standard_layout();
    let w2 = ws
        .view()
        .into_shape_with_order((zc, yc * kh * kw))
        .expect("conv_t2d: weight reshape");
    let mut y = Array4::<f64>::zeros((b, yc, oh, ow));
    let mut cols = Array2::<f64>::zeros((zh * zw, yc * kh * kw));
    for bi in 0..b {
        let z2 = z4
            .index_axis(Axis(0), bi)
            .into_shape_with_order((zc, zh * zw))
            .expect("conv_t2d: input reshape");
        general_mat_mul(1.0, &z2.t(), &w2, 0.0, &mut cols);
        let mut yb = y.index_axis_mut(Axis(0), bi);
        let ysl = yb.as_slice_mut().expect("conv_t2d: contiguous output");
        for p in 0..zh {
            for q in 0..zw {
                let row = cols.row(p * zw + q);
                let row = row.to_slice().expect("conv_t2d: contiguous row");
                let mut k = 0;
                for c in 0..yc {
                    for u in 0..kh {
                        let base = c * oh * ow + (p * stride.0 + u) * ow + q * stride.1;
                        for v in 0..kw {
                            ysl[base + v] += row[k + v];
                        }
                        k += kw;
                    }
                }
            }
        }
    }
    y.into_dyn()
}

/// Weight gradient of [`conv2d`]: given input `x [b,ci,ih,iw]` and output
/// cotangent `g [b,co,oh,ow]`, returns `[co,ci,kh,kw]` with
/// `W[o,c,u,v] = sum_{b,p,q} g[b,o,p,q] * x[b,c,p*sh+u,q*sw+v]`.
pub fn conv_wgrad(x: &ArrayD<f64>, g: &ArrayD<f64>, stride: (usize, usize), kernel: (usize, usize)) -> ArrayD<f64> {
    let x4 = as4(x, "conv_wgrad input");
    let g4 = as4(g, "conv_wgrad cotangent");
    let (b, ci, ih, iw) = x4.dim();
    let (gb, co, oh, ow) = g4.dim();
    assert_eq!(b, gb, "conv_wgrad: batch mismatch");
    let (kh, kw) = kernel;
    assert_eq!(
        (oh, ow),
        (conv_out(ih, kh, stride.0), conv_out(iw, kw, stride.1)),
        "conv_wgrad: grid mismatch"
    );
    let mut acc = Array2::<f64>::zeros((co, ci * kh * kw));
    for bi in 0..b {
        let cols = im2col(x4.index_axis(Axis(0), bi), kernel, stride, (oh, ow));
        let g2 = g4
            .index_axis(Axis(0), bi)
            .into_shape_with_order((co, oh * ow))
            .expect("conv_wgrad: cotangent reshape");
        general_mat_mul(1.0, &g2, &cols, 1.0, &mut acc);
    }
    acc.into_shape_with_order((co, ci, kh, kw))
        .expect("conv_wgrad: output reshape")
        .into_dyn()
}

/// 2x2 max-pooling with stride 2. Returns the pooled grid and, per output
/// cell, the linear index of the winning element inside its input plane.
/// Ties resolve to the first element in row-major window order.
pub fn max_pool2(x: &ArrayD<f64>) -> (ArrayD<f64>, Vec<u32>) {
    let x4 = as4(x, "max_pool2 input");
    let (b, c, ih, iw) = x4.dim();
    assert!(
        ih % 2 == 0 && iw % 2 == 0,
        "max_pool2: odd input grid ({ih},{iw})"
    );
    let (oh, ow) = (ih / 2, iw / 2);
    let mut y = Array4::<f64>::zeros((b, c, oh, ow));
    let mut idx = vec![0u32; b * c * oh * ow];
    let mut flat = 0;
    for bi in 0..b {
        for ch in 0..c {
            let plane = x4.index_axis(Axis(0), bi);
            let plane = plane.index_axis(Axis(0), ch);
            for p in 0..oh {
                for q in 0..ow {
                    let mut best = plane[(2 * p, 2 * q)];
                    let mut at = (2 * p) * iw + 2 * q;
                    for (du, dv) in [(0, 1), (1, 0), (1, 1)] {
                        let v = plane[(2 * p + du, 2 * q + dv)];
                        if v > best {
                            best = v;
                            at = (2 * p + du) * iw + (2 * q + dv);
                        }
                    }
                    y[(bi, ch, p, q)] = best;
                    idx[flat] = at as u32;
                    flat += 1;
                }
            }
        }
    }
    (y.into_dyn(), idx)
}

/// Adjoint of [`max_pool2`]: scatters `g [b,c,oh,ow]` back to the input grid.
pub fn max_unpool2(g: &ArrayD<f64>, idx: &[u32], in_hw: (usize, usize)) -> ArrayD<f64> {
    let g4 = as4(g, "max_unpool2 input");
    let (b, c, oh, ow) = g4.dim();
    let (ih, iw) = in_hw;
    let mut y = Array4::<f64>::zeros((b, c, ih, iw));
    let ysl = y.as_slice_mut().expect("max_unpool2: contiguous output");
    let mut flat = 0;
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * ih * iw;
            for p in 0..oh {
                for q in 0..ow {
                    ysl[base + idx[flat] as usize] += g4[(bi, ch, p, q)];
                    flat += 1;
                }
            }
        }
    }
    y.into_dyn()
}

/// Adjoint of [`max_unpool2`]: gathers the pooled-position entries of a
/// full-grid array back onto the pooled grid.
pub fn pool_gather(u: &ArrayD<f64>, idx: &[u32], out_hw: (usize, usize)) -> ArrayD<f64> {
    let u4 = as4(u, "pool_gather input");
    let (b, c, ih, iw) = u4.dim();
    let (oh, ow) = out_hw;
    let us = u4.as_standard_layout();
    let usl = us.as_slice().expect("pool_gather: contiguous input");
    let mut y = Array4::<f64>::zeros((b, c, oh, ow));
    let ysl = y.as_slice_mut().expect("pool_gather: contiguous output");
    let n = oh * ow;
    for bi in 0..b {
        for ch in 0..c {
            let ubase = (bi * c + ch) * ih * iw;
            let ybase = (bi * c + ch) * n;
            for k in 0..n {
                ysl[ybase + k] = usl[ubase + idx[ybase + k] as usize];
            }
        }
    }
    y.into_dyn()
}

/// Embeds `x [b,c,h,w]` into a zero grid of `out_hw` at spatial offset `off`.
pub fn pad2d(x: &ArrayD<f64>, off: (usize, usize), out_hw: (usize, usize)) -> ArrayD<f64> {
    let x4 = as4(x, "pad2d input");
    let (b, c, ih, iw) = x4.dim();
    let (oh, ow) = out_hw;
    assert!(
        off.0 + ih <= oh && off.1 + iw <= ow,
        "pad2d: region {off:?}+({ih},{iw}) exceeds {out_hw:?}"
    );
    let mut y = Array4::<f64>::zeros((b, c, oh, ow));
    y.slice_mut(ndarray::s![.., .., off.0..off.0 + ih, off.1..off.1 + iw])
        .assign(&x4);
    y.into_dyn()
}

/// Extracts the spatial window of size `size` at offset `off`.
pub fn crop2d(x: &ArrayD<f64>, off: (usize, usize), size: (usize, usize)) -> ArrayD<f64> {
    let x4 = as4(x, "crop2d input");
    let (_, _, ih, iw) = x4.dim();
    assert!(
        off.0 + size.0 <= ih && off.1 + size.1 <= iw,
        "crop2d: window {off:?}+{size:?} exceeds ({ih},{iw})"
    );
    x4.slice(ndarray::s![.., .., off.0..off.0 + size.0, off.1..off.1 + size.1])
        .to_owned()
        .into_dyn()
}

/// Concatenates two `[b,c,h,w]` arrays along the channel axis.
pub fn concat_ch(a: &ArrayD<f64>, b: &ArrayD<f64>) -> ArrayD<f64> {
    let a4 = as4(a, "concat_ch lhs");
    let b4 = as4(b, "concat_ch rhs");
    let cat = ndarray::concatenate(Axis(1), &[a4, b4]).expect("concat_ch: shape mismatch");
    cat.as_standard_layout().into_owned().into_dyn()
}

/// Channel slice `[b, start..start+len, h, w]`.
pub fn slice_ch(x: &ArrayD<f64>, start: usize, len: usize) -> ArrayD<f64> {
    let x4 = as4(x, "slice_ch input");
    x4.slice(ndarray::s![.., start..start + len, .., ..])
        .to_owned()
        .into_dyn()
}

/// Embeds `x` into `total` zero channels starting at channel `start`.
pub fn pad_ch(x: &ArrayD<f64>, start: usize, total: usize) -> ArrayD<f64> {
    let x4 = as4(x, "pad_ch input");
    let (b, c, h, w) = x4.dim();
    assert!(start + c <= total, "pad_ch: channels out of range");
    let mut y = Array4::<f64>::zeros((b, total, h, w));
    y.slice_mut(ndarray::s![.., start..start + c, .., ..])
        .assign(&x4);
    y.into_dyn()
}

/// Matrix product with optional transposes, `[m,k]x[k,n] -> [m,n]`.
pub fn matmul(a: &ArrayD<f64>, b: &ArrayD<f64>, ta: bool, tb: bool) -> ArrayD<f64> {
    let a2 = a
        .view()
        .into_dimensionality::<Ix2>()
        .expect("matmul: lhs not 2-d");
    let b2 = b
        .view()
        .into_dimensionality::<Ix2>()
        .expect("matmul: rhs not 2-d");
    let a2 = if ta { a2.reversed_axes() } else { a2 };
    let b2 = if tb { b2.reversed_axes() } else { b2 };
    assert_eq!(a2.ncols(), b2.nrows(), "matmul: inner dimension mismatch");
    let mut y = Array2::<f64>::zeros((a2.nrows(), b2.ncols()));
    general_mat_mul(1.0, &a2, &b2, 0.0, &mut y);
    y.into_dyn()
}
