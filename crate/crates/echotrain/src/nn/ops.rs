//! Core tensor operations with hand-derived backward passes.
//!
//! Convolutions go through per-sample im2col/col2im so peak memory stays
//! proportional to one sample's patch matrix, and the inner products run
//! through `ndarray`'s single-threaded matmul, which keeps results
//! deterministic.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3};

/// Output spatial size of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(
        input + 2 * pad >= kernel,
        "conv input {input} smaller than kernel {kernel} with pad {pad}"
    );
    (input + 2 * pad - kernel) / stride + 1
}

/// Output spatial size of a transposed convolution along one axis.
pub fn conv_transpose_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> usize {
    assert!(output_pad < stride, "output_pad must be < stride");
    (input - 1) * stride + kernel + output_pad - 2 * pad
}

/// Unfold one sample `(C, H, W)` into a patch matrix `(C*KH*KW, OH*OW)`.
///
/// `cols[(c*KH + u)*KW + v, i*OW + j] = x_padded[c, i*stride + u, j*stride + v]`
/// with zero padding of `pad` on every side.
pub fn im2col(
    x: ArrayView3<'_, f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut cols = Array2::<f64>::zeros((c * kh * kw, oh * ow));
    for ch in 0..c {
        for u in 0..kh {
            for v in 0..kw {
                let row = (ch * kh + u) * kw + v;
                for i in 0..oh {
                    let src_i = (i * stride + u) as isize - pad as isize;
                    if src_i < 0 || src_i >= h as isize {
                        continue;
                    }
                    for j in 0..ow {
                        let src_j = (j * stride + v) as isize - pad as isize;
                        if src_j < 0 || src_j >= w as isize {
                            continue;
                        }
                        cols[[row, i * ow + j]] = x[[ch, src_i as usize, src_j as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back into `(C, H, W)`.
pub fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    assert_eq!(cols.dim(), (c * kh * kw, oh * ow));
    let mut x = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for u in 0..kh {
            for v in 0..kw {
                let row = (ch * kh + u) * kw + v;
                for i in 0..oh {
                    let src_i = (i * stride + u) as isize - pad as isize;
                    if src_i < 0 || src_i >= h as isize {
                        continue;
                    }
                    for j in 0..ow {
                        let src_j = (j * stride + v) as isize - pad as isize;
                        if src_j < 0 || src_j >= w as isize {
                            continue;
                        }
                        x[[ch, src_i as usize, src_j as usize]] += cols[[row, i * ow + j]];
                    }
                }
            }
        }
    }
    x
}

/// 2-D convolution. `x: (N, C, H, W)`, `w: (OC, C, KH, KW)`, `b: (OC)`.
pub fn conv2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    b: &Array1<f64>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (n, c, h, wd) = x.dim();
    let (oc, wc, kh, kw) = w.dim();
    assert_eq!(c, wc, "conv2d channel mismatch");
    assert_eq!(b.len(), oc);
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(wd, kw, stride, pad);
    let w_mat = w.to_shape((oc, c * kh * kw)).unwrap();
    let mut y = Array4::<f64>::zeros((n, oc, oh, ow));
    for ni in 0..n {
        let cols = im2col(x.slice(s![ni, .., .., ..]), kh, kw, stride, pad);
        let mut y_mat = w_mat.dot(&cols); // (OC, OH*OW)
        for o in 0..oc {
            let bias = b[o];
            y_mat.row_mut(o).mapv_inplace(|v| v + bias);
        }
        y.slice_mut(s![ni, .., .., ..])
            .assign(&y_mat.to_shape((oc, oh, ow)).unwrap());
    }
    y
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight and bias.
pub fn conv2d_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    gy: &Array4<f64>,
    stride: usize,
    pad: usize,
) -> (Array4<f64>, Array4<f64>, Array1<f64>) {
    let (n, c, h, wd) = x.dim();
    let (oc, _, kh, kw) = w.dim();
    let (gn, goc, oh, ow) = gy.dim();
    assert_eq!(n, gn);
    assert_eq!(oc, goc);
    let w_mat = w.to_shape((oc, c * kh * kw)).unwrap();
    let mut gx = Array4::<f64>::zeros((n, c, h, wd));
    let mut gw_mat = Array2::<f64>::zeros((oc, c * kh * kw));
    let mut gb = Array1::<f64>::zeros(oc);
    for ni in 0..n {
        let gy_mat = gy
            .slice(s![ni, .., .., ..])
            .to_shape((oc, oh * ow))
            .unwrap()
            .to_owned();
        // Recompute the unfold instead of caching it: the input is cheap to
        // keep, the patch matrix is not.
        let cols = im2col(x.slice(s![ni, .., .., ..]), kh, kw, stride, pad);
        gw_mat = gw_mat + gy_mat.dot(&cols.t());
        gb = gb + gy_mat.sum_axis(ndarray::Axis(1));
        let gcols = w_mat.t().dot(&gy_mat);
        let gx_n = col2im(&gcols, c, h, wd, kh, kw, stride, pad);
        gx.slice_mut(s![ni, .., .., ..]).assign(&gx_n);
    }
    let gw = gw_mat.to_shape((oc, c, kh, kw)).unwrap().to_owned();
    (gx, gw, gb)
}

/// Transposed 2-D convolution ("up-convolution").
/// `x: (N, C, H, W)`, `w: (C, OC, KH, KW)`, `b: (OC)`.
pub fn conv_transpose2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    b: &Array1<f64>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Array4<f64> {
    let (n, c, h, wd) = x.dim();
    let (wc, oc, kh, kw) = w.dim();
    assert_eq!(c, wc, "conv_transpose2d channel mismatch");
    let oh = conv_transpose_out_dim(h, kh, stride, pad, output_pad);
    let ow = conv_transpose_out_dim(wd, kw, stride, pad, output_pad);
    let full_h = (h - 1) * stride + kh + output_pad;
    let full_w = (wd - 1) * stride + kw + output_pad;
    let w_mat = w.to_shape((c, oc * kh * kw)).unwrap();
    let mut y = Array4::<f64>::zeros((n, oc, oh, ow));
    for ni in 0..n {
        let x_mat = x
            .slice(s![ni, .., .., ..])
            .to_shape((c, h * wd))
            .unwrap()
            .to_owned();
        let cols = w_mat.t().dot(&x_mat); // (OC*KH*KW, H*W)
        // Scatter into the uncropped buffer, then crop `pad` from each edge.
        let full = col2im(&cols, oc, full_h, full_w, kh, kw, stride, 0);
        let mut y_n = full
            .slice(s![.., pad..pad + oh, pad..pad + ow])
            .to_owned();
        for o in 0..oc {
            let bias = b[o];
            y_n.slice_mut(s![o, .., ..]).mapv_inplace(|v| v + bias);
        }
        y.slice_mut(s![ni, .., .., ..]).assign(&y_n);
    }
    y
}

/// Gradients of [`conv_transpose2d_forward`] w.r.t. input, weight and bias.
pub fn conv_transpose2d_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    gy: &Array4<f64>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> (Array4<f64>, Array4<f64>, Array1<f64>) {
    let (n, c, h, wd) = x.dim();
    let (_, oc, kh, kw) = w.dim();
    let oh = conv_transpose_out_dim(h, kh, stride, pad, output_pad);
    let ow = conv_transpose_out_dim(wd, kw, stride, pad, output_pad);
    assert_eq!(gy.dim(), (n, oc, oh, ow));
    let full_h = (h - 1) * stride + kh + output_pad;
    let full_w = (wd - 1) * stride + kw + output_pad;
    let w_mat = w.to_shape((c, oc * kh * kw)).unwrap();
    let mut gx = Array4::<f64>::zeros((n, c, h, wd));
    let mut gw_mat = Array2::<f64>::zeros((c, oc * kh * kw));
    let mut gb = Array1::<f64>::zeros(oc);
    for ni in 0..n {
        // Re-embed the output gradient into the uncropped buffer; the
        // cropped border received no output, so its gradient is zero.
        let mut gy_full = Array3::<f64>::zeros((oc, full_h, full_w));
        gy_full
            .slice_mut(s![.., pad..pad + oh, pad..pad + ow])
            .assign(&gy.slice(s![ni, .., .., ..]));
        let gcols = im2col(gy_full.view(), kh, kw, stride, 0); // (OC*KH*KW, H*W)
        let x_mat = x
            .slice(s![ni, .., .., ..])
            .to_shape((c, h * wd))
            .unwrap()
            .to_owned();
        gw_mat = gw_mat + x_mat.dot(&gcols.t());
        let gx_n = w_mat.dot(&gcols); // (C, H*W)
        gx.slice_mut(s![ni, .., .., ..])
            .assign(&gx_n.to_shape((c, h, wd)).unwrap());
        for o in 0..oc {
            gb[o] += gy.slice(s![ni, o, .., ..]).sum();
        }
    }
    let gw = gw_mat.to_shape((c, oc, kh, kw)).unwrap().to_owned();
    (gx, gw, gb)
}

/// 2x2 max pooling with stride 2. Returns the pooled map and the flat
/// winner index (0..4) per output cell; ties resolve to the first maximum.
pub fn maxpool2_forward(x: &Array4<f64>) -> (Array4<f64>, Array4<u8>) {
    let (n, c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "maxpool2 needs even spatial dims");
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array4::<f64>::zeros((n, c, oh, ow));
    let mut arg = Array4::<u8>::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_k = 0u8;
                    for k in 0..4u8 {
                        let (di, dj) = ((k / 2) as usize, (k % 2) as usize);
                        let v = x[[ni, ch, 2 * i + di, 2 * j + dj]];
                        if v > best {
                            best = v;
                            best_k = k;
                        }
                    }
                    y[[ni, ch, i, j]] = best;
                    arg[[ni, ch, i, j]] = best_k;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward(arg: &Array4<u8>, gy: &Array4<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c, oh, ow) = gy.dim();
    assert_eq!(arg.dim(), (n, c, oh, ow));
    let mut gx = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let k = arg[[ni, ch, i, j]];
                    let (di, dj) = ((k / 2) as usize, (k % 2) as usize);
                    gx[[ni, ch, 2 * i + di, 2 * j + dj]] += gy[[ni, ch, i, j]];
                }
            }
        }
    }
    gx
}

/// Global average pooling `(N, C, H, W) -> (N, C)`.
pub fn gap_forward(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f64;
    let mut y = Array2::<f64>::zeros((n, c));
    for ni in 0..n {
        for ch in 0..c {
            y[[ni, ch]] = x.slice(s![ni, ch, .., ..]).sum() * scale;
        }
    }
    y
}

pub fn gap_backward(gy: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = gy.dim();
    let scale = 1.0 / (h * w) as f64;
    let mut gx = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        for ch in 0..c {
            gx.slice_mut(s![ni, ch, .., ..]).fill(gy[[ni, ch]] * scale);
        }
    }
    gx
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
