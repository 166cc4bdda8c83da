//! Forward and backward kernels for the layer set used by the network.
//!
//! Feature maps are `[channels, height, width]`, row-major. Convolutions are
//! cross-correlations with SAME zero padding and stride 1; for even kernel
//! extents the extra padding goes after the data (`pad_before = (k - 1) / 2`).
//! Pooling windows are disjoint (stride = window) and trailing elements that
//! do not fill a window are dropped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{format_shape, Tensor};
use crate::error::{Error, Result};

/// Probability clamp applied before taking logarithms in the loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(kernel_h: usize, kernel_w: usize, out_channels: usize) -> Result<Self> {
        if kernel_h == 0 || kernel_w == 0 || out_channels == 0 {
            return Err(Error::Parameter(format!(
                "conv spec needs positive extents, got {kernel_h}x{kernel_w} with {out_channels} kernels"
            )));
        }
        Ok(ConvSpec {
            kernel_h,
            kernel_w,
            out_channels,
        })
    }

    fn pad_before(&self) -> (usize, usize) {
        ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub pool_h: usize,
    pub pool_w: usize,
}

impl PoolSpec {
    pub fn new(pool_h: usize, pool_w: usize) -> Result<Self> {
        if pool_h == 0 || pool_w == 0 {
            return Err(Error::Parameter(format!(
                "pool spec needs positive extents, got {pool_h}x{pool_w}"
            )));
        }
        Ok(PoolSpec { pool_h, pool_w })
    }

    /// Output spatial extents for an input of `h x w`, or `None` if either collapses to zero.
    pub fn output_extent(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (oh, ow) = (h / self.pool_h, w / self.pool_w);
        (oh >= 1 && ow >= 1).then_some((oh, ow))
    }
}

fn chw(t: &Tensor, layer: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(layer, "rank-3 [C,H,W]", format_shape(t.shape()))),
    }
}

fn check_conv(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize)> {
    let (c_in, h, w) = chw(input, "conv2d")?;
    let expected = [spec.out_channels, c_in, spec.kernel_h, spec.kernel_w];
    if weights.shape() != expected {
        return Err(Error::shape(
            "conv2d weights",
            format_shape(&expected),
            format_shape(weights.shape()),
        ));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(Error::shape(
            "conv2d bias",
            spec.out_channels.to_string(),
            format_shape(bias.shape()),
        ));
    }
    Ok((c_in, h, w))
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Visits every (output row, input row, column overlap) triple for one kernel tap.
///
/// `f(out_row_start, in_row_start, len)` receives flat offsets into an `[H, W]`
/// plane for output and input respectively.
#[inline]
fn for_each_tap_span(
    h: usize,
    w: usize,
    dh: usize,
    dw: usize,
    pad: (usize, usize),
    mut f: impl FnMut(usize, usize, usize),
) {
    let (ph, pw) = pad;
    // output row r reads input row r + dh - ph
    let r0 = ph.saturating_sub(dh);
    let r1 = (h + ph).saturating_sub(dh).min(h);
    let x0 = pw.saturating_sub(dw);
    let x1 = (w + pw).saturating_sub(dw).min(w);
    if r0 >= r1 || x0 >= x1 {
        return;
    }
    let len = x1 - x0;
    for r in r0..r1 {
        let in_r = r + dh - ph;
        let in_x = x0 + dw - pw;
        f(r * w + x0, in_r * w + in_x, len);
    }
}

/// `c = a * b + beta * c` for row-major `c` (`m x n`) and arbitrarily strided `a`, `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        (rows - 1) * rs + (cols - 1) * cs
    };
    assert!(last(m, k, a_strides) < a.len());
    assert!(last(k, n, b_strides) < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds SAME-padded receptive fields into a `[C_in * kh * kw, H * W]` matrix.
fn im2col(x: &[f64], c_in: usize, h: usize, w: usize, spec: &ConvSpec) -> Vec<f64> {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let plane = h * w;
    let pad = spec.pad_before();
    let mut cols = vec![0.0; c_in * kh * kw * plane];
    for ci in 0..c_in {
        let in_plane = &x[ci * plane..(ci + 1) * plane];
        for dh in 0..kh {
            for dw in 0..kw {
                let row = (ci * kh + dh) * kw + dw;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for_each_tap_span(h, w, dh, dw, pad, |o, i, len| {
                    dst[o..o + len].copy_from_slice(&in_plane[i..i + len]);
                });
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, spec: &ConvSpec) -> Vec<f64> {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let plane = h * w;
    let pad = spec.pad_before();
    let mut x = vec![0.0; c_in * plane];
    for ci in 0..c_in {
        let in_plane = &mut x[ci * plane..(ci + 1) * plane];
        for dh in 0..kh {
            for dw in 0..kw {
                let row = (ci * kh + dh) * kw + dw;
                let src = &cols[row * plane..(row + 1) * plane];
                for_each_tap_span(h, w, dh, dw, pad, |o, i, len| {
                    axpy(&mut in_plane[i..i + len], 1.0, &src[o..o + len]);
                });
            }
        }
    }
    x
}

pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let (c_in, h, w) = check_conv(input, weights, bias, spec)?;
    let plane = h * w;
    let k = c_in * spec.kernel_h * spec.kernel_w;
    let cols = im2col(input.data(), c_in, h, w, spec);
    let mut out = vec![0.0; spec.out_channels * plane];
    for (out_plane, &b) in out.chunks_exact_mut(plane).zip(bias.data()) {
        out_plane.fill(b);
    }
    gemm(spec.out_channels, k, plane, weights.data(), (k, 1), &cols, (plane, 1), 1.0, &mut out);
    Tensor::new(&[spec.out_channels, h, w], out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    grad_out: &Tensor,
    saved_input: Option<&Tensor>,
    weights: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    let input = saved_input
        .ok_or_else(|| Error::Usage("conv2d backward called without a saved forward input".into()))?;
    let bias_shape = Tensor::zeros(&[spec.out_channels]);
    let (c_in, h, w) = check_conv(input, weights, &bias_shape, spec)?;
    let expected = [spec.out_channels, h, w];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d grad_out",
            format_shape(&expected),
            format_shape(grad_out.shape()),
        ));
    }
    let plane = h * w;
    let co = spec.out_channels;
    let k = c_in * spec.kernel_h * spec.kernel_w;
    let g = grad_out.data();
    let gb: Vec<f64> = g.chunks_exact(plane).map(|p| p.iter().sum()).collect();

    let cols = im2col(input.data(), c_in, h, w, spec);
    let mut gw = vec![0.0; co * k];
    // dW = dY * cols^T
    gemm(co, plane, k, g, (plane, 1), &cols, (1, plane), 0.0, &mut gw);
    drop(cols);
    // dcols = W^T * dY
    let mut gcols = vec![0.0; k * plane];
    gemm(k, co, plane, weights.data(), (1, k), g, (plane, 1), 0.0, &mut gcols);
    let gin = col2im(&gcols, c_in, h, w, spec);

    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gin)?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: Tensor::new(&[co], gb)?,
    })
}

/// Flat input index of the maximum of every pooling window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolArgmax {
    pub input_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

pub fn maxpool_forward(input: &Tensor, spec: &PoolSpec) -> Result<(Tensor, PoolArgmax)> {
    let (c, h, w) = chw(input, "maxpool")?;
    let (oh, ow) = spec.output_extent(h, w).ok_or_else(|| {
        Error::shape(
            "maxpool",
            format!("input extents at least {}x{}", spec.pool_h, spec.pool_w),
            format!("{h}x{w}"),
        )
    })?;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for orow in 0..oh {
            for ocol in 0..ow {
                let mut best_i = base + orow * spec.pool_h * w + ocol * spec.pool_w;
                let mut best = x[best_i];
                for r in 0..spec.pool_h {
                    let row = base + (orow * spec.pool_h + r) * w + ocol * spec.pool_w;
                    for (k, &v) in x[row..row + spec.pool_w].iter().enumerate() {
                        // strict comparison keeps the first maximum in scan order
                        if v > best {
                            best = v;
                            best_i = row + k;
                        }
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    Ok((
        Tensor::new(&[c, oh, ow], out)?,
        PoolArgmax {
            input_shape: input.shape().to_vec(),
            indices: idx,
        },
    ))
}

pub fn maxpool_backward(grad_out: &Tensor, argmax: &PoolArgmax) -> Result<Tensor> {
    if grad_out.len() != argmax.indices.len() {
        return Err(Error::shape(
            "maxpool grad_out",
            format!("{} elements", argmax.indices.len()),
            format!("{} elements", grad_out.len()),
        ));
    }
    let mut gin = Tensor::zeros(&argmax.input_shape);
    let g = gin.data_mut();
    for (&i, &gv) in argmax.indices.iter().zip(grad_out.data()) {
        g[i] += gv;
    }
    Ok(gin)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Tensor {
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data).expect("shape preserved")
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

/// Gradient of the sigmoid given its forward output.
pub fn sigmoid_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &s)| g * s * (1.0 - s))
        .collect();
    Tensor::new(output.shape(), data).expect("shape preserved")
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of the softmax given its forward output.
pub fn softmax_backward(grad_out: &[f64], probs: &[f64]) -> Vec<f64> {
    let inner: f64 = grad_out.iter().zip(probs).map(|(g, p)| g * p).sum();
    grad_out
        .iter()
        .zip(probs)
        .map(|(g, p)| p * (g - inner))
        .collect()
}

fn check_dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        _ => return Err(Error::shape("dense weights", "rank-2 [M,N]", format_shape(weights.shape()))),
    };
    if input.len() != n {
        return Err(Error::shape(
            "dense",
            format!("{n} input features"),
            format!("{} ({})", input.len(), format_shape(input.shape())),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("dense bias", m.to_string(), format_shape(bias.shape())));
    }
    Ok((m, n))
}

/// Affine map of the flattened input.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = check_dense(input, weights, bias)?;
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| dot(row, x) + b)
        .collect();
    Tensor::new(&[m], out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
) -> Result<DenseGrads> {
    let bias = Tensor::zeros(&[weights.shape()[0]]);
    let (m, n) = check_dense(input, weights, &bias)?;
    if grad_out.len() != m {
        return Err(Error::shape("dense grad_out", m.to_string(), format_shape(grad_out.shape())));
    }
    let x = input.data();
    let mut gin = vec![0.0; n];
    let mut gw = vec![0.0; m * n];
    for ((row, grow), &g) in weights
        .data()
        .chunks_exact(n)
        .zip(gw.chunks_exact_mut(n))
        .zip(grad_out.data())
    {
        axpy(&mut gin, g, row);
        axpy(grow, g, x);
    }
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), gin)?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: grad_out.clone().reshape(&[m])?,
    })
}

/// Inverted dropout. Returns the output and, in training mode, the multiplicative mask.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape(), data)?, Some(mask)))
}

/// Cross-entropy of a probability vector against a class index, with clamping.
pub fn bce_loss(probabilities: &[f64], label: usize) -> Result<f64> {
    let p = probabilities.get(label).ok_or_else(|| {
        Error::Parameter(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
}

/// Fused softmax + cross-entropy: `(loss, probabilities, dloss/dlogits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let probs = softmax(logits);
    let loss = bce_loss(&probs, label)?;
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == label { p - 1.0 } else { p })
        .collect();
    Ok((loss, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let spec = ConvSpec::new(1, 1, 1).unwrap();
        let y = conv2d_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);

        let g = conv2d_backward(&Tensor::full(&[1, 1, 3], 1.0), Some(&x), &w, &spec).unwrap();
        assert_eq!(g.input.data(), &[1.0, 1.0, 1.0]);
        assert_eq!(g.weights.data(), &[6.0]);
        assert_eq!(g.bias.data(), &[3.0]);
    }

    #[test]
    fn conv_same_padding_by_hand() {
        let x = t(&[1, 1, 4], &[1.0, 0.0, 0.0, 0.0]);
        let w = t(&[1, 1, 1, 3], &[1.0, 1.0, 1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv2d_forward(&x, &w, &b, &ConvSpec::new(1, 3, 1).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_even_kernel_pads_after() {
        // taps at offsets -1, 0, +1, +2
        let x = t(&[1, 1, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let w = t(&[1, 1, 1, 4], &[1.0, 10.0, 100.0, 1000.0]);
        let y = conv2d_forward(&x, &w, &t(&[1], &[0.0]), &ConvSpec::new(1, 4, 1).unwrap()).unwrap();
        assert_eq!(y.data(), &[3210.0, 4321.0, 5432.0, 543.0, 54.0]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 3, 3]);
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        let err = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), &ConvSpec::new(3, 3, 1).unwrap());
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn conv_backward_without_context() {
        let w = Tensor::zeros(&[1, 1, 1, 1]);
        let spec = ConvSpec::new(1, 1, 1).unwrap();
        let err = conv2d_backward(&Tensor::zeros(&[1, 1, 2]), None, &w, &spec);
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn conv_zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::new(&[2, 3, 5], (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let w = Tensor::new(&[2, 2, 3, 3], (0..36).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let spec = ConvSpec::new(3, 3, 2).unwrap();
        let g = conv2d_backward(&Tensor::zeros(&[2, 3, 5]), Some(&x), &w, &spec).unwrap();
        assert!(g.input.data().iter().chain(g.weights.data()).chain(g.bias.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_pairs_and_square() {
        let (y, a) = maxpool_forward(&t(&[1, 1, 4], &[1.0, 5.0, 2.0, 4.0]), &PoolSpec::new(1, 2).unwrap()).unwrap();
        assert_eq!(y.data(), &[5.0, 4.0]);
        let g = maxpool_backward(&t(&[1, 1, 2], &[1.0, 1.0]), &a).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 1.0]);

        let (y, _) = maxpool_forward(&t(&[1, 2, 2], &[1.0, 3.0, 2.0, 4.0]), &PoolSpec::new(2, 2).unwrap()).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn maxpool_tie_goes_to_first() {
        let (_, a) = maxpool_forward(&t(&[1, 1, 2], &[7.0, 7.0]), &PoolSpec::new(1, 2).unwrap()).unwrap();
        let g = maxpool_backward(&t(&[1, 1, 1], &[1.0]), &a).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn maxpool_drops_remainder() {
        let x = Tensor::zeros(&[1, 23, 5101]);
        let (y, _) = maxpool_forward(&x, &PoolSpec::new(1, 10).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, 23, 510]);
    }

    #[test]
    fn maxpool_too_large() {
        let err = maxpool_forward(&Tensor::zeros(&[1, 1, 3]), &PoolSpec::new(1, 4).unwrap()).unwrap_err();
        assert!(err.to_string().contains("maxpool"));
    }

    #[test]
    fn activations() {
        assert_eq!(relu(&t(&[3], &[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(800.0) <= 1.0);
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_by_hand() {
        let y = dense_forward(&t(&[2], &[3.0, 4.0]), &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
        let y = dense_forward(&t(&[2], &[2.0, 3.0]), &t(&[1, 2], &[1.0, 1.0]), &t(&[1], &[1.0])).unwrap();
        assert_eq!(y.data(), &[6.0]);
        assert!(dense_forward(&t(&[3], &[1.0; 3]), &t(&[1, 2], &[1.0, 1.0]), &t(&[1], &[1.0])).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::full(&[100], 2.0);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());

        let ones = Tensor::full(&[100_000], 1.0);
        let (y, _) = dropout(&ones, 0.5, true, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / 1e5;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_is_seeded() {
        let x = Tensor::full(&[64], 1.0);
        let a = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().0;
        let b = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn loss_values() {
        assert!((bce_loss(&[0.5, 0.5], 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[0.0, 1.0], 1).unwrap() <= 1e-11);
        assert!(bce_loss(&[1.0, 0.0], 1).unwrap().is_finite());
        assert!(bce_loss(&[0.5, 0.5], 2).is_err());
    }
}
