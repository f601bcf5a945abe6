//! Differentiable primitives. Every forward function has a matching
//! backward that accumulates parameter gradients and returns the gradient
//! with respect to its input.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probability clamp used inside every log term.
pub const PROB_EPS: f64 = 1e-7;

/// `y = W x + b` for `W: [k, m]`, `x: [m]`, `b: [k]`.
pub fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    check_affine(x, w, b)?;
    Ok(affine_unchecked(x, w.data(), b.data()))
}

fn check_affine(x: &[f64], w: &Tensor, b: &Tensor) -> Result<()> {
    if w.shape().len() != 2 || w.cols() != x.len() {
        return Err(Error::ShapeMismatch {
            left: w.shape().to_vec(),
            right: vec![x.len()],
        });
    }
    if b.len() != w.rows() {
        return Err(Error::ShapeMismatch {
            left: w.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn affine_unchecked(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let m = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| bi + dot(&w[i * m..(i + 1) * m], x))
        .collect()
}

/// Backward of [`affine`]: `dW += g xᵀ`, `db += g`, returns `Wᵀ g`.
pub fn affine_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let m = x.len();
    let mut dx = vec![0.0; m];
    for (i, &g) in grad_out.iter().enumerate() {
        db[i] += g;
        if g == 0.0 {
            continue;
        }
        let row = &w[i * m..(i + 1) * m];
        let drow = &mut dw[i * m..(i + 1) * m];
        for j in 0..m {
            drow[j] += g * x[j];
            dx[j] += g * row[j];
        }
    }
    dx
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient of ReLU given the pre-activation values.
pub fn relu_backward(pre: &[f64], grad_out: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient of the sigmoid given its output `y`.
#[inline]
pub fn sigmoid_backward(y: f64, grad_out: f64) -> f64 {
    grad_out * y * (1.0 - y)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Gradient of softmax given its output `a`: `a_i (g_i - Σ_j a_j g_j)`.
pub fn softmax_backward(a: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let inner = dot(a, grad_out);
    a.iter()
        .zip(grad_out)
        .map(|(ai, gi)| ai * (gi - inner))
        .collect()
}

/// Result of a max-pooled 1-d convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvOutput {
    /// One pooled value per filter.
    pub values: Vec<f64>,
    /// Window start that produced each filter's maximum (first on ties).
    pub argmax: Vec<usize>,
}

/// Width-`width` convolution over a sequence of `dim`-vectors followed by a
/// max over window positions.
///
/// `seq` is row-major `[len, dim]`. Only windows starting at
/// `0..=max(valid_len, width) - width` are pooled, so trailing padding
/// beyond `valid_len` never contributes once `valid_len >= width`.
/// Sequences shorter than the filter are zero-padded.
/// `kernel` is `[filters, width * dim]`, `bias` is `[filters]`.
pub fn conv_encode(
    seq: &[f64],
    dim: usize,
    valid_len: usize,
    width: usize,
    kernel: &Tensor,
    bias: &Tensor,
) -> Result<ConvOutput> {
    if dim == 0 || !seq.len().is_multiple_of(dim) {
        return Err(Error::ShapeMismatch {
            left: vec![seq.len()],
            right: vec![dim],
        });
    }
    if kernel.cols() != width * dim || bias.len() != kernel.rows() {
        return Err(Error::ShapeMismatch {
            left: kernel.shape().to_vec(),
            right: vec![width * dim],
        });
    }
    let len = seq.len() / dim;
    let valid = valid_len.min(len).max(1);
    let windows = valid.max(width) - width + 1;
    let filters = kernel.rows();
    let span = width * dim;

    let mut values = vec![f64::NEG_INFINITY; filters];
    let mut argmax = vec![0; filters];
    let mut window = vec![0.0; span];
    for t in 0..windows {
        let start = t * dim;
        let available = (len * dim).saturating_sub(start).min(span);
        window[..available].copy_from_slice(&seq[start..start + available]);
        window[available..].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..filters {
            let r = bias.data()[k] + dot(kernel.row(k), &window);
            if r > values[k] {
                values[k] = r;
                argmax[k] = t;
            }
        }
    }
    Ok(ConvOutput { values, argmax })
}

/// Backward of [`conv_encode`]. Routes each filter's gradient to its argmax
/// window; accumulates into `dkernel`, `dbias` and `dseq` (same layout as `seq`).
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    seq: &[f64],
    dim: usize,
    width: usize,
    kernel: &Tensor,
    argmax: &[usize],
    grad_out: &[f64],
    dkernel: &mut [f64],
    dbias: &mut [f64],
    dseq: Option<&mut [f64]>,
) {
    let len = seq.len() / dim;
    let span = width * dim;
    let mut dseq = dseq;
    for (k, &g) in grad_out.iter().enumerate() {
        dbias[k] += g;
        if g == 0.0 {
            continue;
        }
        let start = argmax[k] * dim;
        let available = (len * dim).saturating_sub(start).min(span);
        let krow = kernel.row(k);
        let drow = &mut dkernel[k * span..(k + 1) * span];
        for o in 0..available {
            drow[o] += g * seq[start + o];
        }
        if let Some(dseq) = dseq.as_deref_mut() {
            for o in 0..available {
                dseq[start + o] += g * krow[o];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout mask: each entry is 0 with probability `p`, otherwise `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Applies inverted dropout in train mode; identity in eval mode.
/// Returns the output and the mask that was applied (`None` in eval mode).
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    match mode {
        Mode::Eval => Ok((x.to_vec(), None)),
        Mode::Train => {
            let mask = dropout_mask(x.len(), p, rng);
            let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
            Ok((y, Some(mask)))
        }
    }
}

/// Binary cross-entropy with the prediction clamped to `[ε, 1-ε]`.
#[inline]
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// `d bce / d p`, evaluated at the clamped prediction.
#[inline]
pub fn bce_grad(p: f64, target: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p - target) / (p * (1.0 - p))
}
