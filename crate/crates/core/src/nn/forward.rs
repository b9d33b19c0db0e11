//! Forward evaluation.
//!
//! The batched forward pass records a tape (per-layer activations plus
//! layer-norm statistics) that the backward pass in `loss.rs` consumes.
//! Hidden pre-activations are layer-normalized *before* ReLU when the spec
//! flags it; the output layer is always linear.

use super::{Batch, LayerInfo, LayerKind, NetworkSpec, ParamVector, EPS_LN};
use crate::error::{PlabError, Result};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// Post-ReLU activations of every hidden layer, `n x width` each.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    pub layers: Vec<Vec<f64>>,
    pub widths: Vec<usize>,
    pub n: usize,
}

impl ActivationTrace {
    /// Activations of the last hidden layer (the features feeding the head).
    pub fn penultimate(&self) -> Option<(&[f64], usize)> {
        let idx = self.layers.len().checked_sub(1)?;
        Some((&self.layers[idx], self.widths[idx]))
    }
}

/// Everything backward needs, layer by layer.
pub(crate) struct Tape {
    /// `activations[0]` is the input batch; `activations[l+1]` is layer `l`'s
    /// output after norm and ReLU.
    pub activations: Vec<Vec<f64>>,
    /// Normalized pre-activations for layer-norm layers, `n x out_len`.
    pub normed: Vec<Option<Vec<f64>>>,
    /// Per-sample `1/sqrt(var + eps)` for layer-norm layers.
    pub inv_std: Vec<Option<Vec<f64>>>,
    pub n: usize,
}

impl Tape {
    pub fn outputs(&self) -> &[f64] {
        self.activations.last().expect("tape has output layer")
    }
}

fn dense_preact(layer: &LayerInfo, params: &[f64], x: &[f64], n: usize, z: &mut [f64]) {
    let (in_dim, out_dim) = match layer.kind {
        LayerKind::Dense { in_dim, out_dim } => (in_dim, out_dim),
        _ => unreachable!(),
    };
    let w = &params[layer.w_off..layer.w_off + layer.w_len];
    let b = &params[layer.b_off..layer.b_off + layer.b_len];
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let zi = &mut z[i * out_dim..(i + 1) * out_dim];
        for j in 0..out_dim {
            zi[j] = b[j] + dot(xi, &w[j * in_dim..(j + 1) * in_dim]);
        }
    }
}

fn conv_preact(layer: &LayerInfo, params: &[f64], x: &[f64], n: usize, z: &mut [f64]) {
    let (in_h, in_w, in_c, kernel, out_c, stride, out_h, out_w) = match layer.kind {
        LayerKind::Conv {
            in_h,
            in_w,
            in_c,
            kernel,
            out_c,
            stride,
            out_h,
            out_w,
        } => (in_h, in_w, in_c, kernel, out_c, stride, out_h, out_w),
        _ => unreachable!(),
    };
    let _ = in_h;
    let w = &params[layer.w_off..layer.w_off + layer.w_len];
    let b = &params[layer.b_off..layer.b_off + layer.b_len];
    let row = in_w * in_c;
    let krow = kernel * in_c;
    for i in 0..n {
        let xi = &x[i * layer.in_len..(i + 1) * layer.in_len];
        let zi = &mut z[i * layer.out_len..(i + 1) * layer.out_len];
        for oh in 0..out_h {
            for ow in 0..out_w {
                let base = (oh * stride) * row + (ow * stride) * in_c;
                let out_base = (oh * out_w + ow) * out_c;
                for oc in 0..out_c {
                    let wk = &w[oc * layer.fan_in..(oc + 1) * layer.fan_in];
                    let mut acc = b[oc];
                    for dh in 0..kernel {
                        acc += dot(
                            &xi[base + dh * row..base + dh * row + krow],
                            &wk[dh * krow..(dh + 1) * krow],
                        );
                    }
                    zi[out_base + oc] = acc;
                }
            }
        }
    }
}

/// Layer-norm one sample group in place; returns (normed copy already in
/// `z`, inv_std). Channel index for scale/shift is `idx % ln_len`.
fn layer_norm_group(z: &mut [f64], g: &[f64], s: &[f64], ln_len: usize, normed: &mut [f64]) -> f64 {
    let m = z.len() as f64;
    let mean = z.iter().sum::<f64>() / m;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let inv = 1.0 / (var + EPS_LN).sqrt();
    for (idx, v) in z.iter_mut().enumerate() {
        let nh = (*v - mean) * inv;
        normed[idx] = nh;
        let c = idx % ln_len;
        *v = g[c] * nh + s[c];
    }
    inv
}

pub(crate) fn forward_tape(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<Tape> {
    batch.validate(spec)?;
    if !params.all_finite() {
        return Err(PlabError::diverged(0, f64::NAN, f64::NAN, "non-finite parameters"));
    }
    let layout = spec.layout()?;
    if params.len() != layout.total {
        return Err(PlabError::Input(format!(
            "parameter vector has {} entries, layout expects {}",
            params.len(),
            layout.total
        )));
    }
    let n = batch.n;
    let p = params.as_slice();

    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layout.layers.len() + 1);
    activations.push(batch.inputs.clone());
    let mut normed: Vec<Option<Vec<f64>>> = Vec::with_capacity(layout.layers.len());
    let mut inv_std: Vec<Option<Vec<f64>>> = Vec::with_capacity(layout.layers.len());

    for layer in &layout.layers {
        let x = activations.last().expect("input present");
        let mut z = vec![0.0; n * layer.out_len];
        match layer.kind {
            LayerKind::Dense { .. } => dense_preact(layer, p, x, n, &mut z),
            LayerKind::Conv { .. } => conv_preact(layer, p, x, n, &mut z),
        }
        if layer.layer_norm {
            let g = &p[layer.g_off..layer.g_off + layer.ln_len];
            let s = &p[layer.s_off..layer.s_off + layer.ln_len];
            let mut nh = vec![0.0; n * layer.out_len];
            let mut inv = vec![0.0; n];
            for i in 0..n {
                inv[i] = layer_norm_group(
                    &mut z[i * layer.out_len..(i + 1) * layer.out_len],
                    g,
                    s,
                    layer.ln_len,
                    &mut nh[i * layer.out_len..(i + 1) * layer.out_len],
                );
            }
            normed.push(Some(nh));
            inv_std.push(Some(inv));
        } else {
            normed.push(None);
            inv_std.push(None);
        }
        if layer.relu {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(z);
    }

    Ok(Tape {
        activations,
        normed,
        inv_std,
        n,
    })
}

/// Evaluate the network on a batch.
///
/// Returns row-major `n x output_dim` outputs, plus the post-activation
/// trace of every hidden layer when `trace` is set.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    trace: bool,
) -> Result<(Vec<f64>, Option<ActivationTrace>)> {
    let tape = forward_tape(spec, params, batch)?;
    let outputs = tape.outputs().to_vec();
    let trace = if trace {
        let layout = spec.layout()?;
        let hidden = layout.layers.len() - 1;
        Some(ActivationTrace {
            layers: tape.activations[1..=hidden].to_vec(),
            widths: layout.layers[..hidden].iter().map(|l| l.out_len).collect(),
            n: tape.n,
        })
    } else {
        None
    };
    Ok((outputs, trace))
}
