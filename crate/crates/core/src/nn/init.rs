//! Parameter initialization.
//!
//! Weights are fan-in-scaled uniform, `U(-sqrt(1/fan_in), sqrt(1/fan_in))`;
//! biases start at zero, layer-norm scales at one and shifts at zero.

use rand::Rng;

use super::{Layout, NetworkSpec, ParamVector};
use crate::error::Result;
use crate::rng;

fn init_layer_weights(out: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let bound = (1.0 / fan_in as f64).sqrt();
    for w in out.iter_mut() {
        *w = rng.gen_range(-bound..bound);
    }
}

/// Build a freshly initialized parameter vector for `spec`.
///
/// Deterministic: equal `(spec, seed)` produce bitwise-identical vectors.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<ParamVector> {
    build_network_with(spec, &mut rng::stream_rng(seed, rng::stream::INIT, 0))
}

/// Like [`build_network`] but drawing from a caller-supplied generator, for
/// interventions that need init-distribution samples on their own stream.
pub fn build_network_with(spec: &NetworkSpec, r: &mut impl Rng) -> Result<ParamVector> {
    spec.validate()?;
    let layout = spec.layout()?;
    let mut params = ParamVector::zeros(layout.total);
    fill_from_layout(&layout, params.as_mut_slice(), r);
    Ok(params)
}

fn fill_from_layout(layout: &Layout, data: &mut [f64], r: &mut impl Rng) {
    for layer in &layout.layers {
        init_layer_weights(&mut data[layer.w_off..layer.w_off + layer.w_len], layer.fan_in, r);
        for b in &mut data[layer.b_off..layer.b_off + layer.b_len] {
            *b = 0.0;
        }
        if layer.layer_norm {
            for g in &mut data[layer.g_off..layer.g_off + layer.ln_len] {
                *g = 1.0;
            }
            for s in &mut data[layer.s_off..layer.s_off + layer.ln_len] {
                *s = 0.0;
            }
        }
    }
}

/// Re-draw the final dense layer from the init distribution, leaving every
/// other coordinate bitwise untouched.
pub fn reset_last_layer(spec: &NetworkSpec, params: &ParamVector, seed: u64) -> Result<ParamVector> {
    let layout = spec.layout()?;
    let last = layout.last().clone();
    let mut out = params.clone();
    let data = out.as_mut_slice();
    let mut r = rng::stream_rng(seed, rng::stream::INIT, 1);
    init_layer_weights(&mut data[last.w_off..last.w_off + last.w_len], last.fan_in, &mut r);
    for b in &mut data[last.b_off..last.b_off + last.b_len] {
        *b = 0.0;
    }
    Ok(out)
}
