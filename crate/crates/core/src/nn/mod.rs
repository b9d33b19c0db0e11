//! Differentiable network core.
//!
//! MLP and CNN function approximators over a flat `f64` parameter vector,
//! with hand-rolled forward, backward, and Hessian-vector products for the
//! small set of losses the lab needs. Everything is 64-bit and
//! deterministic: the curvature diagnostics downstream are
//! precision-sensitive.

mod forward;
mod hvp;
mod init;
mod loss;
mod spectral;
mod stats;

pub use forward::{forward, ActivationTrace};
pub use hvp::hvp;
pub use init::{build_network, build_network_with, reset_last_layer};
pub use loss::{loss_grad, loss_value, LossSpec};
pub use spectral::{spectral_normalize_layer, SpectralNormState};
pub use stats::{effective_rank, network_stats, NetworkStats};

use crate::error::{PlabError, Result};
use serde::{Deserialize, Serialize};

/// Layer-norm variance guard.
pub const EPS_LN: f64 = 1e-5;
/// Spectral-norm zero-matrix guard.
pub const EPS_SN: f64 = 1e-12;

/// Input geometry of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    Flat(usize),
    Image { h: usize, w: usize, c: usize },
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Flat(d) => d,
            InputShape::Image { h, w, c } => h * w * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One convolutional layer: `kernel`×`kernel` window, `channels` output
/// channels, valid padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    /// Fully-connected ReLU network; `hidden` may be empty (a single linear
    /// map from input to output).
    Mlp { hidden: Vec<usize> },
    /// Convolutional stack followed by dense ReLU layers.
    Cnn { conv: Vec<ConvSpec>, dense: Vec<usize> },
}

/// Architecture description. Together with a seed this determines a
/// [`ParamVector`] bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub input: InputShape,
    pub output_dim: usize,
    /// Layer normalization on every hidden pre-activation.
    #[serde(default)]
    pub layer_norm: bool,
    /// Spectral normalization of the first layer's weight matrix.
    #[serde(default)]
    pub spectral_norm: bool,
}

impl NetworkSpec {
    /// Two hidden layers of width 512.
    pub fn default_mlp(input_dim: usize, output_dim: usize) -> Self {
        Self::mlp(input_dim, &[512, 512], output_dim)
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        NetworkSpec {
            kind: NetworkKind::Mlp {
                hidden: hidden.to_vec(),
            },
            input: InputShape::Flat(input_dim),
            output_dim,
            layer_norm: false,
            spectral_norm: false,
        }
    }

    /// Conv 5x5x64, conv 3x3x64, dense 256, 256.
    pub fn default_cnn(h: usize, w: usize, c: usize, output_dim: usize) -> Self {
        NetworkSpec {
            kind: NetworkKind::Cnn {
                conv: vec![
                    ConvSpec {
                        kernel: 5,
                        channels: 64,
                        stride: 2,
                    },
                    ConvSpec {
                        kernel: 3,
                        channels: 64,
                        stride: 2,
                    },
                ],
                dense: vec![256, 256],
            },
            input: InputShape::Image { h, w, c },
            output_dim,
            layer_norm: false,
            spectral_norm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(PlabError::Config("output_dim must be >= 1".into()));
        }
        if self.input.len() == 0 {
            return Err(PlabError::Config("input shape must be non-empty".into()));
        }
        match &self.kind {
            NetworkKind::Mlp { hidden } => {
                if hidden.iter().any(|&w| w == 0) {
                    return Err(PlabError::Config("hidden widths must be >= 1".into()));
                }
            }
            NetworkKind::Cnn { conv, dense } => {
                let (h, w, _c) = match self.input {
                    InputShape::Image { h, w, c } => (h, w, c),
                    InputShape::Flat(_) => {
                        return Err(PlabError::Config(
                            "cnn requires an image input shape".into(),
                        ))
                    }
                };
                if conv.is_empty() {
                    return Err(PlabError::Config("cnn needs at least one conv layer".into()));
                }
                let (mut ch, mut cw) = (h, w);
                for cs in conv {
                    if cs.channels == 0 || cs.kernel == 0 || cs.stride == 0 {
                        return Err(PlabError::Config(
                            "conv kernel/channels/stride must be >= 1".into(),
                        ));
                    }
                    if cs.kernel > ch || cs.kernel > cw {
                        return Err(PlabError::Config(format!(
                            "conv kernel {} exceeds feature map {}x{}",
                            cs.kernel, ch, cw
                        )));
                    }
                    ch = (ch - cs.kernel) / cs.stride + 1;
                    cw = (cw - cs.kernel) / cs.stride + 1;
                }
                if dense.iter().any(|&w| w == 0) {
                    return Err(PlabError::Config("dense widths must be >= 1".into()));
                }
            }
        }
        self.layout().map(|_| ())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        self.layout().map(|l| l.total).unwrap_or(0)
    }

    /// Compute the per-layer parameter layout.
    pub fn layout(&self) -> Result<Layout> {
        Layout::for_spec(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        in_h: usize,
        in_w: usize,
        in_c: usize,
        kernel: usize,
        out_c: usize,
        stride: usize,
        out_h: usize,
        out_w: usize,
    },
}

/// Offsets of one layer's parameters inside the flat vector.
///
/// Weight rows are contiguous per output unit (dense: `out x in`; conv:
/// `out_c x (k*k*in_c)`), so `fan_in` slices can be taken directly.
#[derive(Clone, Debug)]
pub struct LayerInfo {
    pub kind: LayerKind,
    pub relu: bool,
    pub layer_norm: bool,
    pub w_off: usize,
    pub w_len: usize,
    pub b_off: usize,
    pub b_len: usize,
    /// Layer-norm scale/shift offsets; meaningful only when `layer_norm`.
    pub g_off: usize,
    pub s_off: usize,
    pub ln_len: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub fan_in: usize,
}

impl LayerInfo {
    pub fn n_units(&self) -> usize {
        match self.kind {
            LayerKind::Dense { out_dim, .. } => out_dim,
            LayerKind::Conv { out_c, .. } => out_c,
        }
    }
}

/// Layer-by-layer map from the architecture to parameter offsets.
#[derive(Clone, Debug)]
pub struct Layout {
    pub layers: Vec<LayerInfo>,
    pub total: usize,
    pub input_len: usize,
    pub output_len: usize,
}

impl Layout {
    fn for_spec(spec: &NetworkSpec) -> Result<Self> {
        let mut layers = Vec::new();
        let mut off = 0usize;

        let push_dense = |in_dim: usize,
                              out_dim: usize,
                              relu: bool,
                              layer_norm: bool,
                              off: &mut usize| {
            let w_off = *off;
            let w_len = in_dim * out_dim;
            let b_off = w_off + w_len;
            let b_len = out_dim;
            let mut g_off = 0;
            let mut s_off = 0;
            let mut ln_len = 0;
            let mut end = b_off + b_len;
            if layer_norm {
                g_off = end;
                s_off = end + out_dim;
                ln_len = out_dim;
                end += 2 * out_dim;
            }
            *off = end;
            LayerInfo {
                kind: LayerKind::Dense { in_dim, out_dim },
                relu,
                layer_norm,
                w_off,
                w_len,
                b_off,
                b_len,
                g_off,
                s_off,
                ln_len,
                in_len: in_dim,
                out_len: out_dim,
                fan_in: in_dim,
            }
        };

        match &spec.kind {
            NetworkKind::Mlp { hidden } => {
                let mut in_dim = spec.input.len();
                for &h in hidden {
                    layers.push(push_dense(in_dim, h, true, spec.layer_norm, &mut off));
                    in_dim = h;
                }
                layers.push(push_dense(in_dim, spec.output_dim, false, false, &mut off));
            }
            NetworkKind::Cnn { conv, dense } => {
                let (mut h, mut w, mut c) = match spec.input {
                    InputShape::Image { h, w, c } => (h, w, c),
                    InputShape::Flat(_) => {
                        return Err(PlabError::Config("cnn requires image input".into()))
                    }
                };
                for cs in conv {
                    if cs.kernel > h || cs.kernel > w || cs.stride == 0 {
                        return Err(PlabError::Config("conv does not fit input".into()));
                    }
                    let out_h = (h - cs.kernel) / cs.stride + 1;
                    let out_w = (w - cs.kernel) / cs.stride + 1;
                    let fan_in = cs.kernel * cs.kernel * c;
                    let w_off = off;
                    let w_len = cs.channels * fan_in;
                    let b_off = w_off + w_len;
                    let b_len = cs.channels;
                    let mut g_off = 0;
                    let mut s_off = 0;
                    let mut ln_len = 0;
                    let mut end = b_off + b_len;
                    if spec.layer_norm {
                        g_off = end;
                        s_off = end + cs.channels;
                        ln_len = cs.channels;
                        end += 2 * cs.channels;
                    }
                    off = end;
                    layers.push(LayerInfo {
                        kind: LayerKind::Conv {
                            in_h: h,
                            in_w: w,
                            in_c: c,
                            kernel: cs.kernel,
                            out_c: cs.channels,
                            stride: cs.stride,
                            out_h,
                            out_w,
                        },
                        relu: true,
                        layer_norm: spec.layer_norm,
                        w_off,
                        w_len,
                        b_off,
                        b_len,
                        g_off,
                        s_off,
                        ln_len,
                        in_len: h * w * c,
                        out_len: out_h * out_w * cs.channels,
                        fan_in,
                    });
                    h = out_h;
                    w = out_w;
                    c = cs.channels;
                }
                let mut in_dim = h * w * c;
                for &d in dense {
                    layers.push(push_dense(in_dim, d, true, spec.layer_norm, &mut off));
                    in_dim = d;
                }
                layers.push(push_dense(in_dim, spec.output_dim, false, false, &mut off));
            }
        }

        Ok(Layout {
            total: off,
            input_len: spec.input.len(),
            output_len: spec.output_dim,
            layers,
        })
    }

    /// Index of the final (output) layer.
    pub fn last(&self) -> &LayerInfo {
        self.layers.last().expect("layout has at least one layer")
    }
}

/// Flat parameter vector; the layout map lives on the [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
}

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Self {
        ParamVector { data }
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// A batch of inputs with whatever supervision the active loss needs.
///
/// `inputs` is row-major `n x input_len` with pixel values in `[0, 1]`.
/// `actions` selects one output (or one bin group) per row; `targets` is
/// interpreted by the [`LossSpec`] in use.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub n: usize,
    pub actions: Option<Vec<usize>>,
    pub targets: Option<Vec<f64>>,
}

impl Batch {
    pub fn from_inputs(inputs: Vec<f64>, n: usize) -> Self {
        Batch {
            inputs,
            n,
            actions: None,
            targets: None,
        }
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let len = self.inputs.len() / self.n;
        &self.inputs[i * len..(i + 1) * len]
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.n == 0 {
            return Err(PlabError::Input("batch must be non-empty".into()));
        }
        if self.inputs.len() != self.n * spec.input.len() {
            return Err(PlabError::Input(format!(
                "batch inputs have {} values, expected {} ({} rows x input {})",
                self.inputs.len(),
                self.n * spec.input.len(),
                self.n,
                spec.input.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_param_count_matches_closed_form() {
        // 784*512+512 + 512*512+512 + 512*10+10
        let spec = NetworkSpec::default_mlp(784, 10);
        assert_eq!(spec.param_count(), 669_706);
    }

    #[test]
    fn empty_hidden_mlp_is_a_linear_map() {
        let spec = NetworkSpec::mlp(3, &[], 2);
        assert_eq!(spec.param_count(), 3 * 2 + 2);
        let layout = spec.layout().unwrap();
        assert_eq!(layout.layers.len(), 1);
        assert!(!layout.layers[0].relu);
    }

    #[test]
    fn layer_norm_adds_scale_and_shift_params() {
        let mut spec = NetworkSpec::mlp(4, &[8], 2);
        let base = spec.param_count();
        spec.layer_norm = true;
        assert_eq!(spec.param_count(), base + 2 * 8);
    }

    #[test]
    fn cnn_layout_dims() {
        let spec = NetworkSpec::default_cnn(28, 28, 1, 10);
        let layout = spec.layout().unwrap();
        // 28 -> (28-5)/2+1 = 12 -> (12-3)/2+1 = 5
        match layout.layers[1].kind {
            LayerKind::Conv { out_h, out_w, .. } => {
                assert_eq!((out_h, out_w), (5, 5));
            }
            _ => panic!("expected conv"),
        }
        assert_eq!(layout.layers[2].in_len, 5 * 5 * 64);
        assert_eq!(layout.output_len, 10);
    }

    #[test]
    fn zero_width_rejected() {
        let spec = NetworkSpec::mlp(4, &[0], 2);
        assert!(matches!(spec.validate(), Err(PlabError::Config(_))));
        let spec = NetworkSpec::mlp(4, &[3], 0);
        assert!(matches!(spec.validate(), Err(PlabError::Config(_))));
    }
}
