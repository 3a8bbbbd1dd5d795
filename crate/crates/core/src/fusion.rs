//! Reference forward passes for global-local feature fusion, the
//! channel-to-height transform, and the density-weighted occupancy loss.
//!
//! Nothing here trains: parameters are inputs, and every operation is a
//! plain deterministic evaluation.

use crate::feature::{shape_mismatch, Conv3x3, FeatureError, FeatureGrid, Linear};
use crate::tensor_file::TensorBundle;
use crate::voxelizer::LdoGrid;
use crate::EMPTY;

/// Default weight of the occupancy term.
pub const DEFAULT_BETA: f64 = 0.9;

/// Probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-voxel probability sums must be within this of one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-5;

/// Gate values are kept strictly inside `(0, 1)`.
const ALPHA_MIN: f64 = f64::MIN_POSITIVE;
const ALPHA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Conv, then avg- and max-pooled channel descriptors through a shared two-layer MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextParams {
    pub pre_conv: Conv3x3,
    /// `C' → C_h`.
    pub mlp_hidden: Linear,
    /// `C_h → C'`.
    pub mlp_out: Linear,
}

impl ContextParams {
    pub fn new(pre_conv: Conv3x3, mlp_hidden: Linear, mlp_out: Linear) -> Result<Self, FeatureError> {
        let c = pre_conv.outputs();
        if pre_conv.inputs() != c {
            return Err(shape_mismatch("context conv", &[c, c], &[c, pre_conv.inputs()]));
        }
        if mlp_hidden.inputs() != c || mlp_out.inputs() != mlp_hidden.outputs() || mlp_out.outputs() != c {
            return Err(shape_mismatch(
                "context mlp [C', C_h] x [C_h, C']",
                &[c, mlp_hidden.outputs(), mlp_hidden.outputs(), c],
                &[mlp_hidden.inputs(), mlp_hidden.outputs(), mlp_out.inputs(), mlp_out.outputs()],
            ));
        }
        Ok(Self {
            pre_conv,
            mlp_hidden,
            mlp_out,
        })
    }

    pub fn zeros(channels: usize, hidden: usize) -> Self {
        Self {
            pre_conv: Conv3x3::zeros(channels, channels),
            mlp_hidden: Linear::zeros(channels, hidden),
            mlp_out: Linear::zeros(hidden, channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.pre_conv.outputs()
    }

    fn mlp(&self, v: &[f32]) -> Result<Vec<f32>, FeatureError> {
        let hidden: Vec<f32> = self
            .mlp_hidden
            .forward_vec(v)?
            .into_iter()
            .map(|h| h.max(0.0))
            .collect();
        self.mlp_out.forward_vec(&hidden)
    }

    pub fn from_bundle(bundle: &TensorBundle, prefix: &str) -> Result<Self, FeatureError> {
        let w = |n: &str| bundle.get(&format!("{prefix}{n}.weight")).cloned();
        let b = |n: &str| bundle.vector(&format!("{prefix}{n}.bias"));
        Self::new(
            Conv3x3::new(w("pre_conv")?, b("pre_conv")?)?,
            Linear::new(w("mlp.0")?, b("mlp.0")?)?,
            Linear::new(w("mlp.1")?, b("mlp.1")?)?,
        )
    }

    pub fn write_to(&self, bundle: &mut TensorBundle, prefix: &str) {
        write_layer(bundle, &format!("{prefix}pre_conv"), &self.pre_conv.weight, &self.pre_conv.bias);
        write_layer(bundle, &format!("{prefix}mlp.0"), &self.mlp_hidden.weight, &self.mlp_hidden.bias);
        write_layer(bundle, &format!("{prefix}mlp.1"), &self.mlp_out.weight, &self.mlp_out.bias);
    }
}

fn write_layer(bundle: &mut TensorBundle, name: &str, weight: &FeatureGrid, bias: &[f32]) {
    bundle.insert(format!("{name}.weight"), weight.clone());
    bundle.insert(
        format!("{name}.bias"),
        FeatureGrid::new(vec![bias.len()], bias.to_vec()).expect("finite bias"),
    );
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub ctx_local: ContextParams,
    pub ctx_global: ContextParams,
    pub conv_g: Conv3x3,
    pub conv_l: Conv3x3,
}

impl FusionParams {
    pub fn new(
        ctx_local: ContextParams,
        ctx_global: ContextParams,
        conv_g: Conv3x3,
        conv_l: Conv3x3,
    ) -> Result<Self, FeatureError> {
        let c = ctx_local.channels();
        for (what, got) in [
            ("global context channels", ctx_global.channels()),
            ("conv_g outputs", conv_g.outputs()),
            ("conv_g inputs", conv_g.inputs()),
            ("conv_l outputs", conv_l.outputs()),
            ("conv_l inputs", conv_l.inputs()),
        ] {
            if got != c {
                return Err(shape_mismatch(what, &[c], &[got]));
            }
        }
        Ok(Self {
            ctx_local,
            ctx_global,
            conv_g,
            conv_l,
        })
    }

    pub fn from_bundle(bundle: &TensorBundle, prefix: &str) -> Result<Self, FeatureError> {
        let conv = |n: &str| {
            Conv3x3::new(
                bundle.get(&format!("{prefix}{n}.weight"))?.clone(),
                bundle.vector(&format!("{prefix}{n}.bias"))?,
            )
        };
        Self::new(
            ContextParams::from_bundle(bundle, &format!("{prefix}ctx_local."))?,
            ContextParams::from_bundle(bundle, &format!("{prefix}ctx_global."))?,
            conv("conv_g")?,
            conv("conv_l")?,
        )
    }

    pub fn write_to(&self, bundle: &mut TensorBundle, prefix: &str) {
        self.ctx_local.write_to(bundle, &format!("{prefix}ctx_local."));
        self.ctx_global.write_to(bundle, &format!("{prefix}ctx_global."));
        write_layer(bundle, &format!("{prefix}conv_g"), &self.conv_g.weight, &self.conv_g.bias);
        write_layer(bundle, &format!("{prefix}conv_l"), &self.conv_l.weight, &self.conv_l.bias);
    }
}

/// Channel descriptor of a `[C', H', W']` map: `MLP(avg(conv f)) + MLP(max(conv f))`.
pub fn context_distill(f: &FeatureGrid, p: &ContextParams) -> Result<Vec<f32>, FeatureError> {
    f.expect_rank("context input [C', H', W']", 3)?;
    let hw = f.dims()[1] * f.dims()[2];
    if hw == 0 {
        return Err(shape_mismatch("context spatial size", &[1], &[0]));
    }
    let g = p.pre_conv.forward(f)?;
    let (avg, max): (Vec<f32>, Vec<f32>) = g
        .data()
        .chunks_exact(hw)
        .map(|plane| {
            let sum: f64 = plane.iter().map(|&v| v as f64).sum();
            let max = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            ((sum / hw as f64) as f32, max)
        })
        .unzip();
    let a = p.mlp(&avg)?;
    let m = p.mlp(&max)?;
    Ok(a.iter().zip(&m).map(|(x, y)| x + y).collect())
}

/// Elementwise `sigmoid(c_l + c_g)`, kept strictly inside `(0, 1)`.
pub fn gate_alpha(c_l: &[f32], c_g: &[f32]) -> Result<Vec<f64>, FeatureError> {
    if c_l.len() != c_g.len() {
        return Err(shape_mismatch("gate inputs", &[c_l.len()], &[c_g.len()]));
    }
    Ok(c_l
        .iter()
        .zip(c_g)
        .map(|(&l, &g)| {
            let s = 1.0 / (1.0 + (-(l as f64 + g as f64)).exp());
            s.clamp(ALPHA_MIN, ALPHA_MAX)
        })
        .collect())
}

/// `α ⊙ conv_g(f_g) + (1 − α) ⊙ conv_l(f_l)` with one α per channel.
pub fn cff_fuse(f_g: &FeatureGrid, f_l: &FeatureGrid, p: &FusionParams) -> Result<FeatureGrid, FeatureError> {
    f_g.expect_rank("global features [C', H', W']", 3)?;
    f_l.expect_dims("local features", f_g.dims())?;
    let c_l = context_distill(f_l, &p.ctx_local)?;
    let c_g = context_distill(f_g, &p.ctx_global)?;
    let alpha = gate_alpha(&c_l, &c_g)?;
    let g = p.conv_g.forward(f_g)?;
    let l = p.conv_l.forward(f_l)?;
    let hw = f_g.dims()[1] * f_g.dims()[2];
    let fused = g
        .data()
        .iter()
        .zip(l.data())
        .enumerate()
        .map(|(i, (&gv, &lv))| {
            let a = alpha[i / hw];
            (a * gv as f64 + (1.0 - a) * lv as f64) as f32
        })
        .collect();
    FeatureGrid::new(f_g.dims().to_vec(), fused)
}

/// `[C', H', W'] → [C'', Z, H', W']` with `output[c, k, h, w] = input[c·Z + k, h, w]`.
pub fn c2h(f: FeatureGrid, z: usize, c_out: usize) -> Result<FeatureGrid, FeatureError> {
    f.expect_rank("BEV features [C', H', W']", 3)?;
    let channels = f.dims()[0];
    if z == 0 || c_out.checked_mul(z) != Some(channels) {
        return Err(FeatureError::IndivisibleChannels { channels, z, c_out });
    }
    let (h, w) = (f.dims()[1], f.dims()[2]);
    // Channel c·Z + k starts at ((c·Z + k)·H + h)·W + w, the same flat offset as [c, k, h, w].
    f.reshaped(vec![c_out, z, h, w])
}

/// Inverse of [`c2h`]: `[C'', Z, H', W'] → [C''·Z, H', W']`.
pub fn h2c(f: FeatureGrid) -> Result<FeatureGrid, FeatureError> {
    f.expect_rank("voxel features [C'', Z, H', W']", 4)?;
    let d = f.dims().to_vec();
    f.reshaped(vec![d[0] * d[1], d[2], d[3]])
}

/// Density-weighted cross-entropy of class probabilities `[M, H, W, Z]` against
/// the ground-truth grid, scaled by `beta`.
///
/// Occupied voxels weigh their ground-truth weight; empty voxels weigh 1 and
/// are scored against class `EMPTY`. The sum is normalized by the total weight.
pub fn weighted_occ_loss(pred: &FeatureGrid<f64>, gt: &LdoGrid, beta: f64) -> Result<f64, FeatureError> {
    pred.expect_rank("probabilities [M, H, W, Z]", 4)?;
    let [h, w, z] = gt.dims();
    let m = pred.dims()[0];
    if pred.dims()[1..] != [h, w, z] {
        return Err(shape_mismatch("probability grid", &[m, h, w, z], pred.dims()));
    }
    let voxels = h * w * z;
    let probs = pred.data();
    let mut weighted = 0.0f64;
    let mut total = 0.0f64;
    for (v, (&label, &weight)) in gt.labels().iter().zip(gt.weights()).enumerate() {
        let sum: f64 = (0..m).map(|c| probs[c * voxels + v]).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(FeatureError::NotNormalized { voxel: v, sum });
        }
        if label as usize >= m {
            return Err(shape_mismatch("class count covering ground-truth labels", &[label as usize + 1], &[m]));
        }
        let wv = if label == EMPTY { 1.0 } else { weight as f64 };
        let p = probs[label as usize * voxels + v];
        weighted += wv * -p.max(LOG_FLOOR).ln();
        total += wv;
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(beta * weighted / total)
}
