//! Dense row-major tensors and the small layers the reference forward passes use.

use std::fmt::Debug;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{what} holds a non-finite value at flat index {index}")]
    NonFinite { what: String, index: usize },
    #[error("no slice center of the grid lies in [{z_min}, {z_max})")]
    EmptyInterval { z_min: f64, z_max: f64 },
    #[error("{channels} channels cannot be split into {z} height slices of {c_out} channels")]
    IndivisibleChannels {
        channels: usize,
        z: usize,
        c_out: usize,
    },
    #[error("probabilities at voxel {voxel} sum to {sum}, not 1")]
    NotNormalized { voxel: usize, sum: f64 },
    #[error("tensor {0:?} missing from parameter bundle")]
    MissingTensor(String),
}

pub(crate) fn shape_mismatch(what: impl Into<String>, expected: &[usize], found: &[usize]) -> FeatureError {
    FeatureError::ShapeMismatch {
        what: what.into(),
        expected: expected.to_vec(),
        found: found.to_vec(),
    }
}

/// Scalar types a [`FeatureGrid`] can hold.
pub trait Element: Copy + Default + PartialEq + Debug + Send + Sync + 'static {
    fn is_finite(self) -> bool;
}

impl Element for f32 {
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Element for f64 {
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// An n-dimensional array of finite values, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> FeatureGrid<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self, FeatureError> {
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(shape_mismatch("data length", &[n], &[data.len()]));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                what: "feature grid".into(),
                index,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![T::default(); n],
        }
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    /// Same data under new dims with the same element count.
    pub fn reshaped(self, dims: Vec<usize>) -> Result<Self, FeatureError> {
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(shape_mismatch("reshape", &self.dims, &dims));
        }
        Ok(Self {
            dims,
            data: self.data,
        })
    }

    pub(crate) fn expect_rank(&self, what: &str, rank: usize) -> Result<(), FeatureError> {
        if self.rank() != rank {
            return Err(FeatureError::ShapeMismatch {
                what: format!("{what} rank"),
                expected: vec![rank],
                found: vec![self.rank()],
            });
        }
        Ok(())
    }

    pub(crate) fn expect_dims(&self, what: &str, dims: &[usize]) -> Result<(), FeatureError> {
        if self.dims != dims {
            return Err(shape_mismatch(what, dims, &self.dims));
        }
        Ok(())
    }
}

impl FeatureGrid<f32> {
    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Fully connected layer, weight stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: FeatureGrid,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn new(weight: FeatureGrid, bias: Vec<f32>) -> Result<Self, FeatureError> {
        weight.expect_rank("linear weight", 2)?;
        if bias.len() != weight.dims()[1] {
            return Err(shape_mismatch("linear bias", &[weight.dims()[1]], &[bias.len()]));
        }
        if let Some(index) = bias.iter().position(|b| !b.is_finite()) {
            return Err(FeatureError::NonFinite {
                what: "linear bias".into(),
                index,
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: FeatureGrid::zeros(vec![inputs, outputs]),
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: FeatureGrid::from_fn(vec![n, n], |i| if i / n == i % n { 1.0 } else { 0.0 }),
            bias: vec![0.0; n],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward_vec(&self, x: &[f32]) -> Result<Vec<f32>, FeatureError> {
        if x.len() != self.inputs() {
            return Err(shape_mismatch("linear input", &[self.inputs()], &[x.len()]));
        }
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let w = self.weight.data();
        Ok((0..n_out)
            .map(|o| {
                (0..n_in).fold(self.bias[o], |acc, i| acc + w[i * n_out + o] * x[i])
            })
            .collect())
    }

    /// Applies the layer at every spatial site of a `[C, H, W]` grid (a 1×1 convolution).
    pub fn forward_sites(&self, x: &FeatureGrid) -> Result<FeatureGrid, FeatureError> {
        x.expect_rank("per-site linear input", 3)?;
        let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        if c != self.inputs() {
            return Err(shape_mismatch("per-site linear channels", &[self.inputs()], &[c]));
        }
        let hw = h * w;
        let n_out = self.outputs();
        let wt = self.weight.data();
        let src = x.data();
        let mut out = vec![0.0f32; n_out * hw];
        for o in 0..n_out {
            let dst = &mut out[o * hw..(o + 1) * hw];
            dst.fill(self.bias[o]);
            for i in 0..c {
                let k = wt[i * n_out + o];
                for (d, s) in dst.iter_mut().zip(&src[i * hw..(i + 1) * hw]) {
                    *d += k * s;
                }
            }
        }
        Ok(FeatureGrid {
            dims: vec![n_out, h, w],
            data: out,
        })
    }
}

/// 3×3 convolution, stride 1, zero padding 1. Weight stored `[out, in, 3, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub weight: FeatureGrid,
    pub bias: Vec<f32>,
}

impl Conv3x3 {
    pub fn new(weight: FeatureGrid, bias: Vec<f32>) -> Result<Self, FeatureError> {
        weight.expect_rank("conv weight", 4)?;
        let d = weight.dims();
        if d[2] != 3 || d[3] != 3 {
            return Err(shape_mismatch("conv kernel", &[d[0], d[1], 3, 3], d));
        }
        if bias.len() != d[0] {
            return Err(shape_mismatch("conv bias", &[d[0]], &[bias.len()]));
        }
        if let Some(index) = bias.iter().position(|b| !b.is_finite()) {
            return Err(FeatureError::NonFinite {
                what: "conv bias".into(),
                index,
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weight: FeatureGrid::zeros(vec![outputs, inputs, 3, 3]),
            bias: vec![0.0; outputs],
        }
    }

    /// Center tap 1 on the matching channel, zero elsewhere.
    pub fn identity(channels: usize) -> Self {
        let mut conv = Self::zeros(channels, channels);
        for c in 0..channels {
            let at = conv.weight.offset(&[c, c, 1, 1]);
            conv.weight.data[at] = 1.0;
        }
        conv
    }

    pub fn outputs(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &FeatureGrid) -> Result<FeatureGrid, FeatureError> {
        x.expect_rank("conv input", 3)?;
        let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        if c != self.inputs() {
            return Err(shape_mismatch("conv input channels", &[self.inputs()], &[c]));
        }
        let n_out = self.outputs();
        let k = self.weight.data();
        let src = x.data();
        let mut out = vec![0.0f32; n_out * h * w];
        for o in 0..n_out {
            let plane = &mut out[o * h * w..(o + 1) * h * w];
            plane.fill(self.bias[o]);
            for i in 0..c {
                let input = &src[i * h * w..(i + 1) * h * w];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let tap = k[((o * c + i) * 3 + ky) * 3 + kx];
                        if tap == 0.0 {
                            continue;
                        }
                        // Output row y reads input row y + ky - 1.
                        let (y0, y1) = (1usize.saturating_sub(ky), (h + 1).saturating_sub(ky).min(h));
                        let (x0, x1) = (1usize.saturating_sub(kx), (w + 1).saturating_sub(kx).min(w));
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            for xx in x0..x1 {
                                plane[y * w + xx] += tap * input[sy * w + xx + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        Ok(FeatureGrid {
            dims: vec![n_out, h, w],
            data: out,
        })
    }
}
