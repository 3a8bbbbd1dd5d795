//! Voxel-height statistics and height-interval pooling.
//!
//! Voxel features `[C, Z, H, W]` are pooled over the z slices whose centers
//! fall in a height interval, giving one BEV map per interval. The maps are
//! then aggregated by two summed pathways: a 1×1 projection, and a per-site
//! linear layer followed by a 3×3 convolution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::feature::{shape_mismatch, Conv3x3, FeatureError, FeatureGrid, Linear};
use crate::tensor_file::TensorBundle;
use crate::voxelizer::{GridSpec, LdoGrid};

/// Bins beyond this count are refused.
const MAX_HISTOGRAM_BINS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeightError {
    #[error("bin size must be finite and > 0, got {0}")]
    BadBinSize(f64),
    #[error("bin size {0} yields too many bins")]
    TooManyBins(f64),
    #[error("height interval [{z_min}, {z_max}) must be finite with z_min < z_max")]
    BadInterval { z_min: f64, z_max: f64 },
    #[error("height interval set is empty")]
    NoIntervals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    /// Base layer: low objects such as road, cones, vegetation.
    #[serde(rename = "BL")]
    Base,
    /// Universal layer: most traffic participants.
    #[serde(rename = "UL")]
    Universal,
    /// Extended focus layer: wide-range bands for rarer large objects.
    #[serde(rename = "EFL")]
    ExtendedFocus,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Base, Layer::Universal, Layer::ExtendedFocus];

    pub fn tag(self) -> &'static str {
        match self {
            Layer::Base => "BL",
            Layer::Universal => "UL",
            Layer::ExtendedFocus => "EFL",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightInterval {
    pub z_min: f64,
    pub z_max: f64,
    pub layer: Layer,
}

impl HeightInterval {
    pub fn new(z_min: f64, z_max: f64, layer: Layer) -> Result<Self, HeightError> {
        if !(z_min.is_finite() && z_max.is_finite() && z_min < z_max) {
            return Err(HeightError::BadInterval { z_min, z_max });
        }
        Ok(Self { z_min, z_max, layer })
    }

    /// Half-open membership `[z_min, z_max)`.
    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_min && z < self.z_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightIntervalSet {
    intervals: Vec<HeightInterval>,
}

impl HeightIntervalSet {
    pub fn new(intervals: Vec<HeightInterval>) -> Result<Self, HeightError> {
        if intervals.is_empty() {
            return Err(HeightError::NoIntervals);
        }
        for iv in &intervals {
            HeightInterval::new(iv.z_min, iv.z_max, iv.layer)?;
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[HeightInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn layer(&self, layer: Layer) -> impl Iterator<Item = &HeightInterval> {
        self.intervals.iter().filter(move |iv| iv.layer == layer)
    }
}

impl Default for HeightIntervalSet {
    /// The eight default heights of interest, meters.
    fn default() -> Self {
        use Layer::*;
        let table = [
            (-3.0, -2.0, Base),
            (-2.0, -1.0, Base),
            (-1.0, 0.0, Base),
            (0.0, 2.0, Base),
            (-5.0, 3.0, Universal),
            (-4.0, 2.0, ExtendedFocus),
            (-6.0, -4.0, ExtendedFocus),
            (-2.0, 1.0, Universal),
        ];
        Self {
            intervals: table
                .into_iter()
                .map(|(z_min, z_max, layer)| HeightInterval { z_min, z_max, layer })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightHistogram {
    pub bins: Vec<HeightBin>,
}

impl fmt::Display for HeightHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bins {
            writeln!(f, "[{:.3}, {:.3}) {}", b.lower, b.upper, b.count)?;
        }
        Ok(())
    }
}

/// Number of occupied voxels per height bin, bins of `bin_size` starting at
/// the grid's lower z bound. A voxel counts in the bin holding its slice center.
pub fn height_histogram(grid: &LdoGrid, bin_size: f64) -> Result<HeightHistogram, HeightError> {
    if !(bin_size.is_finite() && bin_size > 0.0) {
        return Err(HeightError::BadBinSize(bin_size));
    }
    let spec = grid.spec();
    let (z_lo, z_hi) = (spec.min()[2], spec.max()[2]);
    let span = (z_hi - z_lo) / bin_size;
    if span > MAX_HISTOGRAM_BINS as f64 {
        return Err(HeightError::TooManyBins(bin_size));
    }
    let n_bins = ((span - 1e-9).ceil() as usize).max(1);
    let mut per_slice = vec![0u64; spec.dims()[2]];
    for (index, _, _) in grid.occupied() {
        per_slice[spec.unravel(index)[2]] += 1;
    }
    let mut bins: Vec<HeightBin> = (0..n_bins)
        .map(|b| HeightBin {
            lower: z_lo + b as f64 * bin_size,
            upper: (z_lo + (b + 1) as f64 * bin_size).min(z_hi),
            count: 0,
        })
        .collect();
    for (k, count) in per_slice.into_iter().enumerate() {
        let b = ((spec.slice_center_z(k) - z_lo) / bin_size).floor() as usize;
        bins[b.min(n_bins - 1)].count += count;
    }
    Ok(HeightHistogram { bins })
}

/// Occupied voxels whose slice center lies in some interval of each layer.
pub fn layer_coverage(grid: &LdoGrid, intervals: &HeightIntervalSet) -> Vec<(Layer, u64)> {
    let spec = grid.spec();
    let mut per_slice = vec![0u64; spec.dims()[2]];
    for (index, _, _) in grid.occupied() {
        per_slice[spec.unravel(index)[2]] += 1;
    }
    Layer::ALL
        .iter()
        .map(|&layer| {
            let covered = per_slice
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let z = spec.slice_center_z(*k);
                    intervals.layer(layer).any(|iv| iv.contains(z))
                })
                .map(|(_, c)| c)
                .sum();
            (layer, covered)
        })
        .collect()
}

/// How the selected z slices are reduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolReduction {
    #[default]
    Sum,
    Mean,
    Max,
}

fn check_voxel_features(f_v: &FeatureGrid) -> Result<[usize; 4], FeatureError> {
    f_v.expect_rank("voxel features [C, Z, H, W]", 4)?;
    let d = f_v.dims();
    Ok([d[0], d[1], d[2], d[3]])
}

/// Reduces the given z slices of `[C, Z, H, W]` into `[C, H, W]`, accumulating in slice order.
fn pool_slices(f_v: &FeatureGrid, slices: &[usize], reduction: PoolReduction) -> FeatureGrid {
    let [c, z, h, w] = [f_v.dims()[0], f_v.dims()[1], f_v.dims()[2], f_v.dims()[3]];
    let hw = h * w;
    let src = f_v.data();
    let mut out = vec![0.0f32; c * hw];
    for ch in 0..c {
        let dst = &mut out[ch * hw..(ch + 1) * hw];
        let slice = |k: usize| &src[(ch * z + k) * hw..(ch * z + k + 1) * hw];
        dst.copy_from_slice(slice(slices[0]));
        for &k in &slices[1..] {
            for (d, s) in dst.iter_mut().zip(slice(k)) {
                match reduction {
                    PoolReduction::Sum | PoolReduction::Mean => *d += s,
                    PoolReduction::Max => *d = d.max(*s),
                }
            }
        }
        if reduction == PoolReduction::Mean {
            let n = slices.len() as f32;
            dst.iter_mut().for_each(|d| *d /= n);
        }
    }
    FeatureGrid::new(vec![c, h, w], out).expect("pooled shape matches")
}

/// Indices of the z slices whose centers lie in `[z_min, z_max)`.
pub fn slices_in_interval(spec: &GridSpec, z_min: f64, z_max: f64) -> Vec<usize> {
    (0..spec.dims()[2])
        .filter(|&k| {
            let c = spec.slice_center_z(k);
            c >= z_min && c < z_max
        })
        .collect()
}

/// Pools `f_v` over one height interval.
pub fn vhs_pool(
    f_v: &FeatureGrid,
    interval: (f64, f64),
    spec: &GridSpec,
    reduction: PoolReduction,
) -> Result<FeatureGrid, FeatureError> {
    let [_, z, _, _] = check_voxel_features(f_v)?;
    if z != spec.dims()[2] {
        return Err(shape_mismatch("z slices vs grid", &[spec.dims()[2]], &[z]));
    }
    let slices = slices_in_interval(spec, interval.0, interval.1);
    if slices.is_empty() {
        return Err(FeatureError::EmptyInterval {
            z_min: interval.0,
            z_max: interval.1,
        });
    }
    Ok(pool_slices(f_v, &slices, reduction))
}

/// Collapses every z slice by summation.
pub fn global_pool(f_v: &FeatureGrid) -> Result<FeatureGrid, FeatureError> {
    let [_, z, _, _] = check_voxel_features(f_v)?;
    if z == 0 {
        return Err(shape_mismatch("z slices", &[1], &[0]));
    }
    Ok(pool_slices(f_v, &(0..z).collect::<Vec<_>>(), PoolReduction::Sum))
}

/// One pooled map per interval of `set`, in order.
pub fn vhs_pool_all(
    f_v: &FeatureGrid,
    set: &HeightIntervalSet,
    spec: &GridSpec,
    reduction: PoolReduction,
) -> Result<Vec<FeatureGrid>, FeatureError> {
    set.intervals()
        .iter()
        .map(|iv| vhs_pool(f_v, (iv.z_min, iv.z_max), spec, reduction))
        .collect()
}

/// Parameters of the two aggregation pathways over `L` pooled maps of `C'` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationParams {
    /// `(L·C') → C'` projection at each site.
    pub path1: Linear,
    /// `(L·C') → C'` per-site linear layer.
    pub path2_linear: Linear,
    /// `C' → C'` 3×3 convolution.
    pub path2_conv: Conv3x3,
}

impl AggregationParams {
    pub fn new(path1: Linear, path2_linear: Linear, path2_conv: Conv3x3) -> Result<Self, FeatureError> {
        let c = path1.outputs();
        let lc = path1.inputs();
        if c == 0 || lc % c != 0 || lc == 0 {
            return Err(shape_mismatch("path1 [L*C', C']", &[c, c], &[lc, c]));
        }
        if path2_linear.inputs() != lc || path2_linear.outputs() != c {
            return Err(shape_mismatch(
                "path2 linear",
                &[lc, c],
                &[path2_linear.inputs(), path2_linear.outputs()],
            ));
        }
        if path2_conv.inputs() != c || path2_conv.outputs() != c {
            return Err(shape_mismatch(
                "path2 conv",
                &[c, c],
                &[path2_conv.outputs(), path2_conv.inputs()],
            ));
        }
        Ok(Self {
            path1,
            path2_linear,
            path2_conv,
        })
    }

    pub fn zeros(levels: usize, channels: usize) -> Self {
        Self {
            path1: Linear::zeros(levels * channels, channels),
            path2_linear: Linear::zeros(levels * channels, channels),
            path2_conv: Conv3x3::zeros(channels, channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.path1.outputs()
    }

    pub fn levels(&self) -> usize {
        self.path1.inputs() / self.path1.outputs()
    }

    pub fn from_bundle(bundle: &TensorBundle, prefix: &str) -> Result<Self, FeatureError> {
        let linear = |name: &str| {
            Linear::new(
                bundle.get(&format!("{prefix}{name}.weight"))?.clone(),
                bundle.vector(&format!("{prefix}{name}.bias"))?,
            )
        };
        let conv = Conv3x3::new(
            bundle.get(&format!("{prefix}path2.conv.weight"))?.clone(),
            bundle.vector(&format!("{prefix}path2.conv.bias"))?,
        )?;
        Self::new(linear("path1")?, linear("path2.linear")?, conv)
    }

    pub fn write_to(&self, bundle: &mut TensorBundle, prefix: &str) {
        let bias = |b: &[f32]| FeatureGrid::new(vec![b.len()], b.to_vec()).expect("finite bias");
        bundle.insert(format!("{prefix}path1.weight"), self.path1.weight.clone());
        bundle.insert(format!("{prefix}path1.bias"), bias(&self.path1.bias));
        bundle.insert(format!("{prefix}path2.linear.weight"), self.path2_linear.weight.clone());
        bundle.insert(format!("{prefix}path2.linear.bias"), bias(&self.path2_linear.bias));
        bundle.insert(format!("{prefix}path2.conv.weight"), self.path2_conv.weight.clone());
        bundle.insert(format!("{prefix}path2.conv.bias"), bias(&self.path2_conv.bias));
    }
}

/// Concatenates `L` pooled maps along channels and sums the two pathways.
pub fn vhs_aggregate(
    pooled: &[FeatureGrid],
    params: &AggregationParams,
) -> Result<FeatureGrid, FeatureError> {
    let levels = params.levels();
    let c = params.channels();
    if pooled.len() != levels {
        return Err(shape_mismatch("pooled map count", &[levels], &[pooled.len()]));
    }
    pooled[0].expect_rank("pooled map [C', H', W']", 3)?;
    let (h, w) = (pooled[0].dims()[1], pooled[0].dims()[2]);
    let mut cat = Vec::with_capacity(levels * c * h * w);
    for p in pooled {
        p.expect_dims("pooled map [C', H', W']", &[c, h, w])?;
        cat.extend_from_slice(p.data());
    }
    let cat = FeatureGrid::new(vec![levels * c, h, w], cat)?;
    let path1 = params.path1.forward_sites(&cat)?;
    let path2 = params.path2_conv.forward(&params.path2_linear.forward_sites(&cat)?)?;
    let sum = path1
        .data()
        .iter()
        .zip(path2.data())
        .map(|(a, b)| a + b)
        .collect();
    FeatureGrid::new(vec![c, h, w], sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_z(z: usize) -> GridSpec {
        GridSpec::new([0.0, 0.0, -2.0], [2.0, 2.0, -2.0 + z as f64], [1.0; 3]).unwrap()
    }

    fn features(c: usize, z: usize, h: usize, w: usize) -> FeatureGrid {
        FeatureGrid::from_fn(vec![c, z, h, w], |i| ((i * 37 % 101) as f32 - 50.0) / 8.0)
    }

    #[test]
    fn default_intervals_table() {
        let d = HeightIntervalSet::default();
        assert_eq!(d.len(), 8);
        let bl: Vec<_> = d.layer(Layer::Base).map(|i| (i.z_min, i.z_max)).collect();
        assert_eq!(bl, [(-3.0, -2.0), (-2.0, -1.0), (-1.0, 0.0), (0.0, 2.0)]);
        let ul: Vec<_> = d.layer(Layer::Universal).map(|i| (i.z_min, i.z_max)).collect();
        assert_eq!(ul, [(-5.0, 3.0), (-2.0, 1.0)]);
        let efl: Vec<_> = d.layer(Layer::ExtendedFocus).map(|i| (i.z_min, i.z_max)).collect();
        assert_eq!(efl, [(-4.0, 2.0), (-6.0, -4.0)]);
    }

    #[test]
    fn every_default_interval_hits_the_base_grid() {
        let spec = GridSpec::base();
        for iv in HeightIntervalSet::default().intervals() {
            assert!(!slices_in_interval(&spec, iv.z_min, iv.z_max).is_empty(), "{iv:?}");
        }
    }

    #[test]
    fn empty_grid_histogram() {
        let g = LdoGrid::empty(GridSpec::base());
        let h = height_histogram(&g, 0.5).unwrap();
        assert_eq!(h.bins.len(), 16);
        assert!(h.bins.iter().all(|b| b.count == 0));
        assert!(height_histogram(&g, 0.0).is_err());
        assert!(height_histogram(&g, 1e-300).is_err());
    }

    #[test]
    fn single_voxel_histogram() {
        let spec = GridSpec::base();
        let mut labels = vec![0u16; spec.voxel_count()];
        let mut weights = vec![0f32; spec.voxel_count()];
        let i = spec.linear_index([3, 4, 0]);
        labels[i] = 2;
        weights[i] = 1.0;
        let g = LdoGrid::from_parts(spec, labels, weights).unwrap();
        let h = height_histogram(&g, 0.5).unwrap();
        // Slice 0 center is -4.6 m, bin [-5.0, -4.5).
        let nz: Vec<_> = h.bins.iter().enumerate().filter(|(_, b)| b.count > 0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0, 0);
        assert_eq!(nz[0].1.count, 1);
    }

    #[test]
    fn full_interval_equals_global_pool() {
        let spec = spec_z(5);
        let f = features(3, 5, 2, 2);
        let a = vhs_pool(&f, (-2.0, 3.0), &spec, PoolReduction::Sum).unwrap();
        assert_eq!(a, global_pool(&f).unwrap());
    }

    #[test]
    fn single_slice_is_verbatim() {
        let spec = spec_z(4);
        let f = features(2, 4, 3, 2);
        let p = vhs_pool(&f, (0.0, 1.0), &spec, PoolReduction::Sum).unwrap();
        // Slice centers are -1.5, -0.5, 0.5, 1.5; only slice 2 is selected.
        for c in 0..2 {
            for y in 0..3 {
                for x in 0..2 {
                    assert_eq!(p.get(&[c, y, x]).to_bits(), f.get(&[c, 2, y, x]).to_bits());
                }
            }
        }
    }

    #[test]
    fn pool_errors() {
        let spec = spec_z(4);
        let f = features(2, 4, 3, 2);
        assert!(matches!(
            vhs_pool(&f, (10.0, 11.0), &spec, PoolReduction::Sum),
            Err(FeatureError::EmptyInterval { .. })
        ));
        assert!(vhs_pool(&features(2, 3, 3, 2), (-2.0, 2.0), &spec, PoolReduction::Sum).is_err());
    }

    #[test]
    fn mean_and_max_reductions() {
        let spec = spec_z(2);
        let f = FeatureGrid::new(vec![1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let mean = vhs_pool(&f, (-2.0, 0.0), &spec, PoolReduction::Mean).unwrap();
        let max = vhs_pool(&f, (-2.0, 0.0), &spec, PoolReduction::Max).unwrap();
        assert_eq!(mean.data(), &[2.0]);
        assert_eq!(max.data(), &[3.0]);
    }

    #[test]
    fn aggregate_zero_params_is_zero() {
        let params = AggregationParams::zeros(2, 3);
        let pooled = vec![features(3, 1, 4, 4).reshaped(vec![3, 4, 4]).unwrap(); 2];
        let out = vhs_aggregate(&pooled, &params).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn aggregate_identity_projection() {
        let params = AggregationParams::new(
            Linear::identity(3),
            Linear::zeros(3, 3),
            Conv3x3::zeros(3, 3),
        )
        .unwrap();
        let x = features(3, 1, 4, 4).reshaped(vec![3, 4, 4]).unwrap();
        assert_eq!(vhs_aggregate(std::slice::from_ref(&x), &params).unwrap(), x);
        assert!(vhs_aggregate(&[x.clone(), x], &params).is_err());
    }

    #[test]
    fn params_round_trip_through_bundle() {
        let mut p = AggregationParams::zeros(2, 2);
        p.path1.bias = vec![1.0, -1.0];
        let mut bundle = TensorBundle::new();
        p.write_to(&mut bundle, "vhs.");
        assert_eq!(AggregationParams::from_bundle(&bundle, "vhs.").unwrap(), p);
        assert!(AggregationParams::from_bundle(&bundle, "other.").is_err());
    }
}
