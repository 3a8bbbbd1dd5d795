//! Nested-loop reference computations, accumulated in f64.
#![allow(dead_code)]

use ldo_core::feature::{Conv3x3, FeatureGrid, Linear};
use ldo_core::fusion::{ContextParams, FusionParams};
use ldo_core::heights::AggregationParams;
use ldo_core::voxelizer::GridSpec;
use rand::rngs::StdRng;
use rand::Rng;

pub type Tensor3 = Vec<Vec<Vec<f64>>>;

pub fn to_nested(f: &FeatureGrid) -> Tensor3 {
    let (c, h, w) = (f.dims()[0], f.dims()[1], f.dims()[2]);
    (0..c)
        .map(|i| (0..h).map(|y| (0..w).map(|x| f.get(&[i, y, x]) as f64).collect()).collect())
        .collect()
}

pub fn random_grid(rng: &mut StdRng, dims: Vec<usize>, scale: f32) -> FeatureGrid {
    FeatureGrid::from_fn(dims, |_| rng.random_range(-scale..scale))
}

/// Values `k / 8` with small `k`, so every partial sum is exact in f32.
pub fn dyadic_grid(rng: &mut StdRng, dims: Vec<usize>) -> FeatureGrid {
    FeatureGrid::from_fn(dims, |_| rng.random_range(-1024i32..=1024) as f32 / 8.0)
}

pub fn random_linear(rng: &mut StdRng, inputs: usize, outputs: usize) -> Linear {
    Linear::new(random_grid(rng, vec![inputs, outputs], 0.5), (0..outputs).map(|_| rng.random_range(-0.2..0.2)).collect())
        .unwrap()
}

pub fn random_conv(rng: &mut StdRng, outputs: usize, inputs: usize) -> Conv3x3 {
    Conv3x3::new(random_grid(rng, vec![outputs, inputs, 3, 3], 0.3), (0..outputs).map(|_| rng.random_range(-0.2..0.2)).collect())
        .unwrap()
}

pub fn random_context(rng: &mut StdRng, c: usize, hidden: usize) -> ContextParams {
    ContextParams::new(random_conv(rng, c, c), random_linear(rng, c, hidden), random_linear(rng, hidden, c)).unwrap()
}

pub fn random_fusion(rng: &mut StdRng, c: usize, hidden: usize) -> FusionParams {
    FusionParams::new(random_context(rng, c, hidden), random_context(rng, c, hidden), random_conv(rng, c, c), random_conv(rng, c, c))
        .unwrap()
}

pub fn conv_ref(conv: &Conv3x3, x: &Tensor3) -> Tensor3 {
    let (cin, h, w) = (x.len(), x[0].len(), x[0][0].len());
    let wt = &conv.weight;
    (0..conv.outputs())
        .map(|o| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|xx| {
                            let mut acc = conv.bias[o] as f64;
                            for i in 0..cin {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let sy = y as isize + ky as isize - 1;
                                        let sx = xx as isize + kx as isize - 1;
                                        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                            continue;
                                        }
                                        acc += wt.get(&[o, i, ky, kx]) as f64 * x[i][sy as usize][sx as usize];
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn linear_vec_ref(l: &Linear, v: &[f64]) -> Vec<f64> {
    (0..l.outputs())
        .map(|o| l.bias[o] as f64 + (0..l.inputs()).map(|i| l.weight.get(&[i, o]) as f64 * v[i]).sum::<f64>())
        .collect()
}

pub fn linear_sites_ref(l: &Linear, x: &Tensor3) -> Tensor3 {
    let (h, w) = (x[0].len(), x[0][0].len());
    (0..l.outputs())
        .map(|o| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|xx| {
                            l.bias[o] as f64 + (0..l.inputs()).map(|i| l.weight.get(&[i, o]) as f64 * x[i][y][xx]).sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn context_ref(p: &ContextParams, x: &Tensor3) -> Vec<f64> {
    let g = conv_ref(&p.pre_conv, x);
    let mlp = |v: &[f64]| {
        let hidden: Vec<f64> = linear_vec_ref(&p.mlp_hidden, v).into_iter().map(|h| h.max(0.0)).collect();
        linear_vec_ref(&p.mlp_out, &hidden)
    };
    let avg: Vec<f64> = g
        .iter()
        .map(|plane| {
            let n = (plane.len() * plane[0].len()) as f64;
            plane.iter().flatten().sum::<f64>() / n
        })
        .collect();
    let max: Vec<f64> = g.iter().map(|plane| plane.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    mlp(&avg).iter().zip(mlp(&max)).map(|(a, b)| a + b).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn cff_ref(p: &FusionParams, g: &Tensor3, l: &Tensor3) -> Tensor3 {
    let cl = context_ref(&p.ctx_local, l);
    let cg = context_ref(&p.ctx_global, g);
    let gg = conv_ref(&p.conv_g, g);
    let ll = conv_ref(&p.conv_l, l);
    (0..gg.len())
        .map(|c| {
            let a = sigmoid(cl[c] + cg[c]);
            (0..gg[c].len())
                .map(|y| (0..gg[c][y].len()).map(|x| a * gg[c][y][x] + (1.0 - a) * ll[c][y][x]).collect())
                .collect()
        })
        .collect()
}

/// Sum over z slices whose centers lie in `[z_min, z_max)`.
pub fn vhs_pool_ref(f: &FeatureGrid, spec: &GridSpec, z_min: f64, z_max: f64) -> Tensor3 {
    let (c, z, h, w) = (f.dims()[0], f.dims()[1], f.dims()[2], f.dims()[3]);
    let mut out = vec![vec![vec![0.0; w]; h]; c];
    for k in 0..z {
        let center = spec.min()[2] + (k as f64 + 0.5) * spec.voxel_size()[2];
        if center < z_min || center >= z_max {
            continue;
        }
        for (i, plane) in out.iter_mut().enumerate() {
            for (y, row) in plane.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v += f.get(&[i, k, y, x]) as f64;
                }
            }
        }
    }
    out
}

pub fn aggregate_ref(pooled: &[Tensor3], p: &AggregationParams) -> Tensor3 {
    let cat: Tensor3 = pooled.iter().flat_map(|t| t.iter().cloned()).collect();
    let a = linear_sites_ref(&p.path1, &cat);
    let b = conv_ref(&p.path2_conv, &linear_sites_ref(&p.path2_linear, &cat));
    a.iter()
        .zip(&b)
        .map(|(pa, pb)| pa.iter().zip(pb).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect()).collect())
        .collect()
}

pub fn max_diff(got: &FeatureGrid, want: &Tensor3) -> f64 {
    let mut worst = 0.0f64;
    for (i, plane) in want.iter().enumerate() {
        for (y, row) in plane.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                worst = worst.max((got.get(&[i, y, x]) as f64 - v).abs());
            }
        }
    }
    worst
}
