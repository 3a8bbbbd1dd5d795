//! Dense semantic occupancy with a local-density weight channel.
//!
//! Labels come from a per-voxel majority vote over the dense cloud. Weights
//! encode how an object's points are spread over its voxels: for object `k`
//! occupying voxels `v_1..v_n`, the density factor of `v_i` is
//! `count(k, v_i) / Σ_j count(k, v_j)`. Dynamic voxels get `1 + factor`,
//! static voxels `1`, empty voxels `0`.

mod grid;
mod occ_file;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{voxel_index, GridError, GridSpec, MAX_VOXELS};
pub use occ_file::{
    decode_occupancy, encode_occupancy, read_occupancy, write_occupancy, OCC_HEADER_LEN,
    OCC_MAGIC, OCC_RECORD_LEN, OCC_VERSION,
};

use crate::aggregation::{build_dense_cloud, DenseCloud, Provenance};
use crate::ingest::{SceneSequence, UNLABELED};
use crate::EMPTY;

/// How density factors turn into voxel weights on dynamic voxels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `1 + factor`.
    #[default]
    BasePlusFactor,
    /// `factor` alone.
    FactorOnly,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VoxelizeError {
    #[error("background class {background} must lie in 1..{class_count}")]
    BadBackground { background: u16, class_count: u16 },
    #[error("labels/weights length {labels}/{weights} does not match {voxels} voxels")]
    LengthMismatch {
        labels: usize,
        weights: usize,
        voxels: usize,
    },
    #[error("voxel {index}: label {label} with weight {weight} breaks label/weight co-support")]
    CoSupport { index: usize, label: u16, weight: f32 },
}

/// Occupancy labels and density weights over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct LdoGrid {
    spec: GridSpec,
    labels: Vec<u16>,
    weights: Vec<f32>,
}

/// Borrowed label volume, the input shape of the metrics.
#[derive(Debug, Clone, Copy)]
pub struct LabelView<'a> {
    pub dims: [usize; 3],
    pub labels: &'a [u16],
}

impl LdoGrid {
    /// Checks lengths and that `labels[v] == EMPTY` exactly when `weights[v] == 0`.
    pub fn from_parts(
        spec: GridSpec,
        labels: Vec<u16>,
        weights: Vec<f32>,
    ) -> Result<Self, VoxelizeError> {
        let voxels = spec.voxel_count();
        if labels.len() != voxels || weights.len() != voxels {
            return Err(VoxelizeError::LengthMismatch {
                labels: labels.len(),
                weights: weights.len(),
                voxels,
            });
        }
        for (index, (&label, &weight)) in labels.iter().zip(&weights).enumerate() {
            let ok = if label == EMPTY {
                weight == 0.0
            } else {
                weight.is_finite() && weight > 0.0
            };
            if !ok {
                return Err(VoxelizeError::CoSupport {
                    index,
                    label,
                    weight,
                });
            }
        }
        Ok(Self {
            spec,
            labels,
            weights,
        })
    }

    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.voxel_count();
        Self {
            spec,
            labels: vec![EMPTY; n],
            weights: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims()
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn label_view(&self) -> LabelView<'_> {
        LabelView {
            dims: self.dims(),
            labels: &self.labels,
        }
    }

    /// `(linear index, label, weight)` of every non-empty voxel, ascending.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, u16, f32)> + '_ {
        self.labels
            .iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(_, (l, _))| **l != EMPTY)
            .map(|(i, (l, w))| (i, *l, *w))
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|l| **l != EMPTY).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct LabelTally {
    static_count: u32,
    dynamic_count: u32,
}

type Tally<K, V> = HashMap<K, V>;

fn merge_tallies<K: std::hash::Hash + Eq, V: Copy>(
    mut a: Tally<K, V>,
    b: Tally<K, V>,
    add: impl Fn(&mut V, V),
) -> Tally<K, V> {
    if a.len() < b.len() {
        return merge_tallies(b, a, add);
    }
    for (k, v) in b {
        match a.get_mut(&k) {
            Some(slot) => add(slot, v),
            None => {
                a.insert(k, v);
            }
        }
    }
    a
}

/// Per `(voxel, label)` point counts split by provenance. Integer counts merge
/// commutatively, so the result does not depend on how rayon partitions the points.
fn tally_labels(cloud: &DenseCloud, spec: &GridSpec, background: u16) -> Vec<((u32, u16), LabelTally)> {
    let tally = cloud
        .points
        .par_iter()
        .zip(cloud.provenance.par_iter())
        .fold(Tally::<(u32, u16), LabelTally>::new, |mut acc, (p, prov)| {
            if let Some(v) = spec.linear_voxel_index(&p.position) {
                let label = if p.label == UNLABELED { background } else { p.label };
                let slot = acc.entry((v as u32, label)).or_default();
                match prov {
                    Provenance::Static => slot.static_count += 1,
                    Provenance::Dynamic(_) => slot.dynamic_count += 1,
                }
            }
            acc
        })
        .reduce(Tally::new, |a, b| {
            merge_tallies(a, b, |s, o| {
                s.static_count += o.static_count;
                s.dynamic_count += o.dynamic_count;
            })
        });
    let mut entries: Vec<_> = tally.into_iter().collect();
    entries.par_sort_unstable_by_key(|(k, _)| *k);
    entries
}

/// Per-voxel majority vote. On equal counts a label carried by dynamic points
/// beats one carried only by static points; remaining ties go to the smaller
/// class id. `UNLABELED` points vote for `background`.
pub fn voxelize_labels(cloud: &DenseCloud, spec: &GridSpec, background: u16) -> Vec<u16> {
    let mut labels = vec![EMPTY; spec.voxel_count()];
    let entries = tally_labels(cloud, spec, background);
    let mut i = 0;
    while i < entries.len() {
        let voxel = entries[i].0 .0;
        let mut best: Option<(u32, bool, u16)> = None;
        while i < entries.len() && entries[i].0 .0 == voxel {
            let ((_, label), t) = entries[i];
            let count = t.static_count + t.dynamic_count;
            let dynamic = t.dynamic_count > 0;
            let better = match best {
                None => true,
                // Entries arrive in ascending label order, so strict comparison keeps the smaller id.
                Some((bc, bd, _)) => count > bc || (count == bc && dynamic && !bd),
            };
            if better {
                best = Some((count, dynamic, label));
            }
            i += 1;
        }
        labels[voxel as usize] = best.expect("voxel group is non-empty").2;
    }
    labels
}

/// One voxel of one object's footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCell {
    pub voxel: usize,
    pub count: u32,
    pub factor: f64,
}

/// Density factors per dynamic object (keyed by track index into
/// [`DenseCloud::tracks`]), voxels ascending. Only in-grid points count.
pub fn density_factors(cloud: &DenseCloud, spec: &GridSpec) -> BTreeMap<u32, Vec<DensityCell>> {
    let tally = cloud
        .points
        .par_iter()
        .zip(cloud.provenance.par_iter())
        .fold(Tally::<(u32, u32), u32>::new, |mut acc, (p, prov)| {
            if let (Provenance::Dynamic(k), Some(v)) = (prov, spec.linear_voxel_index(&p.position)) {
                *acc.entry((*k, v as u32)).or_default() += 1;
            }
            acc
        })
        .reduce(Tally::new, |a, b| merge_tallies(a, b, |s, o| *s += o));
    let mut per_track: BTreeMap<u32, Vec<DensityCell>> = BTreeMap::new();
    for ((k, v), count) in tally {
        per_track.entry(k).or_default().push(DensityCell {
            voxel: v as usize,
            count,
            factor: 0.0,
        });
    }
    for cells in per_track.values_mut() {
        cells.sort_unstable_by_key(|c| c.voxel);
        let total: u64 = cells.iter().map(|c| c.count as u64).sum();
        for c in cells.iter_mut() {
            c.factor = c.count as f64 / total as f64;
        }
    }
    per_track
}

/// Voxel weights: 0 on empty voxels, 1 on voxels holding only static points,
/// and the owning object's density weight on voxels holding dynamic points.
/// A voxel shared by several objects belongs to the one with more points
/// there, ties to the smaller track id.
pub fn density_matrix(cloud: &DenseCloud, spec: &GridSpec, mode: WeightMode) -> Vec<f32> {
    let mut weights = vec![0.0f32; spec.voxel_count()];
    for p in &cloud.points {
        if let Some(v) = spec.linear_voxel_index(&p.position) {
            weights[v] = 1.0;
        }
    }
    // voxel -> (count, track, factor) of the current owner
    let mut owner: HashMap<usize, (u32, u32, f64)> = HashMap::new();
    for (k, cells) in density_factors(cloud, spec) {
        for c in cells {
            owner
                .entry(c.voxel)
                .and_modify(|o| {
                    if c.count > o.0 || (c.count == o.0 && k < o.1) {
                        *o = (c.count, k, c.factor);
                    }
                })
                .or_insert((c.count, k, c.factor));
        }
    }
    for (v, (_, _, factor)) in owner {
        weights[v] = match mode {
            WeightMode::BasePlusFactor => (1.0 + factor) as f32,
            WeightMode::FactorOnly => factor as f32,
        };
    }
    weights
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdoOptions {
    /// Box dilation used for point-to-object assignment, meters.
    pub margin: f64,
    /// Class that `UNLABELED` static points vote for.
    pub background_class: u16,
    pub weight_mode: WeightMode,
}

impl Default for LdoOptions {
    fn default() -> Self {
        Self {
            margin: 0.0,
            background_class: 1,
            weight_mode: WeightMode::BasePlusFactor,
        }
    }
}

/// Labels and weights of an already aggregated cloud.
pub fn compose_ldo(
    cloud: &DenseCloud,
    spec: &GridSpec,
    background: u16,
    mode: WeightMode,
) -> LdoGrid {
    let labels = voxelize_labels(cloud, spec, background);
    let weights = density_matrix(cloud, spec, mode);
    LdoGrid::from_parts(*spec, labels, weights).expect("voxelizer output satisfies co-support")
}

/// End-to-end occupancy generation for one scene.
pub fn build_ldo(
    scene: &SceneSequence,
    spec: &GridSpec,
    options: &LdoOptions,
) -> Result<LdoGrid, VoxelizeError> {
    let bg = options.background_class;
    if bg == EMPTY || bg >= scene.class_count() {
        return Err(VoxelizeError::BadBackground {
            background: bg,
            class_count: scene.class_count(),
        });
    }
    let cloud = build_dense_cloud(scene, options.margin);
    Ok(compose_ldo(&cloud, spec, bg, options.weight_mode))
}
