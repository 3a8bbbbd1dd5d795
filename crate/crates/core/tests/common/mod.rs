//! Synthetic scenes and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod fixtures;
pub mod nn;

use std::collections::BTreeMap;

use ldo_core::aggregation::{DenseCloud, Provenance};
use ldo_core::geometry::{OrientedBox, RigidTransform};
use ldo_core::ingest::{PointFrame, RawPoint, SceneSequence, UNLABELED};
use ldo_core::voxelizer::{GridSpec, WeightMode};
use ldo_core::EMPTY;
use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy)]
pub struct SceneParams {
    pub frames: usize,
    pub static_points: usize,
    pub tracks: usize,
    pub object_points: usize,
    pub class_count: u16,
    /// Probability that a track is missing from a non-target frame.
    pub absence: f64,
    /// Also leave some tracks out of the target frame.
    pub drop_tracks: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            frames: 3,
            static_points: 300,
            tracks: 4,
            object_points: 60,
            class_count: 18,
            absence: 0.2,
            drop_tracks: false,
        }
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

struct Track {
    id: String,
    label: u16,
    center: Vector3<f64>,
    velocity: Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
    size: [f64; 3],
}

impl Track {
    fn box_at(&self, t: usize) -> OrientedBox {
        let c = self.center + self.velocity * t as f64;
        OrientedBox::new(
            [c.x, c.y, c.z],
            self.size,
            self.yaw + self.yaw_rate * t as f64,
            self.id.clone(),
            self.label,
        )
        .unwrap()
    }
}

fn inside_padded(b: &OrientedBox, p: &Point3<f64>, pad: f64) -> bool {
    let u = b.to_canonical(p);
    (0..3).all(|k| u[k].abs() <= b.size()[k] / 2.0 + pad)
}

fn sensor_point(pose_inv: &RigidTransform, world: &Point3<f64>, label: u16, rng: &mut StdRng) -> RawPoint {
    let s = pose_inv.apply_point(world);
    RawPoint::new([s.x as f32, s.y as f32, s.z as f32], rng.random_range(0.0..1.0), label)
}

/// A moving ego vehicle observing static clutter and a few moving boxes.
///
/// Object points sit well inside their boxes and static points well outside
/// all boxes, so membership does not depend on rounding.
pub fn random_scene(rng: &mut StdRng, p: &SceneParams) -> SceneSequence {
    let cc = p.class_count;
    let target = rng.random_range(0..p.frames);
    let poses: Vec<RigidTransform> = (0..p.frames)
        .map(|t| {
            let rot = UnitQuaternion::from_euler_angles(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-3.1..3.1),
            );
            let trans = Vector3::new(
                2.0 * t as f64 + rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.1..0.1),
            );
            RigidTransform::from_parts(rot, trans)
        })
        .collect();
    let tracks: Vec<Track> = (0..p.tracks)
        .map(|j| Track {
            id: format!("trk_{j:03}"),
            label: rng.random_range(2..cc),
            // One lane per track, 8 m apart, so boxes never overlap.
            center: Vector3::new(rng.random_range(-15.0..15.0), -16.0 + 8.0 * j as f64, rng.random_range(-1.5..0.5)),
            velocity: Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-0.1..0.1), 0.0),
            yaw: rng.random_range(-3.1..3.1),
            yaw_rate: rng.random_range(-0.2..0.2),
            size: [rng.random_range(2.0..5.0), rng.random_range(1.5..2.5), rng.random_range(1.4..2.4)],
        })
        .collect();

    let all_boxes: Vec<OrientedBox> = tracks.iter().flat_map(|tr| (0..p.frames).map(|s| tr.box_at(s))).collect();
    let mut frames = Vec::with_capacity(p.frames);
    let mut boxes = Vec::with_capacity(p.frames);
    for t in 0..p.frames {
        let present: Vec<&Track> = tracks
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                if t == target {
                    !(p.drop_tracks && j % 3 == 2)
                } else {
                    !rng.random_bool(p.absence)
                }
            })
            .map(|(_, tr)| tr)
            .collect();
        let frame_boxes: Vec<OrientedBox> = present.iter().map(|tr| tr.box_at(t)).collect();
        let inv = poses[t].inverse();
        let ego = poses[t].translation();
        let mut points = Vec::new();
        while points.len() < p.static_points {
            let w = Point3::new(
                ego.x + rng.random_range(-30.0..30.0),
                ego.y + rng.random_range(-30.0..30.0),
                rng.random_range(-4.8..2.8),
            );
            if all_boxes.iter().any(|b| inside_padded(b, &w, 0.3)) {
                continue;
            }
            let label = if rng.random_bool(0.1) { UNLABELED } else { rng.random_range(1..cc) };
            points.push(sensor_point(&inv, &w, label, rng));
        }
        for b in &frame_boxes {
            let pose = b.pose();
            for _ in 0..p.object_points {
                let u = Point3::new(
                    rng.random_range(-0.4..0.4) * b.size()[0],
                    rng.random_range(-0.4..0.4) * b.size()[1],
                    rng.random_range(-0.4..0.4) * b.size()[2],
                );
                let label = if rng.random_bool(0.2) { UNLABELED } else { b.label() };
                points.push(sensor_point(&inv, &pose.apply_point(&u), label, rng));
            }
        }
        frames.push(PointFrame { frame_index: t, points });
        boxes.push(frame_boxes);
    }
    SceneSequence::new(format!("synthetic-{target}"), cc, frames, poses, boxes, target).unwrap()
}

/// A yaw rotation plus translation.
pub fn random_yaw_transform(rng: &mut StdRng) -> RigidTransform {
    RigidTransform::from_yaw(
        rng.random_range(-3.1..3.1),
        Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-20.0..20.0)),
    )
}

/// Points clustered on a few voxel centers so that votes tie and objects share voxels.
pub fn random_cloud(rng: &mut StdRng, spec: &GridSpec, n: usize, tracks: usize, class_count: u16) -> DenseCloud {
    let dims = spec.dims();
    let hot: Vec<[usize; 3]> = (0..(n / 8).max(1))
        .map(|_| [0, 1, 2].map(|k| rng.random_range(0..dims[k])))
        .collect();
    let mut cloud = DenseCloud {
        tracks: (0..tracks).map(|j| format!("t{j}")).collect(),
        ..DenseCloud::default()
    };
    for _ in 0..n {
        let cell = hot[rng.random_range(0..hot.len())];
        let mut pos = [0.0; 3];
        for k in 0..3 {
            let lo = spec.min()[k] + cell[k] as f64 * spec.voxel_size()[k];
            pos[k] = lo + rng.random_range(0.05..0.95) * spec.voxel_size()[k];
        }
        if rng.random_bool(0.02) {
            pos[0] = spec.max()[0] + 1.0;
        }
        let prov = if tracks > 0 && rng.random_bool(0.4) {
            Provenance::Dynamic(rng.random_range(0..tracks as u32))
        } else {
            Provenance::Static
        };
        let label = if rng.random_bool(0.05) { UNLABELED } else { rng.random_range(1..class_count.min(5)) };
        cloud.points.push(ldo_core::aggregation::LabeledPoint {
            position: Point3::from(pos),
            intensity: 0.0,
            label,
        });
        cloud.provenance.push(prov);
    }
    cloud
}

/// Voxel of `p` computed from scratch: half-open bounds, floor, clamp to the last cell.
pub fn oracle_voxel(spec: &GridSpec, p: &Point3<f64>) -> Option<usize> {
    let (min, max, vs, dims) = (spec.min(), spec.max(), spec.voxel_size(), spec.dims());
    let mut idx = [0usize; 3];
    for k in 0..3 {
        if p[k] < min[k] || p[k] >= max[k] {
            return None;
        }
        let c = ((p[k] - min[k]) / vs[k]).floor() as usize;
        idx[k] = if c >= dims[k] { dims[k] - 1 } else { c };
    }
    Some((idx[0] * dims[1] + idx[1]) * dims[2] + idx[2])
}

/// Majority labels by per-voxel tallies.
pub fn oracle_labels(cloud: &DenseCloud, spec: &GridSpec, background: u16) -> Vec<u16> {
    // voxel -> label -> (count, has dynamic)
    let mut tally: BTreeMap<usize, BTreeMap<u16, (u32, bool)>> = BTreeMap::new();
    for (p, prov) in cloud.points.iter().zip(&cloud.provenance) {
        let Some(v) = oracle_voxel(spec, &p.position) else { continue };
        let label = if p.label == UNLABELED { background } else { p.label };
        let e = tally.entry(v).or_default().entry(label).or_insert((0, false));
        e.0 += 1;
        e.1 |= matches!(prov, Provenance::Dynamic(_));
    }
    let mut out = vec![EMPTY; spec.voxel_count()];
    for (v, labels) in tally {
        let max_count = labels.values().map(|e| e.0).max().unwrap();
        let tied: Vec<(u16, bool)> = labels.iter().filter(|(_, e)| e.0 == max_count).map(|(l, e)| (*l, e.1)).collect();
        let pick = tied.iter().find(|(_, d)| *d).or(tied.first()).unwrap();
        out[v] = pick.0;
    }
    out
}

/// Weights by per-object, per-voxel point counts.
pub fn oracle_weights(cloud: &DenseCloud, spec: &GridSpec, mode: WeightMode) -> Vec<f64> {
    let mut occupied = vec![false; spec.voxel_count()];
    let mut counts: BTreeMap<u32, BTreeMap<usize, u32>> = BTreeMap::new();
    for (p, prov) in cloud.points.iter().zip(&cloud.provenance) {
        let Some(v) = oracle_voxel(spec, &p.position) else { continue };
        occupied[v] = true;
        if let Provenance::Dynamic(k) = prov {
            *counts.entry(*k).or_default().entry(v).or_default() += 1;
        }
    }
    let mut out: Vec<f64> = occupied.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    let mut best: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
    for (&k, cells) in &counts {
        for (&v, &c) in cells {
            let replace = match best.get(&v) {
                None => true,
                Some(&(bc, bk)) => c > bc || (c == bc && k < bk),
            };
            if replace {
                best.insert(v, (c, k));
            }
        }
    }
    for (v, (c, k)) in best {
        let total: u32 = counts[&k].values().sum();
        let factor = c as f64 / total as f64;
        out[v] = match mode {
            WeightMode::BasePlusFactor => 1.0 + factor,
            WeightMode::FactorOnly => factor,
        };
    }
    out
}
