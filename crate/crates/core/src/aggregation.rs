//! Dense-cloud construction from a multi-frame scene.
//!
//! Points are first lifted into world coordinates and split into static
//! points and per-track dynamic groups using the frame's boxes. Static points
//! are concatenated in world coordinates. Each dynamic group is expressed in
//! its box-canonical frame for every frame the track is annotated in, and the
//! concatenation is re-placed with the track's box in the target frame. Both
//! sides finally move into the target frame's sensor coordinates.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::geometry::{OrientedBox, RigidTransform};
use crate::ingest::{PointFrame, SceneSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Point3<f64>,
    pub intensity: f32,
    pub label: u16,
}

/// A point together with its index in the source frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedPoint {
    pub index: usize,
    pub point: LabeledPoint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitFrame {
    pub static_points: Vec<IndexedPoint>,
    /// Track id to the points assigned to that track, labelled with the box class.
    pub dynamic_groups: BTreeMap<String, Vec<IndexedPoint>>,
}

impl SplitFrame {
    pub fn dynamic_len(&self) -> usize {
        self.dynamic_groups.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Static,
    /// Index into [`DenseCloud::tracks`].
    Dynamic(u32),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseCloud {
    pub points: Vec<LabeledPoint>,
    pub provenance: Vec<Provenance>,
    /// Track ids of the target frame, sorted; dynamic provenance indexes this list.
    pub tracks: Vec<String>,
    /// Points of tracks that are not annotated in the target frame.
    pub dropped_points: usize,
}

impl DenseCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn static_count(&self) -> usize {
        self.provenance
            .iter()
            .filter(|p| **p == Provenance::Static)
            .count()
    }

    pub fn track_id(&self, prov: Provenance) -> Option<&str> {
        match prov {
            Provenance::Static => None,
            Provenance::Dynamic(k) => self.tracks.get(k as usize).map(String::as_str),
        }
    }
}

/// Lifts a frame into world coordinates with its sensor pose.
pub fn frame_to_world(frame: &PointFrame, pose: &RigidTransform) -> Vec<LabeledPoint> {
    frame
        .points
        .iter()
        .map(|p| LabeledPoint {
            position: pose.apply_point(&Point3::new(p.x as f64, p.y as f64, p.z as f64)),
            intensity: p.intensity,
            label: p.label,
        })
        .collect()
}

/// Splits points into static points and per-track groups.
///
/// A point inside several boxes goes to the box whose center is nearest,
/// ties broken by the lexicographically smallest track id. Dynamic points take
/// the box label; static points keep their own.
pub fn split_semantic(points: &[LabeledPoint], boxes: &[OrientedBox], margin: f64) -> SplitFrame {
    let mut split = SplitFrame::default();
    for (index, p) in points.iter().enumerate() {
        let mut best: Option<(f64, &OrientedBox)> = None;
        for b in boxes {
            if !b.contains(&p.position, margin) {
                continue;
            }
            let d2 = (p.position.coords - b.center()).norm_squared();
            let better = match best {
                None => true,
                Some((bd, bb)) => d2 < bd || (d2 == bd && b.track_id() < bb.track_id()),
            };
            if better {
                best = Some((d2, b));
            }
        }
        match best {
            None => split.static_points.push(IndexedPoint { index, point: *p }),
            Some((_, b)) => split
                .dynamic_groups
                .entry(b.track_id().to_string())
                .or_default()
                .push(IndexedPoint {
                    index,
                    point: LabeledPoint {
                        label: b.label(),
                        ..*p
                    },
                }),
        }
    }
    split
}

/// World-frame split of every frame, in frame order.
pub fn split_scene(scene: &SceneSequence, margin: f64) -> Vec<SplitFrame> {
    scene
        .frames()
        .par_iter()
        .zip(scene.poses().par_iter())
        .zip(scene.boxes().par_iter())
        .map(|((frame, pose), boxes)| split_semantic(&frame_to_world(frame, pose), boxes, margin))
        .collect()
}

fn static_from_splits(scene: &SceneSequence, splits: &[SplitFrame]) -> Vec<LabeledPoint> {
    let to_target = scene.poses()[scene.target_frame()].inverse();
    splits
        .iter()
        .flat_map(|s| s.static_points.iter())
        .map(|ip| LabeledPoint {
            position: to_target.apply_point(&ip.point.position),
            ..ip.point
        })
        .collect()
}

fn dynamic_from_splits(
    scene: &SceneSequence,
    splits: &[SplitFrame],
) -> BTreeMap<String, Vec<LabeledPoint>> {
    let target = scene.target_frame();
    let to_target = scene.poses()[target].inverse();
    let mut target_boxes: Vec<&OrientedBox> = scene.boxes()[target].iter().collect();
    target_boxes.sort_by(|a, b| a.track_id().cmp(b.track_id()));

    let groups: Vec<(String, Vec<LabeledPoint>)> = target_boxes
        .par_iter()
        .map(|target_box| {
            let id = target_box.track_id();
            let place = to_target.compose(&target_box.pose());
            let mut out = Vec::new();
            for (i, split) in splits.iter().enumerate() {
                let Some(group) = split.dynamic_groups.get(id) else {
                    continue;
                };
                let frame_box = scene.boxes()[i]
                    .iter()
                    .find(|b| b.track_id() == id)
                    .expect("dynamic group without a box in its frame");
                let t = place.compose(&frame_box.pose().inverse());
                out.extend(group.iter().map(|ip| LabeledPoint {
                    position: t.apply_point(&ip.point.position),
                    ..ip.point
                }));
            }
            (id.to_string(), out)
        })
        .collect();
    groups.into_iter().filter(|(_, pts)| !pts.is_empty()).collect()
}

/// All static points of the scene, in target-frame sensor coordinates,
/// ordered by frame then original index.
pub fn aggregate_static(scene: &SceneSequence, margin: f64) -> Vec<LabeledPoint> {
    static_from_splits(scene, &split_scene(scene, margin))
}

/// Per-track dense clouds for every track annotated in the target frame, in
/// target-frame sensor coordinates. Tracks absent from the target frame are dropped.
pub fn aggregate_dynamic(scene: &SceneSequence, margin: f64) -> BTreeMap<String, Vec<LabeledPoint>> {
    dynamic_from_splits(scene, &split_scene(scene, margin))
}

/// Static points first (frame, index), then dynamic points (track id, frame, index).
pub fn build_dense_cloud(scene: &SceneSequence, margin: f64) -> DenseCloud {
    let splits = split_scene(scene, margin);
    let statics = static_from_splits(scene, &splits);
    let dynamics = dynamic_from_splits(scene, &splits);

    let mut tracks: Vec<String> = scene.boxes()[scene.target_frame()]
        .iter()
        .map(|b| b.track_id().to_string())
        .collect();
    tracks.sort();

    let kept: usize = dynamics.values().map(Vec::len).sum();
    let all_dynamic: usize = splits.iter().map(SplitFrame::dynamic_len).sum();

    let mut cloud = DenseCloud {
        points: Vec::with_capacity(statics.len() + kept),
        provenance: Vec::with_capacity(statics.len() + kept),
        tracks,
        dropped_points: all_dynamic - kept,
    };
    cloud.provenance.resize(statics.len(), Provenance::Static);
    cloud.points.extend(statics);
    for (id, pts) in dynamics {
        let k = cloud
            .tracks
            .binary_search(&id)
            .expect("aggregated track is annotated in the target frame") as u32;
        cloud.provenance.extend(std::iter::repeat_n(Provenance::Dynamic(k), pts.len()));
        cloud.points.extend(pts);
    }
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawPoint;
    use nalgebra::Vector3;

    fn lp(x: f64, y: f64, z: f64, label: u16) -> LabeledPoint {
        LabeledPoint {
            position: Point3::new(x, y, z),
            intensity: 0.0,
            label,
        }
    }

    fn bx(id: &str, center: [f64; 3], size: [f64; 3], yaw: f64, label: u16) -> OrientedBox {
        OrientedBox::new(center, size, yaw, id, label).unwrap()
    }

    #[test]
    fn no_boxes_means_all_static() {
        let pts = vec![lp(0.0, 0.0, 0.0, 1), lp(1.0, 2.0, 3.0, 2)];
        let s = split_semantic(&pts, &[], 0.0);
        assert_eq!(s.static_points.len(), 2);
        assert!(s.dynamic_groups.is_empty());
    }

    #[test]
    fn single_point_in_single_box() {
        let pts = vec![lp(0.0, 0.0, 0.0, 1), lp(10.0, 0.0, 0.0, 1)];
        let s = split_semantic(&pts, &[bx("car", [0.0; 3], [2.0; 3], 0.0, 3)], 0.0);
        assert_eq!(s.static_points.len(), 1);
        let g = &s.dynamic_groups["car"];
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].point.label, 3);
        assert_eq!(g[0].index, 0);
    }

    #[test]
    fn overlap_goes_to_nearest_then_smallest_id() {
        let boxes = [
            bx("b", [0.0; 3], [4.0; 3], 0.0, 2),
            bx("a", [2.0, 0.0, 0.0], [4.0; 3], 0.0, 3),
        ];
        let pts = vec![lp(0.5, 0.0, 0.0, 1), lp(1.0, 0.0, 0.0, 1), lp(1.5, 0.0, 0.0, 1)];
        let s = split_semantic(&pts, &boxes, 0.0);
        assert_eq!(s.dynamic_groups["b"].iter().map(|p| p.index).collect::<Vec<_>>(), [0]);
        // Index 1 is equidistant; "a" < "b".
        assert_eq!(s.dynamic_groups["a"].iter().map(|p| p.index).collect::<Vec<_>>(), [1, 2]);
    }

    fn raw(x: f32, y: f32, z: f32, label: u16) -> RawPoint {
        RawPoint::new([x, y, z], 0.5, label)
    }

    #[test]
    fn single_frame_static_round_trip() {
        let pose = RigidTransform::from_wxyz([0.9, 0.1, 0.2, 0.3], [100.0, -50.0, 2.0]).unwrap();
        let pts = vec![raw(1.0, 2.0, 3.0, 1), raw(-4.5, 0.25, 1.0, 2)];
        let scene = SceneSequence::new(
            "s",
            4,
            vec![PointFrame {
                frame_index: 0,
                points: pts.clone(),
            }],
            vec![pose],
            vec![vec![]],
            0,
        )
        .unwrap();
        let out = aggregate_static(&scene, 0.0);
        for (a, b) in pts.iter().zip(&out) {
            let d = (Point3::new(a.x as f64, a.y as f64, a.z as f64) - b.position).abs().max();
            assert!(d < 1e-6);
        }
    }

    #[test]
    fn identical_poses_concatenate() {
        let pose = RigidTransform::from_yaw(0.4, Vector3::new(3.0, 1.0, 0.0));
        let f0 = vec![raw(1.0, 0.0, 0.0, 1)];
        let f1 = vec![raw(0.0, 1.0, 0.0, 2), raw(0.0, 0.0, 1.0, 2)];
        let scene = SceneSequence::new(
            "s",
            4,
            vec![
                PointFrame {
                    frame_index: 0,
                    points: f0,
                },
                PointFrame {
                    frame_index: 1,
                    points: f1,
                },
            ],
            vec![pose, pose],
            vec![vec![], vec![]],
            1,
        )
        .unwrap();
        let out = aggregate_static(&scene, 0.0);
        let want = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(out.len(), 3);
        for (p, w) in out.iter().zip(want) {
            assert!((p.position - Point3::from(w)).abs().max() < 1e-12);
        }
        assert_eq!(out.iter().map(|p| p.label).collect::<Vec<_>>(), [1, 2, 2]);
    }

    #[test]
    fn dropped_tracks_are_counted() {
        let scene = SceneSequence::new(
            "s",
            4,
            vec![
                PointFrame {
                    frame_index: 0,
                    points: vec![raw(0.0, 0.0, 0.0, 1), raw(5.0, 0.0, 0.0, 1)],
                },
                PointFrame {
                    frame_index: 1,
                    points: vec![raw(0.0, 0.0, 0.0, 1)],
                },
            ],
            vec![RigidTransform::identity(); 2],
            vec![vec![bx("gone", [0.0; 3], [1.0; 3], 0.0, 2)], vec![]],
            1,
        )
        .unwrap();
        let cloud = build_dense_cloud(&scene, 0.0);
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.dropped_points, 1);
        assert!(cloud.tracks.is_empty());
        assert_eq!(cloud.static_count(), 2);
    }
}
