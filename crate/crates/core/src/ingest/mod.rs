//! Scene format: a JSON manifest plus one packed point file per frame.

mod manifest;
mod point_file;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use manifest::{BoxEntry, FrameEntry, Manifest, PoseEntry};
pub use point_file::{
    decode_points, encode_points, RawPoint, POINT_HEADER_LEN, POINT_MAGIC, POINT_RECORD_LEN,
    POINT_VERSION, UNLABELED,
};

use crate::geometry::{OrientedBox, RigidTransform};
use crate::wire::FormatError;
use crate::EMPTY;

pub const MANIFEST_FILE_NAME: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: malformed manifest: {detail}")]
    MalformedManifest { path: PathBuf, detail: String },
    #[error("{path}: bad magic {found:?} (expected {expected:?})")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: Vec<u8>,
    },
    #[error("{path}: unsupported version {found}")]
    BadVersion { path: PathBuf, found: u32 },
    #[error("{path}: record count mismatch: expected {expected} bytes, file has {actual}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: invalid {field}: {detail}")]
    InvariantViolation {
        path: PathBuf,
        field: String,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    /// Attaches a file path to a decoder error.
    pub fn from_format(path: &Path, err: FormatError) -> Self {
        let path = path.to_path_buf();
        match err {
            FormatError::BadMagic { expected, found } => IngestError::BadMagic {
                path,
                expected,
                found,
            },
            FormatError::BadVersion { found, .. } => IngestError::BadVersion { path, found },
            FormatError::Truncated { expected, actual } => IngestError::TruncatedFile {
                path,
                expected,
                actual,
            },
            FormatError::TrailingBytes { trailing } => IngestError::TruncatedFile {
                path,
                expected: 0,
                actual: trailing,
            },
            FormatError::Invalid { field, detail } => IngestError::InvariantViolation {
                path,
                field,
                detail,
            },
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }
}

/// A scene invariant that does not hold; `field` locates the offending entry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid {field}: {detail}")]
pub struct SceneError {
    pub field: String,
    pub detail: String,
}

fn scene_err(field: impl Into<String>, detail: impl Into<String>) -> SceneError {
    SceneError {
        field: field.into(),
        detail: detail.into(),
    }
}

/// One LiDAR sweep in its own sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFrame {
    pub frame_index: usize,
    pub points: Vec<RawPoint>,
}

/// An ordered, validated multi-frame scene.
///
/// Poses map each frame's sensor coordinates into world coordinates. Boxes are
/// expressed in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    scene_id: String,
    class_count: u16,
    frames: Vec<PointFrame>,
    poses: Vec<RigidTransform>,
    boxes: Vec<Vec<OrientedBox>>,
    target_frame: usize,
}

impl SceneSequence {
    pub fn new(
        scene_id: impl Into<String>,
        class_count: u16,
        frames: Vec<PointFrame>,
        poses: Vec<RigidTransform>,
        boxes: Vec<Vec<OrientedBox>>,
        target_frame: usize,
    ) -> Result<Self, SceneError> {
        if class_count < 2 {
            return Err(scene_err(
                "class_count",
                format!("{class_count} leaves no semantic class besides EMPTY"),
            ));
        }
        if class_count == UNLABELED {
            return Err(scene_err("class_count", "collides with the UNLABELED sentinel"));
        }
        if frames.is_empty() {
            return Err(scene_err("frames", "scene needs at least one frame"));
        }
        if poses.len() != frames.len() {
            return Err(scene_err(
                "poses",
                format!("{} poses for {} frames", poses.len(), frames.len()),
            ));
        }
        if boxes.len() != frames.len() {
            return Err(scene_err(
                "boxes",
                format!("{} box lists for {} frames", boxes.len(), frames.len()),
            ));
        }
        if target_frame >= frames.len() {
            return Err(scene_err(
                "target_frame",
                format!("{target_frame} out of range for {} frames", frames.len()),
            ));
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.frame_index != i {
                return Err(scene_err(
                    format!("frames[{i}].index"),
                    format!("expected {i}, found {}", frame.frame_index),
                ));
            }
            for (j, p) in frame.points.iter().enumerate() {
                if !p.is_finite() {
                    return Err(scene_err(format!("frames[{i}].points[{j}]"), "non-finite value"));
                }
                if p.label != UNLABELED && (p.label == EMPTY || p.label >= class_count) {
                    return Err(scene_err(
                        format!("frames[{i}].points[{j}].label"),
                        format!("{} not in 1..{class_count} and not UNLABELED", p.label),
                    ));
                }
            }
        }
        let mut track_labels: BTreeMap<&str, (u16, usize)> = BTreeMap::new();
        for (i, frame_boxes) in boxes.iter().enumerate() {
            let mut seen = HashSet::new();
            for (j, b) in frame_boxes.iter().enumerate() {
                let field = || format!("frames[{i}].boxes[{j}]");
                if b.track_id().is_empty() {
                    return Err(scene_err(field() + ".track_id", "empty track id"));
                }
                if !seen.insert(b.track_id()) {
                    return Err(scene_err(
                        field() + ".track_id",
                        format!("duplicate track id {:?} within one frame", b.track_id()),
                    ));
                }
                if b.label() == EMPTY || b.label() >= class_count {
                    return Err(scene_err(
                        field() + ".label",
                        format!("{} not in 1..{class_count}", b.label()),
                    ));
                }
                match track_labels.get(b.track_id()) {
                    Some(&(label, first)) if label != b.label() => {
                        return Err(scene_err(
                            field() + ".label",
                            format!(
                                "track {:?} labelled {label} in frame {first} but {} here",
                                b.track_id(),
                                b.label()
                            ),
                        ));
                    }
                    Some(_) => {}
                    None => {
                        track_labels.insert(b.track_id(), (b.label(), i));
                    }
                }
            }
        }
        Ok(Self {
            scene_id: scene_id.into(),
            class_count,
            frames,
            poses,
            boxes,
            target_frame,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn class_count(&self) -> u16 {
        self.class_count
    }

    pub fn frames(&self) -> &[PointFrame] {
        &self.frames
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn boxes(&self) -> &[Vec<OrientedBox>] {
        &self.boxes
    }

    pub fn target_frame(&self) -> usize {
        self.target_frame
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }

    /// Same scene with `world` applied to every pose and box. `world` must be yaw-only.
    pub fn with_world_transform(
        &self,
        world: &RigidTransform,
    ) -> Result<Self, crate::geometry::GeometryError> {
        let poses = self.poses.iter().map(|p| world.compose(p)).collect();
        let boxes = self
            .boxes
            .iter()
            .map(|bs| bs.iter().map(|b| b.transformed(world)).collect())
            .collect::<Result<_, _>>()?;
        Ok(Self {
            poses,
            boxes,
            ..self.clone()
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|e| IngestError::io(path, e))
}

fn malformed(path: &Path, detail: impl Into<String>) -> IngestError {
    IngestError::MalformedManifest {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Loads and fully validates a scene from its manifest.
pub fn load_scene(manifest_path: &Path) -> Result<SceneSequence, IngestError> {
    let raw = read_file(manifest_path)?;
    let text = std::str::from_utf8(&raw).map_err(|e| malformed(manifest_path, e.to_string()))?;
    let manifest = Manifest::parse(text).map_err(|e| malformed(manifest_path, e.to_string()))?;
    scene_from_manifest(manifest_path, &manifest)
}

/// Resolves and decodes every frame referenced by an already parsed manifest.
pub fn scene_from_manifest(
    manifest_path: &Path,
    manifest: &Manifest,
) -> Result<SceneSequence, IngestError> {
    if manifest.frames.is_empty() {
        return Err(malformed(manifest_path, "frames list is empty"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let invariant = |field: String, detail: String| IngestError::InvariantViolation {
        path: manifest_path.to_path_buf(),
        field,
        detail,
    };

    let mut poses = Vec::with_capacity(manifest.frames.len());
    let mut boxes = Vec::with_capacity(manifest.frames.len());
    for (i, f) in manifest.frames.iter().enumerate() {
        let pose = RigidTransform::from_wxyz(f.pose.quaternion, f.pose.translation)
            .map_err(|e| invariant(format!("frames[{i}].pose"), e.to_string()))?;
        poses.push(pose);
        let frame_boxes = f
            .boxes
            .iter()
            .enumerate()
            .map(|(j, b)| {
                OrientedBox::new(b.center, b.size, b.yaw, b.track_id.clone(), b.label)
                    .map_err(|e| invariant(format!("frames[{i}].boxes[{j}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        boxes.push(frame_boxes);
    }

    let frames = manifest
        .frames
        .par_iter()
        .map(|f| {
            let path = base.join(&f.points_path);
            let bytes = read_file(&path)?;
            let points = decode_points(&bytes).map_err(|e| IngestError::from_format(&path, e))?;
            Ok(PointFrame {
                frame_index: f.index,
                points,
            })
        })
        .collect::<Result<Vec<_>, IngestError>>()?;

    SceneSequence::new(
        manifest.scene_id.clone(),
        manifest.class_count,
        frames,
        poses,
        boxes,
        manifest.target_frame,
    )
    .map_err(|e| invariant(e.field, e.detail))
}

/// Builds the manifest describing `scene`, with point files named `frame_NNNN.ldop`.
pub fn manifest_for(scene: &SceneSequence) -> Manifest {
    Manifest {
        scene_id: scene.scene_id.clone(),
        target_frame: scene.target_frame,
        class_count: scene.class_count,
        frames: scene
            .frames
            .iter()
            .zip(&scene.poses)
            .zip(&scene.boxes)
            .map(|((frame, pose), bs)| FrameEntry {
                index: frame.frame_index,
                points_path: point_file_name(frame.frame_index),
                pose: PoseEntry {
                    quaternion: pose.quaternion_wxyz(),
                    translation: pose.translation_array(),
                },
                boxes: bs
                    .iter()
                    .map(|b| BoxEntry {
                        track_id: b.track_id().to_string(),
                        label: b.label(),
                        center: [b.center().x, b.center().y, b.center().z],
                        size: [b.size().x, b.size().y, b.size().z],
                        yaw: b.yaw(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn point_file_name(index: usize) -> String {
    format!("frame_{index:04}.ldop")
}

/// Writes the manifest and point files into `dir` (created if missing).
pub fn write_scene(scene: &SceneSequence, dir: &Path) -> Result<PathBuf, IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    for frame in &scene.frames {
        let path = dir.join(point_file_name(frame.frame_index));
        fs::write(&path, encode_points(&frame.points)).map_err(|e| IngestError::io(&path, e))?;
    }
    let manifest_path = dir.join(MANIFEST_FILE_NAME);
    fs::write(&manifest_path, manifest_for(scene).to_json())
        .map_err(|e| IngestError::io(&manifest_path, e))?;
    Ok(manifest_path)
}
