//! Writes seed inputs for the fuzz targets: `cargo run -p ldo-core --example fuzz_seeds -- fuzz/corpus`.

use std::fs;
use std::path::{Path, PathBuf};

use ldo_core::feature::FeatureGrid;
use ldo_core::ingest::{encode_points, BoxEntry, FrameEntry, Manifest, PoseEntry, RawPoint, UNLABELED};
use ldo_core::tensor_file::{encode_tensors, TensorBundle};
use ldo_core::voxelizer::{encode_occupancy, GridSpec, LdoGrid};
use ldo_core::PipelineConfig;

fn put(dir: &Path, target: &str, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let d = dir.join(target);
    fs::create_dir_all(&d)?;
    fs::write(d.join(name), bytes)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fuzz/corpus"));

    let points = vec![
        RawPoint::new([1.0, 2.0, -0.5], 0.3, 4),
        RawPoint::new([-3.5, 0.25, 1.0], 0.9, UNLABELED),
    ];
    put(&dir, "decode_points", "empty", &encode_points(&[]))?;
    put(&dir, "decode_points", "two", &encode_points(&points))?;

    let spec = GridSpec::new([0.0; 3], [2.0, 2.0, 1.0], [1.0; 3])?;
    put(&dir, "decode_occupancy", "empty", &encode_occupancy(&LdoGrid::empty(spec.clone())))?;
    let grid = LdoGrid::from_parts(spec, vec![0, 3, 0, 7], vec![0.0, 1.0, 0.0, 1.5])?;
    put(&dir, "decode_occupancy", "two", &encode_occupancy(&grid))?;

    let mut bundle = TensorBundle::new();
    put(&dir, "decode_tensors", "empty", &encode_tensors(&bundle))?;
    bundle.insert("w", FeatureGrid::from_fn(vec![2, 3], |i| i as f32));
    bundle.insert("b", FeatureGrid::from_fn(vec![3], |i| -(i as f32)));
    put(&dir, "decode_tensors", "two", &encode_tensors(&bundle))?;

    let manifest = Manifest {
        scene_id: "seed".into(),
        target_frame: 0,
        class_count: 18,
        frames: vec![FrameEntry {
            index: 0,
            points_path: "frame_000.ldop".into(),
            pose: PoseEntry {
                quaternion: [1.0, 0.0, 0.0, 0.0],
                translation: [0.0; 3],
            },
            boxes: vec![BoxEntry {
                track_id: "a".into(),
                label: 5,
                center: [1.0, 2.0, 0.0],
                size: [4.0, 2.0, 1.5],
                yaw: 0.3,
            }],
        }],
    }
    .to_json();
    put(&dir, "parse_manifest", "one_frame", manifest.as_bytes())?;

    put(&dir, "parse_config", "empty", b"")?;
    put(&dir, "parse_config", "default", PipelineConfig::default().to_toml().as_bytes())?;
    Ok(())
}
