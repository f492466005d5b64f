//! Persistence and data generation: OBJ meshes, motion manifests, binary
//! checkpoints, and the synthetic-motion generator with its
//! linear-blend-skinning ground-truth oracle.

mod checkpoint;
mod lbs;
mod motion;
mod obj;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use lbs::{lbs_pose, SkinWeights};
pub use motion::{
    euler_zyx, load_motion, save_motion, zero_root_orientation, KinematicTree, MotionManifest,
    RigidTransform,
};
pub use obj::{load_obj, load_obj_positions, save_obj, save_obj_mesh};
pub use synth::{
    default_beta, random_beta, synth_generate, BodyPlan, MotionPreset, SineTrack, SynthConfig,
    SynthSequence,
};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use nalgebra::Vector3;
use std::path::{Path, PathBuf};

/// A sequence loaded from disk: manifest plus materialized meshes.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub manifest: MotionManifest,
    pub first_frame: TriMesh,
    pub gt_frames: Vec<Vec<Vector3<f64>>>,
}

/// Write one sequence into `dir`: the manifest, the first-frame mesh, and
/// one ground-truth OBJ per frame. Returns the manifest path.
pub fn write_sequence(dir: &Path, seq: &SynthSequence) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("gt"))?;
    let mut manifest = seq.manifest.clone();

    save_obj_mesh(&dir.join("rest.obj"), &seq.first_frame)?;
    manifest.rest_mesh = Some(PathBuf::from("rest.obj"));

    let mut gt_paths = Vec::with_capacity(seq.gt_frames.len());
    for (i, frame) in seq.gt_frames.iter().enumerate() {
        let rel = PathBuf::from(format!("gt/frame_{i:04}.obj"));
        save_obj(&dir.join(&rel), frame, seq.first_frame.faces())?;
        gt_paths.push(rel);
    }
    manifest.gt_meshes = gt_paths;

    let path = dir.join("motion.txt");
    save_motion(&path, &manifest)?;
    Ok(path)
}

/// Load a manifest and materialize the meshes it references. Ground truth is
/// optional; the first-frame mesh is not.
pub fn load_sequence(manifest_path: &Path) -> Result<LoadedSequence> {
    let manifest = load_motion(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let rest_rel = manifest
        .rest_mesh
        .clone()
        .ok_or_else(|| Error::Manifest(format!("{}: no rest mesh", manifest_path.display())))?;
    let first_frame = load_obj(&base.join(rest_rel))?;
    let mut gt_frames = Vec::with_capacity(manifest.gt_meshes.len());
    for rel in &manifest.gt_meshes {
        gt_frames.push(load_obj_positions(&base.join(rel), &first_frame)?);
    }
    Ok(LoadedSequence {
        manifest,
        first_frame,
        gt_frames,
    })
}

/// Write a dataset index: one manifest path per line, order preserved.
pub fn write_dataset_index(dir: &Path, manifests: &[PathBuf]) -> Result<PathBuf> {
    let mut out = String::from("trj_dataset 1\n");
    for m in manifests {
        let rel = m.strip_prefix(dir).unwrap_or(m);
        out.push_str(&format!("sequence {}\n", rel.display()));
    }
    let path = dir.join("index.txt");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Read a dataset index, returning absolute manifest paths.
pub fn read_dataset_index(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "trj_dataset 1" => {}
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "bad dataset header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.strip_prefix("sequence ") {
            Some(rel) => out.push(base.join(rel)),
            None => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("unknown record {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let seq = synth_generate(&SynthConfig {
            frames: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let manifest_path = write_sequence(dir.path(), &seq).unwrap();
        let loaded = load_sequence(&manifest_path).unwrap();
        assert_eq!(loaded.manifest.angles, seq.manifest.angles);
        assert_eq!(loaded.first_frame.faces(), seq.first_frame.faces());
        assert_eq!(loaded.gt_frames.len(), 3);
        for (a, b) in loaded.gt_frames[2].iter().zip(&seq.gt_frames[2]) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
        }
    }

    #[test]
    fn dataset_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifests = Vec::new();
        for i in 0..3 {
            let sub = dir.path().join(format!("seq_{i:03}"));
            let seq = synth_generate(&SynthConfig {
                frames: 2,
                seed: i,
                ..SynthConfig::default()
            })
            .unwrap();
            manifests.push(write_sequence(&sub, &seq).unwrap());
        }
        let index = write_dataset_index(dir.path(), &manifests).unwrap();
        let listed = read_dataset_index(&index).unwrap();
        assert_eq!(listed, manifests);
    }
}
