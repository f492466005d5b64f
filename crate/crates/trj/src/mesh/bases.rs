//! Per-face orthonormal frames anchored at face centroids.

use super::TriMesh;
use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// One orthonormal frame per face: columns are two in-plane tangents and the
/// unit normal, with determinant +1. Frames are computed once from the rest
/// pose and never updated over a sequence.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    frames: Vec<Matrix3<f64>>,
    centroids: Vec<Vector3<f64>>,
}

impl LocalBasis {
    pub fn frame(&self, face: usize) -> &Matrix3<f64> {
        &self.frames[face]
    }

    pub fn frames(&self) -> &[Matrix3<f64>] {
        &self.frames
    }

    pub fn centroid(&self, face: usize) -> Vector3<f64> {
        self.centroids[face]
    }

    pub fn centroids(&self) -> &[Vector3<f64>] {
        &self.centroids
    }

    pub fn face_count(&self) -> usize {
        self.frames.len()
    }
}

/// Build the local frame of every face: first tangent along the first edge,
/// normal from the winding order, second tangent completing a right-handed
/// frame. Deterministic given the mesh.
pub fn build_local_bases(mesh: &TriMesh) -> Result<LocalBasis> {
    let mut frames = Vec::with_capacity(mesh.face_count());
    let mut centroids = Vec::with_capacity(mesh.face_count());
    for fi in 0..mesh.face_count() {
        let [p0, p1, p2] = mesh.face_positions(fi);
        let e0 = p1 - p0;
        let n_raw = e0.cross(&(p2 - p0));
        let double_area = n_raw.norm();
        if !(double_area > 2.0 * super::MIN_FACE_AREA) {
            return Err(Error::DegenerateFace {
                face: fi,
                area: 0.5 * double_area,
            });
        }
        let t1 = e0.normalize();
        let n = n_raw / double_area;
        let t2 = n.cross(&t1);
        frames.push(Matrix3::from_columns(&[t1, t2, n]));
        centroids.push((p0 + p1 + p2) / 3.0);
    }
    Ok(LocalBasis { frames, centroids })
}
