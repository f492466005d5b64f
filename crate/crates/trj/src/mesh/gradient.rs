//! Piecewise-linear gradients per face and the assembled cotangent Laplacian.

use super::{LocalBasis, TriMesh};
use crate::error::Result;
use nalgebra::{DMatrix, Matrix3, Vector3};

/// Cotangent weights beyond this magnitude are clamped; slivers this bad only
/// appear in scanned inputs.
pub const COTAN_CLAMP: f64 = 1e8;

/// Per-face linear gradient operators together with the diagonal face-area
/// mass weights. `world[f]` has the hat-function gradient of corner `j` in
/// column `j`, so `world[f] * (f0, f1, f2)^T` is the world-space gradient of
/// a scalar function with those corner values.
#[derive(Debug, Clone)]
pub struct GradientOperator {
    world: Vec<Matrix3<f64>>,
    areas: Vec<f64>,
}

impl GradientOperator {
    /// World-frame gradient block of one face (columns per corner).
    pub fn world_block(&self, face: usize) -> &Matrix3<f64> {
        &self.world[face]
    }

    /// Gradient block expressed in a local frame: third row (normal
    /// direction) is zero up to rounding.
    pub fn local_block(&self, face: usize, basis: &LocalBasis) -> Matrix3<f64> {
        basis.frame(face).transpose() * self.world[face]
    }

    /// Face-area mass weights (the diagonal of the mass matrix).
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn face_count(&self) -> usize {
        self.world.len()
    }

    /// World gradient of each coordinate of a vertex field: a 3x3 matrix per
    /// face whose entry (k, a) is the derivative of coordinate `a` along
    /// world axis `k`. Equals the transposed deformation gradient.
    pub fn apply(&self, mesh: &TriMesh, positions: &[Vector3<f64>], face: usize) -> Matrix3<f64> {
        let [a, b, c] = mesh.face(face);
        let p = Matrix3::from_rows(&[
            positions[a].transpose(),
            positions[b].transpose(),
            positions[c].transpose(),
        ]);
        self.world[face] * p
    }
}

/// Build the per-face gradient operator. The hat-function gradient of corner
/// `j` is `n x e_j / (2A)` with `e_j` the opposite edge; the three gradients
/// of a face sum to zero.
pub fn face_gradient_operator(mesh: &TriMesh) -> Result<GradientOperator> {
    let mut world = Vec::with_capacity(mesh.face_count());
    let mut areas = Vec::with_capacity(mesh.face_count());
    for fi in 0..mesh.face_count() {
        let [p0, p1, p2] = mesh.face_positions(fi);
        let n_raw = (p1 - p0).cross(&(p2 - p0));
        let double_area = n_raw.norm();
        if !(double_area > 2.0 * super::MIN_FACE_AREA) {
            return Err(crate::error::Error::DegenerateFace {
                face: fi,
                area: 0.5 * double_area,
            });
        }
        let n = n_raw / double_area;
        let g0 = n.cross(&(p2 - p1)) / double_area;
        let g1 = n.cross(&(p0 - p2)) / double_area;
        let g2 = n.cross(&(p1 - p0)) / double_area;
        world.push(Matrix3::from_columns(&[g0, g1, g2]));
        areas.push(0.5 * double_area);
    }
    Ok(GradientOperator { world, areas })
}

/// Assemble the cotangent Laplacian `L = grad^T * mass * grad` as a dense
/// symmetric PSD matrix with the constant vector in its nullspace. Local
/// stiffness entries beyond [`COTAN_CLAMP`] are clamped with a warning and
/// the local diagonal rebalanced to keep constants in the nullspace.
pub fn cotan_laplacian(mesh: &TriMesh, grads: &GradientOperator) -> DMatrix<f64> {
    let n = mesh.vertex_count();
    let mut lap = DMatrix::zeros(n, n);
    for fi in 0..mesh.face_count() {
        let g = &grads.world[fi];
        let a = grads.areas[fi];
        let mut local = [[0.0; 3]; 3];
        let mut clamped = false;
        for j in 0..3 {
            for k in (j + 1)..3 {
                let mut w = a * g.column(j).dot(&g.column(k));
                if w.abs() > COTAN_CLAMP {
                    w = w.signum() * COTAN_CLAMP;
                    clamped = true;
                }
                local[j][k] = w;
                local[k][j] = w;
            }
        }
        if clamped {
            log::warn!("face {fi}: cotangent weight clamped to +/-{COTAN_CLAMP:e}");
        }
        for j in 0..3 {
            local[j][j] = -(local[j][(j + 1) % 3] + local[j][(j + 2) % 3]);
        }
        let f = mesh.face(fi);
        for j in 0..3 {
            for k in 0..3 {
                lap[(f[j], f[k])] += local[j][k];
            }
        }
    }
    lap
}
