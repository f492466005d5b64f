//! Per-face deformation Jacobians in world or local coordinates.

use super::{GradientOperator, LocalBasis, TriMesh};
use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// Which coordinate frame a Jacobian field's entries live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    /// Entries map world directions to world directions.
    World,
    /// Entries map directions of the rest-pose local frames to world
    /// directions; the identity deformation is the frame itself (a rotation).
    Local,
}

/// One 3x3 deformation Jacobian per face.
#[derive(Debug, Clone)]
pub struct JacobianField {
    mats: Vec<Matrix3<f64>>,
    basis: BasisTag,
}

impl JacobianField {
    pub fn new(mats: Vec<Matrix3<f64>>, basis: BasisTag) -> Result<Self> {
        for (i, m) in mats.iter().enumerate() {
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("jacobian of face {i}")));
            }
        }
        Ok(JacobianField { mats, basis })
    }

    /// Identity deformation expressed in the local bases: one rotation
    /// (the frame itself) per face.
    pub fn identity_local(bases: &LocalBasis) -> Self {
        JacobianField {
            mats: bases.frames().to_vec(),
            basis: BasisTag::Local,
        }
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn face_count(&self) -> usize {
        self.mats.len()
    }

    pub fn mats(&self) -> &[Matrix3<f64>] {
        &self.mats
    }

    pub fn mat(&self, face: usize) -> &Matrix3<f64> {
        &self.mats[face]
    }

    /// Re-express a local-basis field in world coordinates.
    pub fn to_world(&self, bases: &LocalBasis) -> JacobianField {
        match self.basis {
            BasisTag::World => self.clone(),
            BasisTag::Local => JacobianField {
                mats: self
                    .mats
                    .iter()
                    .zip(bases.frames())
                    .map(|(j, b)| j * b.transpose())
                    .collect(),
                basis: BasisTag::World,
            },
        }
    }

    /// Re-express a world field in the local bases.
    pub fn to_local(&self, bases: &LocalBasis) -> JacobianField {
        match self.basis {
            BasisTag::Local => self.clone(),
            BasisTag::World => JacobianField {
                mats: self
                    .mats
                    .iter()
                    .zip(bases.frames())
                    .map(|(j, b)| j * b)
                    .collect(),
                basis: BasisTag::Local,
            },
        }
    }

    /// Flatten to row-major per-face rows, for feeding the neural nets.
    pub fn to_rows(&self) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((self.mats.len(), 9));
        for (f, m) in self.mats.iter().enumerate() {
            for r in 0..3 {
                for c in 0..3 {
                    out[(f, 3 * r + c)] = m[(r, c)];
                }
            }
        }
        out
    }

    /// Inverse of [`to_rows`]: rebuild a field from row-major per-face rows.
    pub fn from_rows(rows: &ndarray::Array2<f64>, basis: BasisTag) -> Result<Self> {
        if rows.ncols() != 9 {
            return Err(Error::shape("jacobian rows", "F x 9", format!("{:?}", rows.dim())));
        }
        let mats = rows
            .rows()
            .into_iter()
            .map(|r| {
                Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8])
            })
            .collect();
        JacobianField::new(mats, basis)
    }
}

/// Extract the deformation Jacobian of every face between the reference mesh
/// and a deformed pose of it. The in-plane part comes from the piecewise
/// linear gradient; the normal direction is completed so a rigid motion maps
/// to its rotation matrix exactly. The result is expressed in the reference
/// local bases.
pub fn compute_jacobians(
    reference: &TriMesh,
    bases: &LocalBasis,
    grads: &GradientOperator,
    deformed: &[Vector3<f64>],
) -> Result<JacobianField> {
    if deformed.len() != reference.vertex_count() {
        return Err(Error::shape(
            "compute_jacobians deformed positions",
            format!("{} vertices", reference.vertex_count()),
            format!("{} vertices", deformed.len()),
        ));
    }
    let mut mats = Vec::with_capacity(reference.face_count());
    for fi in 0..reference.face_count() {
        let world = world_jacobian(reference, grads, deformed, fi)?;
        mats.push(world * bases.frame(fi));
    }
    JacobianField::new(mats, BasisTag::Local)
}

/// World-frame deformation gradient of one face, with the normal completion
/// `n_deformed x n_reference^T` added to the rank-2 in-plane part.
pub fn world_jacobian(
    reference: &TriMesh,
    grads: &GradientOperator,
    deformed: &[Vector3<f64>],
    face: usize,
) -> Result<Matrix3<f64>> {
    let [a, b, c] = reference.face(face);
    let (da, db, dc) = (deformed[a], deformed[b], deformed[c]);
    let in_plane = grads.apply(reference, deformed, face).transpose();

    let n_def_raw = (db - da).cross(&(dc - da));
    let n_def = n_def_raw.norm();
    if !n_def.is_finite() || !in_plane.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite(format!("deformed face {face}")));
    }
    let [p0, p1, p2] = reference.face_positions(face);
    let n_ref = (p1 - p0).cross(&(p2 - p0)).normalize();
    let n_def = if n_def > 0.0 { n_def_raw / n_def } else { n_ref };
    Ok(in_plane + n_def * n_ref.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_local_bases, face_gradient_operator, shapes};
    use nalgebra::Rotation3;

    #[test]
    fn identity_deformation_world_is_identity() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let field = compute_jacobians(&mesh, &bases, &grads, mesh.vertices()).unwrap();
        let world = field.to_world(&bases);
        for f in 0..mesh.face_count() {
            assert!((world.mat(f) - Matrix3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn identity_deformation_local_is_rotation() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let field = compute_jacobians(&mesh, &bases, &grads, mesh.vertices()).unwrap();
        assert_eq!(field.basis(), BasisTag::Local);
        for f in 0..mesh.face_count() {
            let j = field.mat(f);
            assert!((j.determinant() - 1.0).abs() < 1e-10);
            assert!((j.transpose() * j - Matrix3::identity()).norm() < 1e-10);
            assert!((j - bases.frame(f)).norm() < 1e-10);
        }
    }

    #[test]
    fn uniform_scale_scales_in_plane_singular_values() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let scaled: Vec<_> = mesh.vertices().iter().map(|v| 2.0 * v).collect();
        let field = compute_jacobians(&mesh, &bases, &grads, &scaled).unwrap();
        for f in 0..mesh.face_count() {
            let mut sv: Vec<f64> = field.mat(f).svd(false, false).singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // two in-plane singular values of 2, normal completion of 1
            assert!((sv[0] - 2.0).abs() < 1e-10);
            assert!((sv[1] - 2.0).abs() < 1e-10);
            assert!((sv[2] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rigid_rotation_equivariance_world_frame() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let rot = Rotation3::from_euler_angles(0.4, 0.9, -0.2);
        let rotated: Vec<_> = mesh.vertices().iter().map(|v| rot * v).collect();
        let world = compute_jacobians(&mesh, &bases, &grads, &rotated)
            .unwrap()
            .to_world(&bases);
        for f in 0..mesh.face_count() {
            assert!((world.mat(f) - rot.into_inner()).norm() < 1e-10);
        }
    }

    #[test]
    fn rows_round_trip() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let field = compute_jacobians(&mesh, &bases, &grads, mesh.vertices()).unwrap();
        let rows = field.to_rows();
        let back = JacobianField::from_rows(&rows, field.basis()).unwrap();
        for f in 0..mesh.face_count() {
            assert_eq!(field.mat(f), back.mat(f));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mesh = shapes::icosphere(1);
        let grads = face_gradient_operator(&mesh).unwrap();
        let bases = build_local_bases(&mesh).unwrap();
        let short = &mesh.vertices()[..10];
        assert!(compute_jacobians(&mesh, &bases, &grads, short).is_err());
    }
}
