//! Face and area-weighted vertex normals for an arbitrary pose.

use super::TriMesh;
use nalgebra::Vector3;

/// Unit face normals of the given pose. Zero-area faces fall back to +z so
/// downstream angular metrics stay finite; they carry no weight in the
/// vertex normals.
pub fn face_normals(mesh: &TriMesh, positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    mesh.faces()
        .iter()
        .map(|&[a, b, c]| {
            let n = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            }
        })
        .collect()
}

/// Area-weighted unit vertex normals plus the unit face normals they were
/// built from.
pub fn vertex_and_face_normals(
    mesh: &TriMesh,
    positions: &[Vector3<f64>],
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let mut vnorm = vec![Vector3::zeros(); mesh.vertex_count()];
    let mut fnorm = Vec::with_capacity(mesh.face_count());
    for &[a, b, c] in mesh.faces() {
        // cross product length is twice the area: area weighting for free
        let weighted = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
        let len = weighted.norm();
        if len > 0.0 {
            fnorm.push(weighted / len);
            vnorm[a] += weighted;
            vnorm[b] += weighted;
            vnorm[c] += weighted;
        } else {
            fnorm.push(Vector3::new(0.0, 0.0, 1.0));
        }
    }
    let vnorm = vnorm
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            }
        })
        .collect();
    (vnorm, fnorm)
}
