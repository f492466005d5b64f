//! Triangle-mesh kernel: local bases, intrinsic gradients, the cotangent
//! Laplacian, per-face Jacobian extraction and the prefactorized Poisson
//! solve that turns a Jacobian field back into vertex positions.
//!
//! All kernel math is in double precision. The deformed pose of a mesh is
//! passed around as a plain position slice so one connectivity can serve a
//! whole sequence of frames.

mod bases;
mod gradient;
mod jacobian;
mod normals;
mod poisson;
pub mod shapes;

pub use bases::{build_local_bases, LocalBasis};
pub use gradient::{cotan_laplacian, face_gradient_operator, GradientOperator};
pub use jacobian::{compute_jacobians, BasisTag, JacobianField};
pub use normals::{face_normals, vertex_and_face_normals};
pub use poisson::{poisson_prefactorize, poisson_solve, PoissonSystem};

use crate::error::{Error, Result};
use nalgebra::Vector3;

/// Minimum admissible face area in m^2; smaller faces are rejected at load.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// A triangle mesh: vertex positions plus counter-clockwise face indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Build a mesh and check the structural invariants: indices in range,
    /// no repeated vertex within a face, no degenerate faces, every edge
    /// shared by at most two faces.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} references vertex {v}, mesh has {n} vertices"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references the same vertex twice: {f:?}"
                )));
            }
        }
        for v in &vertices {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::NonFinite("mesh vertex positions".into()));
            }
        }
        let mesh = TriMesh { vertices, faces };
        for fi in 0..mesh.faces.len() {
            let area = mesh.face_area(fi);
            if !(area > MIN_FACE_AREA) {
                return Err(Error::DegenerateFace { face: fi, area });
            }
        }
        mesh.check_edge_manifold()?;
        Ok(mesh)
    }

    fn check_edge_manifold(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (edge, count) in edge_count {
            if count > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({}, {}) shared by {} faces, mesh is not edge-manifold",
                    edge.0, edge.1, count
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face(&self, i: usize) -> [usize; 3] {
        self.faces[i]
    }

    /// Face corner positions in the rest pose.
    pub fn face_positions(&self, i: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [p0, p1, p2] = self.face_positions(i);
        0.5 * (p1 - p0).cross(&(p2 - p0)).norm()
    }

    pub fn face_centroid(&self, i: usize) -> Vector3<f64> {
        let [p0, p1, p2] = self.face_positions(i);
        (p0 + p1 + p2) / 3.0
    }

    /// Barycentric lumped vertex masses: one third of each incident face area.
    pub fn vertex_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.vertices.len()];
        for fi in 0..self.faces.len() {
            let a = self.face_area(fi) / 3.0;
            for &v in &self.faces[fi] {
                m[v] += a;
            }
        }
        m
    }

    /// Mass-weighted centroid of the rest pose; the Poisson translation anchor.
    pub fn mass_centroid(&self) -> Vector3<f64> {
        mass_centroid_of(&self.vertices, &self.vertex_masses())
    }

    /// Height extent along +y, used to scale global translation tracks.
    pub fn height(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.min(v.y);
            hi = hi.max(v.y);
        }
        hi - lo
    }

    /// Radius of the bounding sphere around the vertex centroid.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64;
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    /// Whether the mesh is connected under edge adjacency. The Poisson pin
    /// and the spectral features both require a single component.
    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                adj[f[k]].push(f[(k + 1) % 3]);
                adj[f[(k + 1) % 3]].push(f[k]);
            }
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Positions as an N x 3 row matrix.
pub fn positions_to_rows(positions: &[Vector3<f64>]) -> ndarray::Array2<f64> {
    let mut out = ndarray::Array2::zeros((positions.len(), 3));
    for (r, v) in positions.iter().enumerate() {
        out[(r, 0)] = v.x;
        out[(r, 1)] = v.y;
        out[(r, 2)] = v.z;
    }
    out
}

/// Inverse of [`positions_to_rows`].
pub fn positions_from_rows(rows: &ndarray::Array2<f64>) -> Vec<Vector3<f64>> {
    (0..rows.nrows())
        .map(|r| Vector3::new(rows[(r, 0)], rows[(r, 1)], rows[(r, 2)]))
        .collect()
}

/// Mass-weighted centroid of an arbitrary pose of the same connectivity.
pub fn mass_centroid_of(positions: &[Vector3<f64>], masses: &[f64]) -> Vector3<f64> {
    let total: f64 = masses.iter().sum();
    let mut c = Vector3::zeros();
    for (p, &m) in positions.iter().zip(masses) {
        c += m * p;
    }
    c / total
}

/// Area of a triangle given its corner positions.
pub fn triangle_area(p: &[Vector3<f64>; 3]) -> f64 {
    0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 3]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_repeated_vertex_in_face() {
        let err = TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 1]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_degenerate_face_with_index() {
        let err = TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.), v(0., 1., 0.)],
            vec![[0, 1, 3], [0, 1, 2]],
        );
        match err {
            Err(Error::DegenerateFace { face, .. }) => assert_eq!(face, 1),
            other => panic!("expected degenerate-face error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_manifold_edge() {
        // three faces sharing the edge (0, 1)
        let err = TriMesh::new(
            vec![
                v(0., 0., 0.),
                v(1., 0., 0.),
                v(0., 1., 0.),
                v(0., -1., 0.),
                v(0., 0., 1.),
            ],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        );
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn vertex_masses_sum_to_total_area() {
        let mesh = shapes::icosphere(1);
        let total_area: f64 = (0..mesh.face_count()).map(|f| mesh.face_area(f)).sum();
        let mass_sum: f64 = mesh.vertex_masses().iter().sum();
        assert!((total_area - mass_sum).abs() < 1e-12);
    }

    #[test]
    fn icosphere_is_connected_and_manifold() {
        let mesh = shapes::icosphere(2);
        assert_eq!(mesh.face_count(), 320);
        assert!(mesh.is_connected());
    }
}
