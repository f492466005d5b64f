//! Prefactorized Poisson solve: vertex positions from a per-face Jacobian
//! field, translation pinned to the rest pose's mass-weighted centroid.

use super::{
    build_local_bases, cotan_laplacian, face_gradient_operator, BasisTag, GradientOperator,
    JacobianField, LocalBasis, TriMesh,
};
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, Dyn, Matrix3, Vector3};
use ndarray::Array2;

/// Reusable factorization of the pinned Laplacian for one reference mesh.
///
/// The translation nullspace is eliminated by augmenting `L` with the rank-1
/// term `sigma * m m^T` over the lumped vertex masses, which constrains the
/// solution's mass-weighted centroid to the rest pose's centroid exactly.
/// The handle is read-only after construction and shareable across
/// concurrent solves.
pub struct PoissonSystem {
    chol: Cholesky<f64, Dyn>,
    grads: GradientOperator,
    bases: LocalBasis,
    faces: Vec<[usize; 3]>,
    vertex_mass: Vec<f64>,
    total_mass: f64,
    anchor: Vector3<f64>,
    sigma: f64,
    n_vertices: usize,
}

/// Factorize the Poisson system of a reference mesh once; solves against the
/// factorization are deterministic and reusable for every frame.
pub fn poisson_prefactorize(mesh: &TriMesh) -> Result<PoissonSystem> {
    let grads = face_gradient_operator(mesh)?;
    let bases = build_local_bases(mesh)?;
    let lap = cotan_laplacian(mesh, &grads);
    let n = mesh.vertex_count();

    let vertex_mass = mesh.vertex_masses();
    let total_mass: f64 = vertex_mass.iter().sum();
    let anchor = mesh.mass_centroid();

    let mean_diag = lap.diagonal().sum() / n as f64;
    let mass_sq: f64 = vertex_mass.iter().map(|m| m * m).sum();
    let sigma = mean_diag / mass_sq;

    let mut pinned = lap;
    for i in 0..n {
        for j in 0..n {
            pinned[(i, j)] += sigma * vertex_mass[i] * vertex_mass[j];
        }
    }
    let chol = Cholesky::new(pinned).ok_or_else(|| {
        Error::Poisson("pinned Laplacian is not positive definite; broken mesh".into())
    })?;

    Ok(PoissonSystem {
        chol,
        grads,
        bases,
        faces: mesh.faces().to_vec(),
        vertex_mass,
        total_mass,
        anchor,
        sigma,
        n_vertices: n,
    })
}

impl PoissonSystem {
    pub fn vertex_count(&self) -> usize {
        self.n_vertices
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn bases(&self) -> &LocalBasis {
        &self.bases
    }

    pub fn gradients(&self) -> &GradientOperator {
        &self.grads
    }

    pub fn anchor(&self) -> Vector3<f64> {
        self.anchor
    }

    /// Solve for the positions whose per-face gradients best match the given
    /// Jacobian field in the weighted least-squares sense; the mass-weighted
    /// centroid of the result equals the anchor.
    pub fn solve(&self, field: &JacobianField) -> Result<Vec<Vector3<f64>>> {
        if field.face_count() != self.faces.len() {
            return Err(Error::shape(
                "poisson_solve jacobians",
                format!("{} faces", self.faces.len()),
                format!("{} faces", field.face_count()),
            ));
        }
        let world = field.to_world(&self.bases);
        let rhs = self.assemble_rhs(world.mats())?;
        let sol = self.chol.solve(&rhs);
        Ok((0..self.n_vertices)
            .map(|v| Vector3::new(sol[(v, 0)], sol[(v, 1)], sol[(v, 2)]))
            .collect())
    }

    fn assemble_rhs(&self, world: &[Matrix3<f64>]) -> Result<DMatrix<f64>> {
        let mut rhs = DMatrix::zeros(self.n_vertices, 3);
        for (fi, jw) in world.iter().enumerate() {
            if !jw.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("jacobian of face {fi}")));
            }
            let target = jw.transpose();
            let contrib = self.grads.areas()[fi] * self.grads.world_block(fi).transpose() * target;
            let f = self.faces[fi];
            for j in 0..3 {
                for a in 0..3 {
                    rhs[(f[j], a)] += contrib[(j, a)];
                }
            }
        }
        let pin = self.sigma * self.total_mass;
        for v in 0..self.n_vertices {
            for a in 0..3 {
                rhs[(v, a)] += pin * self.vertex_mass[v] * self.anchor[a];
            }
        }
        Ok(rhs)
    }

    /// Forward pass over flattened world-frame Jacobian rows (F x 9), for the
    /// autodiff tape. Returns N x 3 positions.
    pub fn solve_world_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let field = JacobianField::from_rows(rows, BasisTag::World)?;
        let positions = self.solve(&field)?;
        let mut out = Array2::zeros((self.n_vertices, 3));
        for (v, p) in positions.iter().enumerate() {
            out[(v, 0)] = p.x;
            out[(v, 1)] = p.y;
            out[(v, 2)] = p.z;
        }
        Ok(out)
    }

    /// Adjoint of [`solve_world_rows`]: pull a gradient on positions (N x 3)
    /// back to a gradient on the flattened world-frame Jacobians (F x 9),
    /// reusing the same factorization.
    pub fn adjoint_world_rows(&self, dv: &Array2<f64>) -> Array2<f64> {
        let mut rhs = DMatrix::zeros(self.n_vertices, 3);
        for v in 0..self.n_vertices {
            for a in 0..3 {
                rhs[(v, a)] = dv[(v, a)];
            }
        }
        let u = self.chol.solve(&rhs);
        let mut out = Array2::zeros((self.faces.len(), 9));
        for fi in 0..self.faces.len() {
            let f = self.faces[fi];
            let mut u_face = Matrix3::zeros();
            for j in 0..3 {
                for a in 0..3 {
                    u_face[(j, a)] = u[(f[j], a)];
                }
            }
            // dT_i = rho_i * G_i * U_i, and J_world = T_i^T
            let dt = self.grads.areas()[fi] * self.grads.world_block(fi) * u_face;
            let dj = dt.transpose();
            for r in 0..3 {
                for c in 0..3 {
                    out[(fi, 3 * r + c)] = dj[(r, c)];
                }
            }
        }
        out
    }
}

/// Convenience wrapper matching the kernel's operation vocabulary.
pub fn poisson_solve(system: &PoissonSystem, field: &JacobianField) -> Result<Vec<Vector3<f64>>> {
    system.solve(field)
}
