//! Wave kernel signatures from the Laplace-Beltrami spectrum, averaged onto
//! faces, with a binary cache keyed by mesh content hash.

use crate::error::{Error, Result};
use crate::mesh::{cotan_laplacian, face_gradient_operator, TriMesh};
use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// Eigenpair budget: min(64, N - 2) smallest modes.
pub const DEFAULT_K_EIGEN: usize = 64;
/// Log-energy sample count.
pub const DEFAULT_K_WKS: usize = 16;

/// Per-face wave kernel signature: `k_wks` energy bins per face, the
/// vertex-level signature of [`vertex_wave_kernel_signature`] averaged onto
/// face corners.
pub fn wave_kernel_signature(mesh: &TriMesh, k_eigen: usize, k_wks: usize) -> Result<Array2<f64>> {
    let vertex_wks = vertex_wave_kernel_signature(mesh, k_eigen, k_wks)?;
    let mut face_wks = Array2::zeros((mesh.face_count(), k_wks));
    for (fi, f) in mesh.faces().iter().enumerate() {
        for b in 0..k_wks {
            face_wks[(fi, b)] =
                (vertex_wks[(f[0], b)] + vertex_wks[(f[1], b)] + vertex_wks[(f[2], b)]) / 3.0;
        }
    }
    Ok(face_wks)
}

/// Vertex-level wave kernel signature. Each energy bin is normalized by its
/// partition sum, so it is nonnegative and sums to one over vertices; the
/// whole descriptor is invariant to rigid motion.
pub fn vertex_wave_kernel_signature(
    mesh: &TriMesh,
    k_eigen: usize,
    k_wks: usize,
) -> Result<Array2<f64>> {
    let n = mesh.vertex_count();
    if k_eigen + 2 > n {
        return Err(Error::Eigensolver(format!(
            "mesh with {n} vertices cannot supply {k_eigen} eigenpairs"
        )));
    }
    if !mesh.is_connected() {
        return Err(Error::Eigensolver(
            "mesh is disconnected; spectrum has repeated zeros".into(),
        ));
    }

    let grads = face_gradient_operator(mesh)?;
    let lap = cotan_laplacian(mesh, &grads);
    let masses = mesh.vertex_masses();

    // generalized problem L phi = lambda M phi via M^(-1/2) L M^(-1/2)
    let inv_sqrt_m: Vec<f64> = masses.iter().map(|&m| 1.0 / m.sqrt()).collect();
    let mut sym = lap;
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] *= inv_sqrt_m[i] * inv_sqrt_m[j];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    if !eig.eigenvalues.iter().all(|x| x.is_finite()) {
        return Err(Error::Eigensolver(format!("mesh with {n} vertices")));
    }

    // skip the constant zero mode; keep the next k_eigen
    let kept: Vec<usize> = order[1..=k_eigen].to_vec();
    let log_e: Vec<f64> = kept
        .iter()
        .map(|&i| eig.eigenvalues[i].max(1e-12).ln())
        .collect();

    let (e_min, e_max) = (log_e[0], log_e[k_eigen - 1]);
    let sigma = (7.0 * (e_max - e_min) / k_wks as f64).max(1e-12);
    let energies: Vec<f64> = (0..k_wks)
        .map(|b| e_min + (e_max - e_min) * b as f64 / (k_wks - 1) as f64)
        .collect();

    // M-orthonormal eigenfunctions: phi = M^(-1/2) u
    let mut vertex_wks = Array2::zeros((n, k_wks));
    for (ki, &col) in kept.iter().enumerate() {
        let u = eig.eigenvectors.column(col);
        for (b, &e) in energies.iter().enumerate() {
            let w = (-(e - log_e[ki]).powi(2) / (2.0 * sigma * sigma)).exp();
            if w == 0.0 {
                continue;
            }
            for v in 0..n {
                let phi = u[v] * inv_sqrt_m[v];
                vertex_wks[(v, b)] += phi * phi * w;
            }
        }
    }
    for b in 0..k_wks {
        let total: f64 = vertex_wks.column(b).sum();
        if total > 0.0 {
            vertex_wks.column_mut(b).mapv_inplace(|x| x / total);
        }
    }
    Ok(vertex_wks)
}

/// Content hash of a mesh: raw little-endian vertex bytes plus face indices.
pub fn mesh_content_hash(mesh: &TriMesh) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for v in mesh.vertices() {
        for c in 0..3 {
            hasher.update(v[c].to_le_bytes());
        }
    }
    for f in mesh.faces() {
        for &i in f {
            hasher.update((i as u64).to_le_bytes());
        }
    }
    hasher.finalize().into()
}

const WKS_MAGIC: &[u8; 4] = b"TRJ1";
const WKS_KIND: u32 = 2;

/// Persist a computed signature keyed by the mesh hash.
pub fn save_wks_cache(path: &Path, mesh: &TriMesh, wks: &Array2<f64>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(WKS_MAGIC);
    out.extend_from_slice(&WKS_KIND.to_le_bytes());
    out.extend_from_slice(&mesh_content_hash(mesh));
    out.extend_from_slice(&(wks.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(wks.ncols() as u64).to_le_bytes());
    for x in wks.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest: [u8; 32] = Sha256::digest(&out).into();
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    file.write_all(&digest)?;
    Ok(())
}

/// Load a cached signature; `None` when the file is absent or keyed to a
/// different mesh. Corrupt files are an error.
pub fn load_wks_cache(path: &Path, mesh: &TriMesh) -> Result<Option<Array2<f64>>> {
    let mut bytes = Vec::new();
    match std::fs::File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if bytes.len() < 32 {
        return Err(Error::Checkpoint(format!("{}: truncated cache", path.display())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let expect: [u8; 32] = Sha256::digest(body).into();
    if digest != expect {
        return Err(Error::Checkpoint(format!(
            "{}: checksum mismatch",
            path.display()
        )));
    }
    let mut cur = body;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Checkpoint(format!("{}: truncated cache", path.display())));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4)? != WKS_MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let kind = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if kind != WKS_KIND {
        return Err(Error::Checkpoint(format!("{}: unknown chunk kind {kind}", path.display())));
    }
    let hash = take(32)?;
    if hash != mesh_content_hash(mesh) {
        return Ok(None);
    }
    let rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    Ok(Some(
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?,
    ))
}
