//! Procedural reference meshes used by the synthetic generator and tests.

use super::TriMesh;
use nalgebra::Vector3;
use std::collections::HashMap;

/// Unit-radius icosphere with `subdiv` midpoint subdivisions of the
/// icosahedron: 20 * 4^subdiv faces.
pub fn icosphere(subdiv: u32) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();

    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let m = ((verts[a] + verts[b]) / 2.0).normalize();
                verts.push(m);
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    TriMesh::new(verts, faces).expect("icosphere construction is always valid")
}

/// Flat z=0 grid over [0,1]^2 with `nx` x `ny` cells, each split in two.
pub fn grid(nx: usize, ny: usize) -> TriMesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(Vector3::new(i as f64 / nx as f64, j as f64 / ny as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(verts, faces).expect("grid construction is always valid")
}

/// Two unit equilateral triangles sharing the edge (0, 1).
pub fn two_equilateral() -> TriMesh {
    let h = 3.0_f64.sqrt() / 2.0;
    TriMesh::new(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, h, 0.0),
            Vector3::new(0.5, -h, 0.0),
        ],
        vec![[0, 1, 2], [1, 0, 3]],
    )
    .expect("two-triangle strip is always valid")
}

/// Closed capsule-like tube along +y: `rings` cross-sections of `segs`
/// vertices each, radius profile supplied per ring, capped with pole fans.
/// `ring_y` gives the height of each ring.
pub fn capped_tube(ring_y: &[f64], ring_r: &[f64], segs: usize) -> TriMesh {
    assert!(ring_y.len() == ring_r.len() && ring_y.len() >= 2 && segs >= 3);
    let rings = ring_y.len();
    let mut verts = Vec::with_capacity(rings * segs + 2);
    for (y, r) in ring_y.iter().zip(ring_r) {
        for s in 0..segs {
            let a = 2.0 * std::f64::consts::PI * s as f64 / segs as f64;
            verts.push(Vector3::new(r * a.cos(), *y, r * a.sin()));
        }
    }
    let bottom = verts.len();
    verts.push(Vector3::new(0.0, ring_y[0] - ring_r[0], 0.0));
    let top = verts.len();
    verts.push(Vector3::new(0.0, ring_y[rings - 1] + ring_r[rings - 1], 0.0));

    let mut faces = Vec::new();
    let at = |ring: usize, s: usize| ring * segs + (s % segs);
    for ring in 0..rings - 1 {
        for s in 0..segs {
            let (a, b) = (at(ring, s), at(ring, s + 1));
            let (c, d) = (at(ring + 1, s), at(ring + 1, s + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for s in 0..segs {
        faces.push([at(0, s), at(0, s + 1), bottom]);
        faces.push([at(rings - 1, s + 1), at(rings - 1, s), top]);
    }
    TriMesh::new(verts, faces).expect("tube construction is always valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(0).face_count(), 20);
        assert_eq!(icosphere(2).face_count(), 320);
        assert_eq!(icosphere(2).vertex_count(), 162);
    }

    #[test]
    fn icosphere_vertices_on_unit_sphere() {
        let m = icosphere(2);
        for v in m.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_flat_and_manifold() {
        let m = grid(8, 8);
        assert_eq!(m.face_count(), 128);
        assert!(m.is_connected());
    }

    #[test]
    fn tube_is_closed_manifold() {
        let m = capped_tube(&[0.0, 0.5, 1.0], &[0.2, 0.25, 0.2], 12);
        assert!(m.is_connected());
        // closed surface: Euler characteristic 2
        let e: std::collections::HashSet<(usize, usize)> = m
            .faces()
            .iter()
            .flat_map(|f| (0..3).map(move |k| {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                (a.min(b), a.max(b))
            }))
            .collect();
        let chi = m.vertex_count() as i64 - e.len() as i64 + m.face_count() as i64;
        assert_eq!(chi, 2);
    }
}
