//! Linear-blend-skinning oracle for synthetic ground truth. Rigging exists
//! only inside the generator; the learned pipeline never sees weights.

use super::motion::KinematicTree;
use crate::error::{Error, Result};
use nalgebra::Vector3;
use ndarray::Array2;

/// Per-vertex skinning weights over joints; rows sum to one.
#[derive(Debug, Clone)]
pub struct SkinWeights {
    weights: Array2<f64>,
}

impl SkinWeights {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        for (row, r) in weights.rows().into_iter().enumerate() {
            if r.iter().any(|&w| w < 0.0) {
                return Err(Error::BadSkinWeights {
                    row,
                    sum: f64::NAN,
                });
            }
            let sum: f64 = r.sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(Error::BadSkinWeights { row, sum });
            }
        }
        Ok(SkinWeights { weights })
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn joint_count(&self) -> usize {
        self.weights.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.weights
    }
}

/// Pose rest vertices by standard linear blend skinning over relative Euler
/// angles: each joint contributes its current world transform composed with
/// the inverse of its rest transform, blended by the vertex weights.
pub fn lbs_pose(
    rest: &[Vector3<f64>],
    tree: &KinematicTree,
    weights: &SkinWeights,
    angles: &[f64],
) -> Result<Vec<Vector3<f64>>> {
    if weights.vertex_count() != rest.len() || weights.joint_count() != tree.joint_count() {
        return Err(Error::shape(
            "lbs_pose weights",
            format!("{} x {}", rest.len(), tree.joint_count()),
            format!("{} x {}", weights.vertex_count(), weights.joint_count()),
        ));
    }
    let fk = tree.forward_kinematics(angles)?;
    // rest pose has zero angles, so rest transforms are pure translations to
    // the rest joint positions
    let rest_origins = tree.rest_positions();
    let w = weights.matrix();
    let mut out = Vec::with_capacity(rest.len());
    for (v, p) in rest.iter().enumerate() {
        let mut posed = Vector3::zeros();
        for j in 0..tree.joint_count() {
            let wj = w[(v, j)];
            if wj == 0.0 {
                continue;
            }
            let (rot, origin) = fk[j];
            posed += wj * (rot * (p - rest_origins[j]) + origin);
        }
        out.push(posed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::motion::euler_zyx;

    fn chain2() -> KinematicTree {
        KinematicTree::new(
            vec![-1, 0],
            vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn zero_angles_reproduce_rest() {
        let tree = chain2();
        let rest: Vec<_> = (0..8)
            .map(|i| Vector3::new((i % 2) as f64 * 0.2, i as f64 * 0.25, 0.0))
            .collect();
        let w = SkinWeights::new(Array2::from_shape_fn((8, 2), |(v, j)| {
            if (v < 4) == (j == 0) {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let posed = lbs_pose(&rest, &tree, &w, &[0.0; 6]).unwrap();
        for (a, b) in posed.iter().zip(&rest) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn single_joint_weight_rotates_rigidly() {
        let tree = chain2();
        let rest: Vec<_> = (0..5)
            .map(|i| Vector3::new(0.3, 1.0 + i as f64 * 0.1, 0.1))
            .collect();
        // all weight on joint 1, which sits at (0, 1, 0)
        let w = SkinWeights::new(Array2::from_shape_fn((5, 2), |(_, j)| {
            if j == 1 {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let angles = [0.0, 0.0, 0.0, 0.4, -0.3, 0.9];
        let posed = lbs_pose(&rest, &tree, &w, &angles).unwrap();
        let rot = euler_zyx(&angles[3..6]);
        let origin = Vector3::new(0.0, 1.0, 0.0);
        for (p, r) in posed.iter().zip(&rest) {
            let expect = rot * (r - origin) + origin;
            assert!((p - expect).norm() < 1e-14);
        }
    }

    /// Independent oracle: a hand-rolled two-bone elbow computation, written
    /// directly from composed rotations rather than through the FK helper.
    #[test]
    fn two_bone_elbow_matches_independent_oracle() {
        let tree = chain2();
        let rest: Vec<_> = (0..20)
            .map(|i| {
                Vector3::new(
                    0.05 * (i % 4) as f64,
                    0.05 * i as f64,
                    -0.03 * (i % 3) as f64,
                )
            })
            .collect();
        // smooth blend along y between the two joints
        let mut wm = Array2::zeros((20, 2));
        for v in 0..20 {
            let t = rest[v].y.clamp(0.0, 1.0);
            wm[(v, 0)] = 1.0 - t;
            wm[(v, 1)] = t;
        }
        let w = SkinWeights::new(wm.clone()).unwrap();

        // 90-degree elbow bend about z at joint 1, shoulder rotation about x
        let shoulder = [0.3, 0.0, 0.0];
        let elbow = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let angles = [shoulder[0], shoulder[1], shoulder[2], elbow[0], elbow[1], elbow[2]];
        let posed = lbs_pose(&rest, &tree, &w, &angles).unwrap();

        // oracle: world transform of joint 0 is R0 about origin; joint 1 is
        // R0 * (offset + R1 (x - offset)) written out by hand
        let r0 = euler_zyx(&shoulder);
        let r1 = euler_zyx(&elbow);
        let off = Vector3::new(0.0, 1.0, 0.0);
        for v in 0..20 {
            let x = rest[v];
            let from_j0 = r0 * x;
            let from_j1 = r0 * (off + r1 * (x - off));
            let expect = wm[(v, 0)] * from_j0 + wm[(v, 1)] * from_j1;
            assert!(
                (posed[v] - expect).norm() < 1e-10,
                "vertex {v}: {} vs {}",
                posed[v],
                expect
            );
        }
    }

    #[test]
    fn bad_weight_rows_are_rejected() {
        let bad = Array2::from_elem((3, 2), 0.4);
        match SkinWeights::new(bad) {
            Err(Error::BadSkinWeights { row, sum }) => {
                assert_eq!(row, 0);
                assert!((sum - 0.8).abs() < 1e-12);
            }
            other => panic!("expected weight error, got {other:?}"),
        }
    }
}
