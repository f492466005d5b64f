//! Full-sequence forward pass and global-transform post-processing.

use super::window::{window_plans, WindowCarry};
use super::{TargetContext, TrjModel};
use crate::error::{Error, Result};
use crate::io::RigidTransform;
use crate::nn::ParamSet;
use nalgebra::Vector3;
use ndarray::Array2;

/// Predicted sequence: per-frame vertex positions and the composed local
/// Jacobian rows they were solved from.
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub positions: Vec<Vec<Vector3<f64>>>,
    pub jacobians: Vec<Array2<f64>>,
}

impl TrjModel {
    /// Predict every frame of a motion: windows in order, posing then
    /// encodings then Euler residuals then Poisson solves, with the residual
    /// initial condition carried across window boundaries.
    pub fn sequence_forward(
        &self,
        params: &ParamSet,
        ctx: &TargetContext,
        angles: &Array2<f64>,
        beta: &[f64],
    ) -> Result<SequenceOutput> {
        let frames = angles.nrows();
        if frames == 0 {
            return Err(Error::EmptyWindow);
        }
        let plans = window_plans(frames, self.config.window);
        let h = 1.0 / (frames.saturating_sub(1)).max(1) as f64;
        let mut carry = WindowCarry::sequence_start(ctx.face_count());
        let mut positions = Vec::with_capacity(frames);
        let mut jacobians = Vec::with_capacity(frames);
        for plan in &plans {
            let fwd = self.forward_window(params, ctx, angles, beta, plan, &carry, h)?;
            for (&pos, &jac) in fwd.positions.iter().zip(&fwd.composed) {
                let v = fwd.tape.value(pos);
                positions.push(
                    (0..v.nrows())
                        .map(|r| Vector3::new(v[(r, 0)], v[(r, 1)], v[(r, 2)]))
                        .collect(),
                );
                jacobians.push(fwd.tape.value(jac).clone());
            }
            carry = fwd.carry;
        }
        Ok(SequenceOutput {
            positions,
            jacobians,
        })
    }
}

/// Apply per-frame global rigid transforms to predicted positions, scaling
/// the translation track by the target/source height ratio first.
pub fn apply_global_transform(
    positions: &mut [Vec<Vector3<f64>>],
    track: &[RigidTransform],
    height_scale: f64,
) -> Result<()> {
    if track.len() != positions.len() {
        return Err(Error::shape(
            "apply_global_transform",
            format!("{} transforms", positions.len()),
            format!("{} transforms", track.len()),
        ));
    }
    if !(height_scale > 0.0) {
        return Err(Error::GeneratorConfig(format!(
            "height scale must be positive, got {height_scale}"
        )));
    }
    for (frame, (pts, t)) in positions.iter_mut().zip(track).enumerate() {
        t.validate(frame)?;
        let scaled = RigidTransform {
            rotation: t.rotation,
            translation: height_scale * t.translation,
        };
        for p in pts.iter_mut() {
            *p = scaled.apply(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::euler_zyx;
    use crate::mesh::shapes;
    use crate::model::{small_test_config, TargetContext, TrjModel};

    fn setup() -> (TrjModel, ParamSet, TargetContext) {
        let mut config = small_test_config();
        config.window = 8;
        let model = TrjModel::new(config.clone());
        let params = model.init_params(0);
        let ctx = TargetContext::build(shapes::icosphere(1), &config).unwrap();
        (model, params, ctx)
    }

    /// Zero-initialized final layers everywhere: every frame is the rest
    /// shape up to the translation anchor, for any motion input.
    #[test]
    fn zero_model_returns_rest_shape_for_all_lengths() {
        let (model, params, ctx) = setup();
        for frames in [1usize, 32, 100] {
            let angles = Array2::from_shape_fn((frames, 6), |(f, c)| {
                0.5 * ((f as f64) * 0.3 + c as f64).cos()
            });
            let out = model
                .sequence_forward(&params, &ctx, &angles, &[1.0; 16])
                .unwrap();
            assert_eq!(out.positions.len(), frames);
            for frame in &out.positions {
                for (p, v) in frame.iter().zip(ctx.mesh.vertices()) {
                    assert!(
                        (p - v).norm() < 1e-6,
                        "frames={frames}: vertex drifted by {}",
                        (p - v).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn frame_count_is_preserved_with_partial_windows() {
        let (model, params, ctx) = setup();
        for frames in [1usize, 7, 8, 9, 20] {
            let angles = Array2::zeros((frames, 6));
            let out = model
                .sequence_forward(&params, &ctx, &angles, &[1.0; 16])
                .unwrap();
            assert_eq!(out.positions.len(), frames);
            assert_eq!(out.jacobians.len(), frames);
        }
    }

    #[test]
    fn identity_transforms_leave_positions_unchanged() {
        let mut positions = vec![vec![Vector3::new(1.0, 2.0, 3.0); 4]; 3];
        let before = positions.clone();
        let track = vec![RigidTransform::identity(); 3];
        apply_global_transform(&mut positions, &track, 1.0).unwrap();
        assert_eq!(positions, before);
    }

    #[test]
    fn pure_translation_shifts_frames_rigidly() {
        let base = vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 0.0, 2.0)];
        let mut positions = vec![base.clone(); 4];
        let track: Vec<RigidTransform> = (0..4)
            .map(|f| RigidTransform {
                rotation: nalgebra::Matrix3::identity(),
                translation: Vector3::new(f as f64, 0.0, 0.0),
            })
            .collect();
        apply_global_transform(&mut positions, &track, 1.0).unwrap();
        for (f, frame) in positions.iter().enumerate() {
            for (p, b) in frame.iter().zip(&base) {
                let rel = p - b;
                assert_eq!(rel, Vector3::new(f as f64, 0.0, 0.0));
                // shape itself is bit-identical after undoing the shift
                assert_eq!(p.y.to_bits(), b.y.to_bits());
                assert_eq!(p.z.to_bits(), b.z.to_bits());
            }
        }
    }

    /// A target twice the source height gets doubled translations.
    #[test]
    fn height_scale_doubles_translations() {
        let base = vec![Vector3::zeros()];
        let mut positions = vec![base.clone(); 3];
        let track: Vec<RigidTransform> = (0..3)
            .map(|f| RigidTransform {
                rotation: euler_zyx(&[0.0, 0.1 * f as f64, 0.0]),
                translation: Vector3::new(0.0, 0.0, 0.5 * f as f64),
            })
            .collect();
        apply_global_transform(&mut positions, &track, 2.0).unwrap();
        for (f, frame) in positions.iter().enumerate() {
            assert!((frame[0] - Vector3::new(0.0, 0.0, f as f64)).norm() < 1e-14);
        }
    }

    #[test]
    fn non_rigid_transform_is_rejected() {
        let mut positions = vec![vec![Vector3::zeros()]];
        let track = vec![RigidTransform {
            rotation: nalgebra::Matrix3::identity() * 1.1,
            translation: Vector3::zeros(),
        }];
        match apply_global_transform(&mut positions, &track, 1.0) {
            Err(Error::NonRigidTransform { frame, .. }) => assert_eq!(frame, 0),
            other => panic!("expected non-rigid error, got {other:?}"),
        }
    }
}
