//! Per-face descriptors: a jointly-trained point-feature network over
//! rest-pose centroids and normals, concatenated with precomputed wave
//! kernel signatures. The descriptor is what lets a trained model pose
//! shapes it never saw, without explicit correspondences.

mod pointnet;
mod wks;

pub use pointnet::{pointnet_inputs, FeatureNet};
pub use wks::{
    load_wks_cache, mesh_content_hash, save_wks_cache, vertex_wave_kernel_signature,
    wave_kernel_signature, DEFAULT_K_EIGEN, DEFAULT_K_WKS,
};

use crate::error::{Error, Result};
use crate::nn::{NodeId, Tape};

/// Concatenate the learned block (first) with the wave-kernel block into the
/// per-face descriptor fed to the posing network.
pub fn assemble_face_features(tape: &mut Tape, learned: NodeId, wks: NodeId) -> Result<NodeId> {
    let (lf, wf) = (tape.value(learned).nrows(), tape.value(wks).nrows());
    if lf != wf {
        return Err(Error::shape(
            "assemble_face_features",
            format!("{lf} faces"),
            format!("{wf} faces"),
        ));
    }
    tape.concat_cols(&[learned, wks])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn widths_concatenate() {
        let mut tape = Tape::new();
        let learned = tape.leaf(Array2::zeros((5, 32)));
        let wks = tape.leaf(Array2::ones((5, 16)));
        let out = assemble_face_features(&mut tape, learned, wks).unwrap();
        assert_eq!(tape.value(out).dim(), (5, 48));
    }

    #[test]
    fn zero_learned_block_is_zero_padded_wks() {
        let mut tape = Tape::new();
        let learned = tape.leaf(Array2::zeros((3, 4)));
        let wks = tape.leaf(Array2::from_shape_fn((3, 2), |(r, c)| (r * 2 + c) as f64));
        let out = assemble_face_features(&mut tape, learned, wks).unwrap();
        let v = tape.value(out);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(v[(r, c)], 0.0);
            }
            assert_eq!(v[(r, 4)], (r * 2) as f64);
            assert_eq!(v[(r, 5)], (r * 2 + 1) as f64);
        }
    }

    #[test]
    fn row_order_preserved() {
        let mut tape = Tape::new();
        let learned = tape.leaf(Array2::from_shape_fn((4, 1), |(r, _)| r as f64));
        let wks = tape.leaf(Array2::from_shape_fn((4, 1), |(r, _)| 10.0 * r as f64));
        let out = assemble_face_features(&mut tape, learned, wks).unwrap();
        let v = tape.value(out);
        for r in 0..4 {
            assert_eq!(v[(r, 0)], r as f64);
            assert_eq!(v[(r, 1)], 10.0 * r as f64);
        }
    }

    #[test]
    fn count_mismatch_rejected() {
        let mut tape = Tape::new();
        let learned = tape.leaf(Array2::zeros((5, 4)));
        let wks = tape.leaf(Array2::zeros((6, 2)));
        assert!(assemble_face_features(&mut tape, learned, wks).is_err());
    }
}
