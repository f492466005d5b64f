//! Jointly-trained per-face point features over rest-pose centroids and
//! normals.

use crate::error::Result;
use crate::mesh::{vertex_and_face_normals, TriMesh};
use crate::nn::{LeasedParams, Mlp, MlpSpec, NodeId, ParamSet, Tape};
use ndarray::Array2;
use rand::Rng;

/// Shallow point-feature network: 3 ReLU layers and a final linear layer
/// over (centroid | normal) rows. An optional global max-pool branch
/// concatenates a pooled context vector to every face.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    mlp: Mlp,
    global_pool: bool,
    out_width: usize,
}

impl FeatureNet {
    pub fn new(name: &str, hidden: usize, p_learned: usize, global_pool: bool) -> Self {
        let spec = MlpSpec::new(&[6, hidden, hidden, hidden, p_learned]);
        FeatureNet {
            mlp: Mlp::new(name, spec),
            global_pool,
            out_width: if global_pool { 2 * p_learned } else { p_learned },
        }
    }

    /// Width of the learned block (doubled when the pooled branch is on).
    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        self.mlp.init(params, rng, false);
    }

    /// Per-face embeddings; gradients flow back to the feature-net weights.
    pub fn forward(&self, tape: &mut Tape, lease: &LeasedParams, inputs: NodeId) -> Result<NodeId> {
        let per_face = self.mlp.forward(tape, lease, inputs)?;
        if !self.global_pool {
            return Ok(per_face);
        }
        let faces = tape.value(per_face).nrows();
        let pooled = tape.max_rows(per_face);
        let tiled = tape.repeat_rows(pooled, faces)?;
        tape.concat_cols(&[per_face, tiled])
    }
}

/// Network inputs from a rest pose: centroids shifted to zero mean and
/// scaled by the bounding-sphere radius, concatenated with unit face
/// normals. The normalization makes transfer across differently sized
/// targets possible.
pub fn pointnet_inputs(mesh: &TriMesh) -> Array2<f64> {
    let f = mesh.face_count();
    let mut centroids = Vec::with_capacity(f);
    let mut mean = nalgebra::Vector3::zeros();
    for fi in 0..f {
        let c = mesh.face_centroid(fi);
        mean += c;
        centroids.push(c);
    }
    mean /= f as f64;
    let radius = mesh.bounding_radius().max(1e-12);
    let (_, normals) = vertex_and_face_normals(mesh, mesh.vertices());

    let mut out = Array2::zeros((f, 6));
    for fi in 0..f {
        let c = (centroids[fi] - mean) / radius;
        for k in 0..3 {
            out[(fi, k)] = c[k];
            out[(fi, 3 + k)] = normals[fi][k];
        }
    }
    out
}
