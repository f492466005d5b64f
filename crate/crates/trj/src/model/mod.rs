//! The motion model: independent per-frame posing in Jacobian space,
//! windowed attention encodings, a residual ODE integrated with Euler steps,
//! and the Poisson solve that turns composed Jacobians into vertex
//! positions.

mod sequence;
mod window;

pub use sequence::{apply_global_transform, SequenceOutput};
pub use window::{euler_integrate, window_plans, WindowCarry, WindowForward, WindowPlan};

use crate::error::Result;
use crate::features::{pointnet_inputs, wave_kernel_signature, FeatureNet};
use crate::mesh::{poisson_prefactorize, JacobianField, PoissonSystem, TriMesh};
use crate::nn::{
    AttentionEncoder, AttentionSpec, LeasedParams, Mlp, MlpSpec, NodeId, ParamSet, Tape,
    TIME_ENCODING_WIDTH,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Architecture hyperparameters. Defaults follow the reference setup:
/// 4-layer posing MLP, 3-layer residual MLP, two 2-head attention encoders
/// with 32-wide keys/values and feed-forward, 32 learned feature channels
/// plus 16 wave-kernel bins, 32-frame windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub joint_count: usize,
    pub beta_width: usize,
    pub window: usize,
    pub posing_hidden: usize,
    pub residual_hidden: usize,
    pub feature_hidden: usize,
    pub p_learned: usize,
    pub k_wks: usize,
    pub k_eigen: usize,
    pub attention: AttentionSpec,
    /// Concatenate a globally max-pooled context vector to each face's
    /// learned features.
    pub global_pool: bool,
    /// Whether the residual ODE and attention encoders are active; off for
    /// the per-frame baseline.
    pub use_residual: bool,
}

impl ModelConfig {
    pub fn new(joint_count: usize) -> Self {
        ModelConfig {
            joint_count,
            beta_width: 16,
            window: 32,
            posing_hidden: 128,
            residual_hidden: 128,
            feature_hidden: 64,
            p_learned: 32,
            k_wks: 16,
            k_eigen: 64,
            attention: AttentionSpec::default(),
            global_pool: false,
            use_residual: true,
        }
    }

    /// Width of the per-face descriptor C.
    pub fn feature_width(&self) -> usize {
        let learned = if self.global_pool {
            2 * self.p_learned
        } else {
            self.p_learned
        };
        learned + self.k_wks
    }

    fn posing_input_width(&self) -> usize {
        9 + 3 * self.joint_count + self.feature_width()
    }

    fn residual_input_width(&self) -> usize {
        9 + 2 * self.attention.out_dim + self.beta_width + TIME_ENCODING_WIDTH
    }

    fn token_width(&self) -> usize {
        9 + TIME_ENCODING_WIDTH
    }
}

/// All networks of the model. Weights live in a separate [`ParamSet`];
/// parameter snapshots are immutable and shareable for concurrent inference.
#[derive(Debug, Clone)]
pub struct TrjModel {
    pub config: ModelConfig,
    pub(crate) posing: Mlp,
    pub(crate) residual: Mlp,
    pub(crate) attn_pose: AttentionEncoder,
    pub(crate) attn_res: AttentionEncoder,
    pub(crate) featnet: FeatureNet,
}

impl TrjModel {
    pub fn new(config: ModelConfig) -> Self {
        let posing = Mlp::new(
            "posing",
            MlpSpec::new(&[
                config.posing_input_width(),
                config.posing_hidden,
                config.posing_hidden,
                config.posing_hidden,
                9,
            ]),
        );
        let residual = Mlp::new(
            "residual",
            MlpSpec::new(&[
                config.residual_input_width(),
                config.residual_hidden,
                config.residual_hidden,
                9,
            ]),
        );
        let attn_pose =
            AttentionEncoder::new("attn_pose", config.attention.clone(), config.token_width());
        let attn_res =
            AttentionEncoder::new("attn_res", config.attention.clone(), config.token_width());
        let featnet = FeatureNet::new(
            "featnet",
            config.feature_hidden,
            config.p_learned,
            config.global_pool,
        );
        TrjModel {
            config,
            posing,
            residual,
            attn_pose,
            attn_res,
            featnet,
        }
    }

    /// Fresh parameters: Kaiming-uniform hidden layers, zero-initialized
    /// final layers for the posing and residual nets so the untrained model
    /// is the identity deformation. Deterministic per seed.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        self.featnet.init(&mut params, &mut rng);
        self.posing.init(&mut params, &mut rng, true);
        if self.config.use_residual {
            self.attn_pose.init(&mut params, &mut rng, false);
            self.attn_res.init(&mut params, &mut rng, false);
            self.residual.init(&mut params, &mut rng, true);
        }
        params
    }

    /// Per-face descriptor C: learned block first, wave-kernel block second.
    pub fn features_node(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        ctx: &TargetContext,
    ) -> Result<NodeId> {
        let inputs = tape.leaf(ctx.pointnet_inputs.clone());
        let learned = self.featnet.forward(tape, lease, inputs)?;
        let wks = tape.leaf(ctx.wks.clone());
        crate::features::assemble_face_features(tape, learned, wks)
    }

    /// Independent posing: `J^P_t = J^P_0 + f_P(J^P_0, M_t, C)`, broadcast
    /// over faces.
    pub fn posing_forward(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        ctx: &TargetContext,
        features: NodeId,
        j0: NodeId,
        pose_row: &[f64],
    ) -> Result<NodeId> {
        if pose_row.len() != 3 * self.config.joint_count {
            return Err(crate::error::Error::shape(
                "posing_forward pose",
                format!("{} angles", 3 * self.config.joint_count),
                format!("{} angles", pose_row.len()),
            ));
        }
        let pose = tape.leaf_row(pose_row);
        let pose_rep = tape.repeat_rows(pose, ctx.face_count())?;
        let input = tape.concat_cols(&[j0, pose_rep, features])?;
        let delta = self.posing.forward(tape, lease, input)?;
        tape.add(j0, delta)
    }
}

/// Everything precomputed once per target shape: the Poisson factorization,
/// the first-frame Jacobians in their frozen local bases, the wave kernel
/// signature, and the normalized point-feature inputs.
pub struct TargetContext {
    pub mesh: TriMesh,
    pub system: Arc<PoissonSystem>,
    pub j0_rows: Array2<f64>,
    pub wks: Array2<f64>,
    pub pointnet_inputs: Array2<f64>,
}

impl TargetContext {
    pub fn build(mesh: TriMesh, config: &ModelConfig) -> Result<Self> {
        Self::build_with_cache(mesh, config, None)
    }

    /// Like [`build`](Self::build), reusing a wave-kernel cache file when it
    /// matches the mesh.
    pub fn build_with_cache(
        mesh: TriMesh,
        config: &ModelConfig,
        wks_cache: Option<&std::path::Path>,
    ) -> Result<Self> {
        let system = Arc::new(poisson_prefactorize(&mesh)?);
        let j0_rows = JacobianField::identity_local(system.bases()).to_rows();
        let k_eigen = config.k_eigen.min(mesh.vertex_count().saturating_sub(2));
        let wks = match wks_cache {
            Some(path) => match crate::features::load_wks_cache(path, &mesh)? {
                Some(cached) if cached.ncols() == config.k_wks => cached,
                _ => {
                    let fresh = wave_kernel_signature(&mesh, k_eigen, config.k_wks)?;
                    crate::features::save_wks_cache(path, &mesh, &fresh)?;
                    fresh
                }
            },
            None => wave_kernel_signature(&mesh, k_eigen, config.k_wks)?,
        };
        let pointnet_inputs = pointnet_inputs(&mesh);
        Ok(TargetContext {
            mesh,
            system,
            j0_rows,
            wks,
            pointnet_inputs,
        })
    }

    pub fn face_count(&self) -> usize {
        self.mesh.face_count()
    }
}

#[cfg(test)]
pub(crate) fn small_test_config() -> ModelConfig {
    let mut c = ModelConfig::new(2);
    c.posing_hidden = 16;
    c.residual_hidden = 16;
    c.feature_hidden = 8;
    c.p_learned = 6;
    c.k_wks = 4;
    c.k_eigen = 10;
    c.attention = AttentionSpec {
        heads: 2,
        key_dim: 4,
        ff_width: 5,
        out_dim: 6,
    };
    c
}
