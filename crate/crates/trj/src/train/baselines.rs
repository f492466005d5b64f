//! Ablation baselines: a per-vertex velocity ODE without Jacobians or the
//! Poisson solve, and the per-frame Jacobian model without the residual ODE
//! (constructed as the main model with the residual path removed).

use crate::error::{Error, Result};
use crate::model::{euler_integrate, window_plans, ModelConfig, TrjModel, WindowPlan};
use crate::nn::{
    positional_encoding, LeasedParams, Mlp, MlpSpec, NodeId, ParamSet, Tape, TIME_ENCODING_BANDS,
    TIME_ENCODING_WIDTH,
};
use ndarray::Array2;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// Per-frame Jacobian prediction conditioned on joint angles, with the
/// residual ODE and both attention encoders removed.
pub fn njf_mt_model(mut config: ModelConfig) -> TrjModel {
    config.use_residual = false;
    TrjModel::new(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexOdeConfig {
    pub joint_count: usize,
    pub beta_width: usize,
    pub hidden: usize,
    pub window: usize,
}

impl VertexOdeConfig {
    pub fn new(joint_count: usize) -> Self {
        VertexOdeConfig {
            joint_count,
            beta_width: 16,
            hidden: 128,
            window: 32,
        }
    }

    fn input_width(&self) -> usize {
        3 + 3 * self.joint_count + self.beta_width + TIME_ENCODING_WIDTH
    }
}

/// An MLP velocity field over vertices, integrated by Euler steps: no
/// Jacobians, no spatial solve.
#[derive(Debug, Clone)]
pub struct VertexOdeModel {
    pub config: VertexOdeConfig,
    mlp: Mlp,
}

/// One window of the vertex ODE: the positions per frame and the carried
/// state for the next window.
pub struct VertexOdeWindow {
    pub tape: Tape,
    pub lease: LeasedParams,
    pub positions: Vec<NodeId>,
    pub carry: Array2<f64>,
}

impl VertexOdeModel {
    pub fn new(config: VertexOdeConfig) -> Self {
        let mlp = Mlp::new(
            "vertex_ode",
            MlpSpec::new(&[config.input_width(), config.hidden, config.hidden, 3]),
        );
        VertexOdeModel { config, mlp }
    }

    /// Zero final layer: the untrained field is zero velocity and the
    /// sequence stays at the first frame.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        self.mlp.init(&mut params, &mut rng, true);
        params
    }

    /// Build one window's integration graph. `carry` is the position state
    /// at the previous frame (the rest positions for the sequence start).
    #[allow(clippy::too_many_arguments)]
    pub fn forward_window(
        &self,
        params: &ParamSet,
        rest_positions: &Array2<f64>,
        angles: &Array2<f64>,
        beta: &[f64],
        plan: &WindowPlan,
        carry: &Array2<f64>,
        sequence_start: bool,
        h: f64,
    ) -> Result<VertexOdeWindow> {
        let n = rest_positions.nrows();
        if angles.ncols() != 3 * self.config.joint_count {
            return Err(Error::shape(
                "vertex_ode angles",
                format!("width {}", 3 * self.config.joint_count),
                format!("width {}", angles.ncols()),
            ));
        }
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let rest = tape.leaf(rest_positions.clone());
        let mut beta_row = beta.to_vec();
        beta_row.resize(self.config.beta_width, 0.0);
        let beta_leaf = tape.leaf_row(&beta_row);
        let beta_rep = tape.repeat_rows(beta_leaf, n)?;

        let rate = |tape: &mut Tape, frame: usize, t: f64| -> Result<NodeId> {
            let pose = tape.leaf_row(&angles.row(frame).to_vec());
            let pose_rep = tape.repeat_rows(pose, n)?;
            let enc = tape.leaf_row(&positional_encoding(t, TIME_ENCODING_BANDS));
            let enc_rep = tape.repeat_rows(enc, n)?;
            let input = tape.concat_cols(&[rest, pose_rep, beta_rep, enc_rep])?;
            self.mlp.forward(tape, &lease, input)
        };

        let init = tape.leaf(carry.clone());
        let positions = if sequence_start {
            let step_frames = &plan.frames[..plan.frames.len() - 1];
            let step_times = &plan.times[..plan.times.len() - 1];
            let mut rest_frames = {
                let mut k = 0;
                euler_integrate(&mut tape, init, step_times, h, |tape, _, t| {
                    let r = rate(tape, step_frames[k], t);
                    k += 1;
                    r
                })?
            };
            let mut all = vec![init];
            all.append(&mut rest_frames);
            all
        } else {
            let mut step_frames = Vec::with_capacity(plan.frames.len());
            step_frames.push(plan.frames[0] - 1);
            step_frames.extend_from_slice(&plan.frames[..plan.frames.len() - 1]);
            let mut step_times = Vec::with_capacity(plan.frames.len());
            step_times.push(plan.times[0] - h);
            step_times.extend_from_slice(&plan.times[..plan.times.len() - 1]);
            let mut k = 0;
            euler_integrate(&mut tape, init, &step_times, h, |tape, _, t| {
                let r = rate(tape, step_frames[k], t);
                k += 1;
                r
            })?
        };

        let carry_out = tape.value(*positions.last().expect("non-empty window")).clone();
        Ok(VertexOdeWindow {
            tape,
            lease,
            positions,
            carry: carry_out,
        })
    }

    /// Inference over a whole sequence.
    pub fn sequence_forward(
        &self,
        params: &ParamSet,
        rest_positions: &Array2<f64>,
        angles: &Array2<f64>,
        beta: &[f64],
    ) -> Result<Vec<Array2<f64>>> {
        let frames = angles.nrows();
        if frames == 0 {
            return Err(Error::EmptyWindow);
        }
        let plans = window_plans(frames, self.config.window);
        let h = 1.0 / (frames.saturating_sub(1)).max(1) as f64;
        let mut carry = rest_positions.clone();
        let mut out = Vec::with_capacity(frames);
        for (k, plan) in plans.iter().enumerate() {
            let fwd = self.forward_window(
                params,
                rest_positions,
                angles,
                beta,
                plan,
                &carry,
                k == 0,
                h,
            )?;
            for &p in &fwd.positions {
                out.push(fwd.tape.value(p).clone());
            }
            carry = fwd.carry;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_stays_at_first_frame() {
        let config = VertexOdeConfig {
            joint_count: 2,
            beta_width: 16,
            hidden: 8,
            window: 4,
        };
        let model = VertexOdeModel::new(config);
        let params = model.init_params(0);
        let rest = Array2::from_shape_fn((10, 3), |(r, c)| (r * 3 + c) as f64 * 0.1);
        let angles = Array2::from_shape_fn((11, 6), |(f, c)| ((f + c) as f64).sin());
        let out = model.sequence_forward(&params, &rest, &angles, &[1.0; 16]).unwrap();
        assert_eq!(out.len(), 11);
        for frame in &out {
            assert_eq!(frame, &rest);
        }
    }

    #[test]
    fn njf_variant_has_no_residual_parameters() {
        let config = crate::model::small_test_config();
        let model = njf_mt_model(config);
        let params = model.init_params(0);
        assert!(params.names().iter().all(|n| {
            !n.starts_with("residual.") && !n.starts_with("attn_pose.") && !n.starts_with("attn_res.")
        }));
        assert!(params.names().iter().any(|n| n.starts_with("posing.")));
        assert!(params.names().iter().any(|n| n.starts_with("featnet.")));
    }
}
