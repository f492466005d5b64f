//! End-to-end optimization: per-window gradient steps with the residual
//! carried across windows, the convergence policy, and evaluation.

use super::baselines::VertexOdeModel;
use super::loss::{window_loss_nodes, LossReport, ALPHA_JACOBIAN, CONVERGENCE_L_VERTEX, MAX_EPOCHS};
use super::metrics::{evaluate_sequence, MetricReport};
use crate::error::{Error, Result};
use crate::mesh::{compute_jacobians, TriMesh};
use crate::model::{window_plans, ModelConfig, TargetContext, TrjModel, WindowCarry};
use crate::nn::{Adam, AdamConfig, ParamSet};
use nalgebra::Vector3;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Either the full model (optionally without its residual path) or the
/// vertex-velocity baseline.
pub enum AnyModel {
    Trj(TrjModel),
    VertexOde(VertexOdeModel),
}

impl AnyModel {
    pub fn window(&self) -> usize {
        match self {
            AnyModel::Trj(m) => m.config.window,
            AnyModel::VertexOde(m) => m.config.window,
        }
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        match self {
            AnyModel::Trj(m) => m.init_params(seed),
            AnyModel::VertexOde(m) => m.init_params(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub convergence: f64,
    pub lr: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: MAX_EPOCHS,
            convergence: CONVERGENCE_L_VERTEX,
            lr: AdamConfig::default().lr,
            alpha: ALPHA_JACOBIAN,
            seed: 0,
        }
    }
}

/// One dataset item with everything precomputed: the target context, frame
/// targets, and ground-truth Jacobians extracted once and cached.
pub struct TrainSequence {
    pub name: String,
    pub ctx: TargetContext,
    pub angles: Array2<f64>,
    pub beta: Vec<f64>,
    pub gt_positions: Vec<Array2<f64>>,
    pub gt_jacobians: Vec<Array2<f64>>,
    pub gt_frames: Vec<Vec<Vector3<f64>>>,
}

impl TrainSequence {
    pub fn prepare(
        name: impl Into<String>,
        first_frame: TriMesh,
        angles: Array2<f64>,
        beta: Vec<f64>,
        gt_frames: Vec<Vec<Vector3<f64>>>,
        config: &ModelConfig,
    ) -> Result<Self> {
        if gt_frames.len() != angles.nrows() {
            return Err(Error::MissingGroundTruth(format!(
                "{} ground-truth frames for {} motion frames",
                gt_frames.len(),
                angles.nrows()
            )));
        }
        let ctx = TargetContext::build(first_frame, config)?;
        let mut gt_positions = Vec::with_capacity(gt_frames.len());
        let mut gt_jacobians = Vec::with_capacity(gt_frames.len());
        for frame in &gt_frames {
            let mut arr = Array2::zeros((frame.len(), 3));
            for (r, v) in frame.iter().enumerate() {
                arr[(r, 0)] = v.x;
                arr[(r, 1)] = v.y;
                arr[(r, 2)] = v.z;
            }
            gt_positions.push(arr);
            gt_jacobians.push(
                compute_jacobians(&ctx.mesh, ctx.system.bases(), ctx.system.gradients(), frame)?
                    .to_rows(),
            );
        }
        Ok(TrainSequence {
            name: name.into(),
            ctx,
            angles,
            beta,
            gt_positions,
            gt_jacobians,
            gt_frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.angles.nrows()
    }

    fn rest_rows(&self) -> &Array2<f64> {
        &self.gt_positions[0]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossReport,
}

pub struct TrainOutcome {
    pub params: ParamSet,
    pub adam: Adam,
    pub history: Vec<EpochRecord>,
    pub converged: bool,
}

/// Optimize all parameters jointly: one gradient step per window of one
/// sequence. Stops when the epoch's vertex loss drops below
/// `config.convergence` or after `config.epochs` epochs. `start_epoch`
/// continues numbering when resuming from a checkpoint.
pub fn train(
    model: &AnyModel,
    mut params: ParamSet,
    mut adam: Adam,
    start_epoch: usize,
    dataset: &[TrainSequence],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    adam.config.lr = config.lr;
    let mut history = Vec::new();
    let mut converged = false;

    for epoch in start_epoch..config.epochs {
        let mut vertex_sum = 0.0;
        let mut jac_sum = 0.0;
        let mut frames_total = 0usize;

        for seq in dataset {
            let frames = seq.frame_count();
            let plans = window_plans(frames, model.window());
            let h = 1.0 / (frames.saturating_sub(1)).max(1) as f64;
            match model {
                AnyModel::Trj(m) => {
                    let mut carry = WindowCarry::sequence_start(seq.ctx.face_count());
                    for plan in &plans {
                        let mut fwd = m.forward_window(
                            &params, &seq.ctx, &seq.angles, &seq.beta, plan, &carry, h,
                        )?;
                        let gt_p = &seq.gt_positions[plan.start..plan.start + plan.frames.len()];
                        let gt_j = &seq.gt_jacobians[plan.start..plan.start + plan.frames.len()];
                        let (total, vertex, jac) = window_loss_nodes(
                            &mut fwd.tape,
                            &fwd.positions,
                            Some(&fwd.composed),
                            gt_p,
                            gt_j,
                            config.alpha,
                        )?;
                        let (v, j) = (
                            fwd.tape.value(vertex)[(0, 0)],
                            fwd.tape.value(jac)[(0, 0)],
                        );
                        if !v.is_finite() || !j.is_finite() {
                            return Err(Error::NonFiniteLoss { epoch });
                        }
                        fwd.tape.backward(total)?;
                        adam.step(&mut params, &fwd.lease.grads(&fwd.tape));
                        vertex_sum += v * plan.frames.len() as f64;
                        jac_sum += j * plan.frames.len() as f64;
                        frames_total += plan.frames.len();
                        carry = fwd.carry;
                    }
                }
                AnyModel::VertexOde(m) => {
                    let mut carry = seq.rest_rows().clone();
                    for (k, plan) in plans.iter().enumerate() {
                        let mut fwd = m.forward_window(
                            &params,
                            seq.rest_rows(),
                            &seq.angles,
                            &seq.beta,
                            plan,
                            &carry,
                            k == 0,
                            h,
                        )?;
                        let gt_p = &seq.gt_positions[plan.start..plan.start + plan.frames.len()];
                        let (total, vertex, _) = window_loss_nodes(
                            &mut fwd.tape,
                            &fwd.positions,
                            None,
                            gt_p,
                            &[],
                            config.alpha,
                        )?;
                        let v = fwd.tape.value(vertex)[(0, 0)];
                        if !v.is_finite() {
                            return Err(Error::NonFiniteLoss { epoch });
                        }
                        fwd.tape.backward(total)?;
                        adam.step(&mut params, &fwd.lease.grads(&fwd.tape));
                        vertex_sum += v * plan.frames.len() as f64;
                        frames_total += plan.frames.len();
                        carry = fwd.carry;
                    }
                }
            }
        }

        let loss = LossReport::new(
            vertex_sum / frames_total.max(1) as f64,
            jac_sum / frames_total.max(1) as f64,
            config.alpha,
        );
        history.push(EpochRecord { epoch, loss });
        log::info!(
            "epoch {epoch}: L_vertex {:.3e}, L_jacobian {:.3e}, total {:.3e}",
            loss.vertex,
            loss.jacobian,
            loss.total
        );
        if loss.vertex < config.convergence {
            converged = true;
            break;
        }
    }

    Ok(TrainOutcome {
        params,
        adam,
        history,
        converged,
    })
}

/// Predict a full sequence and score it against the ground truth.
pub fn evaluate_model(
    model: &AnyModel,
    params: &ParamSet,
    seq: &TrainSequence,
) -> Result<MetricReport> {
    if seq.gt_frames.is_empty() {
        return Err(Error::MissingGroundTruth(seq.name.clone()));
    }
    let (positions, jacobians) = predict_positions(model, params, seq)?;
    evaluate_sequence(
        &seq.ctx.mesh,
        &positions,
        jacobians.as_deref(),
        &seq.gt_frames,
    )
}

/// Inference through either model, as position vectors plus the predicted
/// Jacobian field when the model has one.
pub fn predict_positions(
    model: &AnyModel,
    params: &ParamSet,
    seq: &TrainSequence,
) -> Result<(Vec<Vec<Vector3<f64>>>, Option<Vec<Array2<f64>>>)> {
    match model {
        AnyModel::Trj(m) => {
            let out = m.sequence_forward(params, &seq.ctx, &seq.angles, &seq.beta)?;
            Ok((out.positions, Some(out.jacobians)))
        }
        AnyModel::VertexOde(m) => {
            let frames = m.sequence_forward(params, seq.rest_rows(), &seq.angles, &seq.beta)?;
            let positions = frames
                .iter()
                .map(|a| {
                    (0..a.nrows())
                        .map(|r| Vector3::new(a[(r, 0)], a[(r, 1)], a[(r, 2)]))
                        .collect()
                })
                .collect();
            Ok((positions, None))
        }
    }
}

/// Line-delimited training log: epoch, vertex, jacobian, total.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch l_vertex l_jacobian total\n");
    for rec in history {
        out.push_str(&format!(
            "{} {:.9e} {:.9e} {:.9e}\n",
            rec.epoch, rec.loss.vertex, rec.loss.jacobian, rec.loss.total
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{synth_generate, BodyPlan, MotionPreset, SynthConfig};
    use crate::nn::AdamConfig;

    fn tiny_dataset(config: &ModelConfig) -> Vec<TrainSequence> {
        let seq = synth_generate(&SynthConfig {
            plan: BodyPlan::Chain { joints: 3 },
            segments: 6,
            rings_per_bone: 2,
            preset: MotionPreset::Wave,
            frames: 10,
            seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        vec![TrainSequence::prepare(
            "tiny",
            seq.first_frame.clone(),
            seq.manifest.angles.clone(),
            seq.manifest.beta.clone(),
            seq.gt_frames.clone(),
            config,
        )
        .unwrap()]
    }

    fn tiny_model() -> (AnyModel, ModelConfig) {
        let mut config = ModelConfig::new(3);
        config.window = 4;
        config.posing_hidden = 24;
        config.residual_hidden = 24;
        config.feature_hidden = 12;
        config.p_learned = 8;
        config.k_wks = 6;
        config.k_eigen = 12;
        config.attention = crate::nn::AttentionSpec {
            heads: 2,
            key_dim: 6,
            ff_width: 8,
            out_dim: 8,
        };
        let model = TrjModel::new(config.clone());
        (AnyModel::Trj(model), config)
    }

    #[test]
    fn loss_decreases_on_tiny_sequence() {
        let (model, config) = tiny_model();
        let dataset = tiny_dataset(&config);
        let params = model.init_params(1);
        let out = train(
            &model,
            params,
            Adam::new(AdamConfig::default()),
            0,
            &dataset,
            &TrainConfig {
                epochs: 8,
                convergence: 0.0,
                lr: 2e-3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.history.len(), 8);
        let first = out.history.first().unwrap().loss.vertex;
        let best = out
            .history
            .iter()
            .map(|r| r.loss.vertex)
            .fold(f64::INFINITY, f64::min);
        assert!(best < first, "best {best} vs first {first}");
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let run = || {
            let (model, config) = tiny_model();
            let dataset = tiny_dataset(&config);
            let params = model.init_params(7);
            let out = train(
                &model,
                params,
                Adam::new(AdamConfig::default()),
                0,
                &dataset,
                &TrainConfig {
                    epochs: 3,
                    convergence: 0.0,
                    lr: 1e-3,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            out.history
                .iter()
                .map(|r| r.loss.total.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn vertex_ode_trains_and_reduces_loss() {
        let config = VertexOdeModel::new(super::super::baselines::VertexOdeConfig {
            joint_count: 3,
            beta_width: 16,
            hidden: 16,
            window: 4,
        });
        let model = AnyModel::VertexOde(config);
        let (_, model_config) = tiny_model();
        let dataset = tiny_dataset(&model_config);
        let params = model.init_params(0);
        let out = train(
            &model,
            params,
            Adam::new(AdamConfig::default()),
            0,
            &dataset,
            &TrainConfig {
                epochs: 6,
                convergence: 0.0,
                lr: 5e-3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let first = out.history.first().unwrap().loss.vertex;
        let last = out.history.last().unwrap().loss.vertex;
        assert!(last < first, "vertex baseline failed to learn: {last} vs {first}");
    }

    #[test]
    fn evaluation_of_gt_playback_is_zero() {
        let (_, config) = tiny_model();
        let dataset = tiny_dataset(&config);
        let seq = &dataset[0];
        let r = evaluate_sequence(&seq.ctx.mesh, &seq.gt_frames, None, &seq.gt_frames).unwrap();
        assert_eq!(r.l2v_cm, 0.0);
        assert_eq!(r.l2j, 0.0);
    }
}
