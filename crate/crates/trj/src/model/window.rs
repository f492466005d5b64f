//! Window decomposition, attention encodings, and Euler integration of the
//! residual ODE.

use super::{TargetContext, TrjModel};
use crate::error::{Error, Result};
use crate::nn::{positional_encoding, LeasedParams, NodeId, ParamSet, Tape, TIME_ENCODING_BANDS};
use ndarray::Array2;

/// One window of consecutive frames: global frame indices plus their
/// sequence-normalized times.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub start: usize,
    pub frames: Vec<usize>,
    pub times: Vec<f64>,
}

/// Split a sequence into consecutive windows; the final window keeps its
/// natural (shorter) length. Time is normalized to [0, 1] over the whole
/// sequence; the Euler step is `1 / (frames - 1)`.
pub fn window_plans(total_frames: usize, window: usize) -> Vec<WindowPlan> {
    assert!(window >= 1, "window must be >= 1");
    let denom = (total_frames.saturating_sub(1)).max(1) as f64;
    (0..total_frames)
        .step_by(window)
        .map(|start| {
            let end = (start + window).min(total_frames);
            let frames: Vec<usize> = (start..end).collect();
            let times = frames.iter().map(|&f| f as f64 / denom).collect();
            WindowPlan {
                start,
                frames,
                times,
            }
        })
        .collect()
}

/// State carried between windows: the residual at the previous window's last
/// frame (the ODE initial condition), and the previous window's residual
/// values and times for the residual attention encoder. Values are detached,
/// so gradients do not cross window boundaries.
#[derive(Debug, Clone)]
pub struct WindowCarry {
    pub initial_residual: Array2<f64>,
    pub prev_residuals: Vec<Array2<f64>>,
    pub prev_times: Vec<f64>,
    /// Time of the frame the initial residual belongs to, for windows after
    /// the first.
    pub initial_time: f64,
}

impl WindowCarry {
    /// Sequence start: the first frame's residual is exactly zero.
    pub fn sequence_start(face_count: usize) -> Self {
        WindowCarry {
            initial_residual: Array2::zeros((face_count, 9)),
            prev_residuals: Vec::new(),
            prev_times: Vec::new(),
            initial_time: 0.0,
        }
    }

    pub fn is_sequence_start(&self) -> bool {
        self.prev_residuals.is_empty()
    }
}

/// One window's forward graph, ready for a loss or for value extraction.
pub struct WindowForward {
    pub tape: Tape,
    pub lease: LeasedParams,
    /// Posed Jacobians per frame (local basis rows).
    pub posed: Vec<NodeId>,
    /// Integrated residual Jacobians per frame.
    pub residuals: Vec<NodeId>,
    /// Composed Jacobians per frame.
    pub composed: Vec<NodeId>,
    /// Solved vertex positions per frame.
    pub positions: Vec<NodeId>,
    /// Carry for the next window.
    pub carry: WindowCarry,
}

/// Forward-Euler on tape nodes: starting from `state`, take one step per
/// entry of `step_times`, calling `rate(tape, index, time)` for the
/// derivative. Returns the state after each step. Aborts on a non-finite
/// rate, naming the offending step.
pub fn euler_integrate(
    tape: &mut Tape,
    state: NodeId,
    step_times: &[f64],
    h: f64,
    mut rate: impl FnMut(&mut Tape, usize, f64) -> Result<NodeId>,
) -> Result<Vec<NodeId>> {
    let mut out = Vec::with_capacity(step_times.len());
    let mut current = state;
    for (k, &t) in step_times.iter().enumerate() {
        let r = rate(tape, k, t)?;
        if !tape.value(r).iter().all(|x| x.is_finite()) {
            return Err(Error::IntegrationDiverged { frame: k });
        }
        let scaled = tape.scale(r, h);
        current = tape.add(current, scaled)?;
        out.push(current);
    }
    Ok(out)
}

fn time_token_row(t: f64) -> Vec<f64> {
    positional_encoding(t, TIME_ENCODING_BANDS)
}

impl TrjModel {
    /// Tokens for one window: per frame, each face's 9 Jacobian entries
    /// concatenated with that frame's time encoding, stacked face-major.
    fn window_tokens(
        &self,
        tape: &mut Tape,
        faces: usize,
        jac_frames: &[NodeId],
        times: &[f64],
    ) -> Result<NodeId> {
        if jac_frames.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let mut tokens = Vec::with_capacity(jac_frames.len());
        for (&j, &t) in jac_frames.iter().zip(times) {
            let enc = tape.leaf_row(&time_token_row(t));
            let enc_rep = tape.repeat_rows(enc, faces)?;
            tokens.push(tape.concat_cols(&[j, enc_rep])?);
        }
        tape.stack_time_tokens(&tokens)
    }

    /// `E^P_W`: encode the window's posed Jacobians with their times.
    pub fn encode_pose_window(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        faces: usize,
        posed: &[NodeId],
        times: &[f64],
    ) -> Result<NodeId> {
        let tokens = self.window_tokens(tape, faces, posed, times)?;
        self.attn_pose.encode(tape, lease, tokens, posed.len())
    }

    /// `E^R_{W-1}`: encode the previous window's residuals. The first window
    /// has no predecessor and uses an all-zero block with zero time
    /// encodings of the current window's length.
    pub fn encode_residual_window(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        faces: usize,
        carry: &WindowCarry,
        current_len: usize,
    ) -> Result<NodeId> {
        let (blocks, window_len): (Vec<NodeId>, usize) = if carry.is_sequence_start() {
            let zero_tokens = tape.leaf(Array2::zeros((
                faces * current_len,
                9 + 2 * TIME_ENCODING_BANDS,
            )));
            return self.attn_res.encode(tape, lease, zero_tokens, current_len);
        } else {
            let nodes: Vec<NodeId> = carry
                .prev_residuals
                .iter()
                .map(|r| tape.leaf(r.clone()))
                .collect();
            (nodes, carry.prev_residuals.len())
        };
        let tokens = self.window_tokens(tape, faces, &blocks, &carry.prev_times)?;
        self.attn_res.encode(tape, lease, tokens, window_len)
    }

    /// `dJ^R/dt` at time `t`: the residual net over
    /// `(J^P_0 | E^P_W | E^R_{W-1} | beta | enc(t))`, one rate per face.
    pub fn residual_rate(
        &self,
        tape: &mut Tape,
        lease: &LeasedParams,
        j0: NodeId,
        e_pose: NodeId,
        e_res: NodeId,
        beta_rep: NodeId,
        t: f64,
        faces: usize,
    ) -> Result<NodeId> {
        let enc = tape.leaf_row(&time_token_row(t));
        let enc_rep = tape.repeat_rows(enc, faces)?;
        let input = tape.concat_cols(&[j0, e_pose, e_res, beta_rep, enc_rep])?;
        self.residual.forward(tape, lease, input)
    }

    /// Build one window's full graph: posing for every frame, both window
    /// encodings, Euler integration of the residual ODE, composition, and
    /// one Poisson solve per frame.
    ///
    /// `h` is the sequence-wide Euler step. The returned carry holds the
    /// last residual (and this window's residual values) detached.
    pub fn forward_window(
        &self,
        params: &ParamSet,
        ctx: &TargetContext,
        angles: &Array2<f64>,
        beta: &[f64],
        plan: &WindowPlan,
        carry: &WindowCarry,
        h: f64,
    ) -> Result<WindowForward> {
        let faces = ctx.face_count();
        let mut tape = Tape::new();
        let lease = params.lease(&mut tape);
        let features = self.features_node(&mut tape, &lease, ctx)?;
        let j0 = tape.leaf(ctx.j0_rows.clone());

        // independent per-frame posing over the whole window
        let mut posed = Vec::with_capacity(plan.frames.len());
        for &frame in &plan.frames {
            let row = angles.row(frame).to_vec();
            posed.push(self.posing_forward(&mut tape, &lease, ctx, features, j0, &row)?);
        }

        let residuals = if self.config.use_residual {
            let e_pose =
                self.encode_pose_window(&mut tape, &lease, faces, &posed, &plan.times)?;
            let e_res =
                self.encode_residual_window(&mut tape, &lease, faces, carry, plan.frames.len())?;

            let mut beta_row = beta.to_vec();
            beta_row.resize(self.config.beta_width, 0.0);
            let beta_leaf = tape.leaf_row(&beta_row);
            let beta_rep = tape.repeat_rows(beta_leaf, faces)?;

            let init = tape.leaf(carry.initial_residual.clone());
            if carry.is_sequence_start() {
                // the first frame's residual is exactly zero; step from its
                // time onward for the remaining frames
                let step_times = &plan.times[..plan.times.len() - 1];
                let mut rest = euler_integrate(&mut tape, init, step_times, h, |tape, _, t| {
                    self.residual_rate(tape, &lease, j0, e_pose, e_res, beta_rep, t, faces)
                })?;
                let mut all = vec![init];
                all.append(&mut rest);
                all
            } else {
                // continue from the previous window's last residual: the
                // first step starts at that frame's time
                let mut step_times = Vec::with_capacity(plan.frames.len());
                step_times.push(carry.initial_time);
                step_times.extend_from_slice(&plan.times[..plan.times.len() - 1]);
                euler_integrate(&mut tape, init, &step_times, h, |tape, _, t| {
                    self.residual_rate(tape, &lease, j0, e_pose, e_res, beta_rep, t, faces)
                })?
            }
        } else {
            // per-frame baseline: no residual path
            let zero = tape.leaf(Array2::zeros((faces, 9)));
            vec![zero; plan.frames.len()]
        };

        // compose and integrate spatially
        let mut composed = Vec::with_capacity(plan.frames.len());
        let mut positions = Vec::with_capacity(plan.frames.len());
        for (jp, jr) in posed.iter().zip(&residuals) {
            let jt = tape.add(*jp, *jr)?;
            let world = tape.basis_to_world(jt, &ctx.system)?;
            positions.push(tape.poisson_solve(world, &ctx.system)?);
            composed.push(jt);
        }

        let carry_out = WindowCarry {
            initial_residual: tape.value(*residuals.last().expect("non-empty window")).clone(),
            prev_residuals: residuals.iter().map(|&r| tape.value(r).clone()).collect(),
            prev_times: plan.times.clone(),
            initial_time: *plan.times.last().expect("non-empty window"),
        };

        Ok(WindowForward {
            tape,
            lease,
            posed,
            residuals,
            composed,
            positions,
            carry: carry_out,
        })
    }
}
