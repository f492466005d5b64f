//! The two-term training objective: mean squared vertex distance plus
//! alpha-weighted mean squared Jacobian error.

use crate::error::{Error, Result};
use crate::nn::{NodeId, Tape};
use nalgebra::Vector3;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Weight of the Jacobian term.
pub const ALPHA_JACOBIAN: f64 = 0.05;
/// Training stops once the epoch's vertex loss drops below this.
pub const CONVERGENCE_L_VERTEX: f64 = 3e-4;
/// Epoch cap when convergence is not reached.
pub const MAX_EPOCHS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean over frames and vertices of the squared vertex distance (m^2).
    pub vertex: f64,
    /// Mean over frames and faces of the squared Frobenius Jacobian error.
    pub jacobian: f64,
    /// `vertex + alpha * jacobian`.
    pub total: f64,
    pub alpha: f64,
}

impl LossReport {
    pub fn new(vertex: f64, jacobian: f64, alpha: f64) -> Self {
        LossReport {
            vertex,
            jacobian,
            total: vertex + alpha * jacobian,
            alpha,
        }
    }
}

/// Value-level losses over full sequences.
pub fn compute_losses(
    pred_positions: &[Vec<Vector3<f64>>],
    pred_jacobians: &[Array2<f64>],
    gt_positions: &[Vec<Vector3<f64>>],
    gt_jacobians: &[Array2<f64>],
    alpha: f64,
) -> Result<LossReport> {
    if pred_positions.len() != gt_positions.len() || pred_jacobians.len() != gt_jacobians.len() {
        return Err(Error::shape(
            "compute_losses frames",
            format!("{} / {}", gt_positions.len(), gt_jacobians.len()),
            format!("{} / {}", pred_positions.len(), pred_jacobians.len()),
        ));
    }
    let mut vertex = 0.0;
    let mut count_v = 0usize;
    for (p, g) in pred_positions.iter().zip(gt_positions) {
        if p.len() != g.len() {
            return Err(Error::shape(
                "compute_losses vertices",
                format!("{}", g.len()),
                format!("{}", p.len()),
            ));
        }
        for (a, b) in p.iter().zip(g) {
            vertex += (a - b).norm_squared();
        }
        count_v += p.len();
    }
    let mut jac = 0.0;
    let mut count_j = 0usize;
    for (p, g) in pred_jacobians.iter().zip(gt_jacobians) {
        if p.dim() != g.dim() {
            return Err(Error::shape(
                "compute_losses jacobians",
                format!("{:?}", g.dim()),
                format!("{:?}", p.dim()),
            ));
        }
        jac += (p - g).iter().map(|x| x * x).sum::<f64>();
        count_j += p.nrows();
    }
    Ok(LossReport::new(
        vertex / count_v.max(1) as f64,
        jac / count_j.max(1) as f64,
        alpha,
    ))
}

/// Graph-side window loss. Targets are leased as constants; the returned
/// nodes are (total, vertex, jacobian), each 1x1. The means match
/// [`compute_losses`] over the window's frames.
pub fn window_loss_nodes(
    tape: &mut Tape,
    positions: &[NodeId],
    composed: Option<&[NodeId]>,
    gt_positions: &[Array2<f64>],
    gt_jacobians: &[Array2<f64>],
    alpha: f64,
) -> Result<(NodeId, NodeId, NodeId)> {
    if positions.len() != gt_positions.len() {
        return Err(Error::shape(
            "window_loss frames",
            format!("{}", gt_positions.len()),
            format!("{}", positions.len()),
        ));
    }
    let frames = positions.len() as f64;
    let mut vertex_terms: Option<NodeId> = None;
    for (&pos, gt) in positions.iter().zip(gt_positions) {
        let target = tape.leaf(gt.clone());
        let diff = tape.sub(pos, target)?;
        let ss = tape.sum_sq(diff);
        let scaled = tape.scale(ss, 1.0 / (gt.nrows() as f64 * frames));
        vertex_terms = Some(match vertex_terms {
            Some(acc) => tape.add(acc, scaled)?,
            None => scaled,
        });
    }
    let vertex = vertex_terms.expect("non-empty window");

    let jacobian = match composed {
        Some(composed) => {
            let mut jac_terms: Option<NodeId> = None;
            for (&jt, gt) in composed.iter().zip(gt_jacobians) {
                let target = tape.leaf(gt.clone());
                let diff = tape.sub(jt, target)?;
                let ss = tape.sum_sq(diff);
                let scaled = tape.scale(ss, 1.0 / (gt.nrows() as f64 * frames));
                jac_terms = Some(match jac_terms {
                    Some(acc) => tape.add(acc, scaled)?,
                    None => scaled,
                });
            }
            jac_terms.expect("non-empty window")
        }
        None => tape.leaf(Array2::zeros((1, 1))),
    };

    let weighted = tape.scale(jacobian, alpha);
    let total = tape.add(vertex, weighted)?;
    Ok((total, vertex, jacobian))
}
