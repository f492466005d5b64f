//! Training, evaluation metrics, and the ablation baselines.

mod baselines;
mod loss;
mod metrics;
mod trainer;

pub use baselines::{njf_mt_model, VertexOdeConfig, VertexOdeModel, VertexOdeWindow};
pub use loss::{
    compute_losses, window_loss_nodes, LossReport, ALPHA_JACOBIAN, CONVERGENCE_L_VERTEX,
    MAX_EPOCHS,
};
pub use metrics::{aggregate, evaluate_sequence, jitter_cm, write_metrics, MetricReport};
pub use trainer::{
    evaluate_model, predict_positions, train, write_history, AnyModel, EpochRecord, TrainConfig,
    TrainOutcome, TrainSequence,
};
