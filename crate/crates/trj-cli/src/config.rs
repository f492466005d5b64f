//! Run configuration: a JSON config file with flag overrides; flags win.

use serde::{Deserialize, Serialize};
use std::path::Path;
use trj::model::ModelConfig;
use trj::train::{VertexOdeConfig, ALPHA_JACOBIAN, CONVERGENCE_L_VERTEX, MAX_EPOCHS};

/// Which model a training or evaluation run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Full model: posing + residual ODE + attention windows.
    Trj,
    /// Per-frame posing only.
    NjfMt,
    /// Per-vertex velocity ODE.
    VertexOde,
}


/// Defaults mirror the reference setup wherever it states a value: 32-frame
/// windows, alpha 0.05, 300-epoch cap, 3e-4 vertex-loss convergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub baseline: Baseline,
    pub seed: u64,
    pub epochs: usize,
    pub convergence: f64,
    pub window: usize,
    pub alpha: f64,
    pub lr: f64,
    /// Synthesis knobs.
    pub synth: SynthSection,
    /// Overrides for the model architecture; `None` keeps defaults.
    pub posing_hidden: Option<usize>,
    pub residual_hidden: Option<usize>,
    pub feature_hidden: Option<usize>,
    pub global_pool: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub sequences: usize,
    pub frames: usize,
    pub fps: f64,
    pub plan: String,
    pub preset: String,
    pub segments: usize,
    pub rings_per_bone: usize,
    pub root_yaw: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            sequences: 5,
            frames: 64,
            fps: 30.0,
            plan: "biped".into(),
            preset: "walk".into(),
            segments: 8,
            rings_per_bone: 3,
            root_yaw: 0.0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            baseline: Baseline::Trj,
            seed: 0,
            epochs: MAX_EPOCHS,
            convergence: CONVERGENCE_L_VERTEX,
            window: 32,
            alpha: ALPHA_JACOBIAN,
            lr: trj::nn::AdamConfig::default().lr,
            synth: SynthSection::default(),
            posing_hidden: None,
            residual_hidden: None,
            feature_hidden: None,
            global_pool: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> trj::Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    trj::Error::Manifest(format!("{}: {e}", p.display()))
                })
            }
            None => Ok(RunConfig::default()),
        }
    }

    pub fn model_config(&self, joint_count: usize) -> ModelConfig {
        let mut mc = ModelConfig::new(joint_count);
        mc.window = self.window;
        mc.global_pool = self.global_pool;
        if let Some(h) = self.posing_hidden {
            mc.posing_hidden = h;
        }
        if let Some(h) = self.residual_hidden {
            mc.residual_hidden = h;
        }
        if let Some(h) = self.feature_hidden {
            mc.feature_hidden = h;
        }
        if self.baseline == Baseline::NjfMt {
            mc.use_residual = false;
        }
        mc
    }

    pub fn vertex_config(&self, joint_count: usize) -> VertexOdeConfig {
        let mut vc = VertexOdeConfig::new(joint_count);
        vc.window = self.window;
        vc
    }
}

/// Echoed into every checkpoint so a model can be rebuilt without the
/// original config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub baseline: Baseline,
    pub model: Option<ModelConfig>,
    pub vertex: Option<VertexOdeConfig>,
    pub lr: f64,
    pub alpha: f64,
    pub convergence: f64,
    pub epochs: usize,
    pub seed: u64,
}
