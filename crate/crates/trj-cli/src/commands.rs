//! Subcommand implementations.

use crate::config::{Baseline, CheckpointMeta, RunConfig};
use clap::{Args, Subcommand};
use ndarray::Array2;
use std::path::{Path, PathBuf};
use trj::io;
use trj::model::TrjModel;
use trj::nn::{Adam, AdamConfig, ParamSet};
use trj::train::{self, AnyModel, TrainConfig, TrainSequence, VertexOdeModel};
use trj::{Error, Result};

pub enum Outcome {
    Success,
    EpochCapped,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: manifests, first-frame meshes, and
    /// ground-truth OBJ frames.
    Synth(SynthArgs),
    /// Train a model on a dataset; writes a checkpoint and a loss log.
    Train(TrainArgs),
    /// Transfer a motion onto a target mesh; writes one OBJ per frame.
    Infer(InferArgs),
    /// Score predictions against ground truth; writes a metrics file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sequences to generate.
    #[arg(long)]
    sequences: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    frames: Option<usize>,
    /// Body plan: biped, quadruped, or chain:<joints>.
    #[arg(long)]
    plan: Option<String>,
    /// Motion preset: walk, wave, or still.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset index file (or the directory containing index.txt).
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Resume from an existing checkpoint, continuing epoch numbering.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target mesh OBJ (may be a shape never seen in training).
    #[arg(long)]
    target: PathBuf,
    /// Motion manifest to transfer.
    #[arg(long)]
    motion: PathBuf,
    /// Output directory for predicted frames.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset index with ground truth.
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoints to evaluate (repeatable). With none given, scores the
    /// ground-truth playback, which is all zeros.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Metrics file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn parse_plan(s: &str) -> Result<io::BodyPlan> {
    match s {
        "biped" => Ok(io::BodyPlan::Biped),
        "quadruped" => Ok(io::BodyPlan::Quadruped),
        other => match other.strip_prefix("chain:") {
            Some(j) => Ok(io::BodyPlan::Chain {
                joints: j
                    .parse()
                    .map_err(|_| Error::GeneratorConfig(format!("bad chain joint count {j:?}")))?,
            }),
            None => Err(Error::GeneratorConfig(format!(
                "unknown body plan {other:?}; expected biped, quadruped, or chain:<joints>"
            ))),
        },
    }
}

fn parse_preset(s: &str) -> Result<io::MotionPreset> {
    match s {
        "walk" => Ok(io::MotionPreset::Walk),
        "wave" => Ok(io::MotionPreset::Wave),
        "still" => Ok(io::MotionPreset::Still),
        other => Err(Error::GeneratorConfig(format!(
            "unknown preset {other:?}; expected walk, wave, or still"
        ))),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<Outcome> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.sequences {
        config.synth.sequences = n;
    }
    if let Some(f) = args.frames {
        config.synth.frames = f;
    }
    if let Some(p) = args.plan {
        config.synth.plan = p;
    }
    if let Some(p) = args.preset {
        config.synth.preset = p;
    }

    let plan = parse_plan(&config.synth.plan)?;
    let preset = parse_preset(&config.synth.preset)?;
    std::fs::create_dir_all(&args.out)?;

    let mut manifests = Vec::new();
    for i in 0..config.synth.sequences {
        // distinct body per sequence, deterministic in the dataset seed
        let beta = io::random_beta(config.seed.wrapping_add(i as u64));
        let synth = io::SynthConfig {
            plan,
            beta,
            segments: config.synth.segments,
            rings_per_bone: config.synth.rings_per_bone,
            preset,
            frames: config.synth.frames,
            fps: config.synth.fps,
            seed: config.seed.wrapping_add(1000 * i as u64),
            root_yaw: config.synth.root_yaw,
        };
        let seq = io::synth_generate(&synth)?;
        let dir = args.out.join(format!("seq_{i:03}"));
        std::fs::create_dir_all(&dir)?;
        manifests.push(io::write_sequence(&dir, &seq)?);
        log::info!(
            "seq_{i:03}: {} faces, {} frames",
            seq.first_frame.face_count(),
            seq.gt_frames.len()
        );
    }
    io::write_dataset_index(&args.out, &manifests)?;
    Ok(Outcome::Success)
}

fn dataset_index_path(dataset: &Path) -> PathBuf {
    if dataset.is_dir() {
        dataset.join("index.txt")
    } else {
        dataset.to_path_buf()
    }
}

fn load_dataset(dataset: &Path, model_config: &trj::model::ModelConfig) -> Result<Vec<TrainSequence>> {
    let manifests = io::read_dataset_index(&dataset_index_path(dataset))?;
    let mut out = Vec::with_capacity(manifests.len());
    for path in manifests {
        let loaded = io::load_sequence(&path)?;
        if loaded.gt_frames.is_empty() {
            return Err(Error::MissingGroundTruth(path.display().to_string()));
        }
        let name = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.push(TrainSequence::prepare(
            name,
            loaded.first_frame,
            loaded.manifest.angles.clone(),
            loaded.manifest.beta.clone(),
            loaded.gt_frames,
            model_config,
        )?);
    }
    if out.is_empty() {
        return Err(Error::Manifest(format!(
            "{}: dataset lists no sequences",
            dataset.display()
        )));
    }
    Ok(out)
}

fn dataset_joint_count(dataset: &Path) -> Result<usize> {
    let manifests = io::read_dataset_index(&dataset_index_path(dataset))?;
    let first = manifests
        .first()
        .ok_or_else(|| Error::Manifest("empty dataset index".into()))?;
    Ok(io::load_motion(first)?.tree.joint_count())
}

fn build_model(meta: &CheckpointMeta) -> Result<AnyModel> {
    match meta.baseline {
        Baseline::Trj | Baseline::NjfMt => {
            let mc = meta
                .model
                .clone()
                .ok_or_else(|| Error::Checkpoint("checkpoint lacks model config".into()))?;
            Ok(AnyModel::Trj(TrjModel::new(mc)))
        }
        Baseline::VertexOde => {
            let vc = meta
                .vertex
                .clone()
                .ok_or_else(|| Error::Checkpoint("checkpoint lacks vertex config".into()))?;
            Ok(AnyModel::VertexOde(VertexOdeModel::new(vc)))
        }
    }
}

fn checkpoint_from_state(
    meta: &CheckpointMeta,
    params: &ParamSet,
    adam: &Adam,
    epoch: usize,
) -> Result<io::Checkpoint> {
    let mut tensors = Vec::new();
    for (name, value) in params.iter() {
        tensors.push((format!("param/{name}"), value.clone()));
    }
    for (name, m, v) in adam.export_state(params) {
        tensors.push((format!("adam_m/{name}"), m));
        tensors.push((format!("adam_v/{name}"), v));
    }
    Ok(io::Checkpoint {
        version: io::CHECKPOINT_VERSION,
        config_json: serde_json::to_string_pretty(meta)
            .map_err(|e| Error::Checkpoint(e.to_string()))?,
        epoch: epoch as u64,
        adam_t: adam.step_count(),
        tensors,
    })
}

fn state_from_checkpoint(
    ckpt: &io::Checkpoint,
) -> Result<(CheckpointMeta, AnyModel, ParamSet, Adam, usize)> {
    let meta: CheckpointMeta = serde_json::from_str(&ckpt.config_json)
        .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
    let model = build_model(&meta)?;
    let mut params = model.init_params(meta.seed);
    for name in params.names().to_vec() {
        let stored = ckpt.tensor(&format!("param/{name}"))?;
        *params.get_mut(&name) = stored.clone();
    }
    let mut adam = Adam::new(AdamConfig {
        lr: meta.lr,
        ..AdamConfig::default()
    });
    let moments: Vec<(String, Array2<f64>, Array2<f64>)> = params
        .names()
        .iter()
        .filter_map(|name| {
            let m = ckpt.tensor(&format!("adam_m/{name}")).ok()?;
            let v = ckpt.tensor(&format!("adam_v/{name}")).ok()?;
            Some((name.clone(), m.clone(), v.clone()))
        })
        .collect();
    adam.import_state(ckpt.adam_t, moments);
    Ok((meta, model, params, adam, ckpt.epoch as usize))
}

fn cmd_train(args: TrainArgs) -> Result<Outcome> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(b) = args.baseline {
        config.baseline = b;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(w) = args.window {
        config.window = w;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(l) = args.lr {
        config.lr = l;
    }

    let joint_count = dataset_joint_count(&args.dataset)?;

    let (meta, model, params, adam, start_epoch) = match &args.resume {
        Some(path) => {
            let ckpt = io::load_checkpoint(path)?;
            let (meta, model, params, adam, epoch) = state_from_checkpoint(&ckpt)?;
            log::info!("resuming from {} at epoch {epoch}", path.display());
            (meta, model, params, adam, epoch)
        }
        None => {
            let meta = CheckpointMeta {
                baseline: config.baseline,
                model: match config.baseline {
                    Baseline::Trj | Baseline::NjfMt => Some(config.model_config(joint_count)),
                    Baseline::VertexOde => None,
                },
                vertex: match config.baseline {
                    Baseline::VertexOde => Some(config.vertex_config(joint_count)),
                    _ => None,
                },
                lr: config.lr,
                alpha: config.alpha,
                convergence: config.convergence,
                epochs: config.epochs,
                seed: config.seed,
            };
            let model = build_model(&meta)?;
            let params = model.init_params(config.seed);
            let adam = Adam::new(AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            });
            (meta, model, params, adam, 0)
        }
    };

    let model_config_for_data = match &meta.model {
        Some(mc) => mc.clone(),
        None => config.model_config(joint_count),
    };
    let dataset = load_dataset(&args.dataset, &model_config_for_data)?;

    let train_config = TrainConfig {
        epochs: config.epochs,
        convergence: config.convergence,
        lr: meta.lr,
        alpha: meta.alpha,
        seed: meta.seed,
    };
    let outcome = train::train(&model, params, adam, start_epoch, &dataset, &train_config)?;

    let last_epoch = outcome
        .history
        .last()
        .map(|r| r.epoch + 1)
        .unwrap_or(start_epoch);
    let ckpt = checkpoint_from_state(&meta, &outcome.params, &outcome.adam, last_epoch)?;
    io::save_checkpoint(&args.checkpoint, &ckpt)?;
    let log_path = args.checkpoint.with_extension("log");
    train::write_history(&log_path, &outcome.history)?;
    log::info!(
        "saved {} after epoch {last_epoch} (converged: {})",
        args.checkpoint.display(),
        outcome.converged
    );
    Ok(if outcome.converged {
        Outcome::Success
    } else {
        Outcome::EpochCapped
    })
}

fn cmd_infer(args: InferArgs) -> Result<Outcome> {
    let ckpt = io::load_checkpoint(&args.checkpoint)?;
    let (meta, model, params, _, _) = state_from_checkpoint(&ckpt)?;
    let target = io::load_obj(&args.target)?;
    let manifest = io::load_motion(&args.motion)?;

    let expected_joints = match (&meta.model, &meta.vertex) {
        (Some(mc), _) => mc.joint_count,
        (None, Some(vc)) => vc.joint_count,
        _ => return Err(Error::Checkpoint("checkpoint lacks a config".into())),
    };
    if manifest.tree.joint_count() != expected_joints {
        return Err(Error::shape(
            format!("{}: joint count", args.motion.display()),
            format!("{expected_joints}"),
            format!("{}", manifest.tree.joint_count()),
        ));
    }

    std::fs::create_dir_all(&args.out)?;
    let mut positions = match &model {
        AnyModel::Trj(m) => {
            let ctx = trj::model::TargetContext::build_with_cache(
                target.clone(),
                &m.config,
                Some(&args.out.join("wks_cache.bin")),
            )?;
            m.sequence_forward(&params, &ctx, &manifest.angles, &manifest.beta)?
                .positions
        }
        AnyModel::VertexOde(m) => {
            let rest = trj::mesh::positions_to_rows(target.vertices());
            m.sequence_forward(&params, &rest, &manifest.angles, &manifest.beta)?
                .iter()
                .map(trj::mesh::positions_from_rows)
                .collect()
        }
    };

    if !manifest.global_transforms.is_empty() {
        let scale = target.height() / manifest.source_height.max(1e-9);
        trj::model::apply_global_transform(&mut positions, &manifest.global_transforms, scale)?;
    }

    for (i, frame) in positions.iter().enumerate() {
        io::save_obj(
            &args.out.join(format!("frame_{i:04}.obj")),
            frame,
            target.faces(),
        )?;
    }
    log::info!("wrote {} frames to {}", positions.len(), args.out.display());
    Ok(Outcome::Success)
}

fn cmd_eval(args: EvalArgs) -> Result<Outcome> {
    let config = RunConfig::load(args.config.as_deref())?;
    let joint_count = dataset_joint_count(&args.dataset)?;

    let mut records: Vec<(String, trj::train::MetricReport)> = Vec::new();

    if args.checkpoint.is_empty() {
        // ground-truth playback: the identity comparison, all zeros
        let dataset = load_dataset(&args.dataset, &config.model_config(joint_count))?;
        let mut per_seq = Vec::new();
        for seq in &dataset {
            let r = trj::train::evaluate_sequence(
                &seq.ctx.mesh,
                &seq.gt_frames,
                None,
                &seq.gt_frames,
            )?;
            records.push((format!("gt_playback/{}", seq.name), r));
            per_seq.push(r);
        }
        records.push(("gt_playback/aggregate".into(), trj::train::aggregate(&per_seq)));
    } else {
        let mut checkpoints = args.checkpoint.clone();
        checkpoints.sort_by_key(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        for path in &checkpoints {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let ckpt = io::load_checkpoint(path)?;
            let (meta, model, params, _, _) = state_from_checkpoint(&ckpt)?;
            let data_config = meta
                .model
                .clone()
                .unwrap_or_else(|| config.model_config(joint_count));
            let dataset = load_dataset(&args.dataset, &data_config)?;
            let mut per_seq = Vec::new();
            for seq in &dataset {
                let r = train::evaluate_model(&model, &params, seq)?;
                records.push((format!("{stem}/{}", seq.name), r));
                per_seq.push(r);
            }
            records.push((format!("{stem}/aggregate"), trj::train::aggregate(&per_seq)));
        }
    }

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    trj::train::write_metrics(&args.out, &records)?;
    log::info!("wrote {} records to {}", records.len(), args.out.display());
    Ok(Outcome::Success)
}
