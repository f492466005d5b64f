//! Procedural synthetic bodies and motions with exact ground truth.
//!
//! A body is a tree of capsule tubes: one ringed tube per bone, welded
//! straight through 1-in-1-out joints, fanned to a shared junction vertex at
//! branch points, capped at leaves. Skinning weights are analytic
//! distance-based falloffs to each joint's owned bone segments; they exist
//! only inside this generator and are never exposed to the learned pipeline.

use super::lbs::{lbs_pose, SkinWeights};
use super::motion::{KinematicTree, MotionManifest};
use crate::error::{Error, Result};
use crate::mesh::{triangle_area, TriMesh};
use nalgebra::Vector3;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Body topologies the generator can mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPlan {
    /// 12-joint upright humanoid: torso chain, head, two arms, two legs.
    Biped,
    /// 12-joint horizontal quadruped: spine chain, head, four legs.
    Quadruped,
    /// A single kinematic chain along +y (an "arm"), `joints` long.
    Chain { joints: usize },
}

/// Smooth per-joint sinusoidal angle track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTrack {
    pub joint: usize,
    /// 0 = x, 1 = y, 2 = z rotation axis
    pub axis: usize,
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

/// Motion families with sensible defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPreset {
    /// Limbs swinging antiphase, arm counter-swing, slight spine sway.
    Walk,
    /// A traveling wave along the joint chain.
    Wave,
    /// All angles zero; the sequence is static.
    Still,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub plan: BodyPlan,
    /// Zero-padded 16-wide shape signature; the first 8 entries scale
    /// (torso length, torso radius, arm length, arm radius, leg length,
    /// leg radius, head size, overall size) and must be positive.
    pub beta: Vec<f64>,
    /// Ring vertices per tube cross-section.
    pub segments: usize,
    /// Rings per bone (>= 2).
    pub rings_per_bone: usize,
    pub preset: MotionPreset,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    /// Amplitude of a root yaw sinusoid, radians; zero keeps the root still.
    pub root_yaw: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            plan: BodyPlan::Biped,
            beta: default_beta(),
            segments: 8,
            rings_per_bone: 3,
            preset: MotionPreset::Walk,
            frames: 64,
            fps: 30.0,
            seed: 0,
            root_yaw: 0.0,
        }
    }
}

pub fn default_beta() -> Vec<f64> {
    let mut b = vec![0.0; 16];
    b[..8].fill(1.0);
    b
}

/// A distinct body shape per seed: the 8 scale entries drawn uniformly from
/// [0.85, 1.25).
pub fn random_beta(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = default_beta();
    for b in beta.iter_mut().take(8) {
        *b = rng.gen_range(0.85..1.25);
    }
    beta
}

/// One generated sequence: the manifest (tree, angles, shape signature), the
/// first-frame mesh the model consumes, and every ground-truth frame.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub manifest: MotionManifest,
    pub first_frame: TriMesh,
    pub gt_frames: Vec<Vec<Vector3<f64>>>,
}

struct BodySpec {
    tree: KinematicTree,
    /// capsule radius at each joint
    joint_radius: Vec<f64>,
}

fn scaled(beta: &[f64], idx: usize) -> f64 {
    beta.get(idx).copied().unwrap_or(1.0)
}

fn body_spec(plan: BodyPlan, beta: &[f64]) -> Result<BodySpec> {
    for (i, &b) in beta.iter().take(8).enumerate() {
        if !(b > 0.0) {
            return Err(Error::GeneratorConfig(format!(
                "beta[{i}] = {b}; the first 8 entries are scales and must be positive"
            )));
        }
    }
    let (t_len, t_rad) = (scaled(beta, 0), scaled(beta, 1));
    let (a_len, a_rad) = (scaled(beta, 2), scaled(beta, 3));
    let (l_len, l_rad) = (scaled(beta, 4), scaled(beta, 5));
    let head = scaled(beta, 6);
    let size = scaled(beta, 7);

    let v = Vector3::new;
    let (parents, offsets, radii): (Vec<i64>, Vec<Vector3<f64>>, Vec<f64>) = match plan {
        BodyPlan::Biped => (
            vec![-1, 0, 1, 2, 2, 4, 2, 6, 0, 8, 0, 10],
            vec![
                v(0.0, 0.95 * l_len * size, 0.0),          // 0 pelvis (root)
                v(0.0, 0.22 * t_len * size, 0.0),          // 1 spine
                v(0.0, 0.22 * t_len * size, 0.0),          // 2 chest
                v(0.0, 0.26 * head * size, 0.0),           // 3 head (leaf)
                v(0.20 * size, 0.05 * size, 0.0),          // 4 l shoulder
                v(0.34 * a_len * size, 0.0, 0.0),          // 5 l arm tip (leaf)
                v(-0.20 * size, 0.05 * size, 0.0),         // 6 r shoulder
                v(-0.34 * a_len * size, 0.0, 0.0),         // 7 r arm tip (leaf)
                v(0.11 * size, -0.04 * size, 0.0),         // 8 l hip
                v(0.0, -0.48 * l_len * size, 0.0),         // 9 l leg tip (leaf)
                v(-0.11 * size, -0.04 * size, 0.0),        // 10 r hip
                v(0.0, -0.48 * l_len * size, 0.0),         // 11 r leg tip (leaf)
            ],
            vec![
                0.11 * t_rad * size,
                0.12 * t_rad * size,
                0.10 * t_rad * size,
                0.085 * head * size,
                0.050 * a_rad * size,
                0.038 * a_rad * size,
                0.050 * a_rad * size,
                0.038 * a_rad * size,
                0.065 * l_rad * size,
                0.045 * l_rad * size,
                0.065 * l_rad * size,
                0.045 * l_rad * size,
            ],
        ),
        BodyPlan::Quadruped => (
            vec![-1, 0, 1, 2, 2, 4, 2, 6, 0, 8, 0, 10],
            vec![
                v(0.0, 0.55 * l_len * size, 0.0),          // 0 hips (root)
                v(0.0, 0.02 * size, -0.30 * t_len * size), // 1 spine
                v(0.0, 0.02 * size, -0.30 * t_len * size), // 2 shoulders
                v(0.0, 0.12 * size, -0.24 * head * size),  // 3 head (leaf)
                v(0.10 * size, -0.06 * size, -0.04 * size), // 4 fl hip
                v(0.0, -0.42 * a_len * size, 0.0),         // 5 fl foot (leaf)
                v(-0.10 * size, -0.06 * size, -0.04 * size), // 6 fr hip
                v(0.0, -0.42 * a_len * size, 0.0),         // 7 fr foot (leaf)
                v(0.10 * size, -0.06 * size, 0.04 * size), // 8 bl hip
                v(0.0, -0.42 * l_len * size, 0.0),         // 9 bl foot (leaf)
                v(-0.10 * size, -0.06 * size, 0.04 * size), // 10 br hip
                v(0.0, -0.42 * l_len * size, 0.0),         // 11 br foot (leaf)
            ],
            vec![
                0.11 * t_rad * size,
                0.12 * t_rad * size,
                0.10 * t_rad * size,
                0.075 * head * size,
                0.045 * a_rad * size,
                0.034 * a_rad * size,
                0.045 * a_rad * size,
                0.034 * a_rad * size,
                0.050 * l_rad * size,
                0.036 * l_rad * size,
                0.050 * l_rad * size,
                0.036 * l_rad * size,
            ],
        ),
        BodyPlan::Chain { joints } => {
            if joints < 2 {
                return Err(Error::GeneratorConfig(format!(
                    "chain needs at least 2 joints, got {joints}"
                )));
            }
            let seg = 0.14 * t_len * size;
            let mut parents = vec![-1i64];
            let mut offsets = vec![v(0.0, 0.0, 0.0)];
            let mut radii = Vec::with_capacity(joints);
            for j in 1..joints {
                parents.push(j as i64 - 1);
                offsets.push(v(0.0, seg, 0.0));
            }
            for j in 0..joints {
                // gentle taper toward the tip
                let t = j as f64 / (joints - 1) as f64;
                radii.push((0.065 - 0.025 * t) * t_rad * size);
            }
            (parents, offsets, radii)
        }
    };
    Ok(BodySpec {
        tree: KinematicTree::new(parents, offsets)?,
        joint_radius: radii,
    })
}

/// Children of each joint, in index order.
fn children(tree: &KinematicTree) -> Vec<Vec<usize>> {
    let mut ch = vec![Vec::new(); tree.joint_count()];
    for j in 0..tree.joint_count() {
        if let Some(p) = tree.parent(j) {
            ch[p].push(j);
        }
    }
    ch
}

struct TubeBody {
    mesh: TriMesh,
    weights: SkinWeights,
}

/// Mesh the body: one ringed tube per bone. A joint with exactly one child
/// and a parent bone is welded straight through (the tube continues); other
/// joints close their incident rings with fans to one shared junction
/// vertex, which keeps every edge on at most two faces.
fn build_tube_body(spec: &BodySpec, segments: usize, rings_per_bone: usize) -> Result<TubeBody> {
    if segments < 3 || rings_per_bone < 2 {
        return Err(Error::GeneratorConfig(format!(
            "need >= 3 segments and >= 2 rings per bone, got {segments} and {rings_per_bone}"
        )));
    }
    let tree = &spec.tree;
    let ch = children(tree);
    let rest = tree.rest_positions();
    let mut verts: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    // end ring vertex ids of the bone arriving at each joint, for welding
    let mut end_ring: Vec<Option<Vec<usize>>> = vec![None; tree.joint_count()];
    let mut junction_apex: Vec<Option<usize>> = vec![None; tree.joint_count()];

    let is_weld = |j: usize| tree.parent(j).is_some() && ch[j].len() == 1;

    let make_ring = |center: Vector3<f64>,
                         axis: Vector3<f64>,
                         radius: f64,
                         verts: &mut Vec<Vector3<f64>>|
     -> Vec<usize> {
        let up = if axis.x.abs() < 0.9 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            Vector3::new(0.0, 1.0, 0.0)
        };
        let u = axis.cross(&up).normalize();
        let v = axis.cross(&u);
        (0..segments)
            .map(|s| {
                let a = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                verts.push(center + radius * (a.cos() * u + a.sin() * v));
                verts.len() - 1
            })
            .collect()
    };

    let apex_at = |j: usize,
                       verts: &mut Vec<Vector3<f64>>,
                       junction_apex: &mut Vec<Option<usize>>|
     -> usize {
        *junction_apex[j].get_or_insert_with(|| {
            verts.push(rest[j]);
            verts.len() - 1
        })
    };

    // process bones in child order so the parent's end ring already exists
    for b in 1..tree.joint_count() {
        let a = tree.parent(b).expect("non-root");
        let (pa, pb) = (rest[a], rest[b]);
        let len = (pb - pa).norm();
        if len < 1e-9 {
            return Err(Error::GeneratorConfig(format!(
                "bone {a}->{b} has zero length"
            )));
        }
        let axis = (pb - pa) / len;
        let (ra, rb) = (spec.joint_radius[a], spec.joint_radius[b]);
        let inset_a = (0.35 * ra).min(0.25 * len);
        let inset_b = (0.35 * rb).min(0.25 * len);

        // ring positions along the bone, inset at both ends
        let ring_pos = |k: usize| {
            let t = k as f64 / (rings_per_bone - 1) as f64;
            let s = inset_a / len + t * (1.0 - (inset_a + inset_b) / len);
            (pa + s * len * axis, ra + (rb - ra) * s)
        };

        let mut rings: Vec<Vec<usize>> = Vec::with_capacity(rings_per_bone);
        let start_welded = is_weld(a) && end_ring[a].is_some();
        if start_welded {
            rings.push(end_ring[a].clone().unwrap());
        } else {
            let (c, r) = ring_pos(0);
            let ring = make_ring(c, axis, r, &mut verts);
            // close the start toward the junction vertex at the joint
            let apex = apex_at(a, &mut verts, &mut junction_apex);
            for s in 0..segments {
                faces.push([ring[(s + 1) % segments], ring[s], apex]);
            }
            rings.push(ring);
        }
        for k in 1..rings_per_bone {
            let (c, r) = ring_pos(k);
            rings.push(make_ring(c, axis, r, &mut verts));
        }
        for k in 0..rings_per_bone - 1 {
            let (r0, r1) = (&rings[k], &rings[k + 1]);
            for s in 0..segments {
                let (i0, i1) = (r0[s], r0[(s + 1) % segments]);
                let (j0, j1) = (r1[s], r1[(s + 1) % segments]);
                faces.push([i0, i1, j0]);
                faces.push([i1, j1, j0]);
            }
        }

        let last = rings.last().unwrap().clone();
        if ch[b].is_empty() {
            // leaf: rounded cap beyond the tip
            verts.push(pb + 0.8 * rb * axis);
            let apex = verts.len() - 1;
            for s in 0..segments {
                faces.push([last[s], last[(s + 1) % segments], apex]);
            }
        } else if is_weld(b) {
            end_ring[b] = Some(last);
        } else {
            // junction: close onto the shared vertex at the joint
            let apex = apex_at(b, &mut verts, &mut junction_apex);
            for s in 0..segments {
                faces.push([last[s], last[(s + 1) % segments], apex]);
            }
        }
    }

    let mesh = TriMesh::new(verts, faces)?;
    let weights = skin_weights(&mesh, spec, &ch)?;
    Ok(TubeBody { mesh, weights })
}

/// Analytic distance-based skinning: each joint that owns bones attracts
/// vertices with a Gaussian falloff of the distance to its nearest owned
/// segment; rows are normalized to sum to one.
fn skin_weights(mesh: &TriMesh, spec: &BodySpec, ch: &[Vec<usize>]) -> Result<SkinWeights> {
    let tree = &spec.tree;
    let rest = tree.rest_positions();
    let joints = tree.joint_count();
    let mut w = Array2::zeros((mesh.vertex_count(), joints));
    for (vi, v) in mesh.vertices().iter().enumerate() {
        let mut total = 0.0;
        for j in 0..joints {
            if ch[j].is_empty() {
                continue;
            }
            let mut d = f64::INFINITY;
            for &c in &ch[j] {
                d = d.min(point_segment_distance(v, &rest[j], &rest[c]));
            }
            let tau = 1.8 * spec.joint_radius[j].max(1e-6);
            let val = (-(d / tau).powi(2)).exp().max(1e-12);
            w[(vi, j)] = val;
            total += val;
        }
        for j in 0..joints {
            w[(vi, j)] /= total;
        }
    }
    SkinWeights::new(w)
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Sinusoidal trajectory tracks for a preset, jittered per seed.
fn preset_tracks(
    plan: BodyPlan,
    preset: MotionPreset,
    root_yaw: f64,
    tree: &KinematicTree,
    rng: &mut ChaCha8Rng,
) -> Vec<SineTrack> {
    use std::f64::consts::PI;
    let mut tracks: Vec<SineTrack> = Vec::new();
    let mut push = |joint: usize, axis: usize, amplitude: f64, frequency_hz: f64, phase: f64| {
        tracks.push(SineTrack {
            joint,
            axis,
            amplitude,
            frequency_hz,
            phase,
        });
    };
    match (plan, preset) {
        (_, MotionPreset::Still) => {}
        (BodyPlan::Chain { joints }, _) => {
            // traveling wave down the chain
            for j in 0..joints.saturating_sub(1) {
                push(j, 2, 0.22, 0.7, 0.65 * j as f64);
                push(j, 0, 0.10, 0.5, 0.40 * j as f64 + PI / 3.0);
            }
        }
        (_, MotionPreset::Walk) => {
            // hips antiphase, shoulders counter-swing, spine sway
            push(8, 0, 0.45, 1.0, 0.0);
            push(10, 0, 0.45, 1.0, PI);
            push(4, 0, 0.30, 1.0, PI);
            push(6, 0, 0.30, 1.0, 0.0);
            push(1, 2, 0.07, 2.0, PI / 2.0);
            push(2, 1, 0.09, 1.0, 0.0);
        }
        (_, MotionPreset::Wave) => {
            // torso-driven sway with limbs trailing in phase offsets
            push(1, 2, 0.18, 0.6, 0.0);
            push(2, 2, 0.18, 0.6, 0.8);
            push(4, 2, 0.30, 0.6, 1.6);
            push(6, 2, 0.30, 0.6, 1.6 + PI);
            push(8, 2, 0.12, 0.6, 0.5);
            push(10, 2, 0.12, 0.6, 0.5 + PI);
        }
    }
    if root_yaw != 0.0 {
        push(tree.root(), 1, root_yaw, 0.4, 0.0);
    }
    // seeded jitter keeps sequences distinct across seeds but deterministic
    for t in &mut tracks {
        t.amplitude *= rng.gen_range(0.85..1.15);
        t.phase += rng.gen_range(-0.15..0.15);
        t.frequency_hz *= rng.gen_range(0.95..1.05);
    }
    tracks
}

/// Generate a full synthetic sequence: rest body, smooth joint trajectories,
/// and exact ground-truth frames from the skinning oracle. Deterministic per
/// config and seed. Every ground-truth frame is checked against the mesh
/// invariants.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthSequence> {
    if config.frames == 0 {
        return Err(Error::GeneratorConfig("frames must be >= 1".into()));
    }
    let spec = body_spec(config.plan, &config.beta)?;
    let body = build_tube_body(&spec, config.segments, config.rings_per_bone)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tracks = preset_tracks(
        config.plan,
        config.preset,
        config.root_yaw,
        &spec.tree,
        &mut rng,
    );

    let joints = spec.tree.joint_count();
    let mut angles = Array2::zeros((config.frames, 3 * joints));
    for frame in 0..config.frames {
        let t = frame as f64 / config.fps;
        for tr in &tracks {
            angles[(frame, 3 * tr.joint + tr.axis)] +=
                tr.amplitude * (2.0 * std::f64::consts::PI * tr.frequency_hz * t + tr.phase).sin();
        }
    }

    let mut gt_frames = Vec::with_capacity(config.frames);
    for frame in 0..config.frames {
        let row: Vec<f64> = (0..3 * joints).map(|c| angles[(frame, c)]).collect();
        let posed = lbs_pose(body.mesh.vertices(), &spec.tree, &body.weights, &row)?;
        for (fi, f) in body.mesh.faces().iter().enumerate() {
            let corners = [posed[f[0]], posed[f[1]], posed[f[2]]];
            let area = triangle_area(&corners);
            if !(area > crate::mesh::MIN_FACE_AREA) {
                return Err(Error::DegenerateFace { face: fi, area });
            }
        }
        gt_frames.push(posed);
    }

    let first_frame = TriMesh::new(gt_frames[0].clone(), body.mesh.faces().to_vec())?;
    let mut beta = config.beta.clone();
    beta.resize(16, 0.0);
    let manifest = MotionManifest {
        tree: spec.tree,
        fps: config.fps,
        angles,
        beta,
        source_height: first_frame.height(),
        rest_mesh: None,
        gt_meshes: vec![],
        global_transforms: vec![],
        root_zeroed: false,
    };
    manifest.validate()?;
    Ok(SynthSequence {
        manifest,
        first_frame,
        gt_frames,
    })
}
