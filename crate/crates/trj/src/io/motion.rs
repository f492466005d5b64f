//! Kinematic trees, rigid transform tracks, and the motion manifest file
//! format.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Joint hierarchy with parent-relative rest offsets (meters). Exactly one
/// root (parent -1).
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    parents: Vec<i64>,
    offsets: Vec<Vector3<f64>>,
}

impl KinematicTree {
    pub fn new(parents: Vec<i64>, offsets: Vec<Vector3<f64>>) -> Result<Self> {
        if parents.len() != offsets.len() {
            return Err(Error::Manifest(format!(
                "{} parents but {} offsets",
                parents.len(),
                offsets.len()
            )));
        }
        let roots = parents.iter().filter(|&&p| p < 0).count();
        if roots != 1 {
            return Err(Error::Manifest(format!("expected exactly one root, found {roots}")));
        }
        for (j, &p) in parents.iter().enumerate() {
            if p >= 0 && (p as usize >= j) {
                // parents must precede children; also rules out cycles
                return Err(Error::Manifest(format!(
                    "joint {j} has parent {p}; joints must be topologically ordered"
                )));
            }
            if !offsets[j].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("offset of joint {j}")));
            }
        }
        Ok(KinematicTree { parents, offsets })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        let p = self.parents[joint];
        (p >= 0).then_some(p as usize)
    }

    pub fn parents(&self) -> &[i64] {
        &self.parents
    }

    pub fn offset(&self, joint: usize) -> Vector3<f64> {
        self.offsets[joint]
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(|&p| p < 0).expect("validated")
    }

    /// World joint positions in the rest pose (all angles zero).
    pub fn rest_positions(&self) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); self.joint_count()];
        for j in 0..self.joint_count() {
            out[j] = match self.parent(j) {
                Some(p) => out[p] + self.offsets[j],
                None => self.offsets[j],
            };
        }
        out
    }

    /// Forward kinematics: world rotation and origin of every joint for one
    /// frame of parent-relative Euler angles (radians, rotation applied as
    /// `Rz(az) * Ry(ay) * Rx(ax)` at the joint origin).
    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Vec<(Matrix3<f64>, Vector3<f64>)>> {
        let j = self.joint_count();
        if angles.len() != 3 * j {
            return Err(Error::shape(
                "forward_kinematics angles",
                format!("{} values", 3 * j),
                format!("{} values", angles.len()),
            ));
        }
        let mut out: Vec<(Matrix3<f64>, Vector3<f64>)> = Vec::with_capacity(j);
        for joint in 0..j {
            let local = euler_zyx(&angles[3 * joint..3 * joint + 3]);
            let (rot, origin) = match self.parent(joint) {
                Some(p) => {
                    let (pr, pt) = out[p];
                    (pr * local, pr * self.offsets[joint] + pt)
                }
                None => (local, self.offsets[joint]),
            };
            out.push((rot, origin));
        }
        Ok(out)
    }
}

/// `Rz(az) * Ry(ay) * Rx(ax)` from an `(ax, ay, az)` slice.
pub fn euler_zyx(a: &[f64]) -> Matrix3<f64> {
    let (sx, cx) = a[0].sin_cos();
    let (sy, cy) = a[1].sin_cos();
    let (sz, cz) = a[2].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// A rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self, frame: usize) -> Result<()> {
        let det = self.rotation.determinant();
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if (det - 1.0).abs() > 1e-6 || ortho > 1e-6 {
            return Err(Error::NonRigidTransform { frame, det });
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self` after `other`: `(self * other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// One motion sequence: the tree, per-frame joint angles, shape signature,
/// frame rate, and optional ground-truth mesh references and global rigid
/// transforms. The training tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionManifest {
    pub tree: KinematicTree,
    pub fps: f64,
    /// frames x (3 * joints), parent-relative Euler angles in radians
    pub angles: Array2<f64>,
    /// zero-padded shape signature
    pub beta: Vec<f64>,
    /// height of the source body, for translation scaling at inference
    pub source_height: f64,
    /// path of the first-frame mesh, relative to the manifest
    pub rest_mesh: Option<PathBuf>,
    /// empty, or one ground-truth mesh path per frame
    pub gt_meshes: Vec<PathBuf>,
    /// empty, or one rigid transform per frame
    pub global_transforms: Vec<RigidTransform>,
    pub root_zeroed: bool,
}

impl MotionManifest {
    pub fn frame_count(&self) -> usize {
        self.angles.nrows()
    }

    pub fn frame_angles(&self, frame: usize) -> Vec<f64> {
        self.angles.row(frame).to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.tree.joint_count();
        if self.angles.ncols() != 3 * j {
            return Err(Error::Manifest(format!(
                "angle rows are {} wide, tree with {j} joints needs {}",
                self.angles.ncols(),
                3 * j
            )));
        }
        if self.angles.nrows() == 0 {
            return Err(Error::Manifest("no frames".into()));
        }
        if !self.angles.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("joint angles".into()));
        }
        if !self.gt_meshes.is_empty() && self.gt_meshes.len() != self.frame_count() {
            return Err(Error::Manifest(format!(
                "{} ground-truth meshes for {} frames; list must be empty or full",
                self.gt_meshes.len(),
                self.frame_count()
            )));
        }
        if !self.global_transforms.is_empty()
            && self.global_transforms.len() != self.frame_count()
        {
            return Err(Error::Manifest(format!(
                "{} transforms for {} frames; list must be empty or full",
                self.global_transforms.len(),
                self.frame_count()
            )));
        }
        for (frame, t) in self.global_transforms.iter().enumerate() {
            t.validate(frame)?;
        }
        Ok(())
    }
}

/// Zero the root joint's orientation in every frame, moving the extracted
/// rotation (about the root's rest origin) into the per-frame global
/// transform track. Ground-truth frames supplied alongside are re-expressed
/// in the zeroed frame so that applying the extracted transforms reproduces
/// the original world-space sequence.
pub fn zero_root_orientation(
    manifest: &mut MotionManifest,
    mut gt_frames: Option<&mut Vec<Vec<Vector3<f64>>>>,
) -> Result<()> {
    manifest.validate()?;
    let root = manifest.tree.root();
    let root_origin = manifest.tree.offset(root);
    let frames = manifest.frame_count();
    let had_transforms = !manifest.global_transforms.is_empty();
    let mut track = Vec::with_capacity(frames);

    for frame in 0..frames {
        let a = [
            manifest.angles[(frame, 3 * root)],
            manifest.angles[(frame, 3 * root + 1)],
            manifest.angles[(frame, 3 * root + 2)],
        ];
        let rot = euler_zyx(&a);
        // FK(root angles) = G o FK(zeroed): rotation about the root origin
        let extracted = RigidTransform {
            rotation: rot,
            translation: root_origin - rot * root_origin,
        };
        let combined = if had_transforms {
            manifest.global_transforms[frame].compose(&extracted)
        } else {
            extracted
        };
        track.push(combined);
        for k in 0..3 {
            manifest.angles[(frame, 3 * root + k)] = 0.0;
        }
        if let Some(frames_mut) = gt_frames.as_deref_mut() {
            let inv = extracted.inverse();
            for p in &mut frames_mut[frame] {
                *p = inv.apply(p);
            }
        }
    }
    manifest.global_transforms = track;
    manifest.root_zeroed = true;
    Ok(())
}

const MANIFEST_HEADER: &str = "trj_motion 1";

pub fn save_motion(path: &Path, m: &MotionManifest) -> Result<()> {
    m.validate()?;
    let mut out = String::new();
    let j = m.tree.joint_count();
    writeln!(out, "{MANIFEST_HEADER}").unwrap();
    writeln!(out, "joints {j}").unwrap();
    writeln!(out, "frames {}", m.frame_count()).unwrap();
    writeln!(out, "fps {:.16e}", m.fps).unwrap();
    writeln!(out, "height {:.16e}", m.source_height).unwrap();
    writeln!(out, "root_zeroed {}", if m.root_zeroed { 1 } else { 0 }).unwrap();
    write!(out, "beta").unwrap();
    for b in &m.beta {
        write!(out, " {b:.16e}").unwrap();
    }
    writeln!(out).unwrap();
    for joint in 0..j {
        let o = m.tree.offset(joint);
        writeln!(
            out,
            "joint {joint} {} {:.16e} {:.16e} {:.16e}",
            m.tree.parents()[joint],
            o.x,
            o.y,
            o.z
        )
        .unwrap();
    }
    for frame in 0..m.frame_count() {
        write!(out, "frame {frame}").unwrap();
        for v in m.angles.row(frame) {
            write!(out, " {v:.16e}").unwrap();
        }
        writeln!(out).unwrap();
    }
    if let Some(rest) = &m.rest_mesh {
        writeln!(out, "rest {}", rest.display()).unwrap();
    }
    for (frame, p) in m.gt_meshes.iter().enumerate() {
        writeln!(out, "gt {frame} {}", p.display()).unwrap();
    }
    for (frame, t) in m.global_transforms.iter().enumerate() {
        write!(out, "transform {frame}").unwrap();
        for r in 0..3 {
            for c in 0..3 {
                write!(out, " {:.16e}", t.rotation[(r, c)]).unwrap();
            }
        }
        for k in 0..3 {
            write!(out, " {:.16e}", t.translation[k]).unwrap();
        }
        writeln!(out).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_motion(path: &Path) -> Result<MotionManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty manifest".into()))?;
    if header.trim() != MANIFEST_HEADER {
        return Err(err(1, format!("bad header {header:?}")));
    }

    let mut joints = None;
    let mut fps = 30.0;
    let mut height = 1.0;
    let mut root_zeroed = false;
    let mut beta = Vec::new();
    let mut parents: Vec<i64> = Vec::new();
    let mut offsets: Vec<Vector3<f64>> = Vec::new();
    let mut angles: Option<Array2<f64>> = None;
    let mut rest_mesh = None;
    let mut gt_meshes: Vec<(usize, PathBuf)> = Vec::new();
    let mut transforms: Vec<(usize, RigidTransform)> = Vec::new();

    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        let floats = |rest: &[&str]| -> Result<Vec<f64>> {
            rest.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| err(lineno, format!("bad number {s:?}: {e}")))
                })
                .collect()
        };
        match key {
            "joints" => {
                joints = Some(
                    rest.first()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| err(lineno, "bad joint count".into()))?,
                )
            }
            "frames" => {
                let f = rest
                    .first()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err(lineno, "bad frame count".into()))?;

                let j = joints.ok_or_else(|| err(lineno, "frames before joints".into()))?;
                angles = Some(Array2::zeros((f, 3 * j)));
            }
            "fps" => fps = floats(&rest)?[0],
            "height" => height = floats(&rest)?[0],
            "root_zeroed" => root_zeroed = rest.first() == Some(&"1"),
            "beta" => beta = floats(&rest)?,
            "joint" => {
                let vals = rest;
                if vals.len() != 5 {
                    return Err(err(lineno, "joint record needs: index parent x y z".into()));
                }
                let idx: usize = vals[0]
                    .parse()
                    .map_err(|_| err(lineno, "bad joint index".into()))?;
                if idx != parents.len() {
                    return Err(err(lineno, format!("joint records out of order at {idx}")));
                }
                parents.push(
                    vals[1]
                        .parse()
                        .map_err(|_| err(lineno, "bad parent index".into()))?,
                );
                let o = floats(&vals[2..5])?;
                offsets.push(Vector3::new(o[0], o[1], o[2]));
            }
            "frame" => {
                let idx: usize = rest
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad frame index".into()))?;
                let arr = angles
                    .as_mut()
                    .ok_or_else(|| err(lineno, "frame before frames header".into()))?;
                if idx >= arr.nrows() {
                    return Err(err(lineno, format!("frame {idx} out of range")));
                }
                let vals = floats(&rest[1..])?;
                if vals.len() != arr.ncols() {
                    return Err(err(
                        lineno,
                        format!("frame {idx} has {} angles, expected {}", vals.len(), arr.ncols()),
                    ));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    arr[(idx, c)] = v;
                }
            }
            "rest" => rest_mesh = Some(PathBuf::from(rest.join(" "))),
            "gt" => {
                let idx: usize = rest
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad gt frame index".into()))?;
                gt_meshes.push((idx, PathBuf::from(rest[1..].join(" "))));
            }
            "transform" => {
                let vals = floats(&rest[1..])?;
                let idx: usize = rest
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad transform frame index".into()))?;
                if vals.len() != 12 {
                    return Err(err(lineno, "transform record needs 12 numbers".into()));
                }
                let rotation = Matrix3::new(
                    vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7],
                    vals[8],
                );
                let translation = Vector3::new(vals[9], vals[10], vals[11]);
                transforms.push((
                    idx,
                    RigidTransform {
                        rotation,
                        translation,
                    },
                ));
            }
            _ => {}
        }
    }

    let tree = KinematicTree::new(parents, offsets)?;
    let angles = angles.ok_or_else(|| err(0, "missing frames header".into()))?;

    gt_meshes.sort_by_key(|(i, _)| *i);
    transforms.sort_by_key(|(i, _)| *i);
    let manifest = MotionManifest {
        tree,
        fps,
        angles,
        beta,
        source_height: height,
        rest_mesh,
        gt_meshes: gt_meshes.into_iter().map(|(_, p)| p).collect(),
        global_transforms: transforms.into_iter().map(|(_, t)| t).collect(),
        root_zeroed,
    };
    manifest.validate()?;

    // referenced meshes must exist, relative to the manifest
    let base = path.parent().unwrap_or(Path::new("."));
    for p in manifest
        .gt_meshes
        .iter()
        .chain(manifest.rest_mesh.as_ref())
    {
        let full = base.join(p);
        if !full.exists() {
            return Err(Error::MissingGroundTruth(full.display().to_string()));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_joint_manifest() -> MotionManifest {
        let tree = KinematicTree::new(
            vec![-1, 0],
            vec![Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.5, 0.0)],
        )
        .unwrap();
        MotionManifest {
            tree,
            fps: 30.0,
            angles: array![
                [0.1, 0.0, -0.2, 0.0, 0.3, 0.0],
                [0.2, 0.1, -0.1, 0.0, 0.2, 0.1],
                [0.3, 0.2, 0.0, 0.0, 0.1, 0.2],
            ],
            beta: vec![1.0; 16],
            source_height: 1.5,
            rest_mesh: None,
            gt_meshes: vec![],
            global_transforms: vec![],
            root_zeroed: false,
        }
    }

    #[test]
    fn two_joint_three_frame_shapes() {
        let m = two_joint_manifest();
        assert_eq!(m.angles.dim(), (3, 6));
        m.validate().unwrap();
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("motion.txt");
        let mut m = two_joint_manifest();
        m.global_transforms = (0..3)
            .map(|i| RigidTransform {
                rotation: euler_zyx(&[0.0, 0.1 * i as f64, 0.0]),
                translation: Vector3::new(i as f64, 0.0, 0.0),
            })
            .collect();
        save_motion(&path, &m).unwrap();
        let loaded = load_motion(&path).unwrap();
        assert_eq!(m, loaded);
    }

    #[test]
    fn missing_gt_mesh_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("motion.txt");
        let mut m = two_joint_manifest();
        m.gt_meshes = vec![
            PathBuf::from("gt/a.obj"),
            PathBuf::from("gt/b.obj"),
            PathBuf::from("gt/c.obj"),
        ];
        save_motion(&path, &m).unwrap();
        match load_motion(&path) {
            Err(Error::MissingGroundTruth(p)) => assert!(p.contains("a.obj")),
            other => panic!("expected missing-ground-truth error, got {other:?}"),
        }
    }

    #[test]
    fn joint_count_mismatch_rejected() {
        let mut m = two_joint_manifest();
        m.angles = Array2::zeros((3, 9));
        assert!(m.validate().is_err());
    }

    #[test]
    fn zeroing_already_zero_root_extracts_identity() {
        let mut m = two_joint_manifest();
        for f in 0..3 {
            for k in 0..3 {
                m.angles[(f, k)] = 0.0;
            }
        }
        let before = m.angles.clone();
        zero_root_orientation(&mut m, None).unwrap();
        assert_eq!(m.angles, before);
        for t in &m.global_transforms {
            assert!((t.rotation - Matrix3::identity()).norm() < 1e-15);
            assert!(t.translation.norm() < 1e-15);
        }
        assert!(m.root_zeroed);
    }

    #[test]
    fn constant_root_yaw_moves_to_transform_track() {
        let mut m = two_joint_manifest();
        let yaw = std::f64::consts::FRAC_PI_2;
        for f in 0..3 {
            m.angles[(f, 0)] = 0.0;
            m.angles[(f, 1)] = 0.0;
            m.angles[(f, 2)] = yaw;
        }
        zero_root_orientation(&mut m, None).unwrap();
        for f in 0..3 {
            for k in 0..3 {
                assert_eq!(m.angles[(f, k)], 0.0);
            }
            let expect = euler_zyx(&[0.0, 0.0, yaw]);
            assert!((m.global_transforms[f].rotation - expect).norm() < 1e-12);
        }
    }

    /// Forward-kinematics oracle: zeroing then applying the extracted
    /// transform must reproduce the original joint world frames.
    #[test]
    fn zeroing_round_trips_through_fk() {
        let m0 = two_joint_manifest();
        let mut m = m0.clone();
        zero_root_orientation(&mut m, None).unwrap();
        for frame in 0..3 {
            let original = m0.tree.forward_kinematics(&m0.frame_angles(frame)).unwrap();
            let zeroed = m.tree.forward_kinematics(&m.frame_angles(frame)).unwrap();
            let g = &m.global_transforms[frame];
            for j in 0..m0.tree.joint_count() {
                let rot = g.rotation * zeroed[j].0;
                let origin = g.apply(&zeroed[j].1);
                assert!((rot - original[j].0).norm() < 1e-12);
                assert!((origin - original[j].1).norm() < 1e-12);
            }
        }
    }
}
