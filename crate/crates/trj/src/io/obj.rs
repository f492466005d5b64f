//! ASCII OBJ meshes, triangles only. Vertices are emitted with 17
//! significant digits so a save/load round trip is bit-identical.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use nalgebra::Vector3;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let (vertices, faces) = parse_obj(path)?;
    TriMesh::new(vertices, faces)
}

/// Load an OBJ expected to share connectivity with `reference`, returning
/// just the positions. Used for ground-truth and predicted frame sequences.
pub fn load_obj_positions(path: &Path, reference: &TriMesh) -> Result<Vec<Vector3<f64>>> {
    let (vertices, faces) = parse_obj(path)?;
    if vertices.len() != reference.vertex_count() || faces != reference.faces() {
        return Err(Error::InvalidMesh(format!(
            "{}: connectivity differs from the reference mesh",
            path.display()
        )));
    }
    Ok(vertices)
}

fn parse_obj(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno,
            msg,
        };
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err("vertex needs 3 coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|e| parse_err(format!("bad coordinate {tok:?}: {e}")))?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(parse_err(format!(
                        "face has {} corners; only triangles are supported",
                        corners.len()
                    )));
                }
                let mut idx = [0usize; 3];
                for (k, corner) in corners.iter().enumerate() {
                    let vtx = corner.split('/').next().unwrap_or(corner);
                    let one_based: i64 = vtx
                        .parse()
                        .map_err(|e| parse_err(format!("bad face index {vtx:?}: {e}")))?;
                    if one_based < 1 {
                        return Err(parse_err(format!("face index {one_based} out of range")));
                    }
                    idx[k] = (one_based - 1) as usize;
                }
                faces.push(idx);
            }
            // comments, normals, texcoords, groups: ignored
            _ => {}
        }
    }
    Ok((vertices, faces))
}

pub fn save_obj(path: &Path, vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in vertices {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    save_obj(path, mesh.vertices(), mesh.faces())
}
