//! Minimal Wavefront OBJ reader/writer: `v` and `f` statements only.
//! Polygons are fan-triangulated; normals, texture coordinates, groups and
//! material statements are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{HandMesh, Handedness, Vec3};
use crate::error::{Error, Result};

pub fn parse_obj(src: &str, handedness: Handedness) -> Result<HandMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("vertex needs 3 coordinates, got {}", coords.len()),
                    });
                }
                let mut xyz = [0.0; 3];
                for (slot, tok) in xyz.iter_mut().zip(&coords) {
                    *slot = tok.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad coordinate '{tok}'"),
                    })?;
                    if !slot.is_finite() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("non-finite coordinate '{tok}'"),
                        });
                    }
                }
                vertices.push(Vec3::from_array(xyz));
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad face index '{tok}'"),
                    })?;
                    let resolved = match i {
                        0 => {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: "face index 0 is invalid (OBJ indices are 1-based)".into(),
                            })
                        }
                        i if i > 0 => i - 1,
                        // negative indices count back from the latest vertex
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved > u32::MAX as i64 {
                        return Err(Error::Validation(format!(
                            "line {line_no}: face index {i} out of range"
                        )));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("face needs at least 3 vertices, got {}", poly.len()),
                    });
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }

    HandMesh::new(vertices, faces, handedness)
}

pub fn load_obj(path: &Path, handedness: Handedness) -> Result<HandMesh> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&src, handedness)
}

pub fn write_obj_string(mesh: &HandMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.faces.len() * 16);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &HandMesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_obj_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", Handedness::Right).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n";
        let m = parse_obj(src, Handedness::Right).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn zero_index_is_parse_error_with_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", Handedness::Right).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index_is_validation_error() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", Handedness::Right).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_vertex_reports_line() {
        let err = parse_obj("# header\nv 0 zero 0\n", Handedness::Right).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn negative_indices_and_comments() {
        let src = "v 0 0 0 # origin\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3 -2 -1\n";
        let m = parse_obj(src, Handedness::Left).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.handedness, Handedness::Left);
    }
}
