//! Plain-text mesh format.
//!
//! ```text
//! polymesh 2
//! <nv> <nc>
//! x y                      (nv lines)
//! k i1 ... ik [cx cy]      (nc lines, CCW 0-based loops, optional star center)
//! ```
//!
//! Faces are always derived on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{build_mesh, MeshError, Point, PolytopalMesh};

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse '{tok}'")))
}

/// Parses a mesh from the text format and validates it with [`build_mesh`].
pub fn parse_mesh(text: &str) -> Result<PolytopalMesh, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 || head[0] != "polymesh" {
        return Err(parse_err(ln, "expected 'polymesh 2'"));
    }
    if head[1] != "2" {
        return Err(parse_err(ln, format!("unsupported dimension {}", head[1])));
    }

    let (ln, counts) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing counts line"))?;
    let counts: Vec<&str> = counts.split_whitespace().collect();
    if counts.len() != 2 {
        return Err(parse_err(ln, "expected '<nv> <nc>'"));
    }
    let nv: usize = parse_num(counts[0], ln)?;
    let nc: usize = parse_num(counts[1], ln)?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(3 + k, format!("expected {nv} vertices, found {k}")))?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 2 {
            return Err(parse_err(ln, "expected 'x y'"));
        }
        vertices.push(Point::new(parse_num(tok[0], ln)?, parse_num(tok[1], ln)?));
    }

    let mut loops = Vec::with_capacity(nc);
    let mut centers = Vec::with_capacity(nc);
    let mut all_centers = true;
    for k in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(3 + nv + k, format!("expected {nc} cells, found {k}")))?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.is_empty() {
            return Err(parse_err(ln, "empty cell line"));
        }
        let len: usize = parse_num(tok[0], ln)?;
        if len < 3 {
            return Err(parse_err(ln, format!("cell loop of {len} vertices")));
        }
        let lp = tok[1..]
            .iter()
            .take(len)
            .map(|t| parse_num::<usize>(t, ln))
            .collect::<Result<Vec<_>, _>>()?;
        if lp.len() != len {
            return Err(parse_err(ln, format!("expected {len} vertex indices")));
        }
        if let Some(&bad) = lp.iter().find(|&&v| v >= nv) {
            return Err(parse_err(ln, format!("vertex index {bad} out of range")));
        }
        match tok.len() - 1 - len {
            0 => all_centers = false,
            2 => centers.push(Point::new(
                parse_num(tok[len + 1], ln)?,
                parse_num(tok[len + 2], ln)?,
            )),
            _ => return Err(parse_err(ln, "trailing tokens after cell loop")),
        }
        loops.push(lp);
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(parse_err(ln, "content after the declared cells"));
    }

    let centers = if all_centers && !centers.is_empty() {
        Some(centers.as_slice())
    } else if centers.is_empty() {
        None
    } else {
        return Err(parse_err(
            0,
            "star centers must be given for all cells or none",
        ));
    };
    build_mesh(vertices, loops, centers)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<PolytopalMesh, MeshError> {
    parse_mesh(&fs::read_to_string(path)?)
}

/// Writes the mesh, including star centers, with 17 significant digits.
pub fn write_mesh_to(mesh: &PolytopalMesh, out: &mut impl Write) -> Result<(), MeshError> {
    writeln!(out, "polymesh 2")?;
    writeln!(out, "{} {}", mesh.vertices.len(), mesh.cells.len())?;
    for v in &mesh.vertices {
        writeln!(out, "{:.16e} {:.16e}", v.x, v.y)?;
    }
    for c in &mesh.cells {
        write!(out, "{}", c.vertices.len())?;
        for v in &c.vertices {
            write!(out, " {v}")?;
        }
        writeln!(out, " {:.16e} {:.16e}", c.center.x, c.center.y)?;
    }
    Ok(())
}

pub fn write_mesh(mesh: &PolytopalMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut buf = Vec::new();
    write_mesh_to(mesh, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
