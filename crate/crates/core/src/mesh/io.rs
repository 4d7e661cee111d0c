//! MSH-lite: a small ASCII format with `$Nodes`, `$Tets` and `$BoundaryTris`
//! sections. Ids and node references are 1-based in the file.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryTri, Mesh, MeshError, Tet};
use crate::Vec3;

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), MeshError> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(MeshError::Parse { line: self.last + 1, msg: "unexpected end of file".into() })
    }

    fn expect(&mut self, header: &str) -> Result<(), MeshError> {
        let (line, l) = self.next_line()?;
        if l != header {
            return Err(MeshError::Parse { line, msg: format!("expected `{header}`, found `{l}`") });
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize, MeshError> {
        let (line, l) = self.next_line()?;
        l.parse().map_err(|_| MeshError::Parse { line, msg: format!("expected a count, found `{l}`") })
    }

    /// Reads one record line and checks its leading id.
    fn record(&mut self, id: usize, fields: usize) -> Result<(usize, Vec<&'a str>), MeshError> {
        let (line, l) = self.next_line()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != fields + 1 {
            return Err(MeshError::Parse {
                line,
                msg: format!("expected {} fields, found {}", fields + 1, parts.len()),
            });
        }
        if parts[0].parse::<usize>().ok() != Some(id) {
            return Err(MeshError::Parse { line, msg: format!("expected id {id}, found `{}`", parts[0]) });
        }
        Ok((line, parts[1..].to_vec()))
    }
}

fn parse_index(line: usize, s: &str, n_nodes: usize) -> Result<usize, MeshError> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 && v <= n_nodes => Ok(v - 1),
        _ => Err(MeshError::Parse { line, msg: format!("invalid node reference `{s}`") }),
    }
}

fn parse_tag(line: usize, s: &str) -> Result<i32, MeshError> {
    s.parse().map_err(|_| MeshError::Parse { line, msg: format!("invalid tag `{s}`") })
}

/// Parse MSH-lite text and validate the resulting mesh.
pub fn parse_msh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };

    lines.expect("$Nodes")?;
    let n = lines.count()?;
    let mut nodes = Vec::with_capacity(n);
    for id in 1..=n {
        let (line, f) = lines.record(id, 3)?;
        let mut xyz = [0.0; 3];
        for (k, s) in f.iter().enumerate() {
            xyz[k] = s
                .parse()
                .map_err(|_| MeshError::Parse { line, msg: format!("invalid coordinate `{s}`") })?;
        }
        nodes.push(Vec3::from(xyz));
    }

    lines.expect("$Tets")?;
    let m = lines.count()?;
    let mut tets = Vec::with_capacity(m);
    for id in 1..=m {
        let (line, f) = lines.record(id, 5)?;
        let mut v = [0usize; 4];
        for k in 0..4 {
            v[k] = parse_index(line, f[k], n)?;
        }
        tets.push(Tet { nodes: v, region: parse_tag(line, f[4])? });
    }

    lines.expect("$BoundaryTris")?;
    let k = lines.count()?;
    let mut boundary = Vec::with_capacity(k);
    for id in 1..=k {
        let (line, f) = lines.record(id, 4)?;
        let mut v = [0usize; 3];
        for j in 0..3 {
            v[j] = parse_index(line, f[j], n)?;
        }
        boundary.push(BoundaryTri { nodes: v, tag: parse_tag(line, f[3])? });
    }

    Mesh::new(nodes, tets, boundary)
}

/// Serialise with 17 significant digits, so coordinates round-trip exactly.
pub fn write_msh_string(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(64 * (mesh.n_nodes() + mesh.n_tets() + mesh.boundary().len()));
    let _ = writeln!(s, "$Nodes\n{}", mesh.n_nodes());
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(s, "{} {:.16e} {:.16e} {:.16e}", i + 1, p.x, p.y, p.z);
    }
    let _ = writeln!(s, "$Tets\n{}", mesh.n_tets());
    for (i, t) in mesh.tets().iter().enumerate() {
        let v = t.nodes;
        let _ = writeln!(s, "{} {} {} {} {} {}", i + 1, v[0] + 1, v[1] + 1, v[2] + 1, v[3] + 1, t.region);
    }
    let _ = writeln!(s, "$BoundaryTris\n{}", mesh.boundary().len());
    for (i, b) in mesh.boundary().iter().enumerate() {
        let v = b.nodes;
        let _ = writeln!(s, "{} {} {} {} {}", i + 1, v[0] + 1, v[1] + 1, v[2] + 1, b.tag);
    }
    s
}

pub fn write_msh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, write_msh_string(mesh))?;
    Ok(())
}
