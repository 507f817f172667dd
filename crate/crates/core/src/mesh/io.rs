//! ASCII `.tmesh` format.
//!
//! ```text
//! tmesh 2
//! <nv> <nt> <nf>
//! x y                    (nv lines)
//! i j k                  (nt lines, 0-based)
//! field <name>           (nf blocks of nt values)
//! v
//! ```
//!
//! Reals are written with 17 significant digits so that parse → write is
//! byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{AmberError, Result};
use crate::geometry::Point2;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct TmeshFile {
    pub mesh: TriMesh,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl TmeshFile {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

fn fmt_real(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

pub fn write_tmesh(mesh: &TriMesh, fields: &[(&str, &[f64])]) -> Result<String> {
    for (name, values) in fields {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(AmberError::InvalidInput(format!("invalid field name {name:?}")));
        }
        if values.len() != mesh.n_triangles() {
            return Err(AmberError::Shape(format!(
                "field {name} has {} values for {} elements",
                values.len(),
                mesh.n_triangles()
            )));
        }
    }
    let mut out = String::with_capacity(64 * (mesh.n_vertices() + mesh.n_triangles()));
    writeln!(out, "tmesh 2").unwrap();
    writeln!(out, "{} {} {}", mesh.n_vertices(), mesh.n_triangles(), fields.len()).unwrap();
    for p in mesh.vertices() {
        fmt_real(&mut out, p.x);
        out.push(' ');
        fmt_real(&mut out, p.y);
        out.push('\n');
    }
    for t in mesh.triangles() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for (name, values) in fields {
        writeln!(out, "field {name}").unwrap();
        for &v in *values {
            fmt_real(&mut out, v);
            out.push('\n');
        }
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(AmberError::Parse { line: self.line + 1, msg: "unexpected end of file".into() }),
        }
    }

    fn err(&self, msg: impl Into<String>) -> AmberError {
        AmberError::Parse { line: self.line, msg: msg.into() }
    }
}

fn parse_fields<T: std::str::FromStr>(lines: &mut Lines<'_>, n: usize) -> Result<Vec<T>> {
    let l = lines.next()?;
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() != n {
        return Err(lines.err(format!("expected {n} values, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|s| s.parse::<T>().map_err(|_| lines.err(format!("cannot parse {s:?}"))))
        .collect()
}

pub fn parse_tmesh(text: &str) -> Result<TmeshFile> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    if lines.next()?.trim() != "tmesh 2" {
        return Err(lines.err("missing `tmesh 2` header"));
    }
    let counts: Vec<usize> = parse_fields(&mut lines, 3)?;
    let (nv, nt, nf) = (counts[0], counts[1], counts[2]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let xy: Vec<f64> = parse_fields(&mut lines, 2)?;
        vertices.push(Point2::new(xy[0], xy[1]));
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let t: Vec<usize> = parse_fields(&mut lines, 3)?;
        triangles.push([t[0], t[1], t[2]]);
    }
    let mut fields = Vec::with_capacity(nf);
    for _ in 0..nf {
        let header = lines.next()?;
        let name = header
            .strip_prefix("field ")
            .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
            .ok_or_else(|| lines.err("expected `field <name>`"))?
            .to_string();
        let mut values = Vec::with_capacity(nt);
        for _ in 0..nt {
            let v: Vec<f64> = parse_fields(&mut lines, 1)?;
            values.push(v[0]);
        }
        fields.push((name, values));
    }
    let mesh = TriMesh::new(vertices, triangles)?;
    Ok(TmeshFile { mesh, fields })
}

pub fn read_tmesh(path: impl AsRef<Path>) -> Result<TmeshFile> {
    parse_tmesh(&std::fs::read_to_string(path)?)
}
