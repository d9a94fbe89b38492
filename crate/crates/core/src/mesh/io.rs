//! The `quadmesh v1` text format:
//!
//! ```text
//! quadmesh v1
//! <vertex count>
//! x y            (one line per vertex)
//! <quad count>
//! a b c d        (0-based, counterclockwise)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::QuadMesh;
use crate::error::{Error, Result};

const HEADER: &str = "quadmesh v1";

pub fn save(mesh: &QuadMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_text(mesh))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<QuadMesh> {
    let path = path.as_ref();
    parse(&fs::read_to_string(path)?, path)
}

pub(crate) fn to_text(mesh: &QuadMesh) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "{}", mesh.n_vertices()).unwrap();
    for [x, y] in mesh.vertices() {
        // shortest round-trip representation
        writeln!(out, "{x:?} {y:?}").unwrap();
    }
    writeln!(out, "{}", mesh.n_elements()).unwrap();
    for [a, b, c, d] in mesh.quads() {
        writeln!(out, "{a} {b} {c} {d}").unwrap();
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: PathBuf,
    last: usize,
}

impl<'a> Lines<'a> {
    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                self.last = i + 1;
                return Ok((i + 1, line));
            }
        }
        Err(self.error(self.last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (no, line) = self.next(what)?;
        line.parse()
            .map_err(|_| self.error(no, format!("expected {what}, found {line:?}")))
    }

    fn fields<T: std::str::FromStr, const N: usize>(&mut self, what: &str) -> Result<[T; N]> {
        let (no, line) = self.next(what)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != N {
            return Err(self.error(no, format!("expected {N} values for {what}, found {}", parts.len())));
        }
        let mut values = Vec::with_capacity(N);
        for p in parts {
            values.push(p.parse().map_err(|_| self.error(no, format!("cannot parse {p:?} in {what}")))?);
        }
        Ok(values.try_into().unwrap_or_else(|_| unreachable!()))
    }
}

pub(crate) fn parse(text: &str, path: &Path) -> Result<QuadMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path: path.to_path_buf(),
        last: 0,
    };
    let (no, header) = lines.next("header")?;
    if header != HEADER {
        return Err(lines.error(no, format!("expected header {HEADER:?}, found {header:?}")));
    }
    let nv = lines.count("vertex count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push(lines.fields::<f64, 2>("a vertex")?);
    }
    let nq = lines.count("quad count")?;
    let mut quads = Vec::with_capacity(nq);
    for _ in 0..nq {
        quads.push(lines.fields::<usize, 4>("a quad")?);
    }
    if let Ok((no, extra)) = lines.next("") {
        return Err(lines.error(no, format!("trailing content {extra:?}")));
    }
    QuadMesh::new(vertices, quads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{perturbed_mesh, uniform_rect_mesh, Rect};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.txt");
        for mesh in [uniform_rect_mesh(3, Rect::UNIT).unwrap(), perturbed_mesh(8, 2, 0.25).unwrap()] {
            save(&mesh, &path).unwrap();
            assert_eq!(load(&path).unwrap(), mesh);
        }
    }

    #[test]
    fn uniform_two_by_two_layout() {
        let text = to_text(&uniform_rect_mesh(2, Rect::UNIT).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "9");
        assert_eq!(lines[11], "4");
        assert_eq!(lines.len(), 1 + 1 + 9 + 1 + 4);
    }

    fn parse_err_line(text: &str) -> usize {
        match parse(text, Path::new("t")) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_input_reports_the_line() {
        let good = "quadmesh v1\n4\n0 0\n1 0\n1 1\n0 1\n1\n0 1 2 3\n";
        assert!(parse(good, Path::new("t")).is_ok());
        assert_eq!(parse_err_line(&good.replace("0 1 2 3", "0 1 2")), 8);
        assert_eq!(parse_err_line(&good.replace("1 1\n", "1 x\n")), 5);
        assert_eq!(parse_err_line(&good.replace("quadmesh v1", "quadmesh v2")), 1);
        assert_eq!(parse_err_line("quadmesh v1\n4\n0 0\n"), 4);
        assert_eq!(parse_err_line(&format!("{good}5\n")), 9);
    }

    #[test]
    fn clockwise_quad_fails_validation() {
        let cw = "quadmesh v1\n4\n0 0\n1 0\n1 1\n0 1\n1\n0 3 2 1\n";
        assert!(matches!(parse(cw, Path::new("t")), Err(Error::InvalidMesh(_))));
    }
}
