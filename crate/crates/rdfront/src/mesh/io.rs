//! ASCII `rdmesh` reader and writer.
//!
//! Format, whitespace separated, `#` starts a comment anywhere on a line:
//!
//! ```text
//! rdmesh 1
//! nodes N
//! x y z            # N lines, decimal floating point (mm)
//! tets M
//! a b c d          # M lines, zero-based node indices
//! bfaces K         # optional section
//! i j k tag        # K lines
//! ```
//!
//! Coordinates are written with the shortest representation that parses back
//! to the same bits, so a save/load round trip is exact.

use super::{BoundaryFace, Mesh};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("rdmesh 1\n");
    let _ = writeln!(out, "nodes {}", mesh.node_count());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "tets {}", mesh.element_count());
    for t in mesh.tets() {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    if !mesh.boundary_faces().is_empty() {
        let _ = writeln!(out, "bfaces {}", mesh.boundary_faces().len());
        for f in mesh.boundary_faces() {
            let _ = writeln!(out, "{} {} {} {}", f.nodes[0], f.nodes[1], f.nodes[2], f.tag);
        }
    }
    out
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    load_mesh_from_str(&text)
}

pub fn load_mesh_from_str(text: &str) -> Result<Mesh> {
    let mut lines = Tokenizer::new(text);

    let (line, header) = lines.next_tokens()?.ok_or(Error::Parse {
        line: 1,
        msg: "empty file, expected `rdmesh 1` header".into(),
    })?;
    if header != ["rdmesh", "1"] {
        return Err(Error::Parse {
            line,
            msg: format!("expected header `rdmesh 1`, got `{}`", header.join(" ")),
        });
    }

    let n_nodes = lines.expect_section("nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (line, toks) = lines.expect_row("node coordinates")?;
        if toks.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `x y z`, got {} fields", toks.len()),
            });
        }
        let mut p = [0.0; 3];
        for (k, t) in toks.iter().enumerate() {
            p[k] = parse_f64(t, line)?;
        }
        nodes.push(p);
    }

    let n_tets = lines.expect_section("tets")?;
    let mut tets = Vec::with_capacity(n_tets);
    let mut tet_lines = Vec::with_capacity(n_tets);
    for _ in 0..n_tets {
        let (line, toks) = lines.expect_row("tet connectivity")?;
        if toks.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 node indices, got {}", toks.len()),
            });
        }
        let mut t = [0usize; 4];
        for (k, tok) in toks.iter().enumerate() {
            t[k] = parse_usize(tok, line)?;
        }
        tets.push(t);
        tet_lines.push(line);
    }

    let mut bfaces = Vec::new();
    let mut face_lines = Vec::new();
    if let Some((line, toks)) = lines.next_tokens()? {
        if toks.first().map(String::as_str) != Some("bfaces") || toks.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `bfaces K` or end of file, got `{}`", toks.join(" ")),
            });
        }
        let k: usize = parse_usize(&toks[1], line)?;
        for _ in 0..k {
            let (line, toks) = lines.expect_row("boundary face")?;
            if toks.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `i j k tag`, got {} fields", toks.len()),
                });
            }
            let f = BoundaryFace {
                nodes: [
                    parse_usize(&toks[0], line)?,
                    parse_usize(&toks[1], line)?,
                    parse_usize(&toks[2], line)?,
                ],
                tag: toks[3].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("invalid face tag `{}`", toks[3]),
                })?,
            };
            bfaces.push(f);
            face_lines.push(line);
        }
        if let Some((line, toks)) = lines.next_tokens()? {
            return Err(Error::Parse {
                line,
                msg: format!("unexpected trailing content `{}`", toks.join(" ")),
            });
        }
    }

    Mesh::from_parts_with_lines(nodes, tets, bfaces, Some(&tet_lines), Some(&face_lines))
}

struct Tokenizer<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Tokenizer<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate() }
    }

    /// Next non-empty line as (1-based line number, tokens), comments removed.
    fn next_tokens(&mut self) -> Result<Option<(usize, Vec<String>)>> {
        for (idx, raw) in self.lines.by_ref() {
            let content = raw.split('#').next().unwrap_or("");
            let toks: Vec<String> = content.split_whitespace().map(str::to_owned).collect();
            if !toks.is_empty() {
                return Ok(Some((idx + 1, toks)));
            }
        }
        Ok(None)
    }

    fn expect_row(&mut self, what: &str) -> Result<(usize, Vec<String>)> {
        self.next_tokens()?.ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn expect_section(&mut self, name: &str) -> Result<usize> {
        let (line, toks) = self.expect_row(&format!("`{name} N`"))?;
        if toks.len() != 2 || toks[0] != name {
            return Err(Error::Parse {
                line,
                msg: format!("expected `{name} N`, got `{}`", toks.join(" ")),
            });
        }
        parse_usize(&toks[1], line)
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number `{tok}`"),
    })
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid index `{tok}`"),
    })
}
