//! Line-oriented text format for multibody contact problems.
//!
//! ```text
//! # comment
//! body <id> lambda <value> mu <value> omega <zero | const <c> | rational <c>>
//! node <id> <x> <y>
//! element <id> <n1> <n2> <n3>
//! bedge <n1> <n2> <tag>
//! pair <unilateral|ideal> <body_a> <tagA> <body_b> <tagB>
//! traction <tag> <tx> <ty>
//! bodyforce <body> <fx> <fy>
//! ```
//!
//! `node`, `element`, and `bedge` lines attach to the most recent `body`
//! line; node and element ids must be dense and in order (0, 1, 2, ...).
//! Floats are written with Rust's shortest-roundtrip formatting, so
//! save -> load reproduces every coordinate bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::material::{MaterialModel, OmegaFn};
use crate::mesh::{Body, BodyMesh, BoundaryEdge, MeshError, MultiBodyProblem, PairKind, PairSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn perr(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

fn take<'a, T: std::str::FromStr>(
    tokens: &mut impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<T, IoError> {
    let tok = tokens
        .next()
        .ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("cannot parse {what} from '{tok}'")))
}

/// Loads and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<MultiBodyProblem, IoError> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

/// Parses and validates problem text (the file-free core of `load_problem`).
pub fn parse_problem(text: &str) -> Result<MultiBodyProblem, IoError> {
    struct PendingPair {
        line: usize,
        kind: PairKind,
        id_a: usize,
        tag_a: String,
        id_b: usize,
        tag_b: String,
    }
    let mut bodies: Vec<Body> = Vec::new();
    let mut pending_pairs: Vec<PendingPair> = Vec::new();
    let mut tractions: Vec<(String, [f64; 2])> = Vec::new();
    let mut pending_forces: Vec<(usize, usize, [f64; 2])> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tok = content.split_whitespace();
        let keyword = tok.next().unwrap();
        match keyword {
            "body" => {
                let id: usize = take(&mut tok, line, "body id")?;
                if id == 0 {
                    return Err(perr(line, "body ids are 1-based"));
                }
                if bodies.iter().any(|b| b.mesh.body_id == id) {
                    return Err(perr(line, format!("body {id} declared twice")));
                }
                let kw: String = take(&mut tok, line, "keyword 'lambda'")?;
                if kw != "lambda" {
                    return Err(perr(line, format!("expected 'lambda', got '{kw}'")));
                }
                let lambda: f64 = take(&mut tok, line, "lambda value")?;
                let kw: String = take(&mut tok, line, "keyword 'mu'")?;
                if kw != "mu" {
                    return Err(perr(line, format!("expected 'mu', got '{kw}'")));
                }
                let mu: f64 = take(&mut tok, line, "mu value")?;
                let kw: String = take(&mut tok, line, "keyword 'omega'")?;
                if kw != "omega" {
                    return Err(perr(line, format!("expected 'omega', got '{kw}'")));
                }
                let name: String = take(&mut tok, line, "omega family")?;
                let omega = parse_omega_tokens(&name, &mut tok, line)?;
                bodies.push(Body {
                    mesh: BodyMesh {
                        body_id: id,
                        nodes: Vec::new(),
                        elements: Vec::new(),
                        boundary_edges: Vec::new(),
                    },
                    material: MaterialModel { lambda, mu, omega },
                    body_force: [0.0, 0.0],
                });
            }
            "node" | "element" | "bedge" => {
                let body = bodies
                    .last_mut()
                    .ok_or_else(|| perr(line, format!("'{keyword}' before any 'body' line")))?;
                match keyword {
                    "node" => {
                        let id: usize = take(&mut tok, line, "node id")?;
                        if id != body.mesh.nodes.len() {
                            return Err(perr(
                                line,
                                format!("node ids must be dense: expected {}, got {id}", body.mesh.nodes.len()),
                            ));
                        }
                        let x: f64 = take(&mut tok, line, "x coordinate")?;
                        let y: f64 = take(&mut tok, line, "y coordinate")?;
                        body.mesh.nodes.push([x, y]);
                    }
                    "element" => {
                        let id: usize = take(&mut tok, line, "element id")?;
                        if id != body.mesh.elements.len() {
                            return Err(perr(
                                line,
                                format!(
                                    "element ids must be dense: expected {}, got {id}",
                                    body.mesh.elements.len()
                                ),
                            ));
                        }
                        let a: usize = take(&mut tok, line, "first node")?;
                        let b: usize = take(&mut tok, line, "second node")?;
                        let c: usize = take(&mut tok, line, "third node")?;
                        body.mesh.elements.push([a, b, c]);
                    }
                    _ => {
                        let a: usize = take(&mut tok, line, "first node")?;
                        let b: usize = take(&mut tok, line, "second node")?;
                        let tag: String = take(&mut tok, line, "tag")?;
                        body.mesh.boundary_edges.push(BoundaryEdge {
                            nodes: [a, b],
                            tag,
                        });
                    }
                }
            }
            "pair" => {
                let kind_s: String = take(&mut tok, line, "pair kind")?;
                let kind = match kind_s.as_str() {
                    "unilateral" => PairKind::Unilateral,
                    "ideal" => PairKind::Ideal,
                    other => {
                        return Err(perr(
                            line,
                            format!("pair kind must be 'unilateral' or 'ideal', got '{other}'"),
                        ))
                    }
                };
                pending_pairs.push(PendingPair {
                    line,
                    kind,
                    id_a: take(&mut tok, line, "body a")?,
                    tag_a: take(&mut tok, line, "tag a")?,
                    id_b: take(&mut tok, line, "body b")?,
                    tag_b: take(&mut tok, line, "tag b")?,
                });
            }
            "traction" => {
                let tag: String = take(&mut tok, line, "tag")?;
                let tx: f64 = take(&mut tok, line, "tx")?;
                let ty: f64 = take(&mut tok, line, "ty")?;
                tractions.push((tag, [tx, ty]));
            }
            "bodyforce" => {
                let id: usize = take(&mut tok, line, "body id")?;
                let fx: f64 = take(&mut tok, line, "fx")?;
                let fy: f64 = take(&mut tok, line, "fy")?;
                pending_forces.push((line, id, [fx, fy]));
            }
            other => return Err(perr(line, format!("unknown keyword '{other}'"))),
        }
        if let Some(extra) = tok.next() {
            return Err(perr(line, format!("unexpected trailing token '{extra}'")));
        }
    }

    let ids: Vec<usize> = bodies.iter().map(|b| b.mesh.body_id).collect();
    let body_index = |id: usize, line: usize| -> Result<usize, IoError> {
        ids.iter()
            .position(|&b| b == id)
            .ok_or_else(|| perr(line, format!("unknown body id {id}")))
    };
    let mut pair_specs = Vec::with_capacity(pending_pairs.len());
    for p in &pending_pairs {
        pair_specs.push(PairSpec {
            kind: p.kind,
            body_a: body_index(p.id_a, p.line)?,
            tag_a: p.tag_a.clone(),
            body_b: body_index(p.id_b, p.line)?,
            tag_b: p.tag_b.clone(),
        });
    }
    for (line, id, f) in &pending_forces {
        let i = body_index(*id, *line)?;
        bodies[i].body_force = *f;
    }

    let problem = MultiBodyProblem {
        bodies,
        pair_specs,
        tractions,
    };
    problem.validate()?;
    Ok(problem)
}

fn parse_omega_tokens<'a>(
    name: &str,
    tok: &mut impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<OmegaFn, IoError> {
    match name {
        "zero" => Ok(OmegaFn::Zero),
        "const" => {
            let c: f64 = take(tok, line, "omega const parameter")?;
            if !(0.0..1.0).contains(&c) {
                return Err(perr(line, format!("omega const needs 0 <= c < 1, got {c}")));
            }
            Ok(OmegaFn::Const(c))
        }
        "rational" => {
            let c: f64 = take(tok, line, "omega rational parameter")?;
            if !(c > 0.0 && c < 1.0) {
                return Err(perr(line, format!("omega rational needs 0 < c < 1, got {c}")));
            }
            Ok(OmegaFn::Rational(c))
        }
        other => Err(perr(
            line,
            format!("omega family must be zero, const, or rational, got '{other}'"),
        )),
    }
}

/// Serializes a problem to the text format (inverse of `parse_problem`).
pub fn format_problem(problem: &MultiBodyProblem) -> String {
    let mut out = String::new();
    for body in &problem.bodies {
        let m = &body.material;
        writeln!(
            out,
            "body {} lambda {} mu {} omega {}",
            body.mesh.body_id, m.lambda, m.mu, m.omega
        )
        .unwrap();
        for (i, p) in body.mesh.nodes.iter().enumerate() {
            writeln!(out, "node {i} {} {}", p[0], p[1]).unwrap();
        }
        for (i, el) in body.mesh.elements.iter().enumerate() {
            writeln!(out, "element {i} {} {} {}", el[0], el[1], el[2]).unwrap();
        }
        for be in &body.mesh.boundary_edges {
            writeln!(out, "bedge {} {} {}", be.nodes[0], be.nodes[1], be.tag).unwrap();
        }
    }
    for p in &problem.pair_specs {
        writeln!(
            out,
            "pair {} {} {} {} {}",
            p.kind,
            problem.bodies[p.body_a].mesh.body_id,
            p.tag_a,
            problem.bodies[p.body_b].mesh.body_id,
            p.tag_b
        )
        .unwrap();
    }
    for (tag, t) in &problem.tractions {
        writeln!(out, "traction {tag} {} {}", t[0], t[1]).unwrap();
    }
    for body in &problem.bodies {
        let f = body.body_force;
        if f != [0.0, 0.0] {
            writeln!(out, "bodyforce {} {} {}", body.mesh.body_id, f[0], f[1]).unwrap();
        }
    }
    out
}

pub fn save_problem(path: impl AsRef<Path>, problem: &MultiBodyProblem) -> Result<(), IoError> {
    std::fs::write(path, format_problem(problem))?;
    Ok(())
}
