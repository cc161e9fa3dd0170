//! Self-describing displacement artifacts.
//!
//! A field file opens with comment lines echoing every flag of the run that
//! produced it, followed by one `body node ux uy` row per mesh node
//! (clamped nodes included, so the file stands alone). The echoed flags let
//! `audit` rebuild the exact problem without any side channel.

use std::fs;
use std::io::Write;
use std::path::Path;

use contact_ddm::dof::DofMap;
use contact_ddm::mesh::MultiBodyProblem;

pub const FIELD_MAGIC: &str = "# contact-ddm field";

#[derive(Debug)]
pub struct FieldFile {
    /// Echoed `key value` flag pairs, in written order.
    pub header: Vec<(String, String)>,
    /// `(body index, node index, ux, uy)` per node.
    pub rows: Vec<(usize, usize, f64, f64)>,
}

impl FieldFile {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Renders the artifact text: magic line, flag echo, column comment, rows.
/// Floats use the shortest round-tripping decimal form, so rewriting an
/// unchanged state is byte-identical.
pub fn render_field(
    header: &[(String, String)],
    problem: &MultiBodyProblem,
    map: &DofMap,
    u: &[f64],
) -> String {
    let mut out = String::from(FIELD_MAGIC);
    out.push('\n');
    for (k, v) in header {
        out.push_str(&format!("# {k} {v}\n"));
    }
    out.push_str("# body node ux uy\n");
    for (b, body) in problem.bodies.iter().enumerate() {
        for n in 0..body.mesh.nodes.len() {
            let val = |c: usize| map.free_index(b, n, c).map_or(0.0, |fi| u[fi]);
            out.push_str(&format!("{b} {n} {} {}\n", val(0), val(1)));
        }
    }
    out
}

pub fn write_field(
    path: &Path,
    header: &[(String, String)],
    problem: &MultiBodyProblem,
    map: &DofMap,
    u: &[f64],
) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(render_field(header, problem, map, u).as_bytes())
}

pub fn read_field(path: &Path) -> Result<FieldFile, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(FIELD_MAGIC) {
        return Err(format!(
            "{}: not a field artifact (missing `{FIELD_MAGIC}` line)",
            path.display()
        ));
    }
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((k, v)) = rest.split_once(' ') {
                header.push((k.to_string(), v.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(format!(
                "{}: line {}: expected `body node ux uy`, got {line:?}",
                path.display(),
                i + 2
            ));
        }
        let parse_idx = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| format!("{}: line {}: bad {what} {s:?}", path.display(), i + 2))
        };
        let parse_f = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("{}: line {}: bad {what} {s:?}", path.display(), i + 2))
        };
        rows.push((
            parse_idx(fields[0], "body index")?,
            parse_idx(fields[1], "node index")?,
            parse_f(fields[2], "ux")?,
            parse_f(fields[3], "uy")?,
        ));
    }
    Ok(FieldFile { header, rows })
}

/// Packs field rows into the free-dof vector of `map`. Values on clamped
/// dofs are ignored (they are written as zeros anyway); out-of-range
/// body/node indices are an error.
pub fn rows_to_free(
    field: &FieldFile,
    problem: &MultiBodyProblem,
    map: &DofMap,
) -> Result<Vec<f64>, String> {
    let mut u = vec![0.0; map.n_free()];
    for &(b, n, ux, uy) in &field.rows {
        let body = problem
            .bodies
            .get(b)
            .ok_or_else(|| format!("field row references body {b}, problem has {}", problem.bodies.len()))?;
        if n >= body.mesh.nodes.len() {
            return Err(format!(
                "field row references node {n} of body {b}, which has {} nodes",
                body.mesh.nodes.len()
            ));
        }
        for (c, val) in [(0, ux), (1, uy)] {
            if let Some(fi) = map.free_index(b, n, c) {
                u[fi] = val;
            }
        }
    }
    Ok(u)
}
