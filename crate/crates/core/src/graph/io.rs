//! Plain-text edge lists and feature vectors.
//!
//! Edge list: the first data line holds `n`, every further non-empty line
//! holds `u v` (0-indexed). Text after `#` is a comment. Feature files hold
//! one decimal float per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let mut lines = data_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing node count"))?;
    let n: usize = header
        .parse()
        .map_err(|_| parse_err(path, line_no, format!("invalid node count {header:?}")))?;
    let mut edges = Vec::new();
    for (line_no, line) in lines {
        let mut tokens = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            let token = tokens
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("missing {what} endpoint")))?;
            token
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid node index {token:?}")))
        };
        let u = next("first")?;
        let v = next("second")?;
        if let Some(extra) = tokens.next() {
            return Err(parse_err(path, line_no, format!("unexpected token {extra:?}")));
        }
        if u >= n || v >= n {
            return Err(parse_err(path, line_no, format!("edge ({u}, {v}) out of range for n = {n}")));
        }
        if u == v {
            return Err(parse_err(path, line_no, format!("self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    Graph::new(n, &edges)
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    parse_edge_list(&fs::read_to_string(path)?, path)
}

/// Canonical form: node count, then sorted edges with `u < v`.
pub fn format_edge_list(g: &Graph) -> String {
    let mut out = format!("{}\n", g.node_count());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_edge_list(g))?;
    Ok(())
}

/// Raw values; callers normalize before use.
pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(line_no, line)| {
            line.parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("invalid float {line:?}")))
        })
        .collect()
}

pub fn write_features(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    fs::write(path, out)?;
    Ok(())
}
