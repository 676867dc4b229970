//! Line-oriented text format for problems.
//!
//! ```text
//! fdcop 1
//! agents <n>
//! domain <i> <lb> <ub>
//! edge <i> <j> <a> <b> <c>      # a*x_i^2 + b*x_i*x_j + c*x_j^2
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{Edge, ModelError, Problem, QuadraticCost};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("no domain given for agent {0}")]
    MissingDomain(usize),
    #[error(transparent)]
    Semantic(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        message: message.into(),
    }
}

fn field<T: FromStr>(
    tokens: &[&str],
    pos: usize,
    name: &str,
    line: usize,
) -> Result<T, FormatError> {
    let raw = tokens
        .get(pos)
        .ok_or_else(|| syntax(line, format!("missing field `{name}`")))?;
    raw.parse()
        .map_err(|_| syntax(line, format!("field `{name}`: cannot parse {raw:?}")))
}

fn arity(tokens: &[&str], want: usize, line: usize) -> Result<(), FormatError> {
    if tokens.len() > want {
        return Err(syntax(
            line,
            format!(
                "`{}` takes {} fields, found {}",
                tokens[0],
                want - 1,
                tokens.len() - 1
            ),
        ));
    }
    Ok(())
}

pub fn parse_problem(text: &str) -> Result<Problem, FormatError> {
    let mut header = false;
    let mut n: Option<usize> = None;
    let mut domains: Vec<Option<(f64, f64)>> = Vec::new();
    let mut edges = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if !header {
            if tokens[0] != "fdcop" {
                return Err(syntax(line, "expected header `fdcop 1`"));
            }
            let version: u32 = field(&tokens, 1, "version", line)?;
            if version != 1 {
                return Err(syntax(
                    line,
                    format!("unsupported format version {version}"),
                ));
            }
            arity(&tokens, 2, line)?;
            header = true;
            continue;
        }
        match tokens[0] {
            "agents" => {
                if n.is_some() {
                    return Err(syntax(line, "`agents` given twice"));
                }
                let count: usize = field(&tokens, 1, "n", line)?;
                arity(&tokens, 2, line)?;
                n = Some(count);
                domains = vec![None; count];
            }
            "domain" => {
                let count = n.ok_or_else(|| syntax(line, "`domain` before `agents`"))?;
                let i: usize = field(&tokens, 1, "i", line)?;
                let lb: f64 = field(&tokens, 2, "lb", line)?;
                let ub: f64 = field(&tokens, 3, "ub", line)?;
                arity(&tokens, 4, line)?;
                if i >= count {
                    return Err(syntax(line, format!("agent {i} out of range 0..{count}")));
                }
                if domains[i].replace((lb, ub)).is_some() {
                    return Err(syntax(line, format!("domain for agent {i} given twice")));
                }
            }
            "edge" => {
                if n.is_none() {
                    return Err(syntax(line, "`edge` before `agents`"));
                }
                let i: usize = field(&tokens, 1, "i", line)?;
                let j: usize = field(&tokens, 2, "j", line)?;
                let a: f64 = field(&tokens, 3, "a", line)?;
                let b: f64 = field(&tokens, 4, "b", line)?;
                let c: f64 = field(&tokens, 5, "c", line)?;
                arity(&tokens, 6, line)?;
                edges.push(Edge::new(i, j, QuadraticCost::new(a, b, c)));
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    if !header {
        return Err(syntax(0, "empty input; expected header `fdcop 1`"));
    }
    let n = n.ok_or_else(|| syntax(0, "missing `agents` line"))?;
    let domains = (0..n)
        .map(|i| domains[i].ok_or(FormatError::MissingDomain(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Problem::new(domains, edges)?)
}

/// Writes `p` in the text format. Reals use the shortest representation
/// that parses back to the same `f64`.
pub fn serialize_problem(p: &Problem) -> String {
    let mut out = String::from("fdcop 1\n");
    let _ = writeln!(out, "agents {}", p.num_agents());
    for (i, d) in p.domains().iter().enumerate() {
        let _ = writeln!(out, "domain {i} {} {}", d.lb(), d.ub());
    }
    for e in p.edges() {
        let QuadraticCost { a, b, c } = e.cost;
        let _ = writeln!(out, "edge {} {} {a} {b} {c}", e.first, e.second);
    }
    out
}
