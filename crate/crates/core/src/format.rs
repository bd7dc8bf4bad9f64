//! The `ssp v1` text format.
//!
//! ```text
//! ssp v1
//! states 2
//! actions 2
//! cmin 0
//! init 0
//! terminal_action 1 cost 5        # optional
//! cost 0 0 0.5
//! ...
//! trans 0 0 2 1                   # s a s' p, s' = S is the goal
//! ```

use thiserror::Error;

use crate::mdp::{SspBuilder, SspMdp, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unexpected end of input: {0}")]
    Truncated(String),
    #[error("invalid mdp: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_ssp(mdp: &SspMdp) -> String {
    let mut out = String::new();
    out.push_str("ssp v1\n");
    out.push_str(&format!("states {}\n", mdp.n_states()));
    out.push_str(&format!("actions {}\n", mdp.n_actions()));
    out.push_str(&format!("cmin {}\n", num(mdp.c_min())));
    out.push_str(&format!("init {}\n", mdp.init_state()));
    if let Some(t) = mdp.terminal_action() {
        out.push_str(&format!("terminal_action {} cost {}\n", t.action, num(t.cost)));
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push_str(&format!("cost {s} {a} {}\n", num(mdp.cost(s, a))));
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for &(next, p) in mdp.row(s, a) {
                out.push_str(&format!("trans {s} {a} {next} {}\n", num(p)));
            }
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
                .filter(|(_, toks)| !toks.is_empty()),
        );
        Lines { inner: it.peekable() }
    }

    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), FormatError> {
        let (line, toks) = self.inner.next().ok_or_else(|| FormatError::Truncated(format!("expected `{key}`")))?;
        if toks[0] != key {
            return Err(syntax(line, format!("expected `{key}`, found `{}`", toks[0])));
        }
        Ok((line, toks))
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.inner.peek().map(|(_, t)| t[0])
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(line: usize, toks: &[&str], i: usize) -> Result<T, FormatError> {
    toks.get(i)
        .ok_or_else(|| syntax(line, "missing field"))?
        .parse()
        .map_err(|_| syntax(line, format!("cannot parse `{}`", toks[i])))
}

fn arity(line: usize, toks: &[&str], n: usize) -> Result<(), FormatError> {
    if toks.len() != n {
        return Err(syntax(line, format!("expected {} fields, found {}", n, toks.len())));
    }
    Ok(())
}

/// Parses and validates. Rows violating the model invariants are rejected.
pub fn parse_ssp(text: &str) -> Result<SspMdp, FormatError> {
    let mut lines = Lines::new(text);
    let (line, toks) = lines.inner.next().ok_or_else(|| FormatError::Truncated("empty input".into()))?;
    if toks != ["ssp", "v1"] {
        return Err(syntax(line, "expected header `ssp v1`"));
    }
    let (l, t) = lines.expect("states")?;
    arity(l, &t, 2)?;
    let ns: usize = field(l, &t, 1)?;
    let (l, t) = lines.expect("actions")?;
    arity(l, &t, 2)?;
    let na: usize = field(l, &t, 1)?;
    if ns == 0 || na == 0 {
        return Err(syntax(l, "need at least one state and one action"));
    }
    let mut b = SspBuilder::new(ns, na);
    let (l, t) = lines.expect("cmin")?;
    arity(l, &t, 2)?;
    b.c_min(field(l, &t, 1)?);
    let (l, t) = lines.expect("init")?;
    arity(l, &t, 2)?;
    b.init_state(field(l, &t, 1)?);
    if lines.peek_key() == Some("terminal_action") {
        let (l, t) = lines.expect("terminal_action")?;
        arity(l, &t, 4)?;
        if t[2] != "cost" {
            return Err(syntax(l, "expected `terminal_action A cost J`"));
        }
        b.terminal_action(field(l, &t, 1)?, field(l, &t, 3)?);
    }
    let mut seen = vec![false; ns * na];
    for _ in 0..ns * na {
        let (l, t) = lines.expect("cost")?;
        arity(l, &t, 4)?;
        let (s, a): (usize, usize) = (field(l, &t, 1)?, field(l, &t, 2)?);
        if s >= ns || a >= na {
            return Err(syntax(l, format!("pair ({s},{a}) out of range")));
        }
        if std::mem::replace(&mut seen[s * na + a], true) {
            return Err(syntax(l, format!("duplicate cost for ({s},{a})")));
        }
        b.cost(s, a, field(l, &t, 3)?);
    }
    let mut last: Option<(usize, usize, usize)> = None;
    while let Some((l, t)) = lines.inner.next() {
        if t[0] != "trans" {
            return Err(syntax(l, format!("expected `trans`, found `{}`", t[0])));
        }
        arity(l, &t, 5)?;
        let key: (usize, usize, usize) = (field(l, &t, 1)?, field(l, &t, 2)?, field(l, &t, 3)?);
        if key.0 >= ns || key.1 >= na || key.2 > ns {
            return Err(syntax(l, format!("transition {key:?} out of range")));
        }
        if last.is_some_and(|prev| prev >= key) {
            return Err(syntax(l, "transitions must be sorted by (s, a, s') without duplicates"));
        }
        last = Some(key);
        b.transition(key.0, key.1, key.2, field(l, &t, 4)?);
    }
    let mdp = b.build().map_err(|e| syntax(0, e.to_string()))?;
    let report = mdp.validate();
    if !report.is_valid() {
        return Err(FormatError::Invalid(report.violations));
    }
    Ok(mdp)
}
