//! Plain-text LP format for exchanging models with other solvers.
//!
//! The dialect is a line-oriented subset of the common CPLEX LP layout:
//!
//! ```text
//! \ comment to end of line
//! Minimize
//!  obj: + 3 x - 2 y
//! Subject To
//!  cap: + 1 x + 1 y <= 4
//! Bounds
//!  0 <= x <= 10
//!  y free
//! General
//!  n
//! Binary
//!  b
//! SOS
//!  s: S2:: w0:1 w1:2 w2:3
//! End
//! ```
//!
//! Every row, bound and SOS set sits on one line and tokens are separated by
//! whitespace, so names may contain any character except whitespace and `:`.
//! The writer lists every variable in the Bounds section in index order, which
//! makes `parse(write(m))` reproduce the variable numbering. Row tags are not
//! part of the format; parsed rows get the tag `lp`. Numbers are written in
//! shortest round-trip form and infinities as `inf`.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::model::{MilpModel, Provenance, Relation, VarId, VarKind};

pub const PARSED_TAG: &str = "lp";

#[derive(Debug, Error, PartialEq)]
pub enum LpFormatError {
    #[error("name {0:?} cannot be written: it is empty, numeric or contains whitespace or ':'")]
    BadName(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn writable(name: &str) -> bool {
    !name.is_empty()
        && !name.contains(|c: char| c.is_whitespace() || c == ':' || c == '\\')
        && name.parse::<f64>().is_err()
        && !matches!(name, "+" | "-" | "<=" | ">=" | "=" | "<" | ">" | "=<" | "=>" | "free")
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn push_terms(out: &mut String, m: &MilpModel, terms: &[(VarId, f64)]) {
    for &(v, a) in terms {
        let sign = if a.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", num(a.abs()), m.variables[v].name);
    }
}

/// Serializes `m`; fails on names the parser could not read back.
pub fn write_lp(m: &MilpModel) -> Result<String, LpFormatError> {
    for name in m
        .variables
        .iter()
        .map(|v| &v.name)
        .chain(m.constraints.iter().map(|c| &c.name))
        .chain(m.sos2.iter().map(|s| &s.name))
    {
        if !writable(name) {
            return Err(LpFormatError::BadName(name.clone()));
        }
    }
    let mut out = String::new();
    if !m.name.is_empty() {
        let _ = writeln!(out, "\\ model {}", m.name.replace('\n', " "));
    }
    out.push_str("Minimize\n obj:");
    push_terms(&mut out, m, &m.objective);
    out.push_str("\nSubject To\n");
    for c in &m.constraints {
        let _ = write!(out, " {}:", c.name);
        push_terms(&mut out, m, &c.terms);
        let _ = writeln!(out, " {} {}", c.relation.symbol(), num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in &m.variables {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, num(v.lower));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), v.name, num(v.upper));
        }
    }
    for (title, kind) in [("General", VarKind::Integer), ("Binary", VarKind::Binary)] {
        let names: Vec<&str> = m
            .variables
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.as_str())
            .collect();
        if !names.is_empty() {
            let _ = writeln!(out, "{title}");
            for n in names {
                let _ = writeln!(out, " {n}");
            }
        }
    }
    if !m.sos2.is_empty() {
        out.push_str("SOS\n");
        for s in &m.sos2 {
            let _ = write!(out, " {}: S2::", s.name);
            for (k, &v) in s.members.iter().enumerate() {
                let _ = write!(out, " {}:{}", m.variables[v].name, k + 1);
            }
            out.push('\n');
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Rows,
    Bounds,
    General,
    Binary,
    Sos,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    match line.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
        "bounds" | "bound" => Some(Section::Bounds),
        "general" | "generals" | "gen" | "integer" | "integers" => Some(Section::General),
        "binary" | "binaries" | "bin" => Some(Section::Binary),
        "sos" => Some(Section::Sos),
        "end" => Some(Section::End),
        _ => None,
    }
}

fn relation(tok: &str) -> Option<Relation> {
    match tok {
        "<=" | "=<" | "<" => Some(Relation::Le),
        ">=" | "=>" | ">" => Some(Relation::Ge),
        "=" => Some(Relation::Eq),
        _ => None,
    }
}

fn parse_num(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}

struct Parser {
    model: MilpModel,
    index: HashMap<String, VarId>,
    line: usize,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> LpFormatError {
        LpFormatError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn var(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = self
            .model
            .add_var(name, VarKind::Continuous, 0.0, f64::INFINITY, Provenance::Free);
        self.index.insert(name.to_string(), v);
        v
    }

    /// Splits `label: rest` off a statement.
    fn label<'a>(&self, text: &'a str) -> Result<(&'a str, &'a str), LpFormatError> {
        let (name, rest) = text
            .split_once(':')
            .ok_or_else(|| self.err("expected `name:`"))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(self.err("empty name"));
        }
        Ok((name, rest))
    }

    /// Reads `[+|-] [coef] name` terms until a relation token or the end.
    fn terms<'a>(
        &mut self,
        toks: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>,
    ) -> Result<Vec<(VarId, f64)>, LpFormatError> {
        let mut out = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        while let Some(&t) = toks.peek() {
            if relation(t).is_some() {
                break;
            }
            toks.next();
            match t {
                "+" => {}
                "-" => sign = -sign,
                _ => {
                    if let Some(v) = parse_num(t) {
                        if coef.is_some() {
                            return Err(self.err(format!("two numbers in a row at {t:?}")));
                        }
                        coef = Some(v);
                    } else {
                        let v = self.var(t);
                        out.push((v, sign * coef.unwrap_or(1.0)));
                        sign = 1.0;
                        coef = None;
                    }
                }
            }
        }
        if coef.is_some() {
            return Err(self.err("constant terms are not supported"));
        }
        Ok(out)
    }

    fn bound(&mut self, text: &str) -> Result<(), LpFormatError> {
        let toks: Vec<&str> = text.split_whitespace().collect();
        let value = |p: &Self, t: &str| parse_num(t).ok_or_else(|| p.err(format!("bad number {t:?}")));
        match toks.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let v = self.var(name);
                self.model.variables[v].lower = f64::NEG_INFINITY;
                self.model.variables[v].upper = f64::INFINITY;
            }
            [lo, r1, name, r2, hi] if relation(r1) == Some(Relation::Le) && relation(r2) == Some(Relation::Le) => {
                let (lo, hi) = (value(self, lo)?, value(self, hi)?);
                let v = self.var(name);
                self.model.variables[v].lower = lo;
                self.model.variables[v].upper = hi;
            }
            [name, r, val] if parse_num(name).is_none() => {
                let val = value(self, val)?;
                let v = self.var(name);
                let var = &mut self.model.variables[v];
                match relation(r) {
                    Some(Relation::Le) => var.upper = val,
                    Some(Relation::Ge) => var.lower = val,
                    Some(Relation::Eq) => {
                        var.lower = val;
                        var.upper = val;
                    }
                    None => return Err(self.err(format!("bad relation {r:?}"))),
                }
            }
            [val, r, name] => {
                let val = value(self, val)?;
                let v = self.var(name);
                let var = &mut self.model.variables[v];
                match relation(r) {
                    Some(Relation::Le) => var.lower = val,
                    Some(Relation::Ge) => var.upper = val,
                    Some(Relation::Eq) => {
                        var.lower = val;
                        var.upper = val;
                    }
                    None => return Err(self.err(format!("bad relation {r:?}"))),
                }
            }
            _ => return Err(self.err(format!("unreadable bound {text:?}"))),
        }
        Ok(())
    }

    fn sos(&mut self, text: &str) -> Result<(), LpFormatError> {
        let (name, rest) = self.label(text)?;
        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix("S2::")
            .ok_or_else(|| self.err("only `S2::` sets are supported"))?;
        let mut members: Vec<(f64, VarId)> = Vec::new();
        for tok in rest.split_whitespace() {
            let (var, weight) = tok
                .rsplit_once(':')
                .ok_or_else(|| self.err(format!("expected var:weight, got {tok:?}")))?;
            let w = parse_num(weight).ok_or_else(|| self.err(format!("bad weight {weight:?}")))?;
            let v = self.var(var);
            members.push((w, v));
        }
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.model
            .add_sos2(name, members.into_iter().map(|(_, v)| v).collect());
        Ok(())
    }
}

/// Reads a model in the dialect above. Variables keep their first
/// appearance order, with the Bounds section hoisted ahead of everything
/// else so that written models round-trip with identical numbering.
pub fn parse_lp(text: &str) -> Result<MilpModel, LpFormatError> {
    let mut p = Parser {
        model: MilpModel::new(""),
        index: HashMap::new(),
        line: 0,
    };
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('\\').next().unwrap_or("").trim()))
        .collect();
    if let Some(name) = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("\\ model "))
    {
        p.model.name = name.trim().to_string();
    }

    // Pass 1 declares variables in Bounds order.
    let mut section = Section::None;
    for &(no, line) in &lines {
        p.line = no;
        if line.is_empty() {
            continue;
        }
        if let Some(s) = section_of(line) {
            section = s;
            continue;
        }
        if section == Section::Bounds {
            p.bound(line)?;
        }
    }

    let mut section = Section::None;
    let mut objective = Vec::new();
    for &(no, line) in &lines {
        p.line = no;
        if line.is_empty() {
            continue;
        }
        if let Some(s) = section_of(line) {
            section = s;
            continue;
        }
        match section {
            Section::None => return Err(p.err("statement before any section")),
            Section::End => return Err(p.err("text after End")),
            Section::Objective => {
                let body = match line.split_once(':') {
                    Some((_, rest)) => rest,
                    None => line,
                };
                let mut toks = body.split_whitespace().peekable();
                objective.extend(p.terms(&mut toks)?);
                if toks.next().is_some() {
                    return Err(p.err("relation in objective"));
                }
            }
            Section::Rows => {
                let (name, rest) = p.label(line)?;
                let mut toks = rest.split_whitespace().peekable();
                let terms = p.terms(&mut toks)?;
                let rel = toks
                    .next()
                    .and_then(relation)
                    .ok_or_else(|| p.err(format!("row {name} has no relation")))?;
                let rhs_tok = toks.next().ok_or_else(|| p.err(format!("row {name} has no right-hand side")))?;
                let rhs = parse_num(rhs_tok).ok_or_else(|| p.err(format!("bad right-hand side {rhs_tok:?}")))?;
                if toks.next().is_some() {
                    return Err(p.err(format!("trailing tokens in row {name}")));
                }
                p.model.add_constraint(name, PARSED_TAG, &terms, rel, rhs);
            }
            Section::Bounds => {}
            Section::General | Section::Binary => {
                for name in line.split_whitespace() {
                    let v = p.var(name);
                    let var = &mut p.model.variables[v];
                    if section == Section::Binary {
                        var.kind = VarKind::Binary;
                        var.lower = var.lower.max(0.0);
                        var.upper = var.upper.min(1.0);
                    } else {
                        var.kind = VarKind::Integer;
                    }
                }
            }
            Section::Sos => p.sos(line)?,
        }
    }
    p.model.set_objective(&objective);
    Ok(p.model)
}
