//! Model files: UAI `MARKOV` networks and a plain log-table text format.
//!
//! Native format:
//!
//! ```text
//! n m
//! i L_i θ_i(0) ... θ_i(L_i - 1)        (n lines)
//! i j θ_ij(0,0) θ_ij(0,1) ...          (m lines, row-major L_i × L_j)
//! ```
//!
//! UAI tables hold `exp` of the log potentials. Reading takes logs and rejects
//! zero entries. Several factors on the same scope are summed in log space.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ModelBuilder, PairwiseModel};
use crate::error::{Error, Result};

struct Tokens<'a> {
    iter: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .flat_map(|(ln, line)| line.split_whitespace().map(move |t| (ln + 1, t))),
        );
        Self {
            iter: iter.peekable(),
            last_line: 0,
        }
    }

    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        match self.iter.next() {
            Some((ln, t)) => {
                self.last_line = ln;
                Ok(t)
            }
            None => Err(Error::Parse {
                line: self.last_line,
                msg: format!("unexpected end of input, expected {what}"),
            }),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.next_str(what)?;
        t.parse().map_err(|_| Error::Parse {
            line: self.last_line,
            msg: format!("expected {what}, found {t:?}"),
        })
    }

    fn at_end(&mut self) -> bool {
        self.iter.peek().is_none()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last_line,
            msg: msg.into(),
        }
    }
}

pub fn read_uai(text: &str) -> Result<PairwiseModel> {
    let mut tok = Tokens::new(text);
    let kind = tok.next_str("network type")?;
    if kind != "MARKOV" {
        return Err(tok.err(format!("only MARKOV networks are supported, found {kind}")));
    }
    let n: usize = tok.parse("variable count")?;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(tok.parse::<usize>("cardinality")?);
    }
    let nf: usize = tok.parse("factor count")?;
    let mut scopes = Vec::with_capacity(nf);
    for _ in 0..nf {
        let arity: usize = tok.parse("factor arity")?;
        if arity == 0 || arity > 2 {
            return Err(Error::Unsupported(format!(
                "factor of arity {arity}; only unary and pairwise factors are supported"
            )));
        }
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let v: usize = tok.parse("scope variable")?;
            if v >= n {
                return Err(tok.err(format!("scope variable {v} out of range")));
            }
            scope.push(v);
        }
        if arity == 2 && scope[0] == scope[1] {
            return Err(tok.err(format!("pairwise factor with repeated variable {}", scope[0])));
        }
        scopes.push(scope);
    }

    let mut unary: Vec<Vec<f64>> = labels.iter().map(|&l| vec![0.0; l]).collect();
    let mut pair: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for scope in &scopes {
        let size: usize = tok.parse("table size")?;
        let expected: usize = scope.iter().map(|&v| labels[v]).product();
        if size != expected {
            return Err(tok.err(format!("table size {size} does not match scope size {expected}")));
        }
        let mut logs = Vec::with_capacity(size);
        for _ in 0..size {
            let p: f64 = tok.parse("table entry")?;
            if !(p > 0.0) || !p.is_finite() {
                return Err(tok.err(format!("table entry {p} is not a positive finite number")));
            }
            logs.push(p.ln());
        }
        match scope.as_slice() {
            [v] => unary[*v].iter_mut().zip(&logs).for_each(|(u, l)| *u += l),
            [a, b] => {
                let (la, lb) = (labels[*a], labels[*b]);
                let (key, table) = if a < b {
                    ((*a, *b), logs)
                } else {
                    let mut t = vec![0.0; logs.len()];
                    for x in 0..la {
                        for y in 0..lb {
                            t[y * la + x] = logs[x * lb + y];
                        }
                    }
                    ((*b, *a), t)
                };
                let slot = pair.entry(key).or_insert_with(|| vec![0.0; table.len()]);
                slot.iter_mut().zip(&table).for_each(|(s, t)| *s += t);
            }
            _ => unreachable!(),
        }
    }
    if !tok.at_end() {
        return Err(tok.err("trailing tokens after last table"));
    }

    let mut b = ModelBuilder::new(labels);
    for (i, u) in unary.into_iter().enumerate() {
        b = b.unary(i, u);
    }
    for ((i, j), t) in pair {
        b = b.edge(i, j, t);
    }
    b.build()
}

pub fn write_uai<W: Write>(model: &PairwiseModel, mut out: W) -> Result<()> {
    writeln!(out, "MARKOV")?;
    writeln!(out, "{}", model.n())?;
    writeln!(out, "{}", join(model.labels().iter()))?;
    writeln!(out, "{}", model.n() + model.num_edges())?;
    for i in 0..model.n() {
        writeln!(out, "1 {i}")?;
    }
    for e in model.edges() {
        writeln!(out, "2 {} {}", e.i, e.j)?;
    }
    for i in 0..model.n() {
        writeln!(out)?;
        writeln!(out, "{}", model.num_labels(i))?;
        writeln!(out, "{}", join_exp(model.unary(i).iter().map(|v| v.exp())))?;
    }
    for e in model.edges() {
        let (rows, cols) = e.shape();
        writeln!(out)?;
        writeln!(out, "{}", rows * cols)?;
        for r in 0..rows {
            writeln!(out, "{}", join_exp((0..cols).map(|c| e.value(r, c).exp())))?;
        }
    }
    Ok(())
}

pub fn read_native(text: &str) -> Result<PairwiseModel> {
    let mut tok = Tokens::new(text);
    let n: usize = tok.parse("variable count")?;
    let m: usize = tok.parse("edge count")?;
    let mut labels = Vec::with_capacity(n);
    let mut unary = Vec::with_capacity(n);
    for k in 0..n {
        let i: usize = tok.parse("variable index")?;
        if i != k {
            return Err(tok.err(format!("expected variable {k}, found {i}")));
        }
        let l: usize = tok.parse("label count")?;
        let mut t = Vec::with_capacity(l);
        for _ in 0..l {
            t.push(tok.parse::<f64>("log potential")?);
        }
        labels.push(l);
        unary.push(t);
    }
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let i: usize = tok.parse("edge endpoint")?;
        let j: usize = tok.parse("edge endpoint")?;
        if i >= n || j >= n {
            return Err(tok.err(format!("edge ({i}, {j}) references a missing variable")));
        }
        let size = labels[i] * labels[j];
        let mut t = Vec::with_capacity(size);
        for _ in 0..size {
            t.push(tok.parse::<f64>("log potential")?);
        }
        edges.push((i, j, t));
    }
    if !tok.at_end() {
        return Err(tok.err("trailing tokens after last edge"));
    }
    let mut b = ModelBuilder::new(labels);
    for (i, u) in unary.into_iter().enumerate() {
        b = b.unary(i, u);
    }
    for (i, j, t) in edges {
        b = b.edge(i, j, t);
    }
    b.build()
}

pub fn write_native<W: Write>(model: &PairwiseModel, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", model.n(), model.num_edges())?;
    for i in 0..model.n() {
        writeln!(out, "{i} {} {}", model.num_labels(i), join(model.unary(i).iter()))?;
    }
    for e in model.edges() {
        writeln!(out, "{} {} {}", e.i, e.j, join(e.table().iter()))?;
    }
    Ok(())
}

/// Reads either format; UAI is recognized by its leading `MARKOV` token.
pub fn read_model(text: &str) -> Result<PairwiseModel> {
    if text.split_whitespace().next() == Some("MARKOV") {
        read_uai(text)
    } else {
        read_native(text)
    }
}

pub fn load(path: &Path) -> Result<PairwiseModel> {
    read_model(&fs::read_to_string(path)?)
}

/// Writes UAI when the extension is `.uai`, native text otherwise.
pub fn save(model: &PairwiseModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("uai")) {
        write_uai(model, &mut buf)?;
    } else {
        write_native(model, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_exp(items: impl Iterator<Item = f64>) -> String {
    items.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PairwiseModel {
        ModelBuilder::new(vec![2, 3, 2])
            .unary(0, vec![0.1, -0.25])
            .unary(1, vec![1.5, 0.0, -3.0])
            .edge(0, 1, vec![0.5, -1.0, 2.0, 0.0, 0.3, 0.7])
            .edge(2, 1, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0])
            .build()
            .unwrap()
    }

    #[test]
    fn native_round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        write_native(&m, &mut buf).unwrap();
        let back = read_native(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn uai_round_trip_preserves_energies() {
        let m = sample();
        let mut buf = Vec::new();
        write_uai(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("MARKOV\n3\n2 3 2\n5\n"));
        let back = read_model(&text).unwrap();
        for x0 in 0..2 {
            for x1 in 0..3 {
                for x2 in 0..2 {
                    let c = [x0, x1, x2];
                    assert!((m.energy(&c).unwrap() - back.energy(&c).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uai_rejects_zero_entries_and_higher_order() {
        let zero = "MARKOV\n1\n2\n1\n1 0\n2\n0.0 1.0\n";
        assert!(matches!(read_uai(zero), Err(Error::Parse { line: 7, .. })));
        let tri = "MARKOV\n3\n2 2 2\n1\n3 0 1 2\n8\n1 1 1 1 1 1 1 1\n";
        assert!(matches!(read_uai(tri), Err(Error::Unsupported(_))));
    }

    #[test]
    fn uai_merges_repeated_scopes() {
        let text = "MARKOV\n2\n2 2\n2\n2 0 1\n2 1 0\n4\n1 2 3 4\n4\n1 1 1 2.718281828459045\n";
        let m = read_uai(text).unwrap();
        assert_eq!(m.num_edges(), 1);
        // second factor is in (1,0) orientation: its (x1=1, x0=1) entry is e
        assert!((m.pairwise(0, 1, 1, 1) - (4f64.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn native_reports_truncation() {
        assert!(matches!(read_native("2 1\n0 2 0 0\n1 2 0 0\n0 1 1.0"), Err(Error::Parse { .. })));
    }
}
