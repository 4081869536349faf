//! Plain-text formats for partitions, trees, fitted estimators and datasets.
//!
//! Partition file:
//!
//! ```text
//! partition 2 box
//! 0,0.5;0,1
//! 0.5,1;0,1
//! ```
//!
//! Box cells list `a_j,b_j` per coordinate separated by `;`. Boolean cells
//! (`partition <d> boolean`) list fixed coordinates as `j=v` pairs separated
//! by `;` (0-based `j`), or `*` for the whole cube.
//!
//! Tree file: a `tree <d>` header, then nodes in preorder, one per line:
//! `split <feature> <threshold>` or `leaf <prediction> <train_count> <honest_count>`.
//!
//! Estimator file: an `estimator <kind> <d>` header followed by one tree
//! (`cart`, `honest_cart`), `trees <k>` and `k` trees (`forest`), or a
//! partition block and `cells <k>` lines of `<prediction> <count>`
//! (`partition_ala`).
//!
//! Numbers use the shortest decimal that round-trips, so write/read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use ala_core::geometry::{Cell, Partition};
use ala_core::models::Dataset;
use ala_core::trees::{Estimator, PartitionEstimator, TreeNode};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unexpected end of input: {0}")]
    Eof(&'static str),
    #[error(transparent)]
    Core(#[from] ala_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

/// Line cursor that skips blank lines and `#` comments.
struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate().peekable() }
    }

    fn next(&mut self, what: &'static str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok((i + 1, line));
            }
        }
        Err(FormatError::Eof(what))
    }

    fn finish(mut self) -> Result<()> {
        match self.next("") {
            Ok((line, text)) => Err(syntax(line, format!("trailing content {text:?}"))),
            Err(_) => Ok(()),
        }
    }
}

fn syntax(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, reason: reason.into() }
}

fn parse<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| syntax(line, format!("bad {what} {field:?}")))
}

fn expect_words<'a>(line: usize, text: &'a str, head: &str, count: usize) -> Result<Vec<&'a str>> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.first() != Some(&head) || words.len() != count {
        return Err(syntax(line, format!("expected `{head}` with {} field(s), got {text:?}", count - 1)));
    }
    Ok(words)
}

pub fn cell_to_string(cell: &Cell) -> String {
    match cell {
        Cell::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(a, b)| format!("{a},{b}"))
            .collect::<Vec<_>>()
            .join(";"),
        Cell::Boolean { fixed, .. } if fixed.is_empty() => "*".to_string(),
        Cell::Boolean { fixed, .. } => fixed.iter().map(|(j, v)| format!("{j}={v}")).collect::<Vec<_>>().join(";"),
    }
}

fn parse_cell(line: usize, text: &str, dim: usize, boolean: bool) -> Result<Cell> {
    if boolean {
        let mut fixed = BTreeMap::new();
        if text != "*" {
            for pair in text.split(';') {
                let (j, v) = pair.split_once('=').ok_or_else(|| syntax(line, format!("bad pair {pair:?}")))?;
                let j: usize = parse(line, j.trim(), "coordinate")?;
                let v: u8 = parse(line, v.trim(), "value")?;
                if fixed.insert(j, v).is_some() {
                    return Err(syntax(line, format!("coordinate {j} fixed twice")));
                }
            }
        }
        Ok(Cell::new_boolean(dim, fixed)?)
    } else {
        let (mut lower, mut upper) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
        for pair in text.split(';') {
            let (a, b) = pair.split_once(',').ok_or_else(|| syntax(line, format!("bad interval {pair:?}")))?;
            lower.push(parse::<f64>(line, a.trim(), "bound")?);
            upper.push(parse::<f64>(line, b.trim(), "bound")?);
        }
        if lower.len() != dim {
            return Err(syntax(line, format!("{} intervals for d={dim}", lower.len())));
        }
        Ok(Cell::new_box(lower, upper)?)
    }
}

pub fn write_partition(p: &Partition) -> String {
    let mut out = format!("partition {} {}\n", p.dim(), if p.is_boolean() { "boolean" } else { "box" });
    for cell in p.cells() {
        out.push_str(&cell_to_string(cell));
        out.push('\n');
    }
    out
}

fn partition_header(line: usize, text: &str) -> Result<(usize, bool)> {
    let w = expect_words(line, text, "partition", 3)?;
    let dim = parse(line, w[1], "dimension")?;
    let boolean = match w[2] {
        "box" => false,
        "boolean" => true,
        other => return Err(syntax(line, format!("unknown partition kind {other:?}"))),
    };
    Ok((dim, boolean))
}

pub fn read_partition(text: &str) -> Result<Partition> {
    let mut lines = Lines::new(text);
    let (line, header) = lines.next("partition header")?;
    let (dim, boolean) = partition_header(line, header)?;
    let mut cells = Vec::new();
    while let Ok((line, text)) = lines.next("cell") {
        cells.push(parse_cell(line, text, dim, boolean)?);
    }
    Ok(Partition::new(dim, cells)?)
}

fn push_tree(out: &mut String, tree: &TreeNode) {
    match tree {
        TreeNode::Split { feature, threshold, left, right } => {
            let _ = writeln!(out, "split {feature} {threshold}");
            push_tree(out, left);
            push_tree(out, right);
        }
        TreeNode::Leaf { prediction, train_count, honest_count } => {
            let _ = writeln!(out, "leaf {prediction} {train_count} {honest_count}");
        }
    }
}

pub fn write_tree(tree: &TreeNode, dim: usize) -> String {
    let mut out = format!("tree {dim}\n");
    push_tree(&mut out, tree);
    out
}

fn parse_node(lines: &mut Lines<'_>, dim: usize, depth: usize) -> Result<TreeNode> {
    let (line, text) = lines.next("tree node")?;
    if depth > 10_000 {
        return Err(syntax(line, "tree is too deep"));
    }
    match text.split_whitespace().next() {
        Some("split") => {
            let w = expect_words(line, text, "split", 3)?;
            let feature: usize = parse(line, w[1], "feature")?;
            if feature >= dim {
                return Err(syntax(line, format!("feature {feature} out of range for d={dim}")));
            }
            let threshold: f64 = parse(line, w[2], "threshold")?;
            let left = Box::new(parse_node(lines, dim, depth + 1)?);
            let right = Box::new(parse_node(lines, dim, depth + 1)?);
            Ok(TreeNode::Split { feature, threshold, left, right })
        }
        Some("leaf") => {
            let w = expect_words(line, text, "leaf", 4)?;
            Ok(TreeNode::Leaf {
                prediction: parse(line, w[1], "prediction")?,
                train_count: parse(line, w[2], "count")?,
                honest_count: parse(line, w[3], "count")?,
            })
        }
        _ => Err(syntax(line, format!("expected `split` or `leaf`, got {text:?}"))),
    }
}

fn parse_tree_block(lines: &mut Lines<'_>, dim: Option<usize>) -> Result<(TreeNode, usize)> {
    let (line, header) = lines.next("tree header")?;
    let w = expect_words(line, header, "tree", 2)?;
    let d: usize = parse(line, w[1], "dimension")?;
    if dim.is_some_and(|dim| dim != d) {
        return Err(syntax(line, format!("tree dimension {d} does not match {}", dim.unwrap_or(0))));
    }
    Ok((parse_node(lines, d, 0)?, d))
}

/// Returns the tree and its declared dimension.
pub fn read_tree(text: &str) -> Result<(TreeNode, usize)> {
    let mut lines = Lines::new(text);
    let out = parse_tree_block(&mut lines, None)?;
    lines.finish()?;
    Ok(out)
}

fn estimator_kind_name(est: &Estimator) -> &'static str {
    match est {
        Estimator::Cart { .. } => "cart",
        Estimator::HonestCart { .. } => "honest_cart",
        Estimator::Forest { .. } => "forest",
        Estimator::PartitionAla(_) => "partition_ala",
    }
}

pub fn write_estimator(est: &Estimator) -> String {
    let dim = est.dim();
    let mut out = format!("estimator {} {dim}\n", estimator_kind_name(est));
    match est {
        Estimator::Cart { tree, .. } | Estimator::HonestCart { tree, .. } => out.push_str(&write_tree(tree, dim)),
        Estimator::Forest { trees, .. } => {
            let _ = writeln!(out, "trees {}", trees.len());
            for t in trees {
                out.push_str(&write_tree(t, dim));
            }
        }
        Estimator::PartitionAla(p) => {
            out.push_str(&write_partition(&p.partition));
            let _ = writeln!(out, "cells {}", p.predictions.len());
            for (pred, count) in p.predictions.iter().zip(&p.counts) {
                let _ = writeln!(out, "{pred} {count}");
            }
        }
    }
    out
}

pub fn read_estimator(text: &str) -> Result<Estimator> {
    let mut lines = Lines::new(text);
    let (line, header) = lines.next("estimator header")?;
    let w = expect_words(line, header, "estimator", 3)?;
    let dim: usize = parse(line, w[2], "dimension")?;
    let est = match w[1] {
        "cart" => Estimator::Cart { dim, tree: parse_tree_block(&mut lines, Some(dim))?.0 },
        "honest_cart" => Estimator::HonestCart { dim, tree: parse_tree_block(&mut lines, Some(dim))?.0 },
        "forest" => {
            let (line, text) = lines.next("tree count")?;
            let k: usize = parse(line, expect_words(line, text, "trees", 2)?[1], "tree count")?;
            if k == 0 {
                return Err(syntax(line, "a forest needs at least one tree"));
            }
            let trees = (0..k)
                .map(|_| parse_tree_block(&mut lines, Some(dim)).map(|t| t.0))
                .collect::<Result<Vec<_>>>()?;
            Estimator::Forest { dim, trees }
        }
        "partition_ala" => {
            let (line, text) = lines.next("partition header")?;
            let (pdim, boolean) = partition_header(line, text)?;
            if pdim != dim {
                return Err(syntax(line, format!("partition dimension {pdim} does not match {dim}")));
            }
            let mut cells = Vec::new();
            let (line, k) = loop {
                let (line, text) = lines.next("cells")?;
                if text.starts_with("cells") {
                    break (line, parse::<usize>(line, expect_words(line, text, "cells", 2)?[1], "cell count")?);
                }
                cells.push(parse_cell(line, text, dim, boolean)?);
            };
            if k != cells.len() {
                return Err(syntax(line, format!("{k} cell values for {} cells", cells.len())));
            }
            let (mut predictions, mut counts) = (Vec::with_capacity(k), Vec::with_capacity(k));
            for _ in 0..k {
                let (line, text) = lines.next("cell value")?;
                let (pred, count) =
                    text.split_once(' ').ok_or_else(|| syntax(line, format!("expected `<prediction> <count>`, got {text:?}")))?;
                predictions.push(parse::<f64>(line, pred.trim(), "prediction")?);
                counts.push(parse::<usize>(line, count.trim(), "count")?);
            }
            let partition = Partition::new(dim, cells)?;
            Estimator::PartitionAla(PartitionEstimator { partition, predictions, counts })
        }
        other => return Err(syntax(line, format!("unknown estimator kind {other:?}"))),
    };
    lines.finish()?;
    Ok(est)
}

/// Writes `x_1..x_d,y` with a header row.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x_{j}")).collect();
    header.push("y".to_string());
    w.write_record(&header)?;
    for (x, y) in data.rows() {
        w.write_record(x.iter().chain(std::iter::once(&y)).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let d = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| syntax(1, "need x_1..x_d,y columns"))?;
    for (j, name) in header.iter().enumerate() {
        let want = if j == d { "y".to_string() } else { format!("x_{}", j + 1) };
        if name.trim() != want {
            return Err(syntax(1, format!("column {} is {name:?}, expected {want:?}", j + 1)));
        }
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != d + 1 {
            return Err(syntax(line, format!("{} fields, expected {}", rec.len(), d + 1)));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = parse(line, field.trim(), "number")?;
            if j == d {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    Ok(Dataset::new(d, x, y)?)
}
