//! Textual checkpoint format with exact float round-trips.
//!
//! Values are written as the 16-hex-digit bit patterns of their `f64`
//! representation, so a save/load cycle reproduces every parameter bit for
//! bit. The header pins the model kind, embedding width, price sensitivity,
//! dataset hash, and optimizer step count; consumers reject checkpoints
//! whose header does not match what they were asked to score.

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor2;
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "pgrec-checkpoint v1";

/// Header fields of a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    /// Model kind string, e.g. "pgusa" or "popularity".
    pub kind: String,
    /// Embedding width.
    pub d: usize,
    /// Weight ceiling for price-guided member weights; `None` for models
    /// without one.
    pub beta: Option<f64>,
    /// SHA-256 of the dataset the model was trained on.
    pub dataset_hash: String,
    /// Optimizer steps taken.
    pub step_count: u64,
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, store: &ParamStore) -> Result<()> {
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    writeln!(out, "kind {}", meta.kind).unwrap();
    writeln!(out, "d {}", meta.d).unwrap();
    match meta.beta {
        Some(b) => writeln!(out, "beta {:016x}", b.to_bits()).unwrap(),
        None => out.push_str("beta none\n"),
    }
    writeln!(out, "dataset_hash {}", meta.dataset_hash).unwrap();
    writeln!(out, "step_count {}", meta.step_count).unwrap();
    for name in store.names() {
        let t = store.value(name);
        writeln!(out, "tensor {} {} {}", name, t.rows(), t.cols()).unwrap();
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(io_err)
}

struct LineReader<'a> {
    file: std::path::PathBuf,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.line_no += 1;
        self.lines.next()
    }

    fn parse_err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn expect_field(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .next()
            .ok_or_else(|| self.parse_err(format!("missing {key} line")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.parse_err(format!("expected `{key} ...`, got `{line}`")))
    }
}

fn parse_bits(s: &str) -> Option<f64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, ParamStore)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut r = LineReader {
        file: path.to_path_buf(),
        lines: text.lines(),
        line_no: 0,
    };

    match r.next() {
        Some(MAGIC) => {}
        Some(other) => {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported checkpoint header `{other}`, expected `{MAGIC}`"
            )))
        }
        None => return Err(r.parse_err("empty checkpoint")),
    }

    let kind = r.expect_field("kind")?.to_string();
    let d: usize = {
        let s = r.expect_field("d")?;
        s.parse().map_err(|_| r.parse_err(format!("bad d `{s}`")))?
    };
    let beta = {
        let s = r.expect_field("beta")?;
        if s == "none" {
            None
        } else {
            Some(parse_bits(s).ok_or_else(|| r.parse_err(format!("bad beta bits `{s}`")))?)
        }
    };
    let dataset_hash = r.expect_field("dataset_hash")?.to_string();
    let step_count: u64 = {
        let s = r.expect_field("step_count")?;
        s.parse()
            .map_err(|_| r.parse_err(format!("bad step_count `{s}`")))?
    };

    let mut store = ParamStore::new();
    while let Some(line) = r.next() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(r.parse_err(format!("expected `tensor <name> <rows> <cols>`, got `{line}`")));
        }
        let name = parts[1];
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| r.parse_err(format!("bad row count `{}`", parts[2])))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| r.parse_err(format!("bad col count `{}`", parts[3])))?;
        if store.contains(name) {
            return Err(r.parse_err(format!("duplicate tensor `{name}`")));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row_line = r
                .next()
                .ok_or_else(|| r.parse_err(format!("truncated tensor `{name}`")))?;
            let mut row_count = 0;
            for field in row_line.split(' ') {
                let v = parse_bits(field)
                    .ok_or_else(|| r.parse_err(format!("bad value bits `{field}`")))?;
                values.push(v);
                row_count += 1;
            }
            if row_count != cols {
                return Err(r.parse_err(format!(
                    "tensor `{name}` row has {row_count} values, expected {cols}"
                )));
            }
        }
        store.insert_values(name, Tensor2::from_values(rows, cols, values));
    }
    store.set_step_count(step_count);

    Ok((
        CheckpointMeta {
            kind,
            d,
            beta,
            dataset_hash,
            step_count,
        },
        store,
    ))
}
