//! Checkpoint files.
//!
//! ```text
//! logsig-checkpoint 1
//! config
//! <key = value lines, as in a config file>
//! end
//! adjacency <F>
//! <F rows of F values>
//! param <name> <rows> <cols>
//! <rows lines of cols values>
//! ...
//! ```
//!
//! Parameter blocks appear in declaration order. Values are printed in the
//! shortest form that parses back to the same double.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::config::RunConfig;
use super::model::Model;
use crate::error::{Error, Result};

const MAGIC: &str = "logsig-checkpoint 1";

pub fn to_text(model: &Model, settings: &super::config::TrainSettings) -> String {
    let run = RunConfig {
        model: model.config().clone(),
        train: settings.clone(),
    };
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "config");
    s.push_str(&run.to_text());
    let _ = writeln!(s, "end");
    write_matrix(
        &mut s,
        &format!("adjacency {}", model.adjacency().nrows()),
        &model.adjacency().to_owned(),
    );
    for (name, value) in model.params().names().iter().zip(model.params().values()) {
        write_matrix(
            &mut s,
            &format!("param {name} {} {}", value.nrows(), value.ncols()),
            value,
        );
    }
    s
}

fn write_matrix(s: &mut String, header: &str, m: &Array2<f64>) {
    let _ = writeln!(s, "{header}");
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.inner.next().map(|(i, l)| {
            self.line = i + 1;
            l.trim()
        })
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| {
            Error::parse(
                self.line + 1,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.expect("matrix row")?;
            let before = data.len();
            for tok in l.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(self.line, format!("bad number {tok:?}")))?,
                );
            }
            if data.len() - before != cols {
                return Err(Error::parse(self.line, format!("expected {cols} values")));
            }
        }
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::parse(self.line, e.to_string()))
    }
}

/// Parses a checkpoint, returning the model and the training settings it
/// was saved with.
pub fn from_text(text: &str) -> Result<(Model, super::config::TrainSettings)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.expect("header")? != MAGIC {
        return Err(Error::parse(1, "not a logsig checkpoint"));
    }
    if lines.expect("config")? != "config" {
        return Err(Error::parse(lines.line, "expected `config`"));
    }
    let mut config_text = String::new();
    loop {
        let l = lines.expect("end")?;
        if l == "end" {
            break;
        }
        config_text.push_str(l);
        config_text.push('\n');
    }
    let run = RunConfig::parse(&config_text)?;

    let header = lines.expect("adjacency")?;
    let f: usize = header
        .strip_prefix("adjacency ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse(lines.line, "expected `adjacency <F>`"))?;
    let adjacency = lines.matrix(f, f)?;

    let mut entries = Vec::new();
    while let Some(l) = lines.next() {
        if l.is_empty() {
            continue;
        }
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "param" {
            return Err(Error::parse(
                lines.line,
                "expected `param <name> <rows> <cols>`",
            ));
        }
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(lines.line, "bad row count"))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| Error::parse(lines.line, "bad column count"))?;
        entries.push((parts[1].to_string(), lines.matrix(rows, cols)?));
    }
    let mut model = Model::new(run.model, Some(adjacency), 0)?;
    model.params_mut().load(entries)?;
    Ok((model, run.train))
}

pub fn save(path: &Path, model: &Model, settings: &super::config::TrainSettings) -> Result<()> {
    std::fs::write(path, to_text(model, settings)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Model, super::config::TrainSettings)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
