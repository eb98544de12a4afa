//! Structured-text checkpoints: a config echo, named parameter arrays, and
//! optionally the normalization stats captured at fine-tuning time.
//!
//! Values are written with the shortest round-trip decimal formatting, so a
//! save/load cycle reproduces every f64 bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::numerics::Tensor;
use crate::scalar::Scalar;
use crate::training::NormStats;

use super::{ModelConfig, ModelParams};

const HEADER: &str = "strand checkpoint v1";

/// Everything needed to resume or deploy a model.
#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub config: ModelConfig,
    pub params: ModelParams<F>,
    /// Present once fine-tuning has fixed the target normalization.
    pub norm_stats: Option<NormStats<F>>,
}

/// Write a checkpoint, atomically replacing `path`.
pub fn save_checkpoint<F: Scalar>(path: &Path, ckpt: &Checkpoint<F>) -> Result<(), Error> {
    ckpt.params.validate_shapes(&ckpt.config)?;
    let config_text = toml::to_string(&ckpt.config)
        .map_err(|e| Error::Usage(format!("config serialization: {e}")))?;
    let mut out = String::new();
    out.push_str(HEADER);
    out.push_str("\n[config]\n");
    out.push_str(&config_text);
    for (name, tensor) in ckpt.params.named() {
        write_tensor(&mut out, &name, tensor);
    }
    if let Some(stats) = &ckpt.norm_stats {
        let _ = write!(out, "\n[norm_stats {}]\n", stats.dims());
        push_row(&mut out, "min", &stats.mins);
        push_row(&mut out, "max", &stats.maxs);
    }
    out.push_str("\n[end]\n");

    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, out.as_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_tensor<F: Scalar>(out: &mut String, name: &str, t: &Tensor<F>) {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    let _ = write!(out, "\n[param {name} {}]\n", dims.join(" "));
    let cols = *t.shape().last().unwrap();
    for row in t.data().chunks(cols) {
        push_row_values(out, row);
    }
}

fn push_row<F: Scalar>(out: &mut String, label: &str, values: &[F]) {
    out.push_str(label);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

fn push_row_values<F: Scalar>(out: &mut String, values: &[F]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        offset: line,
        msg: msg.into(),
    }
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    /// 1-based number of the most recently yielded line.
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.iter.next().inspect(|_| self.line += 1)
    }

    fn next_nonempty(&mut self) -> Option<&'a str> {
        loop {
            let l = self.next()?;
            if !l.trim().is_empty() {
                return Some(l);
            }
        }
    }
}

/// Read a checkpoint written by [`save_checkpoint`]. Parse errors report the
/// 1-based line number as the offset.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>, Error> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines {
        iter: text.lines(),
        line: 0,
    };
    match lines.next_nonempty() {
        Some(l) if l.trim() == HEADER => {}
        _ => return Err(parse_err(lines.line, format!("expected header `{HEADER}`"))),
    }

    // The config section must come first: parameter shapes depend on it.
    let mut config: Option<ModelConfig> = None;
    let mut layout: HashMap<String, Vec<usize>> = HashMap::new();
    let mut tensors: HashMap<String, Tensor<F>> = HashMap::new();
    let mut norm_stats: Option<NormStats<F>> = None;
    let mut saw_end = false;

    while let Some(raw) = lines.next_nonempty() {
        let line = raw.trim();
        let at = lines.line;
        if !(line.starts_with('[') && line.ends_with(']')) {
            return Err(parse_err(at, format!("expected a section header, got `{line}`")));
        }
        let inner = &line[1..line.len() - 1];
        let mut words = inner.split_whitespace();
        match words.next() {
            Some("config") => {
                if config.is_some() {
                    return Err(parse_err(at, "duplicate [config] section"));
                }
                let cfg = parse_config(&mut lines)?;
                layout = ModelParams::<F>::layout(&cfg)?.into_iter().collect();
                config = Some(cfg);
            }
            Some("param") => {
                let cfg_present = config.is_some();
                if !cfg_present {
                    return Err(parse_err(at, "[param] section before [config]"));
                }
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(at, "parameter section without a name"))?;
                let dims: Vec<usize> = words
                    .map(|w| {
                        w.parse::<usize>()
                            .map_err(|_| parse_err(at, format!("bad dimension `{w}`")))
                    })
                    .collect::<Result<_, _>>()?;
                let expected = layout
                    .get(name)
                    .ok_or_else(|| parse_err(at, format!("unknown parameter `{name}`")))?;
                if *expected != dims {
                    return Err(parse_err(
                        at,
                        format!("parameter `{name}` has shape {dims:?}, config implies {expected:?}"),
                    ));
                }
                if tensors.contains_key(name) {
                    return Err(parse_err(at, format!("duplicate parameter `{name}`")));
                }
                let tensor = parse_tensor(&mut lines, &dims)?;
                tensors.insert(name.to_string(), tensor);
            }
            Some("norm_stats") => {
                let d: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| parse_err(at, "norm_stats section needs a channel count"))?;
                let mins = parse_labeled_row::<F>(&mut lines, "min", d)?;
                let maxs = parse_labeled_row::<F>(&mut lines, "max", d)?;
                norm_stats = Some(NormStats { mins, maxs });
            }
            Some("end") => {
                saw_end = true;
                break;
            }
            _ => return Err(parse_err(at, format!("unknown section `{inner}`"))),
        }
    }
    if !saw_end {
        return Err(parse_err(lines.line, "truncated checkpoint: missing [end]"));
    }
    let config = config.ok_or_else(|| parse_err(lines.line, "missing [config] section"))?;
    let end_line = lines.line;
    let params = ModelParams::from_named(&config, &mut |name, _shape| {
        tensors
            .remove(name)
            .map(|t| t.with_grad())
            .ok_or_else(|| parse_err(end_line, format!("missing parameter `{name}`")))
    })?;
    Ok(Checkpoint {
        config,
        params,
        norm_stats,
    })
}

fn parse_config(lines: &mut Lines) -> Result<ModelConfig, Error> {
    let start = lines.line + 1;
    let mut body = String::new();
    // Peek-free scan: the config body runs until the next section header.
    loop {
        let saved = lines.iter.clone();
        let saved_line = lines.line;
        match lines.next() {
            None => break,
            Some(l) if l.trim_start().starts_with('[') => {
                lines.iter = saved;
                lines.line = saved_line;
                break;
            }
            Some(l) => {
                body.push_str(l);
                body.push('\n');
            }
        }
    }
    toml::from_str(&body).map_err(|e| parse_err(start, format!("config: {e}")))
}

fn parse_tensor<F: Scalar>(lines: &mut Lines, dims: &[usize]) -> Result<Tensor<F>, Error> {
    let (rows, cols) = match *dims {
        [len] => (1, len),
        [r, c] => (r, c),
        _ => return Err(parse_err(lines.line, format!("unsupported rank {dims:?}"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let at = lines.line + 1;
        let l = lines
            .next_nonempty()
            .ok_or_else(|| parse_err(at, "unexpected end of file in parameter values"))?;
        let at = lines.line;
        let mut count = 0usize;
        for tok in l.split_whitespace() {
            let v = F::from_str(tok)
                .map_err(|_| parse_err(at, format!("bad numeric value `{tok}`")))?;
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(at, format!("expected {cols} values, found {count}")));
        }
    }
    Ok(Tensor::new(data, dims.to_vec()))
}

fn parse_labeled_row<F: Scalar>(
    lines: &mut Lines,
    label: &str,
    len: usize,
) -> Result<Vec<F>, Error> {
    let at = lines.line + 1;
    let l = lines
        .next_nonempty()
        .ok_or_else(|| parse_err(at, format!("missing `{label}` row")))?;
    let at = lines.line;
    let mut words = l.split_whitespace();
    if words.next() != Some(label) {
        return Err(parse_err(at, format!("expected `{label}` row")));
    }
    let vals: Vec<F> = words
        .map(|tok| {
            F::from_str(tok).map_err(|_| parse_err(at, format!("bad numeric value `{tok}`")))
        })
        .collect::<Result<_, _>>()?;
    if vals.len() != len {
        return Err(parse_err(
            at,
            format!("`{label}` row has {} values, expected {len}", vals.len()),
        ));
    }
    Ok(vals)
}
