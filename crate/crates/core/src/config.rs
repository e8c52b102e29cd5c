//! `key = value` run configuration for training.
//!
//! Blank lines and lines starting with `#` are skipped. Every key may appear
//! at most once; unknown keys are rejected. Relative paths are taken as
//! given, i.e. relative to the working directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::student::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub images: Option<PathBuf>,
    pub texts: Option<PathBuf>,
    pub teacher_img: Option<PathBuf>,
    pub teacher_txt: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub const KEYS: [&str; 24] = [
    "m",
    "k",
    "dim",
    "lambda",
    "tau_s",
    "tau_sg",
    "tau_ce",
    "lr",
    "epochs",
    "lr_drop_epoch",
    "batch_size",
    "seed",
    "joint",
    "gumbel",
    "target",
    "global_targets",
    "image_hidden",
    "text_hidden",
    "images",
    "texts",
    "teacher_img",
    "teacher_txt",
    "labels",
    "out",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("line {line}: bad value {value:?} for {key}: {e}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: {key} expects true or false, got {value:?}"
        ))),
    }
}

/// Comma-separated widths; an empty value means no hidden layer.
pub fn parse_widths(value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad layer width {w:?}")))
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line}: unknown key {key:?}")));
            }
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {line}: duplicate key {key:?}")));
            }
            seen.push(key);
            let t = &mut cfg.train;
            match key {
                "m" => t.m = parse(line, key, value)?,
                "k" => t.k = parse(line, key, value)?,
                "dim" => t.dim = parse(line, key, value)?,
                "lambda" => t.lambda = parse(line, key, value)?,
                "tau_s" => t.tau_s = parse(line, key, value)?,
                "tau_sg" => t.tau_sg = parse(line, key, value)?,
                "tau_ce" => t.tau_ce = parse(line, key, value)?,
                "lr" => t.lr = parse(line, key, value)?,
                "epochs" => t.epochs = parse(line, key, value)?,
                "lr_drop_epoch" => t.lr_drop_epoch = parse(line, key, value)?,
                "batch_size" => t.batch_size = parse(line, key, value)?,
                "seed" => t.seed = parse(line, key, value)?,
                "joint" => t.joint = parse_bool(line, key, value)?,
                "gumbel" => t.gumbel = parse_bool(line, key, value)?,
                "target" => t.target = value.parse()?,
                "global_targets" => t.global_targets = parse_bool(line, key, value)?,
                "image_hidden" => t.image_hidden = parse_widths(value)?,
                "text_hidden" => t.text_hidden = parse_widths(value)?,
                "images" => cfg.images = Some(value.into()),
                "texts" => cfg.texts = Some(value.into()),
                "teacher_img" => cfg.teacher_img = Some(value.into()),
                "teacher_txt" => cfg.teacher_txt = Some(value.into()),
                "labels" => cfg.labels = Some(value.into()),
                "out" => cfg.out = Some(value.into()),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
