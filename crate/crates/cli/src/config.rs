//! Flat `key=value` config files. Each entry becomes `--key value` placed
//! ahead of the command-line flags, so flags given explicitly win.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Parses a config file into `(key, value)` pairs. `#` starts a comment.
pub fn parse(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() {
            return Err(CliError::config(format!("config line {}: empty key", i + 1)));
        }
        if k == "config" {
            return Err(CliError::config(format!("config line {}: nested config files are not supported", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn to_flags(pairs: &[(String, String)]) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    Ok(out)
}

fn config_path(args: &[String]) -> CliResult<Option<String>> {
    let mut found = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it.next().ok_or_else(|| CliError::config("--config needs a path"))?;
            found = Some(p.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(p.to_string());
        }
    }
    Ok(found)
}

fn subcommand_position(args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--jobs" || a == "--config" {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Splices the entries of `--config FILE` into `args` right after the
/// subcommand name.
pub fn expand(args: Vec<String>) -> CliResult<Vec<String>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::config(format!("cannot read config file {path}: {e}")))?;
    let flags = to_flags(&parse(&text)?)?;
    let Some(pos) = subcommand_position(&args) else {
        return Err(CliError::config("a subcommand is required"));
    };
    let mut out = args[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// How bandwidths are chosen by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthSpec {
    Fixed { values: Vec<f64> },
    Grid { a: f64, h_max: f64 },
    Oracle,
    Adaptive,
}

/// The settings that define a run. Release embeds it in the dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub kernel: String,
    pub mechanism: String,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub bandwidths: BandwidthSpec,
    pub t: Option<f64>,
    /// Curve grid as written on the command line.
    pub points: Option<String>,
    pub seed: u64,
    pub output: String,
    /// Observations file, when the run reads one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl RunConfig {
    /// The config file that reproduces this run.
    pub fn to_config_file(&self) -> String {
        let mut lines = vec![
            format!("kernel={}", self.kernel),
            format!("mechanism={}", self.mechanism),
            format!("alpha={}", privkde::fmt_f64(self.alpha)),
            format!("beta={}", privkde::fmt_f64(self.beta)),
            format!("seed={}", self.seed),
            format!("out={}", self.output),
        ];
        match &self.bandwidths {
            BandwidthSpec::Fixed { values } => {
                let v: Vec<String> = values.iter().map(|h| privkde::fmt_f64(*h)).collect();
                lines.push(format!("h={}", v.join(",")));
            }
            BandwidthSpec::Grid { a, h_max } => {
                lines.push(format!("grid-a={}", privkde::fmt_f64(*a)));
                lines.push(format!("h-max={}", privkde::fmt_f64(*h_max)));
            }
            BandwidthSpec::Oracle | BandwidthSpec::Adaptive => {}
        }
        if let Some(p) = &self.points {
            lines.push(format!("points={p}"));
        }
        if let Some(t) = self.t {
            lines.push(format!("t={}", privkde::fmt_f64(t)));
        }
        if let Some(i) = &self.input {
            lines.push(format!("input={i}"));
        }
        lines.join("\n") + "\n"
    }
}
