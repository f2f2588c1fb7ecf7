//! Plain-text `key = value` configuration. `#` starts a comment. Unknown
//! keys are rejected; omitted keys keep their defaults.

use std::path::Path;
use std::str::FromStr;

use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::metrics::{EvalPolicy, SIMILARITY_CROP_ROWS};
use crate::types::{BinPartition, LossConfig, SsimParams};

pub const CONFIG_KEYS: [&str; 22] = [
    "sigma",
    "cutoff",
    "norm_mode",
    "alpha",
    "beta",
    "ssim.window",
    "ssim.window_sigma",
    "ssim.data_range",
    "clamp_eps",
    "bins",
    "min_depth",
    "max_depth",
    "steps",
    "peak_lr",
    "pct_start",
    "div_factor",
    "final_div_factor",
    "seed",
    "crop_top_rows",
    "min_eval_depth",
    "max_eval_depth",
    "clamp_pred",
];

/// Everything a configuration file controls. `distill.loss` equals `loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub distill: DistillConfig,
    pub eval: EvalPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut loss = LossConfig::default();
    let mut base = DistillConfig::default();
    let mut eval = EvalPolicy {
        crop_top_rows: SIMILARITY_CROP_ROWS,
        ..EvalPolicy::default()
    };
    let (mut bins, mut min_depth, mut max_depth) = (257usize, 0.0f64, 80.0f64);
    let mut window = SsimParams::default().window;
    let mut window_sigma = SsimParams::default().window_sigma;
    let mut data_range: Option<f64> = None;
    let mut steps = base.steps;
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config {
                line: line_no,
                message: format!("duplicate key \"{key}\""),
            });
        }
        seen.push(key.to_string());
        let bad = |e: String| Error::Config {
            line: line_no,
            message: format!("{key}: {e}"),
        };
        match key {
            "sigma" => loss.sigma = parse(value).map_err(bad)?,
            "cutoff" => loss.cutoff = parse(value).map_err(bad)?,
            "norm_mode" => loss.norm_mode = value.parse().map_err(|e: Error| bad(e.to_string()))?,
            "alpha" => loss.alpha = parse(value).map_err(bad)?,
            "beta" => loss.beta = parse(value).map_err(bad)?,
            "ssim.window" => window = parse(value).map_err(bad)?,
            "ssim.window_sigma" => window_sigma = parse(value).map_err(bad)?,
            "ssim.data_range" => data_range = Some(parse(value).map_err(bad)?),
            "clamp_eps" => loss.clamp_eps = parse(value).map_err(bad)?,
            "bins" => bins = parse(value).map_err(bad)?,
            "min_depth" => min_depth = parse(value).map_err(bad)?,
            "max_depth" => max_depth = parse(value).map_err(bad)?,
            "steps" => steps = parse(value).map_err(bad)?,
            "peak_lr" => base.schedule.peak_lr = parse(value).map_err(bad)?,
            "pct_start" => base.schedule.pct_start = parse(value).map_err(bad)?,
            "div_factor" => base.schedule.div_factor = parse(value).map_err(bad)?,
            "final_div_factor" => base.schedule.final_div_factor = parse(value).map_err(bad)?,
            "seed" => base.seed = parse(value).map_err(bad)?,
            "crop_top_rows" => eval.crop_top_rows = parse(value).map_err(bad)?,
            "min_eval_depth" => eval.min_eval_depth = parse(value).map_err(bad)?,
            "max_eval_depth" => eval.max_eval_depth = parse(value).map_err(bad)?,
            "clamp_pred" => eval.clamp_pred = parse_bool(value).map_err(bad)?,
            _ => unreachable!("key list checked above"),
        }
    }

    let partition = BinPartition::uniform(bins, min_depth, max_depth)?;
    loss.ssim = SsimParams::with_window(window, window_sigma, data_range.unwrap_or(max_depth - min_depth));
    loss.validate()?;
    eval.validate()?;
    let distill = DistillConfig {
        loss: loss.clone(),
        partition,
        ..base
    }
    .with_steps(steps);
    distill.validate()?;
    Ok(RunConfig { loss, distill, eval })
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{value:?} is not a boolean")),
    }
}
