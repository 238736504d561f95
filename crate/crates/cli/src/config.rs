//! `key = value` override files for generator and training configuration.
//!
//! The format is deliberately tiny: one assignment per line, `#` comments,
//! blank lines ignored. Keys match the config struct fields; an unknown key
//! or unparsable value is a usage error so typos fail fast instead of
//! silently training with defaults.

use std::path::Path;

use pgrec_core::data::{FeedbackKind, GenConfig, RatingRule};
use pgrec_core::training::{LossKind, TrainConfig};

use crate::exit::{CliError, CliResult};

/// One assignment from an override file, with its 1-based line for messages.
pub struct Assignment {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_override_file(path: &Path) -> CliResult<Vec<Assignment>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{line}: expected `key = value`, got {content:?}",
                path.display()
            )));
        };
        out.push(Assignment {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn bad_value(path: &Path, a: &Assignment, expected: &str) -> CliError {
    CliError::usage(format!(
        "{}:{}: {} expects {expected}, got {:?}",
        path.display(),
        a.line,
        a.key,
        a.value
    ))
}

fn parse_num<T: std::str::FromStr>(path: &Path, a: &Assignment, expected: &str) -> CliResult<T> {
    a.value.parse().map_err(|_| bad_value(path, a, expected))
}

/// "40,55" -> (40, 55).
fn parse_pair(path: &Path, a: &Assignment) -> CliResult<(u32, u32)> {
    let parts: Vec<&str> = a.value.split(',').map(str::trim).collect();
    if parts.len() == 2 {
        if let (Ok(lo), Ok(hi)) = (parts[0].parse(), parts[1].parse()) {
            return Ok((lo, hi));
        }
    }
    Err(bad_value(path, a, "two integers `lo,hi`"))
}

fn parse_f64_pair(path: &Path, a: &Assignment) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = a.value.split(',').map(str::trim).collect();
    if parts.len() == 2 {
        if let (Ok(lo), Ok(hi)) = (parts[0].parse(), parts[1].parse()) {
            return Ok((lo, hi));
        }
    }
    Err(bad_value(path, a, "two numbers `lo,hi`"))
}

fn parse_deciles(path: &Path, a: &Assignment) -> CliResult<[f64; 10]> {
    let parts: Vec<&str> = a.value.split(',').map(str::trim).collect();
    if parts.len() == 10 {
        let mut out = [0.0; 10];
        let mut ok = true;
        for (slot, p) in out.iter_mut().zip(&parts) {
            match p.parse() {
                Ok(v) => *slot = v,
                Err(_) => ok = false,
            }
        }
        if ok {
            return Ok(out);
        }
    }
    Err(bad_value(path, a, "ten comma-separated weights"))
}

/// Apply overrides from `path` to a generator config.
pub fn apply_gen_overrides(config: &mut GenConfig, path: &Path) -> CliResult<()> {
    for a in parse_override_file(path)? {
        match a.key.as_str() {
            "n_users" => config.n_users = parse_num(path, &a, "an integer")?,
            "n_items" => config.n_items = parse_num(path, &a, "an integer")?,
            "n_groups" => config.n_groups = parse_num(path, &a, "an integer")?,
            "group_size" => config.group_size = parse_num(path, &a, "an integer")?,
            "heavy_fraction" => config.heavy_fraction = parse_num(path, &a, "a number")?,
            "heavy_purchases" => config.heavy_purchases = parse_pair(path, &a)?,
            "light_purchases" => config.light_purchases = parse_pair(path, &a)?,
            "taste_focus" => config.taste_focus = parse_num(path, &a, "a number")?,
            "decoy_focus" => config.decoy_focus = parse_num(path, &a, "a number")?,
            "positives_per_group" => config.positives_per_group = parse_num(path, &a, "an integer")?,
            "test_fraction" => config.test_fraction = parse_num(path, &a, "a number")?,
            "decile_weights" => config.decile_weights = parse_deciles(path, &a)?,
            "rho" => config.rho = parse_num(path, &a, "a number")?,
            "extra_buyers_max" => config.extra_buyers_max = parse_num(path, &a, "an integer")?,
            "price_range" => config.price_range = parse_f64_pair(path, &a)?,
            "feedback" => {
                config.feedback = FeedbackKind::parse(&a.value)
                    .map_err(|_| bad_value(path, &a, "`implicit` or `explicit`"))?;
            }
            "rating_rule" => {
                config.rating_rule = match a.value.as_str() {
                    "raters-only" => RatingRule::RatersOnly,
                    "all-members" => RatingRule::AllMembers,
                    _ => return Err(bad_value(path, &a, "`raters-only` or `all-members`")),
                };
            }
            _ => {
                return Err(CliError::usage(format!(
                    "{}:{}: unknown generator key {:?}",
                    path.display(),
                    a.line,
                    a.key
                )));
            }
        }
    }
    Ok(())
}

/// Apply overrides from `path` to a training config.
pub fn apply_train_overrides(config: &mut TrainConfig, path: &Path) -> CliResult<()> {
    for a in parse_override_file(path)? {
        match a.key.as_str() {
            "d" => config.d = parse_num(path, &a, "an integer")?,
            "batch_size" => config.batch_size = parse_num(path, &a, "an integer")?,
            "learning_rate" => config.learning_rate = parse_num(path, &a, "a number")?,
            "beta" => config.beta = parse_num(path, &a, "a number")?,
            "epochs" => config.epochs = parse_num(path, &a, "an integer")?,
            "patience" => config.patience = parse_num(path, &a, "an integer")?,
            "val_fraction" => config.val_fraction = parse_num(path, &a, "a number")?,
            "negatives_per_positive" => {
                config.negatives_per_positive = parse_num(path, &a, "an integer")?;
            }
            "loss" => {
                config.loss = parse_loss(&a.value)
                    .ok_or_else(|| bad_value(path, &a, "`pairwise`, `mse`, or `bce`"))?;
            }
            "seed" => config.seed = parse_num(path, &a, "an integer")?,
            _ => {
                return Err(CliError::usage(format!(
                    "{}:{}: unknown training key {:?}",
                    path.display(),
                    a.line,
                    a.key
                )));
            }
        }
    }
    Ok(())
}

pub fn parse_loss(s: &str) -> Option<LossKind> {
    match s {
        "pairwise" => Some(LossKind::Pairwise),
        "mse" => Some(LossKind::Mse),
        "bce" => Some(LossKind::Bce),
        _ => None,
    }
}
