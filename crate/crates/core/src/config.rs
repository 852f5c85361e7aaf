//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. A
//! `preset` key, wherever it appears, is applied before every other key.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::losses::Denominator;
use crate::pipeline::TrainConfig;
use crate::{Error, Result};

pub const KEYS: &[&str] = &[
    "preset",
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "shuffle",
    "tau",
    "alpha",
    "beta",
    "denominator",
    "depth",
    "hidden",
    "atom_vocab",
    "chirality_vocab",
    "bond_vocab",
    "direction_vocab",
    "edge_fusion",
];

/// Splits a config file into `(key, value)` pairs, reporting line numbers.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Applies one override to `cfg`.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let enc = &mut cfg.encoder;
    match key {
        "preset" => {
            *cfg = match value {
                "desk" => TrainConfig::desk(),
                "paper" => TrainConfig::paper(),
                _ => return Err(Error::Config(format!("unknown preset {value:?}"))),
            }
        }
        "epochs" => cfg.epochs = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "learning_rate" => cfg.adam.learning_rate = parse(key, value)?,
        "adam_beta1" => cfg.adam.beta1 = parse(key, value)?,
        "adam_beta2" => cfg.adam.beta2 = parse(key, value)?,
        "adam_eps" => cfg.adam.eps = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "shuffle" => cfg.shuffle = parse(key, value)?,
        "tau" => cfg.loss.tau = parse(key, value)?,
        "alpha" => cfg.loss.alpha = parse(key, value)?,
        "beta" => cfg.loss.beta = parse(key, value)?,
        "denominator" => {
            cfg.loss.denominator = match value {
                "strict" => Denominator::Strict,
                "inclusive" => Denominator::Inclusive,
                _ => {
                    return Err(Error::Config(format!(
                        "bad value {value:?} for denominator"
                    )))
                }
            }
        }
        "depth" => enc.depth = parse(key, value)?,
        "hidden" => enc.hidden = parse(key, value)?,
        "atom_vocab" => enc.vocab.atom = parse(key, value)?,
        "chirality_vocab" => enc.vocab.chirality = parse(key, value)?,
        "bond_vocab" => enc.vocab.bond = parse(key, value)?,
        "direction_vocab" => enc.vocab.direction = parse(key, value)?,
        "edge_fusion" => enc.edge_fusion = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Builds a config from the desk preset, then `file_pairs`, then `overrides`
/// (later wins), and validates the result.
pub fn resolve(
    file_pairs: &[(String, String)],
    overrides: &[(String, String)],
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::desk();
    let all: Vec<&(String, String)> = file_pairs.iter().chain(overrides).collect();
    if let Some((_, v)) = all.iter().rev().find(|(k, _)| k == "preset") {
        apply(&mut cfg, "preset", v)?;
    }
    for (k, v) in all {
        if k != "preset" {
            apply(&mut cfg, k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Renders the fully resolved configuration in the same `key = value` form.
pub fn render(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let denominator = match cfg.loss.denominator {
        Denominator::Strict => "strict",
        Denominator::Inclusive => "inclusive",
    };
    let rows: [(&str, String); 19] = [
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("learning_rate", cfg.adam.learning_rate.to_string()),
        ("adam_beta1", cfg.adam.beta1.to_string()),
        ("adam_beta2", cfg.adam.beta2.to_string()),
        ("adam_eps", cfg.adam.eps.to_string()),
        ("seed", cfg.seed.to_string()),
        ("shuffle", cfg.shuffle.to_string()),
        ("tau", cfg.loss.tau.to_string()),
        ("alpha", cfg.loss.alpha.to_string()),
        ("beta", cfg.loss.beta.to_string()),
        ("denominator", denominator.to_string()),
        ("depth", cfg.encoder.depth.to_string()),
        ("hidden", cfg.encoder.hidden.to_string()),
        ("atom_vocab", cfg.encoder.vocab.atom.to_string()),
        ("chirality_vocab", cfg.encoder.vocab.chirality.to_string()),
        ("bond_vocab", cfg.encoder.vocab.bond.to_string()),
        ("direction_vocab", cfg.encoder.vocab.direction.to_string()),
        ("edge_fusion", cfg.encoder.edge_fusion.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}
