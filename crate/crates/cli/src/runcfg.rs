//! Run configuration: plain-text key=value files mirroring the generation,
//! model, training, and cooperative-retrieval settings, with command-line
//! flags overriding file values and defaults underneath both. Unknown keys
//! are rejected and every run logs the fully resolved configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cmrr_core::corpus::PlantedSpec;
use cmrr_core::model::{LayerSkip, ModelConfig};
use cmrr_core::pipeline::{CoopConfig, Fusion};
use cmrr_core::train::{TrainConfig, TrainMode};

use crate::args::Flags;
use crate::{CliError, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "gen.pairs",
    "gen.tokens",
    "gen.dim",
    "gen.sigma",
    "gen.cpi",
    "gen.seed",
    "model.embed_dim",
    "model.layers",
    "model.layer_skip",
    "model.seed",
    "train.mode",
    "train.lr",
    "train.steps",
    "train.batch_pairs",
    "train.margin",
    "train.weight_decay",
    "train.checkpoint_every",
    "train.seed",
    "coop.k",
    "coop.fusion",
];

/// Which config key each CLI flag overrides.
pub const FLAG_TO_KEY: &[(&str, &str)] = &[
    ("pairs", "gen.pairs"),
    ("tokens", "gen.tokens"),
    ("dim", "gen.dim"),
    ("sigma", "gen.sigma"),
    ("cpi", "gen.cpi"),
    ("embed-dim", "model.embed_dim"),
    ("layers", "model.layers"),
    ("layer-skip", "model.layer_skip"),
    ("mode", "train.mode"),
    ("lr", "train.lr"),
    ("steps", "train.steps"),
    ("batch-pairs", "train.batch_pairs"),
    ("margin", "train.margin"),
    ("weight-decay", "train.weight_decay"),
    ("checkpoint-every", "train.checkpoint_every"),
    ("k", "coop.k"),
    ("fusion", "coop.fusion"),
];

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut values = BTreeMap::new();
        let set = |m: &mut BTreeMap<String, String>, k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        set(&mut values, "gen.pairs", "100".into());
        set(&mut values, "gen.tokens", "4".into());
        set(&mut values, "gen.dim", "16".into());
        set(&mut values, "gen.sigma", "0.15".into());
        set(&mut values, "gen.cpi", "1".into());
        set(&mut values, "gen.seed", "0".into());
        set(&mut values, "model.embed_dim", "32".into());
        set(&mut values, "model.layers", "2".into());
        set(&mut values, "model.layer_skip", "full".into());
        set(&mut values, "model.seed", "0".into());
        set(&mut values, "train.mode", "joint".into());
        set(&mut values, "train.lr", "0.01".into());
        set(&mut values, "train.steps", "1000".into());
        set(&mut values, "train.batch_pairs", "128".into());
        set(&mut values, "train.margin", "0.1".into());
        set(&mut values, "train.weight_decay", "0.05".into());
        set(&mut values, "train.checkpoint_every", "100".into());
        set(&mut values, "train.seed", "0".into());
        set(&mut values, "coop.k", "20".into());
        set(&mut values, "coop.fusion", "ce".into());
        RunConfig { values }
    }
}

fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("config line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Validation(format!(
                "config line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// defaults < file < flags, with `--seed` feeding every `*.seed` key.
    pub fn resolve(config_path: Option<&Path>, flags: &Flags) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            for (k, v) in parse_kv_text(&text)? {
                config.values.insert(k, v);
            }
        }
        for (flag, key) in FLAG_TO_KEY {
            if let Some(v) = flags.get(flag) {
                config.values.insert(key.to_string(), v.to_string());
            }
        }
        if let Some(seed) = flags.get("seed") {
            for key in ["gen.seed", "model.seed", "train.seed"] {
                config.values.insert(key.to_string(), seed.to_string());
            }
        }
        Ok(config)
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or("")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Validation(format!("config {key}: cannot parse '{}'", self.get(key))))
    }

    pub fn planted_spec(&self) -> Result<PlantedSpec> {
        Ok(PlantedSpec {
            n_pairs: self.num("gen.pairs")?,
            tokens_per_item: self.num("gen.tokens")?,
            feature_dim: self.num("gen.dim")?,
            noise_sigma: self.num("gen.sigma")?,
            captions_per_image: self.num("gen.cpi")?,
            seed: self.num("gen.seed")?,
        })
    }

    pub fn model_config(&self, feature_dim: usize) -> Result<ModelConfig> {
        let layer_skip = match self.get("model.layer_skip") {
            "full" => LayerSkip::Full,
            "skip-odd" => LayerSkip::SkipOdd,
            other => {
                return Err(CliError::Validation(format!(
                    "model.layer_skip must be 'full' or 'skip-odd', got '{other}'"
                )))
            }
        };
        Ok(ModelConfig {
            feature_dim,
            embed_dim: self.num("model.embed_dim")?,
            trunk_layers: self.num("model.layers")?,
            layer_skip,
            seed: self.num("model.seed")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mode = match self.get("train.mode") {
            "be" => TrainMode::Be,
            "ce" => TrainMode::Ce,
            "joint" => TrainMode::Joint,
            other => {
                return Err(CliError::Validation(format!(
                    "train.mode must be be|ce|joint, got '{other}'"
                )))
            }
        };
        Ok(TrainConfig {
            mode,
            learning_rate: self.num("train.lr")?,
            steps: self.num("train.steps")?,
            batch_pairs: self.num("train.batch_pairs")?,
            margin_alpha: self.num("train.margin")?,
            weight_decay: self.num("train.weight_decay")?,
            checkpoint_every: self.num("train.checkpoint_every")?,
            seed: self.num("train.seed")?,
        })
    }

    pub fn coop_config(&self) -> Result<CoopConfig> {
        Ok(CoopConfig {
            k: self.num("coop.k")?,
            fusion: parse_fusion(self.get("coop.fusion"))?,
        })
    }

    /// The resolved key=value snapshot, one key per line, sorted.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Parses `ce`, `add:<lambda>`, or `normadd:<lambda>`.
pub fn parse_fusion(raw: &str) -> Result<Fusion> {
    if raw == "ce" {
        return Ok(Fusion::CeOnly);
    }
    if let Some(lambda) = raw.strip_prefix("add:") {
        let lambda: f64 = lambda
            .parse()
            .map_err(|_| CliError::Validation(format!("bad fusion lambda '{raw}'")))?;
        return Ok(Fusion::Add(lambda));
    }
    if let Some(lambda) = raw.strip_prefix("normadd:") {
        let lambda: f64 = lambda
            .parse()
            .map_err(|_| CliError::Validation(format!("bad fusion lambda '{raw}'")))?;
        return Ok(Fusion::NormAdd(lambda));
    }
    Err(CliError::Validation(format!(
        "fusion must be ce, add:<lambda>, or normadd:<lambda>, got '{raw}'"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_into_valid_configs() {
        let config = RunConfig::default();
        let spec = config.planted_spec().unwrap();
        assert_eq!(spec.n_pairs, 100);
        let train = config.train_config().unwrap();
        assert_eq!(train.batch_pairs, 128);
        assert_eq!(train.checkpoint_every, 100);
        let coop = config.coop_config().unwrap();
        assert_eq!(coop.k, 20);
        assert_eq!(coop.fusion, Fusion::CeOnly);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = parse_kv_text("gen.pairs=5\nbogus.key=1").unwrap_err();
        assert!(err.to_string().contains("unknown key 'bogus.key'"));
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let dir = std::env::temp_dir().join(format!("cmrr-runcfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "gen.pairs=7\ngen.sigma=2.5\n").unwrap();
        let args: Vec<String> = ["--pairs", "9"].iter().map(|s| s.to_string()).collect();
        let flags = Flags::parse(&args, &["pairs"]).unwrap();
        let config = RunConfig::resolve(Some(&path), &flags).unwrap();
        let spec = config.planted_spec().unwrap();
        assert_eq!(spec.n_pairs, 9, "flag wins over file");
        assert_eq!(spec.noise_sigma, 2.5, "file wins over default");
        assert_eq!(spec.tokens_per_item, 4, "default survives");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fusion_strings_parse() {
        assert_eq!(parse_fusion("ce").unwrap(), Fusion::CeOnly);
        assert_eq!(parse_fusion("add:0.5").unwrap(), Fusion::Add(0.5));
        assert_eq!(parse_fusion("normadd:0.1").unwrap(), Fusion::NormAdd(0.1));
        assert!(parse_fusion("max").is_err());
    }
}
