//! Flat `key = value` run configuration with command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::data::{Schema, SynthSpec};
use crate::experiment::Variant;
use crate::model::{Ablation, ModelConfig, OutputMode};
use crate::training::{AdamParams, LossKind, TrainConfig};

use super::CliError;

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    // data
    ("interactions", "data/interactions.tsv"),
    ("side_info", "data/side_info.tsv"),
    ("source", "src"),
    ("target", "tgt1"),
    ("input_schema", "auto"),
    ("binarize_threshold", "4"),
    ("max_malformed_frac", "0.01"),
    // split
    ("beta", "0.2"),
    ("split_seed", "0"),
    ("causal", "true"),
    // model
    ("variant", "dacdr"),
    ("embed_dim", "16"),
    ("attn_dim", "16"),
    ("max_seq_len", "20"),
    ("channels", "2"),
    ("encoder_hidden", "64,32"),
    ("head_hidden", "64,32"),
    ("output_mode", "logit"),
    ("attention", "gated"),
    ("user_transfer", "domain_encoder"),
    // training
    ("seed", "0"),
    ("loss", "auto"),
    ("optimizer", "adam"),
    ("lr", "0.002"),
    ("batch_size", "32"),
    ("epochs", "10"),
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("freeze", ""),
    ("grad_diag", "false"),
    // synthetic data
    ("out", "data"),
    ("users", "3000"),
    ("src_items", "400"),
    ("tgt_items", "200"),
    ("overlap", "0.7"),
    ("latent_dim", "2"),
    ("angle", "0"),
    ("noise", "0.05"),
    ("target_domains", "1"),
    ("src_events", "80"),
    ("tgt_events", "6"),
    ("categories", "12"),
    ("sharpness", "10"),
    ("selectivity", "6"),
    ("interests", "1"),
    ("distractor_frac", "0.3"),
    // artifacts
    ("checkpoint", "model.ckpt"),
    ("report", ""),
    ("base", ""),
    // evaluation and checks
    ("sweep_beta", ""),
    ("sweep", "none"),
    ("op", ""),
    ("eps", "1e-5"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Keys set from a file or flag rather than defaulted.
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            explicit: BTreeSet::new(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// `foo-bar` and `foo_bar` name the same key.
fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = normalize(key);
        if !known(&key) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.clone(), value.trim().to_string());
        self.explicit.insert(key);
        Ok(())
    }

    /// `base` with this config's explicitly set keys applied on top.
    pub fn over(&self, mut base: RunConfig) -> RunConfig {
        for k in &self.explicit {
            base.values.insert(k.clone(), self.values[k].clone());
            base.explicit.insert(k.clone());
        }
        base
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Applies `--key value` and `--key=value` pairs.
    pub fn merge_flags(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected `--key value`, found `{arg}`")))?;
            let (k, v) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("flag `--{flag}` needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            };
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Stored pairs, e.g. from checkpoint metadata; unknown keys are skipped.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Self {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            if known(k) {
                cfg.values.insert(k.clone(), v.clone());
            }
        }
        cfg
    }

    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    /// The configuration as a loadable config file.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key);
        raw.parse()
            .map_err(|e| CliError::Usage(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Usage(format!("bad entry `{s}` in `{key}`: {e}")))
            })
            .collect()
    }

    /// Empty string means unset.
    pub fn path(&self, key: &str) -> Option<&Path> {
        let v = self.str(key);
        (!v.is_empty()).then(|| Path::new(v))
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        self.get("variant")
    }

    pub fn output_mode(&self) -> Result<OutputMode, CliError> {
        self.get("output_mode")
    }

    pub fn model(&self) -> Result<ModelConfig, CliError> {
        let cfg = ModelConfig {
            embed_dim: self.get("embed_dim")?,
            attn_dim: self.get("attn_dim")?,
            max_seq_len: self.get("max_seq_len")?,
            channels: self.get("channels")?,
            encoder_hidden: self.list("encoder_hidden")?,
            head_hidden: self.list("head_hidden")?,
            output_mode: self.output_mode()?,
            attention: self.get("attention")?,
            ablation: self.variant()?.ablation().unwrap_or(Ablation::Full),
            user_transfer: self.get("user_transfer")?,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let loss = match self.str("loss") {
            "auto" => LossKind::for_mode(self.output_mode()?),
            _ => self.get("loss")?,
        };
        let cfg = TrainConfig {
            loss,
            lr: self.get("lr")?,
            optimizer: self.get("optimizer")?,
            adam: AdamParams {
                beta1: self.get("adam_beta1")?,
                beta2: self.get("adam_beta2")?,
                eps: self.get("adam_eps")?,
            },
            batch_size: self.get("batch_size")?,
            epochs: self.get("epochs")?,
            seed: self.get("seed")?,
            freeze_groups: self.list("freeze")?,
            grad_diag: self.get("grad_diag")?,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.check_mode(self.output_mode()?)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Schema of the input file: `auto` follows `output_mode`.
    pub fn input_schema(&self) -> Result<Schema, CliError> {
        match self.str("input_schema") {
            "auto" => Ok(crate::experiment::schema_for(self.output_mode()?)),
            "logit" => Ok(Schema::Logit),
            "rating" => Ok(Schema::Rating),
            other => Err(CliError::Usage(format!(
                "bad value `{other}` for `input_schema` (expected auto, logit or rating)"
            ))),
        }
    }

    pub fn synth(&self) -> Result<SynthSpec, CliError> {
        let spec = SynthSpec {
            n_users: self.get("users")?,
            n_items_src: self.get("src_items")?,
            n_items_tgt: self.get("tgt_items")?,
            overlap_frac: self.get("overlap")?,
            latent_dim: self.get("latent_dim")?,
            domain_shift_angle: self.get("angle")?,
            noise: self.get("noise")?,
            seed: self.get("seed")?,
            mode: crate::experiment::schema_for(self.output_mode()?),
            n_target_domains: self.get("target_domains")?,
            src_events: self.get("src_events")?,
            tgt_events: self.get("tgt_events")?,
            n_categories: self.get("categories")?,
            sharpness: self.get("sharpness")?,
            selectivity: self.get("selectivity")?,
            interests: self.get("interests")?,
            distractor_frac: self.get("distractor_frac")?,
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}
