use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ner::DecoderKind;
use crate::pooling::PoolingKind;

/// Everything that defines a training run. Stored as TOML; any field can be
/// overridden with [`TrainConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pooling: PoolingKind,
    pub decoder: DecoderKind,
    pub masking: bool,
    pub dropout: f64,
    pub alpha: f64,
    pub filter_impossible: bool,
    pub filter_overlapping: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// 0 disables weight decay.
    pub weight_decay: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Label embedding size.
    pub u: usize,
    /// Width embedding size.
    pub v: usize,
    /// Longest span width with its own embedding.
    pub l: usize,
    /// Negative relation samples per sentence.
    pub n_rel: usize,
    /// Encoder output size.
    pub d: usize,
    pub encoder_layers: usize,
    pub vocab_size: usize,
    pub warmup: f64,
    pub ner_weight: f64,
    pub rel_weight: f64,
    /// Precomputed-embedding file replacing the trainable encoder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pooling: PoolingKind::Bigru,
            decoder: DecoderKind::GruLm,
            masking: true,
            dropout: 0.1,
            alpha: 0.5,
            filter_impossible: true,
            filter_overlapping: true,
            batch_size: 2,
            learning_rate: 1e-5,
            weight_decay: 0.01,
            grad_norm: 1.0,
            epochs: 20,
            seed: 42,
            u: 128,
            v: 25,
            l: 30,
            n_rel: 100,
            d: 64,
            encoder_layers: 2,
            vocab_size: 4000,
            warmup: 0.1,
            ner_weight: 1.0,
            rel_weight: 1.0,
            embeddings: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 8 bytes of the SHA-256 of the TOML form.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// Overrides one field. `value` is read as a TOML value, falling back to a
    /// plain string, so `pooling=mean` and `dropout=0.2` both work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("own output parses");
        let known = Self::keys();
        if !known.contains(&key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let parsed = toml::from_str::<toml::Table>(&format!("x = {value}"))
            .ok()
            .and_then(|mut t| t.remove("x"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parsed = match (&table.get(key), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key} = {value}: {}", e.message())))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// Field names in declaration order.
    pub fn keys() -> Vec<&'static str> {
        vec![
            "pooling",
            "decoder",
            "masking",
            "dropout",
            "alpha",
            "filter_impossible",
            "filter_overlapping",
            "batch_size",
            "learning_rate",
            "weight_decay",
            "grad_norm",
            "epochs",
            "seed",
            "u",
            "v",
            "l",
            "n_rel",
            "d",
            "encoder_layers",
            "vocab_size",
            "warmup",
            "ner_weight",
            "rel_weight",
            "embeddings",
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return fail(format!("d must be even and positive, got {}", self.d));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.learning_rate < 0.0 || self.learning_rate.is_nan() {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 || self.grad_norm < 0.0 {
            return fail("weight_decay and grad_norm must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return fail(format!("warmup must be in [0, 1], got {}", self.warmup));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.l == 0 || self.encoder_layers == 0 {
            return fail("batch_size, epochs, l and encoder_layers must be positive".into());
        }
        if self.vocab_size < 2 {
            return fail("vocab_size must be at least 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_best_grid_point() {
        let c = TrainConfig::default();
        assert_eq!((c.pooling, c.decoder, c.masking), (PoolingKind::Bigru, DecoderKind::GruLm, true));
        assert_eq!((c.dropout, c.alpha, c.batch_size), (0.1, 0.5, 2));
        assert_eq!((c.learning_rate, c.weight_decay, c.grad_norm), (1e-5, 0.01, 1.0));
        assert_eq!((c.u, c.v, c.n_rel, c.seed), (128, 25, 100, 42));
    }

    #[test]
    fn toml_round_trip_and_partial() {
        let c = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = TrainConfig::from_toml("pooling = \"max\"\nepochs = 3\n").unwrap();
        assert_eq!((p.pooling, p.epochs), (PoolingKind::Max, 3));
        assert!(TrainConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn set_overrides() {
        let mut c = TrainConfig::default();
        c.set("pooling", "mean").unwrap();
        c.set("dropout", "0.2").unwrap();
        c.set("weight_decay", "0").unwrap();
        c.set("masking", "false").unwrap();
        c.set("decoder", "crf_lm").unwrap();
        assert_eq!(c.pooling, PoolingKind::Mean);
        assert_eq!((c.dropout, c.weight_decay, c.masking), (0.2, 0.0, false));
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.set("alpha", "1.5").is_err());
        assert!(c.set("learning_rate", "-1").is_err());
        assert!(c.set("pooling", "min").is_err());
        assert_eq!(c.pooling, PoolingKind::Mean);
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "43").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn every_field_is_a_key() {
        let table: toml::Table = toml::from_str(&TrainConfig::default().to_toml()).unwrap();
        let keys = TrainConfig::keys();
        for k in table.keys() {
            assert!(keys.contains(&k.as_str()), "{k}");
        }
        assert_eq!(table.len() + 1, keys.len());
    }
}
