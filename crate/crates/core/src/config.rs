//! Run configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! precision = "f64"
//!
//! [data]
//! train = "train.conll"
//! dev = "dev.conll"
//! vocab = "vocab.txt"
//!
//! [segmentation]
//! variant = "overlap"
//! max_segment_len = 128
//!
//! [encoder]
//! hidden_size = 16
//!
//! [scorer]
//! max_antecedents = "none"
//!
//! [train]
//! epochs = 20
//! ```
//!
//! Every section and key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::LengthUnit;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::{Aggregation, MatchPolicy};
use crate::model::{ModelConfig, Precision, ScorerConfig};
use crate::segment::SegmentationConfig;
use crate::train::TrainConfig;

/// Serde adapter writing `None` as the string `"none"`, for limits where
/// absence means unbounded. `"all"` and `"inf"` are accepted on input.
pub(crate) mod unbounded {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => x.serialize(s),
            None => s.serialize_str("none"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr<T> {
        Value(T),
        Word(String),
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<T>, D::Error> {
        match Repr::<T>::deserialize(d)? {
            Repr::Value(v) => Ok(Some(v)),
            Repr::Word(w) if matches!(w.as_str(), "none" | "all" | "inf") => Ok(None),
            Repr::Word(w) => Err(de::Error::custom(format!("expected a number or \"none\", found `{w}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<PathBuf>,
    /// Subword vocabulary; built from the training words when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub aggregation: Aggregation,
    pub gap_match: MatchPolicy,
    pub length_unit: LengthUnit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Seeds model initialization and training.
    pub seed: u64,
    pub precision: Precision,
    pub data: DataConfig,
    pub segmentation: SegmentationConfig,
    pub encoder: EncoderConfig,
    pub scorer: ScorerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Relative data paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let d = &mut config.data;
        for p in [&mut d.train, &mut d.dev, &mut d.test, &mut d.gap, &mut d.vocab].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Model configuration for a vocabulary of `vocab_size` entries. A
    /// non-zero `encoder.vocab_size` in the file must agree.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut encoder = self.encoder;
        if encoder.vocab_size != 0 && encoder.vocab_size != vocab_size {
            return Err(Error::config(format!(
                "encoder.vocab_size {} disagrees with the vocabulary ({vocab_size} entries)",
                encoder.vocab_size
            )));
        }
        encoder.vocab_size = vocab_size;
        let config = ModelConfig {
            encoder,
            segmentation: self.segmentation,
            scorer: self.scorer,
            precision: self.precision,
        };
        config.validate()?;
        Ok(config)
    }

    /// Training settings, seeded from the top-level seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
