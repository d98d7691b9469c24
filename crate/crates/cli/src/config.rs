//! Config file and flag resolution.
//!
//! The config file is JSON whose keys are the long flag names with dashes
//! replaced by underscores. A flag given on the command line wins.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use verba_core::backends::{Backend, FanOutPolicy, HttpBackend, MockBackend, MockTable};
use verba_core::model::{Modality, ModelSpec, SamplerSettings};

use crate::args::{AggregationChoice, Common, OutputFormat, TemplateChoice};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Short(String),
    Full(ModelSpec),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub temp_lo: Option<f64>,
    pub temp_hi: Option<f64>,
    pub temp_steps: Option<usize>,
    pub variants: Option<usize>,
    pub generator: Option<String>,
    pub reps: Option<u32>,
    pub template: Option<String>,
    pub aggregation: Option<String>,
    pub format: Option<String>,
    pub capsule_dir: Option<PathBuf>,
    #[serde(default)]
    pub mock: bool,
    pub mock_table: Option<PathBuf>,
    pub no_capsule: Option<bool>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// `provider:model_id[:modality]`.
pub fn parse_model(s: &str, default_modality: Modality) -> Result<ModelSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let modality = match parts.get(2).copied() {
        None => default_modality,
        Some("chat") => Modality::Chat,
        Some("completion") | Some("completion_with_logprobs") => Modality::CompletionWithLogprobs,
        Some("embedding") => Modality::Embedding,
        Some(other) => bail!("unknown modality {other:?} in model {s:?}"),
    };
    match parts.as_slice() {
        [provider, model, ..] if parts.len() <= 3 && !provider.is_empty() && !model.is_empty() => {
            Ok(ModelSpec::new(provider, model, modality))
        }
        _ => bail!("model {s:?} is not of the form provider:model_id[:modality]"),
    }
}

fn choose<T: Clone>(flag: &Option<T>, config: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| config.clone())
}

fn parse_choice<T: clap::ValueEnum>(s: &str, what: &str) -> Result<T> {
    T::from_str(s, true).map_err(|_| anyhow::anyhow!("unknown {what} {s:?} in config"))
}

/// Everything an analysis command needs beyond its own arguments.
pub struct Resolved {
    pub config: Config,
    pub mock: bool,
    pub mock_table: Option<PathBuf>,
    pub capsule_dir: PathBuf,
    pub no_capsule: bool,
    pub format: OutputFormat,
    pub models: Vec<ModelSpec>,
    pub sampler: SamplerSettings,
    pub max_in_flight: Option<usize>,
}

pub const DEFAULT_CAPSULE_DIR: &str = "capsules";
pub const MOCK_CHAT_MODEL: &str = "mock:mock-chat";

impl Resolved {
    pub fn new(c: &Common) -> Result<Self> {
        let config = Config::load(c.config.as_deref())?;
        let mock_table = c.mock_table.clone().or_else(|| config.mock_table.clone());
        let mock = c.mock || config.mock || mock_table.is_some();
        let format = match (&c.format, &config.format) {
            (Some(f), _) => *f,
            (None, Some(s)) => parse_choice(s, "format")?,
            (None, None) => OutputFormat::Csv,
        };
        let mut models = c
            .models
            .iter()
            .map(|m| parse_model(m, Modality::Chat))
            .collect::<Result<Vec<_>>>()?;
        if models.is_empty() {
            models = config
                .models
                .iter()
                .map(|m| match m {
                    ModelEntry::Short(s) => parse_model(s, Modality::Chat),
                    ModelEntry::Full(spec) => Ok(spec.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
        }
        if models.is_empty() && mock {
            models.push(parse_model(MOCK_CHAT_MODEL, Modality::Chat)?);
        }
        let mut sampler = SamplerSettings::default();
        if let Some(t) = choose(&c.temperature, &config.temperature) {
            sampler.temperature = t;
        }
        if let Some(p) = choose(&c.top_p, &config.top_p) {
            sampler.top_p = p;
        }
        if let Some(m) = choose(&c.max_tokens, &config.max_tokens) {
            sampler.max_tokens = m;
        }
        sampler.seed = choose(&c.seed, &config.seed);
        sampler.validate()?;
        Ok(Self {
            mock,
            mock_table,
            capsule_dir: choose(&c.capsule_dir, &config.capsule_dir).unwrap_or_else(|| DEFAULT_CAPSULE_DIR.into()),
            no_capsule: c.no_capsule || config.no_capsule.unwrap_or(false),
            format,
            models,
            sampler,
            max_in_flight: choose(&c.max_in_flight, &config.max_in_flight),
            config,
        })
    }

    pub fn require_models(&self) -> Result<&[ModelSpec]> {
        if self.models.is_empty() {
            bail!("no models given; pass --model provider:model_id or list models in --config");
        }
        Ok(&self.models)
    }

    pub fn template(&self, flag: Option<TemplateChoice>) -> Result<TemplateChoice> {
        match (flag, &self.config.template) {
            (Some(t), _) => Ok(t),
            (None, Some(s)) => parse_choice(s, "template"),
            (None, None) => Ok(TemplateChoice::Confidence),
        }
    }

    pub fn aggregation(&self, flag: Option<AggregationChoice>) -> Result<AggregationChoice> {
        match (flag, &self.config.aggregation) {
            (Some(a), _) => Ok(a),
            (None, Some(s)) => parse_choice(s, "aggregation"),
            (None, None) => Ok(AggregationChoice::Mean),
        }
    }

    pub fn backend(&self) -> Result<Arc<dyn Backend>> {
        make_backend(self.mock, self.mock_table.as_deref())
    }

    pub fn policy(&self) -> FanOutPolicy {
        make_policy(self.mock, self.max_in_flight)
    }
}

pub fn make_backend(mock: bool, table: Option<&Path>) -> Result<Arc<dyn Backend>> {
    if let Some(path) = table {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read mock table {}", path.display()))?;
        let table: MockTable =
            serde_json::from_slice(&bytes).with_context(|| format!("invalid mock table {}", path.display()))?;
        return Ok(Arc::new(MockBackend::table(table)));
    }
    if mock {
        return Ok(Arc::new(MockBackend::hash_seeded()));
    }
    Ok(Arc::new(HttpBackend::new()))
}

pub fn make_policy(mock: bool, max_in_flight: Option<usize>) -> FanOutPolicy {
    let mut policy = if mock {
        FanOutPolicy::immediate(8)
    } else {
        FanOutPolicy::default()
    };
    if let Some(n) = max_in_flight {
        policy.max_in_flight = n.max(1);
    }
    policy
}
