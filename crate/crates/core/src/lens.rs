//! Embedding-distance probe: how far candidate terms sit from a clause
//! across an ensemble of embedding models.
//!
//! Each model's row of cosine distances is min-max rescaled to [0, 1] over
//! the probe set (a constant row becomes all zeros, so a model that cannot
//! tell the probes apart does not vote); probes are then ranked by their
//! unweighted mean across models.
//!
//! Two reference constructions are offered and both are approximations of
//! an attention-weighted clause representation:
//! * sentence mode embeds each probe sentence once;
//! * template-average mode (non-empty `variant_templates`) averages a
//!   probe's embeddings across the anchor and variant templates.
//!
//! In both modes the clause is embedded once as a whole sentence.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{fan_out_embeddings, Backend, EmbeddingVector, FanOutPolicy};
use crate::model::{CleanText, Modality, ModelSpec};
use crate::numeric::exact_sum;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LensError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("invalid probe spec: {0}")]
    InvalidSpec(String),
    #[error("distance matrix is incomplete")]
    Incomplete,
}

/// `1 − cos(u, v)`, in [0, 2].
pub fn cosine_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, LensError> {
    cosine_distance_slices(&u.values, &v.values)
}

pub fn cosine_distance_slices(u: &[f64], v: &[f64]) -> Result<f64, LensError> {
    if u.len() != v.len() {
        return Err(LensError::DimensionMismatch(u.len(), v.len()));
    }
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(LensError::ZeroVector);
    }
    if u == v {
        return Ok(0.0);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Sentence frame with exactly one slot, e.g. `flood caused by {X}`.
    pub anchor_template: String,
    /// The clause sentence every probe is compared against. Falls back to
    /// the case clause when loaded alongside a case.
    #[serde(default)]
    pub reference: Option<String>,
    pub probes: Vec<String>,
    pub models: Vec<ModelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variant_templates: Vec<String>,
}

fn slot_regex() -> Regex {
    Regex::new(r"\{[A-Za-z_]*\}").expect("static regex")
}

fn fill(template: &str, filler: &str) -> String {
    slot_regex().replace(template, regex::NoExpand(filler)).into_owned()
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<(), LensError> {
        let bad = |m: &str| Err(LensError::InvalidSpec(m.to_string()));
        if self.probes.is_empty() {
            return bad("at least one probe is required");
        }
        if self.models.is_empty() {
            return bad("at least one model is required");
        }
        if let Some(m) = self.models.iter().find(|m| m.modality != Modality::Embedding) {
            return Err(LensError::InvalidSpec(format!(
                "{} is not an embedding model",
                m.model_id
            )));
        }
        let re = slot_regex();
        for t in std::iter::once(&self.anchor_template).chain(&self.variant_templates) {
            if re.find_iter(t).count() != 1 {
                return Err(LensError::InvalidSpec(format!(
                    "template {t:?} must have exactly one slot"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !self.probes.iter().all(|p| seen.insert(p)) {
            return bad("probe labels must be unique");
        }
        if self.reference.as_deref().is_none_or(|r| r.trim().is_empty()) {
            return bad("reference sentence is empty");
        }
        Ok(())
    }

    pub fn templates(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.anchor_template).chain(&self.variant_templates)
    }

    pub fn reference_text(&self) -> &str {
        self.reference.as_deref().unwrap_or("")
    }

    /// Probe sentences for `probe`, one per template.
    pub fn sentences(&self, probe: &str) -> Vec<String> {
        self.templates().map(|t| fill(t, probe)).collect()
    }

    /// Every distinct (model, text) embedding the probe needs, in a fixed
    /// order: per model, the reference first, then probes by template.
    pub fn embedding_jobs(&self) -> Vec<(ModelSpec, String)> {
        let mut jobs = Vec::new();
        for m in &self.models {
            let mut seen = std::collections::HashSet::new();
            let texts = std::iter::once(self.reference_text().to_string())
                .chain(self.probes.iter().flat_map(|p| self.sentences(p)));
            for t in texts {
                let t = CleanText::from_str_lossless(&t).into_string();
                if seen.insert(t.clone()) {
                    jobs.push((m.clone(), t));
                }
            }
        }
        jobs
    }
}

/// A recorded embedding call: the raw material for every lens report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCall {
    pub model_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Models × probes grid of cosine distances (`None` where a call failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub model_ids: Vec<String>,
    pub probe_labels: Vec<String>,
    pub raw: Vec<Vec<Option<f64>>>,
    pub partial: bool,
    pub normalized: bool,
}

impl DistanceMatrix {
    pub fn from_rows(model_ids: Vec<String>, probe_labels: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        Self {
            model_ids,
            probe_labels,
            raw: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
            partial: false,
            normalized: false,
        }
    }

    pub fn complete_rows(&self) -> Result<Vec<Vec<f64>>, LensError> {
        self.raw
            .iter()
            .map(|row| row.iter().map(|x| x.ok_or(LensError::Incomplete)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRun {
    pub matrix: DistanceMatrix,
    pub calls: Vec<EmbeddingCall>,
}

/// Embed everything `spec` needs and assemble the raw distance grid.
pub fn probe_distances(spec: &ProbeSpec, backend: &dyn Backend, policy: &FanOutPolicy) -> Result<ProbeRun, LensError> {
    spec.validate()?;
    let jobs: Vec<(CleanText, ModelSpec)> = spec
        .embedding_jobs()
        .into_iter()
        .map(|(m, t)| (CleanText::from_str_lossless(&t), m))
        .collect();
    let results = fan_out_embeddings(backend, &jobs, policy);
    let calls: Vec<EmbeddingCall> = jobs
        .iter()
        .zip(results)
        .map(|((text, model), r)| match r {
            Ok(v) => EmbeddingCall {
                model_id: model.model_id.clone(),
                text: text.as_str().to_string(),
                values: Some(v.values),
                error: None,
            },
            Err(e) => EmbeddingCall {
                model_id: model.model_id.clone(),
                text: text.as_str().to_string(),
                values: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let matrix = matrix_from_calls(spec, &calls)?;
    Ok(ProbeRun { matrix, calls })
}

fn mean_vector(vs: &[&Vec<f64>]) -> Vec<f64> {
    let dim = vs[0].len();
    (0..dim)
        .map(|i| exact_sum(vs.iter().map(|v| v[i])) / vs.len() as f64)
        .collect()
}

/// Pure derivation of the raw grid from recorded embeddings.
pub fn matrix_from_calls(spec: &ProbeSpec, calls: &[EmbeddingCall]) -> Result<DistanceMatrix, LensError> {
    let mut table: BTreeMap<(&str, &str), Option<&Vec<f64>>> = BTreeMap::new();
    for c in calls {
        table.insert((c.model_id.as_str(), c.text.as_str()), c.values.as_ref());
    }
    let lookup = |model: &str, text: &str| -> Option<&Vec<f64>> {
        let t = CleanText::from_str_lossless(text).into_string();
        table.get(&(model, t.as_str())).copied().flatten()
    };
    let mut partial = false;
    let mut raw = Vec::with_capacity(spec.models.len());
    for m in &spec.models {
        let id = m.model_id.as_str();
        let reference = lookup(id, spec.reference_text());
        let mut row = Vec::with_capacity(spec.probes.len());
        for p in &spec.probes {
            let vecs: Option<Vec<&Vec<f64>>> = spec.sentences(p).iter().map(|s| lookup(id, s)).collect();
            let cell = match (reference, vecs) {
                (Some(r), Some(vs)) => {
                    let probe_vec = if vs.len() == 1 { vs[0].clone() } else { mean_vector(&vs) };
                    Some(cosine_distance_slices(&probe_vec, r)?)
                }
                _ => None,
            };
            partial |= cell.is_none();
            row.push(cell);
        }
        raw.push(row);
    }
    Ok(DistanceMatrix {
        model_ids: spec.models.iter().map(|m| m.model_id.clone()).collect(),
        probe_labels: spec.probes.clone(),
        raw,
        partial,
        normalized: false,
    })
}

/// Row-wise min-max rescaling into [0, 1]; constant rows become zeros.
pub fn normalize_matrix(m: &DistanceMatrix) -> Result<DistanceMatrix, LensError> {
    let rows = m.complete_rows()?;
    let raw = rows
        .into_iter()
        .map(|row| {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            row.into_iter()
                .map(|x| {
                    Some(if span > 0.0 {
                        ((x - lo) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    })
                })
                .collect()
        })
        .collect();
    Ok(DistanceMatrix {
        raw,
        partial: false,
        normalized: true,
        ..m.clone()
    })
}

/// The rows of `m` with no holes, or `Incomplete` if none remain.
pub fn complete_models(m: &DistanceMatrix) -> Result<DistanceMatrix, LensError> {
    let (model_ids, raw): (Vec<String>, Vec<Vec<Option<f64>>>) = m
        .model_ids
        .iter()
        .zip(&m.raw)
        .filter(|(_, row)| row.iter().all(Option::is_some))
        .map(|(id, row)| (id.clone(), row.clone()))
        .unzip();
    if model_ids.is_empty() {
        return Err(LensError::Incomplete);
    }
    Ok(DistanceMatrix {
        model_ids,
        raw,
        partial: false,
        ..m.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub probe: String,
    pub mean: f64,
    /// Population standard deviation across models.
    pub dispersion: f64,
    /// 1-based.
    pub rank: usize,
}

/// Entries in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRanking {
    pub model_ids: Vec<String>,
    pub entries: Vec<RankEntry>,
}

pub fn rank_probes(normalized: &DistanceMatrix) -> Result<ProbeRanking, LensError> {
    let rows = normalized.complete_rows()?;
    let n_models = rows.len() as f64;
    let mut entries: Vec<RankEntry> = normalized
        .probe_labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = exact_sum(col.iter().copied()) / n_models;
            let var = exact_sum(col.iter().map(|x| (x - mean) * (x - mean))) / n_models;
            RankEntry {
                probe: label.clone(),
                mean,
                dispersion: var.sqrt(),
                rank: 0,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.probe.cmp(&b.probe)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(ProbeRanking {
        model_ids: normalized.model_ids.clone(),
        entries,
    })
}
