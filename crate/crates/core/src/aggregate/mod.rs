//! Summaries, ambiguity metrics, histograms and report export.
//!
//! Statistics are computed over parsed confidences only and do not depend
//! on sample order. Medians of even-sized sets take the midpoint of the
//! central pair; quartiles are Tukey hinges (the median of each half, the
//! halves sharing the middle value when the count is odd).

mod export;
mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::elicitation::SampleSet;
use crate::numeric::exact_sum;

pub use export::{
    export, import_json, ElicitReport, ExportError, Format, QuestionReport, Report, SweepReport, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("no parsed samples to summarize")]
    NoParsedSamples,
    #[error("histogram needs at least one bin")]
    ZeroBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl ConfidenceStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let half = n.div_ceil(2);
        let q1 = median_sorted(&v[..half]);
        let q3 = median_sorted(&v[n - half..]);
        Some(Self {
            mean: exact_sum(v.iter().copied()) / n as f64,
            median: median_sorted(&v),
            q1,
            q3,
            iqr: q3 - q1,
            min: v[0],
            max: v[n - 1],
        })
    }
}

/// Counts plus statistics for one slice of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    /// Samples with a confidence.
    pub n: usize,
    /// Responses received without a confidence.
    pub n_unparsed: usize,
    /// Calls that failed terminally.
    pub n_errors: usize,
    pub stats: Option<ConfidenceStats>,
}

impl View {
    fn of<'a>(samples: impl Iterator<Item = &'a crate::elicitation::Sample>) -> Self {
        let (mut values, mut n_unparsed, mut n_errors) = (Vec::new(), 0, 0);
        for s in samples {
            match (s.is_error(), s.confidence()) {
                (true, _) => n_errors += 1,
                (false, Some(c)) => values.push(c),
                (false, None) => n_unparsed += 1,
            }
        }
        Self {
            n: values.len(),
            n_unparsed,
            n_errors,
            stats: ConfidenceStats::of(&values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case_id: String,
    pub question_id: String,
    pub pooled: View,
    pub per_model: BTreeMap<String, View>,
}

pub fn summarize(samples: &SampleSet) -> Result<Summary, AggregateError> {
    let pooled = View::of(samples.samples.iter());
    if pooled.n == 0 {
        return Err(AggregateError::NoParsedSamples);
    }
    let per_model = samples
        .model_ids()
        .into_iter()
        .map(|m| {
            let view = View::of(samples.samples.iter().filter(|s| s.coordinate.model_id == m));
            (m, view)
        })
        .collect();
    Ok(Summary {
        case_id: samples.case_id.clone(),
        question_id: samples.question_id.clone(),
        pooled,
        per_model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority {
    Yes,
    No,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCounts {
    pub yes: usize,
    pub no: usize,
    /// Confidence exactly 0.5: neither side.
    pub undecided: usize,
}

impl SideCounts {
    fn of(values: &[f64]) -> Self {
        let yes = values.iter().filter(|c| **c > 0.5).count();
        let no = values.iter().filter(|c| **c < 0.5).count();
        Self {
            yes,
            no,
            undecided: values.len() - yes - no,
        }
    }

    fn majority(&self) -> Majority {
        match self.yes.cmp(&self.no) {
            std::cmp::Ordering::Greater => Majority::Yes,
            std::cmp::Ordering::Less => Majority::No,
            std::cmp::Ordering::Equal => Majority::Tie,
        }
    }

    fn parsed(&self) -> usize {
        self.yes + self.no + self.undecided
    }
}

/// Fraction of parsed samples on the smaller side of 0.5.
pub fn minority_mass(values: &[f64]) -> f64 {
    let sides = SideCounts::of(values);
    if sides.parsed() == 0 {
        return 0.0;
    }
    sides.yes.min(sides.no) as f64 / sides.parsed() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAgreement {
    pub majority: Majority,
    pub agrees_with_pooled: bool,
}

pub const AMBIGUITY_FORMALIZATION: &str =
    "minority_mass and IQR are this tool's own measure of spread in model readings; they are not a legal finding of ambiguity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub majority_reading: Majority,
    pub minority_mass: f64,
    /// Interquartile range of parsed confidences.
    pub dispersion: f64,
    pub sides: SideCounts,
    pub per_model: BTreeMap<String, ModelAgreement>,
    pub formalization: String,
}

pub fn ambiguity(samples: &SampleSet) -> Result<AmbiguityReport, AggregateError> {
    let values = samples.confidences();
    let stats = ConfidenceStats::of(&values).ok_or(AggregateError::NoParsedSamples)?;
    let sides = SideCounts::of(&values);
    let majority = sides.majority();
    let per_model = samples
        .model_ids()
        .into_iter()
        .filter_map(|m| {
            let vals: Vec<f64> = samples
                .samples
                .iter()
                .filter(|s| s.coordinate.model_id == m)
                .filter_map(|s| s.confidence())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let mm = SideCounts::of(&vals).majority();
            Some((
                m,
                ModelAgreement {
                    majority: mm,
                    agrees_with_pooled: mm == majority,
                },
            ))
        })
        .collect();
    Ok(AmbiguityReport {
        majority_reading: majority,
        minority_mass: minority_mass(&values),
        dispersion: stats.iqr,
        sides,
        per_model,
        formalization: AMBIGUITY_FORMALIZATION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` boundaries from 0 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width bins over [0, 1]; bin `i` is `[edges[i], edges[i+1])`, the
/// last bin is closed on the right.
pub fn histogram_of(values: &[f64], bins: usize) -> Result<Histogram, AggregateError> {
    if bins == 0 {
        return Err(AggregateError::ZeroBins);
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &c in values.iter().filter(|c| (0.0..=1.0).contains(*c)) {
        let mut i = ((c * bins as f64) as usize).min(bins - 1);
        // Settle float edge cases against the stored boundaries.
        while i > 0 && c < edges[i] {
            i -= 1;
        }
        while i < bins - 1 && c >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

pub fn histogram(samples: &SampleSet, bins: usize) -> Result<Histogram, AggregateError> {
    histogram_of(&samples.confidences(), bins)
}
