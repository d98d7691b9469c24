//! Byte-stable report files.
//!
//! JSON: `{"schema_version", "report_type", "report"}` in canonical form,
//! with every float rounded to six significant digits. CSV: a
//! `# schema_version=...` comment line, a header, LF line endings, floats
//! written with the same six-digit rounding.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ambiguity, histogram, summarize, AmbiguityReport, Histogram, Summary, View};
use crate::elicitation::{SampleOutcome, SampleSet, Verdict};
use crate::hashing::canonical_json_value;
use crate::ladder::{from_ppm, LadderResult};
use crate::lens::ProbeRanking;
use crate::numeric::{fmt6, round_sig};

pub const SCHEMA_VERSION: u32 = 1;

/// Bins used for sweep histograms.
pub const SWEEP_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            _ => Err(ExportError::UnsupportedFormat(s.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("unsupported export format {0:?} (expected csv, json or svg)")]
    UnsupportedFormat(String),
    #[error("unsupported report schema_version {0}")]
    UnsupportedVersion(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReport {
    pub question_id: String,
    /// Absent when no response to this question parsed.
    pub summary: Option<Summary>,
    pub ambiguity: Option<AmbiguityReport>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitReport {
    pub case_id: String,
    pub questions: Vec<QuestionReport>,
}

impl ElicitReport {
    pub fn from_sets(case_id: &str, sets: &[SampleSet]) -> Self {
        Self {
            case_id: case_id.to_string(),
            questions: sets
                .iter()
                .map(|s| QuestionReport {
                    question_id: s.question_id.clone(),
                    summary: summarize(s).ok(),
                    ambiguity: ambiguity(s).ok(),
                    n_samples: s.samples.len(),
                })
                .collect(),
        }
    }

    /// Pooled mean per question, in question order.
    pub fn means(&self) -> Vec<(String, Option<f64>)> {
        self.questions
            .iter()
            .map(|q| {
                let mean = q
                    .summary
                    .as_ref()
                    .and_then(|s| s.pooled.stats.as_ref())
                    .map(|st| st.mean);
                (q.question_id.clone(), mean)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub summary: Option<Summary>,
    pub ambiguity: Option<AmbiguityReport>,
    pub histogram: Histogram,
    pub samples: SampleSet,
}

impl SweepReport {
    pub fn from_samples(samples: &SampleSet) -> Self {
        Self {
            summary: summarize(samples).ok(),
            ambiguity: ambiguity(samples).ok(),
            histogram: histogram(samples, SWEEP_BINS).expect("nonzero bins"),
            samples: samples.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report_type", content = "report", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Report {
    Elicit(ElicitReport),
    Sweep(SweepReport),
    Ladder(LadderResult),
    Ranking(ProbeRanking),
    Summary(Summary),
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Elicit(_) => "elicit",
            Report::Sweep(_) => "sweep",
            Report::Ladder(_) => "ladder",
            Report::Ranking(_) => "ranking",
            Report::Summary(_) => "summary",
        }
    }

    /// The report as it reads back from its JSON export.
    pub fn rounded(&self) -> Report {
        import_json(&to_json(self)).expect("own export parses")
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"), 6);
            *v = serde_json::Number::from_f64(if x == 0.0 { 0.0 } else { x }).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn to_json(report: &Report) -> Vec<u8> {
    let mut v = serde_json::to_value(report).expect("report serializes");
    round_floats(&mut v);
    v.as_object_mut()
        .expect("tagged enum is an object")
        .insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    canonical_json_value(&v).into_bytes()
}

pub fn import_json(bytes: &[u8]) -> Result<Report, ExportError> {
    let mut v: Value = serde_json::from_slice(bytes).map_err(|e| ExportError::Malformed(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| ExportError::Malformed("top level is not an object".into()))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(other) => return Err(ExportError::UnsupportedVersion(other.to_string())),
        None => return Err(ExportError::Malformed("missing schema_version".into())),
    }
    serde_json::from_value(v).map_err(|e| ExportError::Malformed(e.to_string()))
}

pub fn export(report: &Report, format: Format) -> Result<Vec<u8>, ExportError> {
    match format {
        Format::Json => Ok(to_json(report)),
        Format::Csv => to_csv(report),
        Format::Svg => Ok(super::svg::render(report).into_bytes()),
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

fn signed6(x: f64) -> String {
    let s = fmt6(x);
    if x > 0.0 && s != "0" {
        format!("+{s}")
    } else {
        s
    }
}

const SUMMARY_HEADER: [&str; 12] = [
    "question_id",
    "model",
    "n",
    "n_unparsed",
    "n_errors",
    "mean",
    "median",
    "q1",
    "q3",
    "iqr",
    "min",
    "max",
];

/// Label for the pooled row in summary CSVs.
pub const POOLED: &str = "*";

fn view_row(question_id: &str, model: &str, v: &View) -> Vec<String> {
    let st = v.stats.as_ref();
    let mut row = vec![
        question_id.to_string(),
        model.to_string(),
        v.n.to_string(),
        v.n_unparsed.to_string(),
        v.n_errors.to_string(),
    ];
    row.extend(
        [
            st.map(|s| s.mean),
            st.map(|s| s.median),
            st.map(|s| s.q1),
            st.map(|s| s.q3),
            st.map(|s| s.iqr),
            st.map(|s| s.min),
            st.map(|s| s.max),
        ]
        .map(opt6),
    );
    row
}

fn summary_rows(s: &Summary) -> Vec<Vec<String>> {
    let mut rows = vec![view_row(&s.question_id, POOLED, &s.pooled)];
    rows.extend(s.per_model.iter().map(|(m, v)| view_row(&s.question_id, m, v)));
    rows
}

fn to_csv(report: &Report) -> Result<Vec<u8>, ExportError> {
    let mut preamble = format!("# schema_version={SCHEMA_VERSION} report={}", report.kind());
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match report {
        Report::Summary(s) => (SUMMARY_HEADER.to_vec(), summary_rows(s)),
        Report::Elicit(e) => (
            SUMMARY_HEADER.to_vec(),
            e.questions
                .iter()
                .flat_map(|q| match &q.summary {
                    Some(s) => summary_rows(s),
                    None => {
                        let mut row = vec![q.question_id.clone(), POOLED.into(), "0".into()];
                        row.resize(SUMMARY_HEADER.len(), String::new());
                        vec![row]
                    }
                })
                .collect(),
        ),
        Report::Sweep(s) => (
            vec![
                "model",
                "temperature",
                "variant_id",
                "repetition",
                "status",
                "verdict",
                "confidence",
                "parse_rule",
            ],
            s.samples
                .samples
                .iter()
                .map(|smp| {
                    let c = &smp.coordinate;
                    let (status, verdict, conf, rule) = match &smp.outcome {
                        SampleOutcome::Parsed(p) => (
                            "ok",
                            match p.verdict {
                                Verdict::Yes => "yes",
                                Verdict::No => "no",
                                Verdict::Unparsed => "unparsed",
                            },
                            opt6(p.confidence),
                            p.parse_rule.clone(),
                        ),
                        SampleOutcome::Error { .. } => ("error", "", String::new(), String::new()),
                    };
                    vec![
                        c.model_id.clone(),
                        fmt6(c.temperature),
                        c.variant_id.clone(),
                        c.repetition.to_string(),
                        status.into(),
                        verdict.into(),
                        conf,
                        rule,
                    ]
                })
                .collect(),
        ),
        Report::Ladder(l) => {
            preamble.push_str(&format!(" direction_only_caveat={}", l.direction_only_caveat));
            let mut rows = Vec::new();
            for t in &l.trajectories {
                for p in &t.points {
                    let (evidence_id, delta) = match p.rung.checked_sub(1).map(|i| &t.deltas[i]) {
                        Some(d) => (
                            d.evidence_id.clone(),
                            d.delta_ppm.map(|x| signed6(from_ppm(x))).unwrap_or_default(),
                        ),
                        None => (String::new(), String::new()),
                    };
                    rows.push(vec![
                        t.model_id.clone(),
                        p.rung.to_string(),
                        evidence_id,
                        opt6(p.confidence()),
                        delta,
                        p.n.to_string(),
                        p.unparsed.to_string(),
                    ]);
                }
            }
            (
                vec!["model", "rung", "evidence_id", "confidence", "delta", "n", "unparsed"],
                rows,
            )
        }
        Report::Ranking(r) => (
            vec!["probe", "mean", "dispersion", "rank"],
            r.entries
                .iter()
                .map(|e| vec![e.probe.clone(), fmt6(e.mean), fmt6(e.dispersion), e.rank.to_string()])
                .collect(),
        ),
    };
    let mut out = preamble.into_bytes();
    out.push(b'\n');
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ExportError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lens::RankEntry;

    fn ranking() -> Report {
        Report::Ranking(ProbeRanking {
            model_ids: vec!["m0".into()],
            entries: vec![
                RankEntry {
                    probe: "rainfall".into(),
                    mean: 1.0 / 3.0,
                    dispersion: 0.0,
                    rank: 1,
                },
                RankEntry {
                    probe: "joy, really".into(),
                    mean: 0.9,
                    dispersion: 0.1,
                    rank: 2,
                },
            ],
        })
    }

    #[test]
    fn ranking_csv() {
        let bytes = export(&ranking(), Format::Csv).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text,
            "# schema_version=1 report=ranking\nprobe,mean,dispersion,rank\nrainfall,0.333333,0,1\n\"joy, really\",0.9,0.1,2\n"
        );
    }

    #[test]
    fn json_round_trip_and_stability() {
        let r = ranking();
        let a = export(&r, Format::Json).unwrap();
        assert_eq!(a, export(&r, Format::Json).unwrap());
        assert!(String::from_utf8(a.clone())
            .unwrap()
            .starts_with("{\n  \"schema_version\": 1,"));
        let back = import_json(&a).unwrap();
        assert_eq!(back, r.rounded());
        assert_eq!(export(&back, Format::Json).unwrap(), a);
    }

    #[test]
    fn formats() {
        assert_eq!("CSV".parse::<Format>().unwrap(), Format::Csv);
        assert!(matches!(
            "pdf".parse::<Format>(),
            Err(ExportError::UnsupportedFormat(_))
        ));
        let mut v: Value = serde_json::from_slice(&export(&ranking(), Format::Json).unwrap()).unwrap();
        v["schema_version"] = Value::from(99);
        assert!(matches!(
            import_json(v.to_string().as_bytes()),
            Err(ExportError::UnsupportedVersion(_))
        ));
    }
}
