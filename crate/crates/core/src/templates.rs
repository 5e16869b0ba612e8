//! Feature templates: data model, file ingestion and session folds.
//!
//! Two line-oriented encodings are accepted. JSON lines carry one object per
//! line:
//!
//! ```text
//! {"subject":"s01","session":"S1","source":"real","layer":"fc","features":[0.0,1.5]}
//! ```
//!
//! CSV files carry the header `subject,session,source,layer,f0,...,f{d-1}`.
//! A leading UTF-8 byte-order mark is ignored in both encodings.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CSV_KEY_COLUMNS: [&str; 4] = ["subject", "session", "source", "layer"];

/// Network layer a template was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    /// Fully-connected layer activations.
    Fc,
    /// Classification layer scores, one per roster subject.
    Score,
}

impl LayerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Fc => "fc",
            LayerTag::Score => "score",
        }
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(LayerTag::Fc),
            "score" => Ok(LayerTag::Score),
            other => Err(Error::Config(format!(
                "unknown layer '{other}' (expected fc or score)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateFormat {
    Jsonl,
    Csv,
}

impl TemplateFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TemplateFormat::Csv,
            _ => TemplateFormat::Jsonl,
        }
    }
}

impl FromStr for TemplateFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(TemplateFormat::Jsonl),
            "csv" => Ok(TemplateFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown template format '{other}' (expected jsonl or csv)"
            ))),
        }
    }
}

/// Uniqueness key of a template within a [`TemplateSet`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateKey {
    pub subject: String,
    pub session: String,
    pub source: String,
    pub layer: LayerTag,
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.subject, self.session, self.source, self.layer
        )
    }
}

/// One subject's feature vector with its identity, session and provenance labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTemplate {
    pub subject: String,
    pub session: String,
    pub source: String,
    pub layer: LayerTag,
    pub features: Vec<f64>,
}

impl FeatureTemplate {
    pub fn new(
        subject: impl Into<String>,
        session: impl Into<String>,
        source: impl Into<String>,
        layer: LayerTag,
        features: Vec<f64>,
    ) -> Self {
        Self {
            subject: subject.into(),
            session: session.into(),
            source: source.into(),
            layer,
            features,
        }
    }

    pub fn key(&self) -> TemplateKey {
        TemplateKey {
            subject: self.subject.clone(),
            session: self.session.clone(),
            source: self.source.clone(),
            layer: self.layer,
        }
    }

    pub fn dimension(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Replace negative features by 0 instead of rejecting the record.
    pub clamp_negative: bool,
    /// Keep only records of this layer; others are skipped before validation.
    pub layer: Option<LayerTag>,
}

/// A validated template set together with ingestion diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub set: TemplateSet,
    /// Number of feature values that were clamped to 0.
    pub clamped: usize,
}

/// Validated collection of templates sharing one dimension.
///
/// Immutable once built; every template is finite, non-negative and has a
/// unique (subject, session, source, layer) key.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: Vec<FeatureTemplate>,
    dimension: usize,
    roster: BTreeSet<String>,
}

impl TemplateSet {
    /// Validates `templates` without clamping. Record numbers in errors are 1-based.
    pub fn new(templates: Vec<FeatureTemplate>) -> Result<Self> {
        let numbered = templates.into_iter().enumerate().map(|(i, t)| (i + 1, t));
        Ok(Self::validate(numbered.collect(), LoadOptions::default(), "template set")?.set)
    }

    /// `records` pairs each template with its 1-based record number in the source.
    fn validate(
        records: Vec<(usize, FeatureTemplate)>,
        opts: LoadOptions,
        origin: &str,
    ) -> Result<Loaded> {
        let mut records: Vec<_> = records
            .into_iter()
            .filter(|(_, t)| opts.layer.is_none_or(|layer| t.layer == layer))
            .collect();
        let dimension = match records.first() {
            Some((_, t)) => t.dimension(),
            None => return Err(Error::Empty(origin.to_string())),
        };
        if dimension == 0 {
            return Err(Error::Parse {
                record: records[0].0,
                message: "feature vector is empty".into(),
            });
        }

        let mut seen = HashSet::with_capacity(records.len());
        let mut clamped = 0;
        for (record, t) in records.iter_mut() {
            let record = *record;
            if t.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    record,
                    expected: dimension,
                    found: t.dimension(),
                });
            }
            for (index, v) in t.features.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        record,
                        index,
                        value: *v,
                    });
                }
                if *v < 0.0 {
                    if !opts.clamp_negative {
                        return Err(Error::Negative {
                            record,
                            index,
                            value: *v,
                        });
                    }
                    *v = 0.0;
                    clamped += 1;
                } else if *v == 0.0 {
                    // canonical +0.0
                    *v = 0.0;
                }
            }
            let key = t.key();
            if !seen.insert(key.clone()) {
                return Err(Error::DuplicateKey {
                    record,
                    key: key.to_string(),
                });
            }
        }

        let templates: Vec<_> = records.into_iter().map(|(_, t)| t).collect();
        let roster = templates.iter().map(|t| t.subject.clone()).collect();
        Ok(Loaded {
            set: TemplateSet {
                templates,
                dimension,
                roster,
            },
            clamped,
        })
    }

    pub fn templates(&self) -> &[FeatureTemplate] {
        &self.templates
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Distinct subject ids, sorted.
    pub fn roster(&self) -> &BTreeSet<String> {
        &self.roster
    }

    /// Distinct session ids, sorted.
    pub fn sessions(&self) -> BTreeSet<String> {
        self.templates.iter().map(|t| t.session.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Subset keeping the set's dimension. The result may be empty.
    pub fn filter(&self, mut keep: impl FnMut(&FeatureTemplate) -> bool) -> TemplateSet {
        let templates: Vec<_> = self.templates.iter().filter(|t| keep(t)).cloned().collect();
        let roster = templates.iter().map(|t| t.subject.clone()).collect();
        TemplateSet {
            templates,
            dimension: self.dimension,
            roster,
        }
    }

    /// L1-normalizes every template.
    pub fn l1_normalized(&self) -> Result<TemplateSet> {
        let templates = self
            .templates
            .iter()
            .map(l1_normalize)
            .collect::<Result<Vec<_>>>()?;
        Ok(TemplateSet {
            templates,
            dimension: self.dimension,
            roster: self.roster.clone(),
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.templates {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header: Vec<String> = CSV_KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((0..self.dimension).map(|i| format!("f{i}")));
        writeln!(out, "{}", header.join(","))?;
        for t in &self.templates {
            write!(out, "{},{},{},{}", t.subject, t.session, t.source, t.layer)?;
            for v in &t.features {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a TemplateSet {
    type Item = &'a FeatureTemplate;
    type IntoIter = std::slice::Iter<'a, FeatureTemplate>;

    fn into_iter(self) -> Self::IntoIter {
        self.templates.iter()
    }
}

/// Reads and validates a template file.
pub fn load_templates(path: &Path, format: TemplateFormat, opts: LoadOptions) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text, format, opts).map_err(|e| match e {
        Error::Empty(what) => Error::Empty(what.replacen("input", &path.display().to_string(), 1)),
        other => Error::File {
            path: path.to_path_buf(),
            source: Box::new(other),
        },
    })
}

/// Parses and validates template text in the given format.
pub fn parse_templates(text: &str, format: TemplateFormat, opts: LoadOptions) -> Result<Loaded> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let records = match format {
        TemplateFormat::Jsonl => parse_jsonl(text)?,
        TemplateFormat::Csv => parse_csv(text)?,
    };
    let origin = match opts.layer {
        Some(layer) => format!("input ({layer} layer)"),
        None => "input".to_string(),
    };
    TemplateSet::validate(records, opts, &origin)
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, FeatureTemplate)>> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map(|t| (i + 1, t))
                .map_err(|e| Error::Parse {
                    record: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

fn parse_csv(text: &str) -> Result<Vec<(usize, FeatureTemplate)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            record: 0,
            message: e.to_string(),
        })?
        .clone();
    let header_error = |message: String| Error::Parse { record: 0, message };
    if header.len() < CSV_KEY_COLUMNS.len() + 1 {
        return Err(header_error(format!(
            "header has {} columns; expected subject,session,source,layer,f0,...",
            header.len()
        )));
    }
    for (i, name) in header.iter().enumerate() {
        let expected = match CSV_KEY_COLUMNS.get(i) {
            Some(col) => col.to_string(),
            None => format!("f{}", i - CSV_KEY_COLUMNS.len()),
        };
        if name.trim() != expected {
            return Err(header_error(format!(
                "header column {} is '{name}', expected '{expected}'",
                i + 1
            )));
        }
    }
    let dimension = header.len() - CSV_KEY_COLUMNS.len();

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        if row.len() < CSV_KEY_COLUMNS.len() {
            return Err(Error::Parse {
                record,
                message: format!("only {} columns", row.len()),
            });
        }
        let found = row.len() - CSV_KEY_COLUMNS.len();
        if found != dimension {
            return Err(Error::DimensionMismatch {
                record,
                expected: dimension,
                found,
            });
        }
        let layer = row[3].trim().parse().map_err(|e: Error| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        let features = row
            .iter()
            .skip(CSV_KEY_COLUMNS.len())
            .enumerate()
            .map(|(index, cell)| {
                cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    record,
                    message: format!("feature {index} '{cell}': {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push((
            record,
            FeatureTemplate::new(row[0].trim(), row[1].trim(), row[2].trim(), layer, features),
        ));
    }
    Ok(records)
}

/// Scales a template so its features sum to 1.
///
/// Fails on vectors without any positive mass.
pub fn l1_normalize(t: &FeatureTemplate) -> Result<FeatureTemplate> {
    let total: f64 = t.features.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(FeatureTemplate {
        features: t.features.iter().map(|v| v / total).collect(),
        ..t.clone()
    })
}

/// One cross-validation fold: a held-out acquisition session and the sessions
/// used for enrollment/training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldSpec {
    /// 1-based fold number.
    pub fold_id: usize,
    pub train_sessions: Vec<String>,
    pub test_session: String,
}

/// One fold per distinct session, ordered by session id.
pub fn split_folds(ts: &TemplateSet) -> Result<Vec<FoldSpec>> {
    split_sessions(ts.sessions())
}

/// Leave-one-session-out partition over an arbitrary session list.
pub fn split_sessions<I, S>(sessions: I) -> Result<Vec<FoldSpec>>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let sessions: BTreeSet<String> = sessions.into_iter().map(Into::into).collect();
    if sessions.len() < 2 {
        return Err(Error::TooFewSessions(sessions.len()));
    }
    Ok(sessions
        .iter()
        .enumerate()
        .map(|(i, test)| FoldSpec {
            fold_id: i + 1,
            train_sessions: sessions.iter().filter(|s| *s != test).cloned().collect(),
            test_session: test.clone(),
        })
        .collect())
}
