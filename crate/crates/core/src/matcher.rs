//! Probe-versus-gallery scoring for the 1:1 and 1:N protocols.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Distance, MetricId};
use crate::templates::{FeatureTemplate, TemplateSet};

/// Row/column key of a score matrix: who and when.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    pub subject: String,
    pub session: String,
}

impl SampleKey {
    pub fn new(subject: impl Into<String>, session: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            session: session.into(),
        }
    }

    fn of(t: &FeatureTemplate) -> Self {
        Self::new(t.subject.clone(), t.session.clone())
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject, self.session)
    }
}

/// Templates sorted by key, rejecting sets where two templates share a key.
fn keyed<'a>(ts: &'a TemplateSet, side: &'static str) -> Result<Vec<(SampleKey, &'a [f64])>> {
    let mut rows: Vec<_> = ts
        .templates()
        .iter()
        .map(|t| (SampleKey::of(t), t.features.as_slice()))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::AmbiguousKey {
            side,
            key: w[0].0.to_string(),
        });
    }
    Ok(rows)
}

/// Dense probe x gallery distance matrix, rows and columns sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_keys: Vec<SampleKey>,
    gallery_keys: Vec<SampleKey>,
    metric: MetricId,
    distances: Vec<Distance>,
}

impl ScoreMatrix {
    /// Builds a matrix from row-major `distances`; keys must be sorted and unique.
    pub fn from_parts(
        probe_keys: Vec<SampleKey>,
        gallery_keys: Vec<SampleKey>,
        metric: MetricId,
        distances: Vec<Distance>,
    ) -> Result<Self> {
        if gallery_keys.is_empty() {
            return Err(Error::EmptyGallery);
        }
        if distances.len() != probe_keys.len() * gallery_keys.len() {
            return Err(Error::VectorLength {
                left: distances.len(),
                right: probe_keys.len() * gallery_keys.len(),
            });
        }
        for (side, keys) in [("probe set", &probe_keys), ("gallery", &gallery_keys)] {
            if let Some(w) = keys.windows(2).find(|w| w[0] >= w[1]) {
                return Err(Error::AmbiguousKey {
                    side,
                    key: format!("{} (keys must be sorted and unique)", w[1]),
                });
            }
        }
        Ok(Self {
            probe_keys,
            gallery_keys,
            metric,
            distances,
        })
    }

    /// Applies `f` to every finite cell; the infinite sentinel is kept.
    pub fn map_finite(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let distances = self
            .distances
            .iter()
            .map(|d| match d {
                Distance::Finite(v) => Distance::new(f(*v)).ok_or(Error::InvalidComponent {
                    index: 0,
                    value: f(*v),
                }),
                Distance::Infinite => Ok(Distance::INFINITE),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            distances,
            ..self.clone()
        })
    }

    pub fn probe_keys(&self) -> &[SampleKey] {
        &self.probe_keys
    }

    pub fn gallery_keys(&self) -> &[SampleKey] {
        &self.gallery_keys
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn rows(&self) -> usize {
        self.probe_keys.len()
    }

    pub fn cols(&self) -> usize {
        self.gallery_keys.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Distance {
        self.distances[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[Distance] {
        let cols = self.cols();
        &self.distances[row * cols..(row + 1) * cols]
    }

    /// CSV dump: a `probe` column followed by one column per gallery key.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["probe".to_string()];
        header.extend(self.gallery_keys.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (i, key) in self.probe_keys.iter().enumerate() {
            let mut record = vec![key.to_string()];
            record.extend(self.row(i).iter().map(ToString::to_string));
            w.write_record(&record)?;
        }
        w.flush()
    }
}

/// Scores every probe against every gallery template.
///
/// Rows are filled concurrently into fixed slots, so the result does not
/// depend on the thread pool size.
pub fn score_matrix(
    probes: &TemplateSet,
    gallery: &TemplateSet,
    metric: MetricId,
) -> Result<ScoreMatrix> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    if probes.dimension() != gallery.dimension() {
        return Err(Error::VectorLength {
            left: probes.dimension(),
            right: gallery.dimension(),
        });
    }
    let probe_rows = keyed(probes, "probe set")?;
    let gallery_rows = keyed(gallery, "gallery")?;

    let cols = gallery_rows.len();
    let mut distances = vec![Distance::ZERO; probe_rows.len() * cols];
    distances
        .par_chunks_mut(cols)
        .zip(probe_rows.par_iter())
        .for_each(|(slot, (_, p))| {
            for (cell, (_, g)) in slot.iter_mut().zip(&gallery_rows) {
                *cell = metrics::distance_unchecked(metric, p, g);
            }
        });

    Ok(ScoreMatrix {
        probe_keys: probe_rows.into_iter().map(|(k, _)| k).collect(),
        gallery_keys: gallery_rows.into_iter().map(|(k, _)| k).collect(),
        metric,
        distances,
    })
}

/// Genuine and impostor distances of a verification experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScores {
    pub genuine: Vec<Distance>,
    pub impostor: Vec<Distance>,
    /// Cells skipped because probe and gallery key were identical.
    pub self_pairs: usize,
}

impl LabeledScores {
    /// True when no probe shares a subject with the gallery.
    pub fn missing_genuine(&self) -> bool {
        self.genuine.is_empty()
    }
}

/// Splits the matrix cells into genuine (same subject) and impostor pairs.
pub fn label_scores(sm: &ScoreMatrix) -> LabeledScores {
    let mut out = LabeledScores::default();
    for (i, probe) in sm.probe_keys.iter().enumerate() {
        for (gallery, &d) in sm.gallery_keys.iter().zip(sm.row(i)) {
            if probe == gallery {
                out.self_pairs += 1;
            } else if probe.subject == gallery.subject {
                out.genuine.push(d);
            } else {
                out.impostor.push(d);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Nearest template of the subject.
    #[default]
    Min,
    Mean,
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Fusion::Min),
            "mean" => Ok(Fusion::Mean),
            other => Err(Error::Config(format!(
                "unknown fusion '{other}' (expected min or mean)"
            ))),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Min => "min",
            Fusion::Mean => "mean",
        })
    }
}

/// How well a gallery subject matches a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchScore {
    /// Smaller is better.
    Distance(Distance),
    /// Classifier output; larger is better.
    ClassScore(f64),
}

impl MatchScore {
    /// Distance polarity; class scores map to `1 - s`.
    pub fn to_distance(self) -> Option<Distance> {
        match self {
            MatchScore::Distance(d) => Some(d),
            MatchScore::ClassScore(s) if (0.0..=1.0).contains(&s) => Distance::new(1.0 - s),
            MatchScore::ClassScore(_) => None,
        }
    }

    fn better_first(&self, other: &Self) -> Ordering {
        match (self, other) {
            (MatchScore::Distance(a), MatchScore::Distance(b)) => a.cmp(b),
            (MatchScore::ClassScore(a), MatchScore::ClassScore(b)) => b.total_cmp(a),
            // Lists never mix polarities.
            (MatchScore::Distance(_), MatchScore::ClassScore(_)) => Ordering::Less,
            (MatchScore::ClassScore(_), MatchScore::Distance(_)) => Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub subject: String,
    pub score: MatchScore,
}

/// Gallery subjects ordered from best to worst match for one probe; ties go
/// to the lexicographically smaller subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankList {
    pub probe: SampleKey,
    pub entries: Vec<RankEntry>,
}

impl RankList {
    fn sorted(probe: SampleKey, mut entries: Vec<RankEntry>) -> Self {
        entries.sort_by(|a, b| {
            a.score
                .better_first(&b.score)
                .then_with(|| a.subject.cmp(&b.subject))
        });
        Self { probe, entries }
    }

    /// 1-based position of `subject`, if present.
    pub fn rank_of(&self, subject: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.subject == subject)
            .map(|i| i + 1)
    }
}

/// Per-probe subject ranking from fused gallery distances.
pub fn rank_gallery(sm: &ScoreMatrix, fusion: Fusion) -> Vec<RankList> {
    let mut columns: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, key) in sm.gallery_keys.iter().enumerate() {
        columns.entry(key.subject.as_str()).or_default().push(j);
    }

    (0..sm.rows())
        .into_par_iter()
        .map(|i| {
            let row = sm.row(i);
            let entries = columns
                .iter()
                .map(|(subject, cols)| RankEntry {
                    subject: subject.to_string(),
                    score: MatchScore::Distance(fuse(cols.iter().map(|&j| row[j]), fusion)),
                })
                .collect();
            RankList::sorted(sm.probe_keys[i].clone(), entries)
        })
        .collect()
}

fn fuse(values: impl Iterator<Item = Distance>, fusion: Fusion) -> Distance {
    match fusion {
        Fusion::Min => values.min().unwrap_or(Distance::INFINITE),
        Fusion::Mean => {
            let mut sum = 0.0;
            let mut n = 0usize;
            for d in values {
                match d {
                    Distance::Finite(v) => sum += v,
                    Distance::Infinite => return Distance::INFINITE,
                }
                n += 1;
            }
            if n == 0 {
                Distance::INFINITE
            } else {
                Distance::Finite(sum / n as f64)
            }
        }
    }
}

/// Per-probe subject ranking from classification-layer scores, where score
/// index `k` belongs to `roster[k]`.
pub fn rank_from_class_scores(ts: &TemplateSet, roster: &[String]) -> Result<Vec<RankList>> {
    let distinct: BTreeSet<&String> = roster.iter().collect();
    if distinct.len() != roster.len() {
        return Err(Error::Config("roster contains duplicate subjects".into()));
    }
    let probes = keyed(ts, "probe set")?;
    probes
        .into_iter()
        .map(|(key, scores)| {
            if scores.len() != roster.len() {
                return Err(Error::RosterSize {
                    key: key.to_string(),
                    expected: roster.len(),
                    found: scores.len(),
                });
            }
            let entries = roster
                .iter()
                .zip(scores)
                .map(|(subject, &s)| RankEntry {
                    subject: subject.clone(),
                    score: MatchScore::ClassScore(s),
                })
                .collect();
            Ok(RankList::sorted(key, entries))
        })
        .collect()
}

/// Truth labels implied by the probe keys themselves.
pub fn truth_from_probes(ranks: &[RankList]) -> BTreeMap<SampleKey, String> {
    ranks
        .iter()
        .map(|r| (r.probe.clone(), r.probe.subject.clone()))
        .collect()
}
