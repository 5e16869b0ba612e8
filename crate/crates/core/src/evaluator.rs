//! Verification and identification measurements: ROC, TAR at a target FAR,
//! EER, AUC, CMC and mean ± std aggregation across folds.
//!
//! A pair is accepted when its distance is `<=` the threshold. The ROC is
//! the empirical step curve over every distinct finite score, bracketed by
//! a reject-all point (threshold `-inf`) and an accept-all point (threshold
//! `+inf`, the only one that also admits [`Distance::INFINITE`]).

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcher::{LabeledScores, RankList, SampleKey};
use crate::metrics::Distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Ordered by increasing threshold; FAR and TAR are non-decreasing.
    pub points: Vec<RocPoint>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

impl RocCurve {
    /// `threshold,far,tar` CSV, one point per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,far,tar")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.far, p.tar)?;
        }
        Ok(())
    }
}

fn sorted_finite(scores: &[Distance]) -> Vec<f64> {
    let mut v: Vec<f64> = scores.iter().filter_map(|d| d.finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical ROC over all distinct finite scores.
pub fn roc_curve(ls: &LabeledScores) -> Result<RocCurve> {
    if ls.genuine.is_empty() {
        return Err(Error::EmptyScores("genuine"));
    }
    if ls.impostor.is_empty() {
        return Err(Error::EmptyScores("impostor"));
    }
    let genuine = sorted_finite(&ls.genuine);
    let impostor = sorted_finite(&ls.impostor);
    let n_gen = ls.genuine.len() as f64;
    let n_imp = ls.impostor.len() as f64;

    let mut points = Vec::with_capacity(genuine.len() + impostor.len() + 2);
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 0.0,
        tar: 0.0,
    });
    let (mut gi, mut ii) = (0, 0);
    while gi < genuine.len() || ii < impostor.len() {
        let threshold = match (genuine.get(gi), impostor.get(ii)) {
            (Some(&g), Some(&i)) => g.min(i),
            (Some(&g), None) => g,
            (None, Some(&i)) => i,
            (None, None) => unreachable!(),
        };
        while gi < genuine.len() && genuine[gi] <= threshold {
            gi += 1;
        }
        while ii < impostor.len() && impostor[ii] <= threshold {
            ii += 1;
        }
        points.push(RocPoint {
            threshold,
            far: ii as f64 / n_imp,
            tar: gi as f64 / n_gen,
        });
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 1.0,
        tar: 1.0,
    });

    Ok(RocCurve {
        points,
        genuine_count: ls.genuine.len(),
        impostor_count: ls.impostor.len(),
    })
}

/// Largest curve threshold whose FAR does not exceed `target`.
pub fn threshold_at_far(rc: &RocCurve, target: f64) -> Option<f64> {
    rc.points
        .iter()
        .take_while(|p| p.far <= target)
        .last()
        .map(|p| p.threshold)
}

/// TAR at the largest threshold with FAR <= `target`, without interpolation.
pub fn tar_at_far(rc: &RocCurve, target: f64) -> f64 {
    rc.points
        .iter()
        .take_while(|p| p.far <= target)
        .last()
        .map_or(0.0, |p| p.tar)
}

/// (FAR, TAR) of `ls` when accepting every distance `<= threshold`.
pub fn rates_at_threshold(ls: &LabeledScores, threshold: f64) -> (f64, f64) {
    let rate = |scores: &[Distance]| {
        if scores.is_empty() {
            return 0.0;
        }
        let accepted = scores.iter().filter(|d| d.as_f64() <= threshold).count();
        accepted as f64 / scores.len() as f64
    };
    (rate(&ls.impostor), rate(&ls.genuine))
}

/// Equal error rate, interpolated linearly between the two operating points
/// where FAR - FRR changes sign.
pub fn eer(rc: &RocCurve) -> f64 {
    let gap = |p: &RocPoint| p.far - (1.0 - p.tar);
    let mut prev: Option<&RocPoint> = None;
    for p in &rc.points {
        let g = gap(p);
        if g == 0.0 {
            return p.far;
        }
        if g > 0.0 {
            let Some(q) = prev else {
                return p.far;
            };
            let gq = gap(q);
            let t = -gq / (g - gq);
            return q.far + t * (p.far - q.far);
        }
        prev = Some(p);
    }
    // The accept-all endpoint always has FAR - FRR = 1.
    unreachable!("ROC curve without accept-all endpoint")
}

/// Trapezoidal area under TAR(FAR) over [0, 1].
pub fn auc(rc: &RocCurve) -> f64 {
    rc.points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[0].tar + w[1].tar) * 0.5)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcCurve {
    /// `rates[k - 1]` is the identification rate at rank k.
    pub rates: Vec<f64>,
}

impl CmcCurve {
    pub fn rank(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k => self
                .rates
                .get(k - 1)
                .or(self.rates.last())
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// `rank,rate` CSV, one rank per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rank,rate")?;
        for (i, r) in self.rates.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, r)?;
        }
        Ok(())
    }
}

/// Fraction of probes whose true subject is ranked at position <= k, for k = 1..R.
pub fn cmc_curve(ranks: &[RankList], truth: &BTreeMap<SampleKey, String>) -> Result<CmcCurve> {
    if ranks.is_empty() {
        return Err(Error::EmptyScores("probe"));
    }
    let depth = ranks.iter().map(|r| r.entries.len()).max().unwrap_or(0);
    let mut hits = vec![0usize; depth];
    for r in ranks {
        let subject = truth
            .get(&r.probe)
            .ok_or_else(|| Error::MissingTruth(r.probe.to_string()))?;
        if let Some(pos) = r.rank_of(subject) {
            hits[pos - 1] += 1;
        }
    }
    let n = ranks.len() as f64;
    let mut cumulative = 0;
    let rates = hits
        .into_iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// Genuine/impostor split for identification: each probe's score for its true
/// subject is genuine, its scores for every other subject are impostors.
/// Class scores enter with distance polarity `1 - s`.
pub fn identification_scores(
    ranks: &[RankList],
    truth: &BTreeMap<SampleKey, String>,
) -> Result<LabeledScores> {
    let mut out = LabeledScores::default();
    for r in ranks {
        let subject = truth
            .get(&r.probe)
            .ok_or_else(|| Error::MissingTruth(r.probe.to_string()))?;
        if r.rank_of(subject).is_none() {
            return Err(Error::TruthNotInRoster {
                probe: r.probe.to_string(),
                subject: subject.clone(),
            });
        }
        for e in &r.entries {
            let d = e.score.to_distance().ok_or_else(|| Error::ClassScoreRange {
                key: r.probe.to_string(),
                value: match e.score {
                    crate::matcher::MatchScore::ClassScore(s) => s,
                    crate::matcher::MatchScore::Distance(d) => d.as_f64(),
                },
            })?;
            if &e.subject == subject {
                out.genuine.push(d);
            } else {
                out.impostor.push(d);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TarAtFar {
    pub far_target: f64,
    pub tar: f64,
    /// Acceptance threshold that produced `tar`.
    pub threshold: f64,
    /// FAR actually reached at `threshold` on the evaluated scores.
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRate {
    pub rank: usize,
    pub rate: f64,
}

/// Measurements of one fold. Rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub fold_id: usize,
    pub tar_at_far: Vec<TarAtFar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rank_k: Vec<RankRate>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

impl EvalReport {
    /// Fold measurements with TAR taken on the curve itself.
    pub fn from_roc(fold_id: usize, rc: &RocCurve, far_targets: &[f64]) -> Self {
        let tar_at_far = far_targets
            .iter()
            .map(|&target| {
                let threshold = threshold_at_far(rc, target).unwrap_or(f64::NEG_INFINITY);
                let point = rc
                    .points
                    .iter()
                    .take_while(|p| p.far <= target)
                    .last()
                    .copied();
                TarAtFar {
                    far_target: target,
                    tar: tar_at_far(rc, target),
                    threshold,
                    far: point.map_or(0.0, |p| p.far),
                }
            })
            .collect();
        EvalReport {
            fold_id,
            tar_at_far,
            eer: Some(eer(rc)),
            auc: Some(auc(rc)),
            rank_k: Vec::new(),
            genuine_count: rc.genuine_count,
            impostor_count: rc.impostor_count,
        }
    }

    /// Replaces TAR entries by those reached on `ls` with externally chosen
    /// thresholds, one per FAR target.
    pub fn apply_thresholds(&mut self, ls: &LabeledScores, thresholds: &[f64]) {
        for (entry, &threshold) in self.tar_at_far.iter_mut().zip(thresholds) {
            let (far, tar) = rates_at_threshold(ls, threshold);
            *entry = TarAtFar {
                far_target: entry.far_target,
                tar,
                threshold,
                far,
            };
        }
    }

    /// Named scalar quantities in table column order.
    pub fn quantities(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .tar_at_far
            .iter()
            .map(|t| (far_label(t.far_target), t.tar))
            .collect();
        if let Some(v) = self.eer {
            out.push(("EER".into(), v));
        }
        if let Some(v) = self.auc {
            out.push(("AUC".into(), v));
        }
        out.extend(self.rank_k.iter().map(|r| (format!("Rank-{}", r.rank), r.rate)));
        out
    }
}

/// Column label such as `TAR@1%FAR` or `TAR@0.1%FAR`.
pub fn far_label(target: f64) -> String {
    let percent = (target * 100.0 * 1e9).round() / 1e9;
    format!("TAR@{percent}%FAR")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantitySummary {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl QuantitySummary {
    /// `mean ± std` in percent with two decimals.
    pub fn formatted(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean * 100.0, self.std * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValSummary {
    pub folds: usize,
    pub quantities: Vec<QuantitySummary>,
}

impl CrossValSummary {
    pub fn get(&self, name: &str) -> Option<&QuantitySummary> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn header(&self) -> Vec<String> {
        self.quantities.iter().map(|q| q.name.clone()).collect()
    }

    /// One table row: `label` followed by `mean ± std` per quantity.
    pub fn row(&self, label: &str) -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(self.quantities.iter().map(QuantitySummary::formatted))
            .collect()
    }
}

/// Writes `rows` as a table with a leading label column; all summaries must
/// share the same quantities.
pub fn write_summary_table<W: Write>(
    out: W,
    label_column: &str,
    rows: &[(&str, &CrossValSummary)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = match rows.first() {
        Some((_, s)) => s.header(),
        None => return Ok(()),
    };
    let io = |e: csv::Error| Error::io("summary table", e.into());
    w.write_record(std::iter::once(label_column.to_string()).chain(header.iter().cloned()))
        .map_err(io)?;
    for (label, summary) in rows {
        if summary.header() != header {
            return Err(Error::Aggregate(format!(
                "row '{label}' has different quantities"
            )));
        }
        w.write_record(summary.row(label)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("summary table", e))
}

/// Mean and sample standard deviation of every quantity across folds.
///
/// Values are summed in sorted order, so the result does not depend on fold order.
pub fn aggregate_folds(reports: &[EvalReport]) -> Result<CrossValSummary> {
    if reports.len() < 2 {
        return Err(Error::Aggregate(format!(
            "need at least 2 fold reports, got {}",
            reports.len()
        )));
    }
    let per_fold: Vec<Vec<(String, f64)>> = reports.iter().map(EvalReport::quantities).collect();
    let names: Vec<&String> = per_fold[0].iter().map(|(n, _)| n).collect();
    for (report, q) in reports.iter().zip(&per_fold) {
        if q.iter().map(|(n, _)| n).ne(names.iter().copied()) {
            return Err(Error::Aggregate(format!(
                "fold {} reports quantities that differ from fold {}",
                report.fold_id, reports[0].fold_id
            )));
        }
    }

    let quantities = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = per_fold.iter().map(|q| q[k].1).collect();
            summarize(name, values)
        })
        .collect();
    Ok(CrossValSummary {
        folds: reports.len(),
        quantities,
    })
}

fn summarize(name: &str, values: Vec<f64>) -> QuantitySummary {
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let mean = (sorted.iter().sum::<f64>() / n).clamp(min, max);
    let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = if sorted.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    QuantitySummary {
        name: name.to_string(),
        mean,
        std,
        min,
        max,
        values,
    }
}
