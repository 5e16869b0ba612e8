//! Python bindings for `spectramatch`.
//!
//! Distances cross the boundary as floats, with the infinite sentinel mapped
//! to `float("inf")`. Library errors surface as `ValueError`, or `OSError` for
//! file access problems.

use std::collections::BTreeMap;
use std::error::Error as _;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use spectramatch::evaluator::{self, RocCurve};
use spectramatch::matcher::{self, MatchScore};
use spectramatch::{Distance, Error, LayerTag, LoadOptions, MetricId, TemplateFormat};

fn to_py(err: Error) -> PyErr {
    let mut message = err.to_string();
    let mut source = err.source();
    while let Some(s) = source {
        message.push_str(": ");
        message.push_str(&s.to_string());
        source = s.source();
    }
    let is_io = match &err {
        Error::Io { .. } => true,
        Error::File { source, .. } => matches!(**source, Error::Io { .. }),
        _ => false,
    };
    if is_io {
        PyOSError::new_err(message)
    } else {
        PyValueError::new_err(message)
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

fn to_distance(v: f64) -> PyResult<Distance> {
    if v == f64::INFINITY {
        return Ok(Distance::INFINITE);
    }
    Distance::new(v).ok_or_else(|| PyValueError::new_err(format!("invalid distance {v}")))
}

fn match_score(score: MatchScore) -> f64 {
    match score {
        MatchScore::Distance(d) => d.as_f64(),
        MatchScore::ClassScore(s) => s,
    }
}

/// Names of the supported metrics, in canonical order.
#[pyfunction]
fn metric_names() -> Vec<&'static str> {
    MetricId::ALL.iter().map(|m| m.as_str()).collect()
}

/// Distance between two non-negative vectors; `inf` for the sentinel.
#[pyfunction]
fn distance(metric: &str, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    let metric: MetricId = parse(metric)?;
    spectramatch::distance(metric, &p, &q)
        .map(Distance::as_f64)
        .map_err(to_py)
}

#[pyclass(frozen, from_py_object, name = "Template", module = "spectramatch_py")]
#[derive(Clone)]
struct PyTemplate(spectramatch::FeatureTemplate);

#[pymethods]
impl PyTemplate {
    #[new]
    #[pyo3(signature = (subject, session, features, layer = "fc", source = "real"))]
    fn new(subject: &str, session: &str, features: Vec<f64>, layer: &str, source: &str) -> PyResult<Self> {
        let layer: LayerTag = parse(layer)?;
        Ok(Self(spectramatch::FeatureTemplate::new(subject, session, source, layer, features)))
    }

    #[getter]
    fn subject(&self) -> &str {
        &self.0.subject
    }

    #[getter]
    fn session(&self) -> &str {
        &self.0.session
    }

    #[getter]
    fn source(&self) -> &str {
        &self.0.source
    }

    #[getter]
    fn layer(&self) -> &'static str {
        self.0.layer.as_str()
    }

    #[getter]
    fn features(&self) -> Vec<f64> {
        self.0.features.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Template({}/{}, layer={}, d={})",
            self.0.subject,
            self.0.session,
            self.0.layer,
            self.0.dimension()
        )
    }
}

#[pyclass(frozen, name = "TemplateSet", module = "spectramatch_py")]
struct PyTemplateSet(spectramatch::TemplateSet);

#[pymethods]
impl PyTemplateSet {
    #[new]
    fn new(templates: Vec<PyTemplate>) -> PyResult<Self> {
        spectramatch::TemplateSet::new(templates.into_iter().map(|t| t.0).collect())
            .map(Self)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    #[getter]
    fn subjects(&self) -> Vec<String> {
        self.0.roster().iter().cloned().collect()
    }

    #[getter]
    fn sessions(&self) -> Vec<String> {
        self.0.sessions().into_iter().collect()
    }

    fn templates(&self) -> Vec<PyTemplate> {
        self.0.templates().iter().cloned().map(PyTemplate).collect()
    }

    /// Templates whose session is in `sessions`.
    fn with_sessions(&self, sessions: Vec<String>) -> Self {
        Self(self.0.filter(|t| sessions.contains(&t.session)))
    }

    /// Copy with every template scaled to unit L1 norm.
    fn normalized(&self) -> PyResult<Self> {
        self.0.l1_normalized().map(Self).map_err(to_py)
    }
}

/// Loads a JSON-lines or CSV template file (chosen by extension).
#[pyfunction]
#[pyo3(signature = (path, layer = None, clamp_negative = false))]
fn load_templates(path: PathBuf, layer: Option<&str>, clamp_negative: bool) -> PyResult<PyTemplateSet> {
    let opts = LoadOptions {
        clamp_negative,
        layer: layer.map(parse).transpose()?,
    };
    spectramatch::load_templates(&path, TemplateFormat::from_path(&path), opts)
        .map(|loaded| PyTemplateSet(loaded.set))
        .map_err(to_py)
}

#[pyfunction]
fn l1_normalize(template: &PyTemplate) -> PyResult<PyTemplate> {
    spectramatch::l1_normalize(&template.0).map(PyTemplate).map_err(to_py)
}

/// Leave-one-session-out folds as `(fold_id, train_sessions, test_session)`.
#[pyfunction]
fn split_folds(templates: &PyTemplateSet) -> PyResult<Vec<(usize, Vec<String>, String)>> {
    let folds = spectramatch::split_folds(&templates.0).map_err(to_py)?;
    Ok(folds
        .into_iter()
        .map(|f| (f.fold_id, f.train_sessions, f.test_session))
        .collect())
}

#[pyclass(frozen, name = "ScoreMatrix", module = "spectramatch_py")]
struct PyScoreMatrix(spectramatch::ScoreMatrix);

#[pymethods]
impl PyScoreMatrix {
    /// Row keys as `(subject, session)`.
    #[getter]
    fn probe_keys(&self) -> Vec<(String, String)> {
        self.0.probe_keys().iter().map(|k| (k.subject.clone(), k.session.clone())).collect()
    }

    /// Column keys as `(subject, session)`.
    #[getter]
    fn gallery_keys(&self) -> Vec<(String, String)> {
        self.0.gallery_keys().iter().map(|k| (k.subject.clone(), k.session.clone())).collect()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        self.0.metric().as_str()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.0.rows() || col >= self.0.cols() {
            return Err(pyo3::exceptions::PyIndexError::new_err("cell out of range"));
        }
        Ok(self.0.get(row, col).as_f64())
    }

    /// The whole matrix as nested lists.
    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.0.rows())
            .map(|i| self.0.row(i).iter().map(|d| d.as_f64()).collect())
            .collect()
    }
}

#[pyfunction]
fn score_matrix(probes: &PyTemplateSet, gallery: &PyTemplateSet, metric: &str) -> PyResult<PyScoreMatrix> {
    let metric: MetricId = parse(metric)?;
    spectramatch::score_matrix(&probes.0, &gallery.0, metric)
        .map(PyScoreMatrix)
        .map_err(to_py)
}

/// `(genuine, impostor)` distances; cells pairing a sample with itself are dropped.
#[pyfunction]
fn label_scores(matrix: &PyScoreMatrix) -> (Vec<f64>, Vec<f64>) {
    let ls = spectramatch::label_scores(&matrix.0);
    let f = |v: &[Distance]| v.iter().map(|d| d.as_f64()).collect();
    (f(&ls.genuine), f(&ls.impostor))
}

#[pyclass(frozen, name = "RankList", module = "spectramatch_py")]
struct PyRankList(spectramatch::RankList);

#[pymethods]
impl PyRankList {
    #[getter]
    fn probe(&self) -> (String, String) {
        (self.0.probe.subject.clone(), self.0.probe.session.clone())
    }

    /// `(subject, score)` from best to worst match.
    #[getter]
    fn entries(&self) -> Vec<(String, f64)> {
        self.0
            .entries
            .iter()
            .map(|e| (e.subject.clone(), match_score(e.score)))
            .collect()
    }

    /// 1-based rank of `subject`, or `None` if absent.
    fn rank_of(&self, subject: &str) -> Option<usize> {
        self.0.rank_of(subject)
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, fusion = "min"))]
fn rank_gallery(matrix: &PyScoreMatrix, fusion: &str) -> PyResult<Vec<PyRankList>> {
    let fusion: spectramatch::Fusion = parse(fusion)?;
    Ok(spectramatch::rank_gallery(&matrix.0, fusion)
        .into_iter()
        .map(PyRankList)
        .collect())
}

#[pyfunction]
fn rank_from_class_scores(templates: &PyTemplateSet, roster: Vec<String>) -> PyResult<Vec<PyRankList>> {
    spectramatch::rank_from_class_scores(&templates.0, &roster)
        .map(|r| r.into_iter().map(PyRankList).collect())
        .map_err(to_py)
}

fn unwrap_ranks(ranks: &[Bound<'_, PyRankList>]) -> Vec<spectramatch::RankList> {
    ranks.iter().map(|r| r.get().0.clone()).collect()
}

#[pyclass(frozen, name = "RocCurve", module = "spectramatch_py")]
struct PyRocCurve(RocCurve);

#[pymethods]
impl PyRocCurve {
    /// `(threshold, far, tar)` from reject-all to accept-all.
    #[getter]
    fn points(&self) -> Vec<(f64, f64, f64)> {
        self.0.points.iter().map(|p| (p.threshold, p.far, p.tar)).collect()
    }

    fn tar_at_far(&self, target: f64) -> f64 {
        evaluator::tar_at_far(&self.0, target)
    }

    fn threshold_at_far(&self, target: f64) -> Option<f64> {
        evaluator::threshold_at_far(&self.0, target)
    }

    fn eer(&self) -> f64 {
        evaluator::eer(&self.0)
    }

    fn auc(&self) -> f64 {
        evaluator::auc(&self.0)
    }
}

/// ROC from genuine and impostor distances (`inf` allowed as sentinel).
#[pyfunction]
fn roc_curve(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<PyRocCurve> {
    let ls = spectramatch::LabeledScores {
        genuine: genuine.into_iter().map(to_distance).collect::<PyResult<_>>()?,
        impostor: impostor.into_iter().map(to_distance).collect::<PyResult<_>>()?,
        self_pairs: 0,
    };
    spectramatch::roc_curve(&ls).map(PyRocCurve).map_err(to_py)
}

#[pyfunction]
fn tar_at_far(curve: &PyRocCurve, target: f64) -> f64 {
    curve.tar_at_far(target)
}

#[pyfunction]
fn eer(curve: &PyRocCurve) -> f64 {
    curve.eer()
}

#[pyfunction]
fn auc(curve: &PyRocCurve) -> f64 {
    curve.auc()
}

/// Identification rates by rank; each probe's true subject is its own.
#[pyfunction]
fn cmc_curve(ranks: Vec<Bound<'_, PyRankList>>) -> PyResult<Vec<f64>> {
    let ranks = unwrap_ranks(&ranks);
    let truth = matcher::truth_from_probes(&ranks);
    spectramatch::cmc_curve(&ranks, &truth)
        .map(|c| c.rates)
        .map_err(to_py)
}

/// Per-quantity fold statistics from a list of `{name: value}` dicts, one per
/// fold, e.g. `{"TAR@1%FAR": 0.9, "EER": 0.05}`.
///
/// Returns `{name: {"mean", "std", "min", "max", "formatted"}}` with `std`
/// the sample standard deviation and `formatted` as `mean ± std` in percent.
#[pyfunction]
fn aggregate_folds<'py>(
    py: Python<'py>,
    folds: Vec<BTreeMap<String, f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let reports: Vec<evaluator::EvalReport> = folds
        .into_iter()
        .enumerate()
        .map(|(i, quantities)| fold_report(i + 1, quantities))
        .collect::<PyResult<_>>()?;
    let summary = spectramatch::aggregate_folds(&reports).map_err(to_py)?;
    let out = PyDict::new(py);
    for q in &summary.quantities {
        let d = PyDict::new(py);
        d.set_item("mean", q.mean)?;
        d.set_item("std", q.std)?;
        d.set_item("min", q.min)?;
        d.set_item("max", q.max)?;
        d.set_item("formatted", q.formatted())?;
        out.set_item(&q.name, d)?;
    }
    Ok(out)
}

/// Rebuilds a fold report from named quantities such as `TAR@1%FAR`, `EER`,
/// `AUC` or `Rank-1`.
fn fold_report(fold_id: usize, quantities: BTreeMap<String, f64>) -> PyResult<evaluator::EvalReport> {
    let mut report = evaluator::EvalReport {
        fold_id,
        tar_at_far: Vec::new(),
        eer: None,
        auc: None,
        rank_k: Vec::new(),
        genuine_count: 0,
        impostor_count: 0,
    };
    for (name, value) in quantities {
        if let Some(percent) = name.strip_prefix("TAR@").and_then(|s| s.strip_suffix("%FAR")) {
            let target = parse::<f64>(percent)? / 100.0;
            report.tar_at_far.push(evaluator::TarAtFar {
                far_target: target,
                tar: value,
                threshold: f64::NAN,
                far: f64::NAN,
            });
        } else if name == "EER" {
            report.eer = Some(value);
        } else if name == "AUC" {
            report.auc = Some(value);
        } else if let Some(k) = name.strip_prefix("Rank-") {
            report.rank_k.push(evaluator::RankRate {
                rank: parse(k)?,
                rate: value,
            });
        } else {
            return Err(PyValueError::new_err(format!("unknown quantity '{name}'")));
        }
    }
    // Report column order: FAR targets descending, ranks ascending.
    report
        .tar_at_far
        .sort_by(|a, b| b.far_target.total_cmp(&a.far_target));
    report.rank_k.sort_by_key(|r| r.rank);
    Ok(report)
}

#[pymodule]
pub fn spectramatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTemplate>()?;
    m.add_class::<PyTemplateSet>()?;
    m.add_class::<PyScoreMatrix>()?;
    m.add_class::<PyRankList>()?;
    m.add_class::<PyRocCurve>()?;
    m.add_function(wrap_pyfunction!(metric_names, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(load_templates, m)?)?;
    m.add_function(wrap_pyfunction!(l1_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(split_folds, m)?)?;
    m.add_function(wrap_pyfunction!(score_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(label_scores, m)?)?;
    m.add_function(wrap_pyfunction!(rank_gallery, m)?)?;
    m.add_function(wrap_pyfunction!(rank_from_class_scores, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tar_at_far, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(cmc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_folds, m)?)?;
    Ok(())
}
