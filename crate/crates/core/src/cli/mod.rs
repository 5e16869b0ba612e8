//! Command-line front end: load, match, evaluate and write reports.
//!
//! Every output is computed in memory first and then written through a
//! temporary file and a rename, so a failing run leaves no half-written
//! report behind. Output names follow `{command}_{metric}_{fold}.{csv|json}`
//! with `summary` in place of the fold for cross-fold aggregates.

pub mod config;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub use config::{MetricChoice, RunArgs, RunConfig, ThresholdPolicy};

use crate::error::{Error, Result};
use crate::evaluator::{self, CrossValSummary, EvalReport, RankRate, RocCurve};
use crate::matcher::{self, LabeledScores, RankList};
use crate::metrics::MetricId;
use crate::templates::{self, FoldSpec, LayerTag, LoadOptions, TemplateSet};

/// Recorded in every identification report.
pub const IDENTIFICATION_TAR_NOTE: &str = "identification TAR@FAR: genuine = each probe's score for its true subject, \
     impostor = the same probe's scores for every other subject; class scores enter as distance 1 - s";

const CLASS_SCORE_LABEL: &str = "class_score";

#[derive(Debug, Parser)]
#[command(name = "spectramatch", version, about = "Multi-metric template matching and biometric evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// 1:1 verification: ROC, TAR@FAR, EER and AUC per fold and metric
    Verify(RunArgs),
    /// 1:N identification: CMC, rank-1 and TAR@FAR per fold
    Identify(RunArgs),
    /// Full probe x gallery distance matrix as CSV
    DumpScores(RunArgs),
    /// Print the session-based fold partition
    Folds(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Identify(_) => "identify",
            Command::DumpScores(_) => "dump-scores",
            Command::Folds(_) => "folds",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Verify(a) | Command::Identify(a) | Command::DumpScores(a) | Command::Folds(a) => a,
        }
    }
}

/// A report file waiting to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// Files written, in a stable order.
    pub written: Vec<PathBuf>,
    /// Human-readable summary for the terminal.
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = cli.command.args().resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let command = cli.command.name();

    let (files, mut outcome) = pool.install(|| -> Result<_> {
        let inputs = Inputs::load(&cfg, matches!(cli.command, Command::Identify(_)))?;
        let mut outcome = Outcome {
            warnings: inputs.warnings.clone(),
            ..Default::default()
        };
        let files = match &cli.command {
            Command::Verify(_) => verify(&cfg, &inputs, &mut outcome.stdout)?,
            Command::Identify(_) => identify(&cfg, &inputs, &mut outcome.stdout)?,
            Command::DumpScores(_) => dump_scores(&cfg, &inputs)?,
            Command::Folds(_) => {
                for fold in inputs.folds()? {
                    let _ = writeln!(
                        outcome.stdout,
                        "fold {}: test={} train={}",
                        fold.fold_id,
                        fold.test_session,
                        fold.train_sessions.join(",")
                    );
                }
                Vec::new()
            }
        };
        Ok((files, outcome))
    })?;

    if !files.is_empty() {
        outcome.written = write_outputs(&cfg.output_dir, &files)?;
        let _ = writeln!(
            outcome.stdout,
            "{command}: wrote {} files to {}",
            files.len(),
            cfg.output_dir.display()
        );
    }
    Ok(outcome)
}

/// Writes each file through `.name.tmp` and a rename.
pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    files
        .iter()
        .map(|f| {
            let target = dir.join(&f.name);
            let tmp = dir.join(format!(".{}.tmp", f.name));
            fs::write(&tmp, &f.contents).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
            Ok(target)
        })
        .collect()
}

struct Inputs {
    probes: TemplateSet,
    gallery: TemplateSet,
    validation: Option<TemplateSet>,
    roster: Vec<String>,
    warnings: Vec<String>,
}

impl Inputs {
    fn load(cfg: &RunConfig, needs_roster: bool) -> Result<Self> {
        let mut warnings = Vec::new();
        let mut load = |path: &Path| -> Result<TemplateSet> {
            let opts = LoadOptions {
                clamp_negative: cfg.clamp,
                layer: Some(cfg.layer),
            };
            let loaded = templates::load_templates(path, cfg.format_for(path), opts)?;
            if loaded.clamped > 0 {
                warnings.push(format!(
                    "{}: clamped {} negative feature values to 0",
                    path.display(),
                    loaded.clamped
                ));
            }
            if cfg.normalize {
                loaded.set.l1_normalized().map_err(|e| Error::File {
                    path: path.to_path_buf(),
                    source: Box::new(e),
                })
            } else {
                Ok(loaded.set)
            }
        };

        let probes = load(&cfg.probe_path)?;
        let gallery = match &cfg.gallery_path {
            Some(path) => load(path)?,
            None => probes.clone(),
        };
        let validation = cfg.validation_path.as_deref().map(&mut load).transpose()?;

        let roster = match (&cfg.roster_path, needs_roster && cfg.layer == LayerTag::Score) {
            (Some(path), true) => read_roster(path)?,
            (None, true) => {
                let mut all: BTreeSet<String> = probes.roster().clone();
                all.extend(gallery.roster().iter().cloned());
                if let Some(v) = &validation {
                    all.extend(v.roster().iter().cloned());
                }
                all.into_iter().collect()
            }
            (_, false) => Vec::new(),
        };

        Ok(Inputs {
            probes,
            gallery,
            validation,
            roster,
            warnings,
        })
    }

    fn folds(&self) -> Result<Vec<FoldSpec>> {
        let mut sessions = self.probes.sessions();
        sessions.extend(self.gallery.sessions());
        templates::split_sessions(sessions)
    }

    fn test_probes(&self, fold: &FoldSpec) -> Result<TemplateSet> {
        session_subset(&self.probes, fold, "probe")
    }

    fn validation_probes(&self, fold: &FoldSpec) -> Result<Option<TemplateSet>> {
        self.validation
            .as_ref()
            .map(|v| session_subset(v, fold, "validation"))
            .transpose()
    }

    fn enrolled(&self, fold: &FoldSpec) -> TemplateSet {
        self.gallery
            .filter(|t| fold.train_sessions.contains(&t.session))
    }
}

fn session_subset(set: &TemplateSet, fold: &FoldSpec, what: &str) -> Result<TemplateSet> {
    let subset = set.filter(|t| t.session == fold.test_session);
    if subset.is_empty() {
        return Err(Error::Empty(format!(
            "{what} templates of session {}",
            fold.test_session
        )));
    }
    Ok(subset)
}

fn read_roster(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let roster: Vec<String> = text
        .trim_start_matches('\u{feff}')
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if roster.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    Ok(roster)
}

/// Thresholds picked on validation scores, one per FAR target.
fn validation_thresholds(cfg: &RunConfig, validation: &LabeledScores) -> Result<Vec<f64>> {
    let roc = evaluator::roc_curve(validation)?;
    Ok(cfg
        .far_targets
        .iter()
        .map(|&t| evaluator::threshold_at_far(&roc, t).unwrap_or(f64::NEG_INFINITY))
        .collect())
}

struct FoldResult {
    fold: FoldSpec,
    report: EvalReport,
    curve_csv: Vec<u8>,
}

fn verify_fold(cfg: &RunConfig, inputs: &Inputs, metric: MetricId, fold: &FoldSpec) -> Result<FoldResult> {
    let enrolled = inputs.enrolled(fold);
    let labeled = |probes: &TemplateSet| -> Result<LabeledScores> {
        let sm = matcher::score_matrix(probes, &enrolled, metric)?;
        Ok(matcher::label_scores(&sm))
    };

    let scores = labeled(&inputs.test_probes(fold)?)?;
    let roc = evaluator::roc_curve(&scores)?;
    let mut report = EvalReport::from_roc(fold.fold_id, &roc, &cfg.far_targets);
    if cfg.threshold_policy == ThresholdPolicy::TransferFromValidation {
        if let Some(val) = inputs.validation_probes(fold)? {
            let thresholds = validation_thresholds(cfg, &labeled(&val)?)?;
            report.apply_thresholds(&scores, &thresholds);
        }
    }
    Ok(FoldResult {
        fold: fold.clone(),
        report,
        curve_csv: csv_bytes(|w| roc.write_csv(w)),
    })
}

fn identification_ranks(
    cfg: &RunConfig,
    inputs: &Inputs,
    metric: Option<MetricId>,
    fold: &FoldSpec,
    probes: &TemplateSet,
) -> Result<Vec<RankList>> {
    match metric {
        None => matcher::rank_from_class_scores(probes, &inputs.roster),
        Some(metric) => {
            let sm = matcher::score_matrix(probes, &inputs.enrolled(fold), metric)?;
            Ok(matcher::rank_gallery(&sm, cfg.fusion))
        }
    }
}

fn identify_fold(
    cfg: &RunConfig,
    inputs: &Inputs,
    metric: Option<MetricId>,
    fold: &FoldSpec,
) -> Result<FoldResult> {
    let labeled = |probes: &TemplateSet| -> Result<(Vec<RankList>, LabeledScores)> {
        let ranks = identification_ranks(cfg, inputs, metric, fold, probes)?;
        let truth = matcher::truth_from_probes(&ranks);
        let scores = evaluator::identification_scores(&ranks, &truth)?;
        Ok((ranks, scores))
    };

    let (ranks, scores) = labeled(&inputs.test_probes(fold)?)?;
    let truth = matcher::truth_from_probes(&ranks);
    let cmc = evaluator::cmc_curve(&ranks, &truth)?;
    let roc: RocCurve = evaluator::roc_curve(&scores)?;

    let mut report = EvalReport::from_roc(fold.fold_id, &roc, &cfg.far_targets);
    report.eer = None;
    report.auc = None;
    report.rank_k = vec![RankRate {
        rank: 1,
        rate: cmc.rank(1),
    }];
    if cfg.threshold_policy == ThresholdPolicy::TransferFromValidation {
        if let Some(val) = inputs.validation_probes(fold)? {
            let (_, val_scores) = labeled(&val)?;
            let thresholds = validation_thresholds(cfg, &val_scores)?;
            report.apply_thresholds(&scores, &thresholds);
        }
    }
    Ok(FoldResult {
        fold: fold.clone(),
        report,
        curve_csv: csv_bytes(|w| cmc.write_csv(w)),
    })
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("report values serialize");
    buf.push(b'\n');
    buf
}

/// Threshold as JSON; the reject-all and accept-all sentinels become strings.
fn threshold_json(t: f64) -> serde_json::Value {
    if t.is_finite() {
        json!(t)
    } else if t > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn report_json(command: &str, label: &str, cfg: &RunConfig, notes: &[&str], r: &FoldResult) -> Vec<u8> {
    let report = &r.report;
    let tar: Vec<_> = report
        .tar_at_far
        .iter()
        .map(|t| {
            json!({
                "far_target": t.far_target,
                "tar": t.tar,
                "threshold": threshold_json(t.threshold),
                "far": t.far,
            })
        })
        .collect();
    let mut body = json!({
        "command": command,
        "metric": label,
        "layer": cfg.layer.as_str(),
        "normalized": cfg.normalize,
        "threshold_policy": cfg.threshold_policy.to_string(),
        "units": "fraction",
        "notes": notes,
        "fold": {
            "fold_id": r.fold.fold_id,
            "test_session": r.fold.test_session,
            "train_sessions": r.fold.train_sessions,
        },
        "genuine_count": report.genuine_count,
        "impostor_count": report.impostor_count,
        "tar_at_far": tar,
    });
    let obj = body.as_object_mut().expect("object literal");
    if let Some(v) = report.eer {
        obj.insert("eer".into(), json!(v));
    }
    if let Some(v) = report.auc {
        obj.insert("auc".into(), json!(v));
    }
    if !report.rank_k.is_empty() {
        obj.insert("rank_k".into(), json!(report.rank_k));
    }
    json_bytes(&body)
}

fn summary_json(
    command: &str,
    label: &str,
    cfg: &RunConfig,
    notes: &[&str],
    summary: &CrossValSummary,
) -> Vec<u8> {
    let quantities: Vec<_> = summary
        .quantities
        .iter()
        .map(|q| {
            json!({
                "name": q.name,
                "mean": q.mean,
                "std": q.std,
                "min": q.min,
                "max": q.max,
                "values": q.values,
                "formatted_percent": q.formatted(),
            })
        })
        .collect();
    json_bytes(&json!({
        "command": command,
        "metric": label,
        "layer": cfg.layer.as_str(),
        "normalized": cfg.normalize,
        "threshold_policy": cfg.threshold_policy.to_string(),
        "units": "fraction",
        "std": "sample (n - 1)",
        "notes": notes,
        "folds": summary.folds,
        "quantities": quantities,
    }))
}

fn summary_table(label_column: &str, rows: &[(&str, &CrossValSummary)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    evaluator::write_summary_table(&mut buf, label_column, rows)?;
    Ok(buf)
}

/// Runs every (label, fold) job in parallel and assembles per-fold and summary files.
fn battery(
    command: &str,
    cfg: &RunConfig,
    folds: &[FoldSpec],
    labels: &[String],
    notes: &[&str],
    stdout: &mut String,
    job: impl Fn(usize, &FoldSpec) -> Result<FoldResult> + Sync,
) -> Result<Vec<OutputFile>> {
    let jobs: Vec<(usize, &FoldSpec)> = (0..labels.len())
        .flat_map(|m| folds.iter().map(move |f| (m, f)))
        .collect();
    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|&(m, fold)| job(m, fold).map_err(|e| e.in_fold(fold.fold_id, labels[m].clone())))
        .collect::<Result<_>>()?;

    let mut files = Vec::new();
    let mut summaries = Vec::with_capacity(labels.len());
    for (label, chunk) in labels.iter().zip(results.chunks(folds.len())) {
        for r in chunk {
            files.push(OutputFile {
                name: format!("{command}_{label}_{}.csv", r.fold.fold_id),
                contents: r.curve_csv.clone(),
            });
            files.push(OutputFile {
                name: format!("{command}_{label}_{}.json", r.fold.fold_id),
                contents: report_json(command, label, cfg, notes, r),
            });
        }
        let reports: Vec<EvalReport> = chunk.iter().map(|r| r.report.clone()).collect();
        let summary = evaluator::aggregate_folds(&reports)?;
        files.push(OutputFile {
            name: format!("{command}_{label}_summary.json"),
            contents: summary_json(command, label, cfg, notes, &summary),
        });
        files.push(OutputFile {
            name: format!("{command}_{label}_summary.csv"),
            contents: summary_table("metric", &[(label, &summary)])?,
        });
        summaries.push(summary);
    }

    let rows: Vec<(&str, &CrossValSummary)> =
        labels.iter().map(String::as_str).zip(&summaries).collect();
    if labels.len() > 1 {
        files.push(OutputFile {
            name: format!("{command}_all_summary.csv"),
            contents: summary_table("metric", &rows)?,
        });
    }
    let table = summary_table("metric", &rows)?;
    stdout.push_str(&String::from_utf8_lossy(&table));
    Ok(files)
}

fn verify(cfg: &RunConfig, inputs: &Inputs, stdout: &mut String) -> Result<Vec<OutputFile>> {
    let folds = inputs.folds()?;
    let metrics = cfg.metric.metrics();
    let labels: Vec<String> = metrics.iter().map(|m| m.to_string()).collect();
    battery("verify", cfg, &folds, &labels, &[], stdout, |m, fold| {
        verify_fold(cfg, inputs, metrics[m], fold)
    })
}

fn identify(cfg: &RunConfig, inputs: &Inputs, stdout: &mut String) -> Result<Vec<OutputFile>> {
    let folds = inputs.folds()?;
    let metrics: Vec<Option<MetricId>> = match cfg.layer {
        LayerTag::Score => vec![None],
        LayerTag::Fc => cfg.metric.metrics().into_iter().map(Some).collect(),
    };
    let labels: Vec<String> = metrics
        .iter()
        .map(|m| m.map_or(CLASS_SCORE_LABEL.to_string(), |m| m.to_string()))
        .collect();
    battery(
        "identify",
        cfg,
        &folds,
        &labels,
        &[IDENTIFICATION_TAR_NOTE],
        stdout,
        |m, fold| identify_fold(cfg, inputs, metrics[m], fold),
    )
}

fn dump_scores(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<OutputFile>> {
    cfg.metric
        .metrics()
        .par_iter()
        .map(|&metric| {
            let sm = matcher::score_matrix(&inputs.probes, &inputs.gallery, metric)?;
            Ok(OutputFile {
                name: format!("dump-scores_{metric}_full.csv"),
                contents: csv_bytes(|w| sm.write_csv(w)),
            })
        })
        .collect()
}
