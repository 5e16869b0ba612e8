//! Test-only oracles and synthetic fixtures shared by the integration suites.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spectramatch::evaluator::RocPoint;
use spectramatch::{Distance, FeatureTemplate, LabeledScores, LayerTag, MetricId, TemplateSet};

/// Plain indexed-loop evaluation of each metric formula, written without the
/// library's iterator folds. `None` stands for the infinite sentinel.
pub fn oracle_distance(metric: MetricId, p: &[f64], q: &[f64]) -> Option<f64> {
    let d = p.len();
    match metric {
        MetricId::CityBlock => {
            let mut s = 0.0;
            for i in 0..d {
                s += (p[i] - q[i]).abs();
            }
            Some(s)
        }
        MetricId::KulczynskiD => {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..d {
                num += (p[i] - q[i]).abs();
                den += if p[i] < q[i] { p[i] } else { q[i] };
            }
            if den == 0.0 {
                if num == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            } else {
                Some(num / den)
            }
        }
        MetricId::Czekanowski => {
            let mut mins = 0.0;
            let mut sums = 0.0;
            for i in 0..d {
                mins += if p[i] < q[i] { p[i] } else { q[i] };
                sums += p[i] + q[i];
            }
            Some(if sums == 0.0 { 0.0 } else { 1.0 - 2.0 * mins / sums })
        }
        MetricId::Dice => {
            let mut pq = 0.0;
            let mut sq = 0.0;
            for i in 0..d {
                pq += p[i] * q[i];
                sq += p[i] * p[i] + q[i] * q[i];
            }
            Some(if sq == 0.0 { 0.0 } else { 1.0 - 2.0 * pq / sq })
        }
        MetricId::Squared => {
            let mut s = 0.0;
            for i in 0..d {
                let den = p[i] + q[i];
                if den != 0.0 {
                    s += (p[i] - q[i]).powi(2) / den;
                }
            }
            Some(s)
        }
        MetricId::SquaredChord => {
            let mut s = 0.0;
            for i in 0..d {
                s += (p[i].sqrt() - q[i].sqrt()).powi(2);
            }
            Some(s)
        }
        MetricId::JensenShannon => {
            let mut s = 0.0;
            for i in 0..d {
                let m = p[i] + q[i];
                let mut term = 0.0;
                if p[i] > 0.0 {
                    term += p[i] * (2.0 * p[i] / m).ln();
                }
                if q[i] > 0.0 {
                    term += q[i] * (2.0 * q[i] / m).ln();
                }
                s += term;
            }
            Some(s / 2.0)
        }
    }
}

/// Exhaustive threshold sweep: every candidate threshold counts accepted
/// scores by a linear scan.
pub fn brute_force_roc(ls: &LabeledScores) -> Vec<RocPoint> {
    let value = |d: &Distance| match d {
        Distance::Finite(v) => *v,
        Distance::Infinite => f64::INFINITY,
    };
    let mut candidates: Vec<f64> = ls
        .genuine
        .iter()
        .chain(&ls.impostor)
        .filter_map(|d| d.finite())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let rate = |scores: &[Distance], t: f64| {
        let mut n = 0;
        for s in scores {
            let v = value(s);
            if v.is_finite() && v <= t || t == f64::INFINITY {
                n += 1;
            }
        }
        n as f64 / scores.len() as f64
    };

    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(candidates);
    thresholds.push(f64::INFINITY);
    thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            far: if t == f64::NEG_INFINITY { 0.0 } else { rate(&ls.impostor, t) },
            tar: if t == f64::NEG_INFINITY { 0.0 } else { rate(&ls.genuine, t) },
        })
        .collect()
}

pub fn finite(values: &[f64]) -> Vec<Distance> {
    values.iter().map(|&v| Distance::new(v).unwrap()).collect()
}

pub fn random_vector(rng: &mut StdRng, d: usize, zero_prob: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            if rng.random_bool(zero_prob) {
                0.0
            } else {
                rng.random_range(0.0..10.0)
            }
        })
        .collect()
}

/// Synthetic experiment: every subject has a prototype, each session
/// perturbs it. Score-layer templates are softmax outputs favouring the true
/// subject.
pub struct Fixture {
    pub subjects: usize,
    pub sessions: usize,
    pub fc_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for Fixture {
    fn default() -> Self {
        Self {
            subjects: 6,
            sessions: 4,
            fc_dim: 16,
            noise: 0.4,
            seed: 7,
        }
    }
}

pub fn subject_name(k: usize) -> String {
    format!("s{k:02}")
}

impl Fixture {
    pub fn templates(&self, source: &str) -> Vec<FeatureTemplate> {
        let mut rng = StdRng::seed_from_u64(self.seed);
        let prototypes: Vec<Vec<f64>> = (0..self.subjects)
            .map(|_| (0..self.fc_dim).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let mut out = Vec::new();
        for session in 1..=self.sessions {
            for (k, proto) in prototypes.iter().enumerate() {
                let fc: Vec<f64> = proto
                    .iter()
                    .map(|v| (v + rng.random_range(-self.noise..self.noise)).max(0.0))
                    .collect();
                let logits: Vec<f64> = (0..self.subjects)
                    .map(|j| {
                        let bias = if j == k { 2.0 } else { 0.0 };
                        bias + rng.random_range(-1.5..1.5)
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::MIN, f64::max);
                let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = exp.iter().sum();
                let scores = exp.iter().map(|e| e / total).collect();
                let session = format!("S{session}");
                out.push(FeatureTemplate::new(subject_name(k), &session, source, LayerTag::Fc, fc));
                out.push(FeatureTemplate::new(subject_name(k), &session, source, LayerTag::Score, scores));
            }
        }
        out
    }

    pub fn set(&self, layer: LayerTag) -> TemplateSet {
        TemplateSet::new(
            self.templates("real")
                .into_iter()
                .filter(|t| t.layer == layer)
                .collect(),
        )
        .unwrap()
    }

    /// Writes the mixed-layer JSON-lines file the feature exporter would produce.
    pub fn write_jsonl(&self, dir: &Path, name: &str, source: &str) -> PathBuf {
        let path = dir.join(name);
        let mut text = String::new();
        for t in self.templates(source) {
            text.push_str(&serde_json::to_string(&t).unwrap());
            text.push('\n');
        }
        fs::write(&path, text).unwrap();
        path
    }
}
