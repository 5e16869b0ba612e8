//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use spectramatch::evaluator::{RankRate, TarAtFar};
use spectramatch::matcher::{truth_from_probes, MatchScore, RankEntry};
use spectramatch::{
    aggregate_folds, auc, cmc_curve, distance, eer, identification_scores, l1_normalize,
    rank_from_class_scores, rank_gallery, roc_curve, score_matrix, tar_at_far, Distance,
    EvalReport, FeatureTemplate, Fusion, LabeledScores, LayerTag, MetricId, RankList, SampleKey,
    TemplateSet,
};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use common::{brute_force_roc, finite, oracle_distance, random_vector, Fixture};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn metric_exactness() -> Check {
    let p = [1.0, 2.0, 3.0];
    let q = [3.0, 2.0, 1.0];
    let cases: [(MetricId, &[f64], &[f64], f64); 7] = [
        (MetricId::CityBlock, &p, &q, 4.0),
        (MetricId::KulczynskiD, &p, &q, 1.0),
        (MetricId::Czekanowski, &p, &q, 1.0 / 3.0),
        (MetricId::Dice, &p, &q, 2.0 / 7.0),
        (MetricId::Squared, &p, &q, 2.0),
        (MetricId::SquaredChord, &p, &q, 8.0 - 4.0 * 3f64.sqrt()),
        (MetricId::JensenShannon, &[1.0, 0.0], &[0.0, 1.0], 2f64.ln()),
    ];
    for (m, a, b, want) in cases {
        let got = distance(m, a, b).map_err(|e| e.to_string())?;
        ensure(got.finite().is_some_and(|v| close(v, want, 1e-9)), || {
            format!("{m}: got {got}, want {want}")
        })?;
    }
    for m in MetricId::ALL {
        let v = [0.2, 0.8];
        let got = distance(m, &v, &v).map_err(|e| e.to_string())?;
        ensure(got == Distance::ZERO, || format!("{m}: d(p,p) = {got}"))?;
    }

    let dice = distance(MetricId::Dice, &[1.0, 0.0], &[0.0, 1.0]).map_err(|e| e.to_string())?;
    ensure(dice == Distance::Finite(1.0), || format!("dice on orthogonal vectors: {dice}"))?;
    let sentinel =
        distance(MetricId::KulczynskiD, &[1.0, 0.0], &[0.0, 1.0]).map_err(|e| e.to_string())?;
    ensure(sentinel.is_infinite(), || format!("disjoint kulczynski_d: {sentinel}"))?;
    Ok("7 reference values within 1e-9, identity and degenerate cases exact".into())
}

fn metric_properties() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let tol = 1e-12;
    let mut pairs = 0;
    for &d in &[2usize, 41, 512] {
        for _ in 0..1000 {
            let p = random_vector(&mut rng, d, 0.2);
            let q = random_vector(&mut rng, d, 0.2);
            let c = rng.random_range(0.1..10.0);
            let cp: Vec<f64> = p.iter().map(|v| v * c).collect();
            let cq: Vec<f64> = q.iter().map(|v| v * c).collect();
            for m in MetricId::ALL {
                let pq = distance(m, &p, &q).map_err(|e| e.to_string())?;
                let qp = distance(m, &q, &p).map_err(|e| e.to_string())?;
                let pp = distance(m, &p, &p).map_err(|e| e.to_string())?;
                let scaled = distance(m, &cp, &cq).map_err(|e| e.to_string())?;
                let ctx = || format!("{m}, d={d}");

                ensure(pq == qp, || format!("{}: asymmetric {pq} vs {qp}", ctx()))?;
                ensure(pp == Distance::ZERO, || format!("{}: d(p,p) = {pp}", ctx()))?;
                ensure(pq.as_f64() >= 0.0, || format!("{}: negative {pq}", ctx()))?;
                if matches!(m, MetricId::Czekanowski | MetricId::Dice) {
                    ensure(pq.as_f64() <= 1.0, || format!("{}: above 1: {pq}", ctx()))?;
                }

                let oracle = oracle_distance(m, &p, &q);
                match (pq.finite(), oracle) {
                    (Some(a), Some(b)) => ensure(close(a, b, tol), || {
                        format!("{}: oracle {b} vs {a}", ctx())
                    })?,
                    (None, None) => {}
                    _ => return Err(format!("{}: sentinel mismatch with oracle", ctx())),
                }

                // Three metrics ignore scale; the rest grow linearly with it.
                let expected = match m {
                    MetricId::KulczynskiD | MetricId::Czekanowski | MetricId::Dice => pq,
                    _ => Distance::Finite(pq.as_f64() * c),
                };
                let ok = match (scaled.finite(), expected.finite()) {
                    (Some(a), Some(b)) => close(a, b, tol),
                    (None, None) => true,
                    _ => false,
                };
                ensure(ok, || format!("{}: scale {c}: {scaled} vs {expected}", ctx()))?;
            }
            pairs += 1;
        }
    }

    for _ in 0..200 {
        let p = l1_normalize(&template(random_vector(&mut rng, 41, 0.3))).map_err(|e| e.to_string())?;
        let q = l1_normalize(&template(random_vector(&mut rng, 41, 0.3))).map_err(|e| e.to_string())?;
        let js = distance(MetricId::JensenShannon, &p.features, &q.features)
            .map_err(|e| e.to_string())?;
        ensure(js.as_f64() <= 2f64.ln() + tol, || format!("JS above ln 2: {js}"))?;
    }
    Ok(format!("{pairs} pairs x 7 metrics, 0 violations"))
}

fn template(features: Vec<f64>) -> FeatureTemplate {
    let mut features = features;
    if features.iter().all(|&v| v == 0.0) {
        features[0] = 1.0;
    }
    FeatureTemplate::new("s", "S1", "real", LayerTag::Fc, features)
}

fn roc_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(23);
    let mut points = 0;
    for instance in 0..50 {
        let total = rng.random_range(2..=500);
        let n_gen = rng.random_range(1..total);
        // Coarse grid to force ties; occasional sentinels.
        let draw = |rng: &mut StdRng| {
            if rng.random_bool(0.02) {
                Distance::INFINITE
            } else {
                Distance::Finite(rng.random_range(0..60) as f64 / 8.0)
            }
        };
        let genuine: Vec<Distance> = (0..n_gen).map(|_| draw(&mut rng)).collect();
        let impostor: Vec<Distance> = (n_gen..total).map(|_| draw(&mut rng)).collect();
        let ls = LabeledScores {
            genuine,
            impostor,
            self_pairs: 0,
        };
        let rc = roc_curve(&ls).map_err(|e| e.to_string())?;
        let brute = brute_force_roc(&ls);
        ensure(rc.points == brute, || {
            format!("instance {instance}: {} points vs {} from brute force", rc.points.len(), brute.len())
        })?;
        points += brute.len();
    }
    Ok(format!("50 instances, {points} ROC points identical"))
}

fn gaussian_rates() -> Check {
    let n = 50_000;
    let mut rng = StdRng::seed_from_u64(2024);
    let g = Normal::new(10.0, 1.0).unwrap();
    let i = Normal::new(12.0, 1.0).unwrap();
    let genuine: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
    let impostor: Vec<f64> = (0..n).map(|_| i.sample(&mut rng)).collect();
    let ls = LabeledScores {
        genuine: finite(&genuine),
        impostor: finite(&impostor),
        self_pairs: 0,
    };
    let rc = roc_curve(&ls).map_err(|e| e.to_string())?;
    let std_normal = StatNormal::new(0.0, 1.0).unwrap();
    let eer_expected = std_normal.cdf(-1.0);
    let auc_expected = std_normal.cdf(2f64.sqrt());
    let (e, a) = (eer(&rc), auc(&rc));
    ensure((e - eer_expected).abs() <= 0.005, || {
        format!("EER {e:.5} vs {eer_expected:.5}")
    })?;
    ensure((a - auc_expected).abs() <= 0.005, || {
        format!("AUC {a:.5} vs {auc_expected:.5}")
    })?;
    Ok(format!(
        "EER {e:.4} (expected {eer_expected:.4}), AUC {a:.4} (expected {auc_expected:.4})"
    ))
}

fn degenerate_protocols() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let genuine: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();
    let impostor: Vec<f64> = (0..1000).map(|_| rng.random_range(2.0..3.0)).collect();
    let ls = LabeledScores {
        genuine: finite(&genuine),
        impostor: finite(&impostor),
        self_pairs: 0,
    };
    let rc = roc_curve(&ls).map_err(|e| e.to_string())?;
    ensure(eer(&rc) == 0.0, || format!("separated EER {}", eer(&rc)))?;
    ensure(auc(&rc) == 1.0, || format!("separated AUC {}", auc(&rc)))?;
    ensure(tar_at_far(&rc, 0.01) == 1.0, || {
        format!("separated TAR@1%FAR {}", tar_at_far(&rc, 0.01))
    })?;

    // Identification where every probe scores its own subject highest.
    let subjects: Vec<String> = (0..10).map(common::subject_name).collect();
    let probes: Vec<FeatureTemplate> = subjects
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let scores = (0..subjects.len())
                .map(|j| if j == k { 0.9 } else { 0.1 / 9.0 })
                .collect();
            FeatureTemplate::new(s, "S1", "real", LayerTag::Score, scores)
        })
        .collect();
    let ts = TemplateSet::new(probes).map_err(|e| e.to_string())?;
    let ranks = rank_from_class_scores(&ts, &subjects).map_err(|e| e.to_string())?;
    let truth = truth_from_probes(&ranks);
    let cmc = cmc_curve(&ranks, &truth).map_err(|e| e.to_string())?;
    ensure(cmc.rank(1) == 1.0, || format!("rank-1 {}", cmc.rank(1)))?;
    let id = identification_scores(&ranks, &truth).map_err(|e| e.to_string())?;
    let id_rc = roc_curve(&id).map_err(|e| e.to_string())?;
    ensure(tar_at_far(&id_rc, 0.01) == 1.0, || {
        format!("identification TAR@1%FAR {}", tar_at_far(&id_rc, 0.01))
    })?;

    let n = 10_000;
    let same: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect();
    let ls = LabeledScores {
        genuine: finite(&same[..n]),
        impostor: finite(&same[n..]),
        self_pairs: 0,
    };
    let rc = roc_curve(&ls).map_err(|e| e.to_string())?;
    let band = 3.0 / (n as f64).sqrt();
    let (e, a) = (eer(&rc), auc(&rc));
    ensure((e - 0.5).abs() <= band, || format!("chance EER {e}"))?;
    ensure((a - 0.5).abs() <= band, || format!("chance AUC {a}"))?;
    Ok(format!(
        "separated: EER 0, AUC 1, TAR 1, rank-1 1; chance: EER {e:.4}, AUC {a:.4} (band {band:.3})"
    ))
}

fn ranked(probe: &str, order: &[&str]) -> RankList {
    RankList {
        probe: SampleKey::new(probe, "S1"),
        entries: order
            .iter()
            .enumerate()
            .map(|(i, s)| RankEntry {
                subject: s.to_string(),
                score: MatchScore::Distance(Distance::Finite(i as f64)),
            })
            .collect(),
    }
}

fn cmc_checks() -> Check {
    let ranks = vec![
        ranked("a", &["a", "b", "c"]),
        ranked("b", &["a", "b", "c"]),
        ranked("c", &["a", "c", "b"]),
    ];
    let cmc = cmc_curve(&ranks, &truth_from_probes(&ranks)).map_err(|e| e.to_string())?;
    ensure(cmc.rates == [1.0 / 3.0, 1.0, 1.0], || format!("hand fixture {:?}", cmc.rates))?;

    for seed in 0..20 {
        let fixture = Fixture {
            subjects: 5 + seed as usize,
            noise: 1.5,
            seed,
            ..Default::default()
        };
        let set = fixture.set(LayerTag::Fc);
        let probes = set.filter(|t| t.session == "S1");
        let gallery = set.filter(|t| t.session != "S1");
        for metric in MetricId::ALL {
            let sm = score_matrix(&probes, &gallery, metric).map_err(|e| e.to_string())?;
            for fusion in [Fusion::Min, Fusion::Mean] {
                let ranks = rank_gallery(&sm, fusion);
                let cmc = cmc_curve(&ranks, &truth_from_probes(&ranks)).map_err(|e| e.to_string())?;
                let monotone = cmc.rates.windows(2).all(|w| w[0] <= w[1]);
                ensure(monotone && cmc.rates.last() == Some(&1.0), || {
                    format!("seed {seed} {metric} {fusion}: {:?}", cmc.rates)
                })?;
            }
        }
    }
    Ok("hand fixture (1/3, 1, 1); 280 random curves monotone, ending at 1".into())
}

fn report(fold: usize, tar: f64) -> EvalReport {
    EvalReport {
        fold_id: fold,
        tar_at_far: vec![TarAtFar {
            far_target: 0.01,
            tar,
            threshold: 0.0,
            far: 0.0,
        }],
        eer: None,
        auc: None,
        rank_k: vec![RankRate { rank: 1, rate: tar }],
        genuine_count: 1,
        impostor_count: 1,
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spectramatch"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn is_mean_std(cell: &str) -> bool {
    let Some((mean, std)) = cell.split_once(" ± ") else {
        return false;
    };
    let two_decimals = |s: &str| {
        s.parse::<f64>().is_ok() && s.split_once('.').is_some_and(|(_, frac)| frac.len() == 2)
    };
    two_decimals(mean) && two_decimals(std)
}

fn cross_validation() -> Check {
    let summary = aggregate_folds(&[report(1, 0.10), report(2, 0.20)]).map_err(|e| e.to_string())?;
    let tar = summary.get("TAR@1%FAR").ok_or("missing TAR column")?;
    ensure(tar.formatted() == "15.00 ± 7.07", || format!("got {}", tar.formatted()))?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let probe = Fixture::default().write_jsonl(tmp.path(), "t.jsonl", "real");
    let probe = probe.to_str().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    run_cli(&["verify", "--probe", probe, "--metric", "all", "--output-dir", out_s])?;
    run_cli(&["identify", "--probe", probe, "--layer", "score", "--output-dir", out_s])?;

    let mut tables = 0;
    for entry in fs::read_dir(&out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with("_summary.csv") {
            let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            ensure(header.len() >= 2 && header[0] == "metric", || format!("{name}: header {header:?}"))?;
            for line in lines {
                let cells: Vec<&str> = line.split(',').collect();
                ensure(cells.len() == header.len(), || format!("{name}: ragged row {line}"))?;
                ensure(cells[1..].iter().all(|c| is_mean_std(c)), || format!("{name}: bad cell in {line}"))?;
            }
            tables += 1;
        } else if name.ends_with("_summary.json") {
            let v: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
            ensure(v["folds"] == 4, || format!("{name}: folds {}", v["folds"]))?;
            for q in v["quantities"].as_array().ok_or("no quantities")? {
                let values: Vec<f64> = q["values"]
                    .as_array()
                    .ok_or("no values")?
                    .iter()
                    .filter_map(|x| x.as_f64())
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                ensure(values.len() == 4 && close(q["mean"].as_f64().unwrap_or(f64::NAN), mean, 1e-12), || {
                    format!("{name}: {} inconsistent", q["name"])
                })?;
            }
        }
    }
    ensure(tables == 9, || format!("expected 9 summary tables, found {tables}"))?;
    Ok("15.00 ± 7.07; 9 summary tables over 4 folds well-formed".into())
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let probe = Fixture::default().write_jsonl(tmp.path(), "t.jsonl", "real");
    let probe = probe.to_str().unwrap();
    let runs: [(&str, &[&str]); 2] = [
        ("verify", &["--metric", "all"]),
        ("identify", &["--gallery", probe, "--metric", "all"]),
    ];
    let mut files = 0;
    for (command, extra) in runs {
        let mut snapshots = Vec::new();
        for (i, workers) in ["1", "8", "1", "8"].iter().enumerate() {
            let out = tmp.path().join(format!("{command}{i}"));
            let out_s = out.to_str().unwrap();
            let mut args = vec![command, "--probe", probe, "--workers", workers, "--output-dir", out_s];
            args.extend_from_slice(extra);
            run_cli(&args)?;
            snapshots.push(snapshot(&out)?);
        }
        ensure(snapshots.windows(2).all(|w| w[0] == w[1]), || {
            format!("{command}: outputs differ between runs")
        })?;
        files += snapshots[0].len();
    }
    Ok(format!("{files} files byte-identical over 4 runs each (workers 1 and 8)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metric exactness", metric_exactness),
        ("metric properties", metric_properties),
        ("ROC matches brute-force sweep", roc_oracle),
        ("Gaussian EER and AUC", gaussian_rates),
        ("degenerate protocols", degenerate_protocols),
        ("CMC correctness", cmc_checks),
        ("cross-validation reporting", cross_validation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let ms = start.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS  {}. {name}: {detail} ({ms} ms)", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}. {name}: {why} ({ms} ms)", k + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
