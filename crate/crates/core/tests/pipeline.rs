use std::fs;

use leaklab::cache::FeatureCache;
use leaklab::dataset::{classify_mos, dominant_class_share, generate, ingest_manifest, write_manifest, GeneratorConfig};
use leaklab::endtoend::{train_regression, RegressionHeadConfig};
use leaklab::extractor::{Extractor, ExtractorConfig, TrainConfig};
use leaklab::harness::{
    run_matrix, split_seed, summarize, write_outputs, ExtractorSection, HarnessConfig, ProtocolId, ProtocolsSection,
    SplitsConfig, RESULTS_FILE,
};
use leaklab::report::{write_report, TableFormat};
use leaklab::seed;
use leaklab::splitter::{split_clean, SplitOptions};

fn quick() -> HarnessConfig {
    HarnessConfig {
        generator: Some(GeneratorConfig { n_videos: 60, frames_per_video: 10, feature_dim: 8, ..Default::default() }),
        splits: SplitsConfig { n_splits: 2, folds: 5, replicates: 2, ..Default::default() },
        extractor: ExtractorSection {
            architecture: ExtractorConfig { body_dim: 32, feature_dim: 16 },
            training: TrainConfig { max_iterations: 150, validation_every: 64, ..Default::default() },
        },
        protocols: ProtocolsSection { end_to_end: RegressionHeadConfig { epochs: 3, ..Default::default() }, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn default_dataset_dominant_class_matches_independent_count() {
    let videos = generate(&GeneratorConfig::default()).unwrap();
    assert_eq!(videos.len(), 300);
    let mut counts = [0usize; 5];
    for v in &videos {
        let m = v.mos;
        let bucket = if m >= 4.2 {
            0
        } else if m > 3.4 {
            1
        } else if m > 2.6 {
            2
        } else if m > 1.8 {
            3
        } else {
            4
        };
        counts[bucket] += 1;
        assert_eq!(classify_mos(m).unwrap().index(), bucket);
    }
    let share = *counts.iter().max().unwrap() as f64 / 300.0;
    assert!(share > 0.0);
    assert_eq!(dominant_class_share(&videos).unwrap(), share);
}

#[test]
fn manifest_round_trip_on_disk() {
    let videos = generate(&GeneratorConfig { n_videos: 15, frames_per_video: 4, feature_dim: 5, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &videos).unwrap();
    let back = ingest_manifest(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!(back, videos);
}

#[test]
fn end_to_end_epoch_loss_decreases_on_default_data() {
    // Split 0 of master seed 0, seeded exactly as the harness does.
    let videos = generate(&GeneratorConfig::default()).unwrap();
    let s = split_seed(0, 0);
    let plan = split_clean(&videos, &SplitOptions::default(), s).unwrap();
    let body = Extractor::new(32, &ExtractorConfig::default(), seed::derive(s, "extractor", 0)).unwrap();
    let cfg = RegressionHeadConfig { seed: seed::derive(s, "end-to-end", 0), ..Default::default() };
    let (_, trace) = train_regression(&body, &plan, &videos, &cfg).unwrap();
    let losses: Vec<f64> = trace.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 10);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!((trace.epochs[2].learning_rate - cfg.learning_rate * 0.5625).abs() < 1e-15);
}

#[test]
fn cached_rerun_reuses_features_and_matches() {
    let cfg = quick();
    let videos = cfg.load_videos(None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = FeatureCache::open(dir.path().join("cache")).unwrap();
    let first = run_matrix(&videos, &cfg, 0, Some(&cache)).unwrap();
    let index = fs::read_to_string(dir.path().join("cache/index.json")).unwrap();
    assert!(index.contains("split0-clean") && index.contains("split1-initial"));
    let second = run_matrix(&videos, &cfg, 0, Some(&cache)).unwrap();
    let uncached = run_matrix(&videos, &cfg, 0, None).unwrap();
    let text = |o: &leaklab::harness::MatrixOutput| leaklab::harness::results_to_jsonl(&o.results).unwrap();
    assert_eq!(text(&first), text(&second));
    assert_eq!(text(&first), text(&uncached));
}

#[test]
fn every_leaky_tainted_fold_reports_both_leaks() {
    let mut cfg = quick();
    cfg.protocols.ids = vec![ProtocolId::LeakyFtTaintedTest, ProtocolId::Clean];
    let videos = cfg.load_videos(None).unwrap();
    let out = run_matrix(&videos, &cfg, 0, None).unwrap();
    let folds: Vec<_> = out.results.iter().filter(|r| r.protocol == ProtocolId::LeakyFtTaintedTest).collect();
    assert_eq!(folds.len(), 2 * 5 * 2);
    assert!(folds.iter().all(|r| r.audit.is_some_and(|a| a.ft_leaky && a.test_tainted) && r.scheme == "kfold"));
    let clean: Vec<_> = out.results.iter().filter(|r| r.protocol == ProtocolId::Clean).collect();
    assert_eq!(clean.len(), 2);
    assert!(clean.iter().all(|r| r.audit.is_some_and(|a| !a.ft_leaky && !a.test_tainted)));
}

#[test]
fn outputs_feed_the_report() {
    let cfg = quick();
    let videos = cfg.load_videos(None).unwrap();
    let out = run_matrix(&videos, &cfg, 0, None).unwrap();
    let run_dir = tempfile::tempdir().unwrap();
    write_outputs(run_dir.path(), &out).unwrap();
    assert!(run_dir.path().join("traces/split0_clean.csv").exists());
    assert!(run_dir.path().join("timings.jsonl").exists());
    let results = fs::read_to_string(run_dir.path().join(RESULTS_FILE)).unwrap();
    assert!(!results.contains("elapsed"));

    let report_dir = tempfile::tempdir().unwrap();
    write_report(run_dir.path(), report_dir.path(), TableFormat::Csv).unwrap();
    let table = fs::read_to_string(report_dir.path().join("table.csv")).unwrap();
    for p in ProtocolId::ALL {
        assert!(table.contains(p.name()), "{p} missing from table");
    }
    let hist = fs::read_to_string(report_dir.path().join("class_histogram.csv")).unwrap();
    let mut sums = std::collections::BTreeMap::<String, f64>::new();
    for l in hist.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        *sums.entry(f[0].into()).or_default() += f[2].parse::<f64>().unwrap();
    }
    assert!(sums.values().all(|s| (s - 100.0).abs() < 0.1));
    assert_eq!(summarize(&out.results).len(), ProtocolId::ALL.len());

    write_report(run_dir.path(), report_dir.path(), TableFormat::Text).unwrap();
    let text = fs::read_to_string(report_dir.path().join("table.txt")).unwrap();
    assert!(text.contains("ref row 12: 0.71 (±0.03) / 0.69 (±0.04)"));
}
