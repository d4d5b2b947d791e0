//! The protocol matrix: split → fine-tune → extract → pool → SVR → correlate,
//! under every combination of fine-tuning leakage and test-set taint.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{FeatureCache, FeatureStore};
use crate::dataset::{dominant_class_share, generate, ingest_manifest, GeneratorConfig, VideoRecord};
use crate::endtoend::{predict_video, train_regression, RegressionHeadConfig, RegressionTrace};
use crate::error::{LeakError, Result};
use crate::extractor::{
    class_distribution, fine_tune_monitored, validation_gap, ClassDistribution, Extractor, ExtractorConfig, GapStats,
    TrainConfig, TrainTrace,
};
use crate::metrics::{correlate, mean_std, CorrelationResult, MeanStd};
use crate::pooling::PoolingMethod;
use crate::regressor::{fit, KernelSpec, SvrConfig};
use crate::report::{reference_for, ReferenceRow};
use crate::seed;
use crate::splitter::{audit, make_tainted_folds, split_clean, split_ft_leaky, AuditReport, FrameRef, SplitOptions, SplitPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolId {
    NoFinetune,
    Clean,
    #[serde(rename = "LeakyFt_CleanTest")]
    LeakyFtCleanTest,
    #[serde(rename = "CleanFt_TaintedTest")]
    CleanFtTaintedTest,
    #[serde(rename = "LeakyFt_TaintedTest")]
    LeakyFtTaintedTest,
    EndToEnd,
}

impl ProtocolId {
    /// In table order, top to bottom.
    pub const ALL: [ProtocolId; 6] = [
        ProtocolId::NoFinetune,
        ProtocolId::LeakyFtTaintedTest,
        ProtocolId::CleanFtTaintedTest,
        ProtocolId::LeakyFtCleanTest,
        ProtocolId::Clean,
        ProtocolId::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::NoFinetune => "NoFinetune",
            ProtocolId::Clean => "Clean",
            ProtocolId::LeakyFtCleanTest => "LeakyFt_CleanTest",
            ProtocolId::CleanFtTaintedTest => "CleanFt_TaintedTest",
            ProtocolId::LeakyFtTaintedTest => "LeakyFt_TaintedTest",
            ProtocolId::EndToEnd => "EndToEnd",
        }
    }

    /// Whether fine-tuning used frame-pooled train/val splits.
    pub fn ft_leaky(self) -> bool {
        matches!(self, ProtocolId::LeakyFtCleanTest | ProtocolId::LeakyFtTaintedTest)
    }

    /// Whether the SVR is evaluated on tainted folds.
    pub fn test_tainted(self) -> bool {
        matches!(self, ProtocolId::CleanFtTaintedTest | ProtocolId::LeakyFtTaintedTest)
    }

    /// The (ft, test) flags are meaningless without fine-tuning.
    pub fn has_flags(self) -> bool {
        self != ProtocolId::NoFinetune
    }

    pub fn uses_svr(self) -> bool {
        self != ProtocolId::EndToEnd
    }

    fn order(self) -> usize {
        ProtocolId::ALL.iter().position(|&p| p == self).unwrap_or(usize::MAX)
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = LeakError;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = ProtocolId::ALL.iter().map(|p| p.name()).collect();
                LeakError::domain(format!("unknown protocol `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Kernel as written in a config; a Gaussian without `gamma` uses 1/F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Linear,
    Polynomial {
        #[serde(default = "default_degree")]
        degree: u32,
        #[serde(default = "default_coef")]
        coef: f64,
    },
    Gaussian {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

fn default_degree() -> u32 {
    3
}

fn default_coef() -> f64 {
    1.0
}

impl KernelChoice {
    pub const GRID: [KernelChoice; 3] = [
        KernelChoice::Linear,
        KernelChoice::Polynomial { degree: 3, coef: 1.0 },
        KernelChoice::Gaussian { gamma: None },
    ];

    pub fn resolve(self, feature_dim: usize) -> KernelSpec<f64> {
        match self {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Polynomial { degree, coef } => KernelSpec::Polynomial { degree, coef },
            KernelChoice::Gaussian { gamma } => KernelSpec::Gaussian { gamma: gamma.unwrap_or(1.0 / feature_dim.max(1) as f64) },
        }
    }
}

/// A protocol with its pooling and kernel. EndToEnd ignores both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub id: ProtocolId,
    pub pooling: PoolingMethod,
    pub kernel: KernelSpec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitsConfig {
    /// Number of random splits (master seeds).
    pub n_splits: usize,
    pub seed: u64,
    /// Folds and replicates of the tainted cross-validation.
    pub folds: usize,
    pub replicates: usize,
    pub options: SplitOptions,
}

impl Default for SplitsConfig {
    fn default() -> Self {
        SplitsConfig { n_splits: 5, seed: 0, folds: 5, replicates: 5, options: SplitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorSection {
    pub architecture: ExtractorConfig,
    /// The `seed` field is replaced by one derived from each split's seed.
    pub training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolsSection {
    pub ids: Vec<ProtocolId>,
    pub pooling: Vec<PoolingMethod>,
    pub kernels: Vec<KernelChoice>,
    pub end_to_end: RegressionHeadConfig,
}

impl Default for ProtocolsSection {
    fn default() -> Self {
        ProtocolsSection {
            ids: ProtocolId::ALL.to_vec(),
            pooling: vec![PoolingMethod::Mean],
            kernels: vec![KernelChoice::Gaussian { gamma: None }],
            end_to_end: RegressionHeadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub dataset: Option<DatasetSection>,
    pub generator: Option<GeneratorConfig>,
    pub splits: SplitsConfig,
    pub extractor: ExtractorSection,
    pub svr: SvrConfig<f64>,
    pub protocols: ProtocolsSection,
    /// Persist features under `<out>/cache` and reuse them on reruns.
    pub cache: bool,
}

impl HarnessConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: HarnessConfig = serde_json::from_str(s)?;
        if c.dataset.is_some() && c.generator.is_some() {
            return Err(LeakError::domain("config may name a dataset or a generator, not both"));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| LeakError::io(path, e))?;
        Self::from_json(&s)
    }

    /// Ingests the manifest, or generates the synthetic dataset (the default
    /// generator when neither section is present). Relative manifest paths
    /// resolve against `base`.
    pub fn load_videos(&self, base: Option<&Path>) -> Result<Vec<VideoRecord>> {
        match (&self.dataset, &self.generator) {
            (Some(d), _) => {
                let path = match base {
                    Some(b) if d.manifest.is_relative() => b.join(&d.manifest),
                    _ => d.manifest.clone(),
                };
                ingest_manifest(&path)
            }
            (None, Some(g)) => generate(g),
            (None, None) => generate(&GeneratorConfig::default()),
        }
    }

    pub fn protocol_grid(&self, feature_dim: usize) -> Vec<Protocol> {
        let mut out = Vec::new();
        for &id in &self.protocols.ids {
            if !id.uses_svr() {
                out.push(Protocol { id, pooling: PoolingMethod::Mean, kernel: KernelSpec::Linear });
                continue;
            }
            for &pooling in &self.protocols.pooling {
                for &k in &self.protocols.kernels {
                    out.push(Protocol { id, pooling, kernel: k.resolve(feature_dim) });
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.splits.n_splits == 0 {
            return Err(LeakError::domain("n_splits must be positive"));
        }
        if self.protocols.ids.is_empty() {
            return Err(LeakError::domain("no protocols selected"));
        }
        let svr_used = self.protocols.ids.iter().any(|p| p.uses_svr());
        if svr_used && (self.protocols.pooling.is_empty() || self.protocols.kernels.is_empty()) {
            return Err(LeakError::domain("SVR protocols need at least one pooling method and one kernel"));
        }
        self.extractor.training.validate()?;
        self.svr.validate()?;
        self.protocols.end_to_end.validate()
    }
}

/// Leakage found by the audit of the plan a result was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub ft_leaky: bool,
    pub test_tainted: bool,
    pub videos_in_train_and_val: usize,
    pub test_videos_seen_in_fine_tuning: usize,
}

impl From<&AuditReport> for AuditSummary {
    fn from(a: &AuditReport) -> Self {
        AuditSummary {
            ft_leaky: a.ft_leaky,
            test_tainted: a.test_tainted,
            videos_in_train_and_val: a.videos_in_train_and_val,
            test_videos_seen_in_fine_tuning: a.test_videos_seen_in_fine_tuning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok { correlation: CorrelationResult<f64>, n_train: usize, n_test: usize },
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: ProtocolId,
    /// `None` for EndToEnd.
    pub pooling: Option<PoolingMethod>,
    pub kernel: Option<String>,
    /// `random_splits` or `kfold`.
    pub scheme: String,
    pub split_index: usize,
    pub fold: usize,
    pub replicate: usize,
    pub seed: u64,
    pub audit: Option<AuditSummary>,
    pub outcome: Outcome,
    /// Wall time; kept out of the JSONL so reruns compare byte for byte.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

impl RunResult {
    pub fn correlation(&self) -> Option<&CorrelationResult<f64>> {
        match &self.outcome {
            Outcome::Ok { correlation, .. } => Some(correlation),
            Outcome::Failed { .. } => None,
        }
    }

    /// Key the results are sorted by.
    fn sort_key(&self) -> (usize, Option<PoolingMethod>, Option<String>, usize, usize, usize) {
        (self.protocol.order(), self.pooling, self.kernel.clone(), self.split_index, self.replicate, self.fold)
    }

    /// Audit flags equal the protocol's declared flags.
    pub fn audit_consistent(&self) -> bool {
        self.audit.is_none_or(|a| a.ft_leaky == self.protocol.ft_leaky() && a.test_tainted == self.protocol.test_tainted())
    }
}

/// Side products of one split that the report plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArtifacts {
    pub split_index: usize,
    pub seed: u64,
    pub clean_trace: Option<TrainTrace>,
    pub leaky_trace: Option<TrainTrace>,
    pub end_to_end_trace: Option<RegressionTrace>,
    pub gap: Option<GapStats>,
    /// Correctly fine-tuned extractor on the held-out test videos.
    pub class_histogram: Option<ClassDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub protocol: ProtocolId,
    pub pooling: Option<PoolingMethod>,
    pub kernel: Option<String>,
    pub split_index: usize,
    pub fold: usize,
    pub replicate: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutput {
    pub results: Vec<RunResult>,
    pub artifacts: Vec<SplitArtifacts>,
    pub dominant_class_share: f64,
}

/// Per-protocol mean ± std over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: ProtocolId,
    pub pooling: Option<PoolingMethod>,
    pub kernel: Option<String>,
    pub scheme: String,
    pub plcc: Option<MeanStd<f64>>,
    pub srocc: Option<MeanStd<f64>>,
    /// Mean PLCC and SROCC within each split, in split order.
    pub split_plcc: Vec<f64>,
    pub split_srocc: Vec<f64>,
    pub runs: usize,
    pub failures: usize,
    /// `None` where the flag does not apply.
    pub ft_leaky: Option<bool>,
    pub test_tainted: Option<bool>,
    /// Published values for the same protocol; annotation only.
    pub reference: Option<ReferenceRow>,
}

/// Which videos train the SVR, and which test it, for one evaluation unit.
pub fn svr_train_scope(protocol: ProtocolId, plan: &SplitPlan, all_videos: &[VideoRecord]) -> (Vec<String>, Vec<String>) {
    if protocol.test_tainted() {
        let test: std::collections::HashSet<&str> = plan.test_videos.iter().map(String::as_str).collect();
        let train = all_videos
            .iter()
            .filter(|v| !test.contains(v.video_id.as_str()))
            .map(|v| v.video_id.clone())
            .collect();
        (train, plan.test_videos.clone())
    } else {
        (plan.fine_tune_videos(), plan.test_videos.clone())
    }
}

struct Unit<'a> {
    protocol: Protocol,
    plan: &'a SplitPlan,
    audit: AuditSummary,
    features: &'a FeatureStore,
    split_index: usize,
    fold: usize,
    replicate: usize,
    scheme: &'static str,
}

fn failed(stage: &str, e: &LeakError) -> Outcome {
    Outcome::Failed { stage: stage.to_string(), message: e.to_string() }
}

fn evaluate_svr(unit: &Unit<'_>, videos: &[VideoRecord], row_of: &BTreeMap<&str, usize>, svr: &SvrConfig<f64>) -> RunResult {
    let start = Instant::now();
    let outcome = (|| -> std::result::Result<Outcome, (String, LeakError)> {
        let (train_ids, test_ids) = svr_train_scope(unit.protocol.id, unit.plan, videos);
        let pooled = unit.features.pooled.get(&unit.protocol.pooling).ok_or_else(|| {
            ("pool".to_string(), LeakError::Integrity(format!("{} features not computed", unit.protocol.pooling)))
        })?;
        let gather = |ids: &[String]| -> std::result::Result<(Array2<f64>, Vec<f64>), (String, LeakError)> {
            let rows: Vec<usize> = ids
                .iter()
                .map(|id| row_of.get(id.as_str()).copied().ok_or_else(|| LeakError::Integrity(format!("unknown video `{id}`"))))
                .collect::<Result<_>>()
                .map_err(|e| ("scope".to_string(), e))?;
            Ok((pooled.select(Axis(0), &rows), rows.iter().map(|&r| videos[r].mos).collect()))
        };
        let (x_train, y_train) = gather(&train_ids)?;
        let (x_test, y_test) = gather(&test_ids)?;
        let model = fit(x_train.view(), &y_train, &unit.protocol.kernel, svr).map_err(|e| ("svr".to_string(), e))?;
        let pred = model.predict(x_test.view()).map_err(|e| ("predict".to_string(), e))?;
        if pred.iter().any(|p| !p.is_finite()) {
            return Err(("predict".to_string(), LeakError::Diverged { iteration: model.diagnostics.iterations }));
        }
        let correlation = correlate(&pred, &y_test).map_err(|e| ("correlate".to_string(), e))?;
        Ok(Outcome::Ok { correlation, n_train: train_ids.len(), n_test: test_ids.len() })
    })()
    .unwrap_or_else(|(stage, e)| failed(&stage, &e));
    RunResult {
        protocol: unit.protocol.id,
        pooling: Some(unit.protocol.pooling),
        kernel: Some(unit.protocol.kernel.to_string()),
        scheme: unit.scheme.to_string(),
        split_index: unit.split_index,
        fold: unit.fold,
        replicate: unit.replicate,
        seed: unit.plan.seed,
        audit: Some(unit.audit),
        outcome,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Seed of split `index` under master seed `master`.
pub fn split_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, "split", index as u64)
}

fn all_frames(plan_ids: &[String], videos: &[VideoRecord]) -> Vec<FrameRef> {
    let wanted: std::collections::HashSet<&str> = plan_ids.iter().map(String::as_str).collect();
    videos
        .iter()
        .filter(|v| wanted.contains(v.video_id.as_str()))
        .flat_map(|v| v.frames.iter().map(|f| FrameRef(v.video_id.clone(), f.frame_index)))
        .collect()
}

struct Trained {
    extractor: Option<Extractor>,
    trace: Option<TrainTrace>,
    error: Option<String>,
}

fn run_split(
    videos: &[VideoRecord],
    config: &HarnessConfig,
    protocols: &[Protocol],
    split_index: usize,
    cache: Option<&FeatureCache>,
) -> Result<(Vec<RunResult>, SplitArtifacts)> {
    let s = split_seed(config.splits.seed, split_index);
    let opts = &config.splits.options;
    let clean_plan = split_clean(videos, opts, s)?;
    let leaky_plan = split_ft_leaky(videos, opts, s)?;
    let input_dim = videos[0].feature_dim();
    let initial = Extractor::new(input_dim, &config.extractor.architecture, seed::derive(s, "extractor", 0))?;
    let monitor = all_frames(&clean_plan.test_videos, videos);
    let train_cfg = TrainConfig { seed: seed::derive(s, "sgd", 0), ..config.extractor.training.clone() };

    let needs = |leaky: bool| protocols.iter().any(|p| p.id.uses_svr() && p.id.has_flags() && p.id.ft_leaky() == leaky);
    let tune = |plan: &SplitPlan, wanted: bool| -> Trained {
        if !wanted {
            return Trained { extractor: None, trace: None, error: None };
        }
        match fine_tune_monitored(&initial, plan, videos, &train_cfg, &monitor) {
            Ok((e, t)) => Trained { extractor: Some(e), trace: Some(t), error: None },
            Err(e) => Trained { extractor: None, trace: None, error: Some(e.to_string()) },
        }
    };
    let (clean, leaky) = rayon::join(|| tune(&clean_plan, needs(false)), || tune(&leaky_plan, needs(true)));

    let methods: Vec<PoolingMethod> = {
        let mut m: Vec<PoolingMethod> = protocols.iter().filter(|p| p.id.uses_svr()).map(|p| p.pooling).collect();
        m.sort();
        m.dedup();
        m
    };
    let store_for = |tag: &str, e: &Extractor| -> Result<FeatureStore> {
        match cache {
            Some(c) => c.features(&format!("split{split_index}-{tag}"), e, videos, &methods),
            None => FeatureStore::compute(e, videos, &methods),
        }
    };
    let no_ft_store = if protocols.iter().any(|p| p.id == ProtocolId::NoFinetune) {
        Some(store_for("initial", &initial)?)
    } else {
        None
    };
    let clean_store = clean.extractor.as_ref().map(|e| store_for("clean", e)).transpose()?;
    let leaky_store = leaky.extractor.as_ref().map(|e| store_for("leaky", e)).transpose()?;

    let row_of: BTreeMap<&str, usize> = videos.iter().enumerate().map(|(i, v)| (v.video_id.as_str(), i)).collect();
    let clean_audit = AuditSummary::from(&audit(&clean_plan, videos)?);
    let leaky_audit = AuditSummary::from(&audit(&leaky_plan, videos)?);
    let fold_sets = |plan: &SplitPlan| make_tainted_folds(videos, config.splits.folds, config.splits.replicates, plan, seed::derive(s, "taint", 0));
    let clean_folds = if needs(false) && protocols.iter().any(|p| p.id == ProtocolId::CleanFtTaintedTest) {
        fold_sets(&clean_plan)?
    } else {
        Vec::new()
    };
    let leaky_folds = if needs(true) && protocols.iter().any(|p| p.id == ProtocolId::LeakyFtTaintedTest) {
        fold_sets(&leaky_plan)?
    } else {
        Vec::new()
    };
    let fold_audits = |sets: &[crate::splitter::FoldSet]| -> Result<Vec<Vec<AuditSummary>>> {
        sets.iter()
            .map(|set| set.folds.iter().map(|f| audit(f, videos).map(|a| AuditSummary::from(&a))).collect())
            .collect()
    };
    let clean_fold_audits = fold_audits(&clean_folds)?;
    let leaky_fold_audits = fold_audits(&leaky_folds)?;

    let mut units = Vec::new();
    let mut results = Vec::new();
    for p in protocols.iter().filter(|p| p.id.uses_svr()) {
        let (trained, store, plan, plan_audit, folds, audits) = match p.id {
            ProtocolId::NoFinetune => (None, no_ft_store.as_ref(), &clean_plan, clean_audit, &clean_folds, &clean_fold_audits),
            ProtocolId::Clean | ProtocolId::CleanFtTaintedTest => {
                (Some(&clean), clean_store.as_ref(), &clean_plan, clean_audit, &clean_folds, &clean_fold_audits)
            }
            _ => (Some(&leaky), leaky_store.as_ref(), &leaky_plan, leaky_audit, &leaky_folds, &leaky_fold_audits),
        };
        let store = match (store, trained.and_then(|t| t.error.as_ref())) {
            (Some(s), _) => s,
            (None, err) => {
                let message = err.cloned().unwrap_or_else(|| "extractor unavailable".into());
                let scheme = if p.id.test_tainted() { "kfold" } else { "random_splits" };
                results.push(RunResult {
                    protocol: p.id,
                    pooling: Some(p.pooling),
                    kernel: Some(p.kernel.to_string()),
                    scheme: scheme.into(),
                    split_index,
                    fold: 0,
                    replicate: 0,
                    seed: plan.seed,
                    audit: None,
                    outcome: Outcome::Failed { stage: "fine_tune".into(), message },
                    elapsed_ms: 0.0,
                });
                continue;
            }
        };
        if p.id.test_tainted() {
            for (set, set_audits) in folds.iter().zip(audits) {
                for (f, (fold, fa)) in set.folds.iter().zip(set_audits).enumerate() {
                    units.push(Unit {
                        protocol: *p,
                        plan: fold,
                        audit: *fa,
                        features: store,
                        split_index,
                        fold: f,
                        replicate: set.replicate_index,
                        scheme: "kfold",
                    });
                }
            }
        } else {
            units.push(Unit {
                protocol: *p,
                plan,
                audit: plan_audit,
                features: store,
                split_index,
                fold: 0,
                replicate: 0,
                scheme: "random_splits",
            });
        }
    }
    results.par_extend(units.par_iter().map(|u| evaluate_svr(u, videos, &row_of, &config.svr)));

    let mut e2e_trace = None;
    if protocols.iter().any(|p| p.id == ProtocolId::EndToEnd) {
        let start = Instant::now();
        let e2e_cfg = RegressionHeadConfig { seed: seed::derive(s, "end-to-end", 0), ..config.protocols.end_to_end.clone() };
        let outcome = match train_regression(&initial, &clean_plan, videos, &e2e_cfg) {
            Err(e) => failed("train_regression", &e),
            Ok((model, trace)) => {
                e2e_trace = Some(trace);
                let test: Vec<&VideoRecord> = clean_plan.test_videos.iter().map(|id| &videos[row_of[id.as_str()]]).collect();
                let scored: Result<Vec<f64>> = test.iter().map(|v| predict_video(&model, v)).collect();
                match scored {
                    Err(e) => failed("predict", &e),
                    Ok(pred) => {
                        let truth: Vec<f64> = test.iter().map(|v| v.mos).collect();
                        match correlate(&pred, &truth) {
                            Ok(correlation) => Outcome::Ok { correlation, n_train: clean_plan.fine_tune_videos().len(), n_test: test.len() },
                            Err(e) => failed("correlate", &e),
                        }
                    }
                }
            }
        };
        results.push(RunResult {
            protocol: ProtocolId::EndToEnd,
            pooling: None,
            kernel: None,
            scheme: "random_splits".into(),
            split_index,
            fold: 0,
            replicate: 0,
            seed: clean_plan.seed,
            audit: Some(clean_audit),
            outcome,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let gap = match (&clean.trace, &leaky.trace) {
        (Some(c), Some(l)) => validation_gap(c, l).ok(),
        _ => None,
    };
    let test_videos: Vec<VideoRecord> = clean_plan.test_videos.iter().map(|id| videos[row_of[id.as_str()]].clone()).collect();
    let class_histogram = clean.extractor.as_ref().map(|e| class_distribution(e, &test_videos)).transpose()?;
    let artifacts = SplitArtifacts {
        split_index,
        seed: s,
        clean_trace: clean.trace,
        leaky_trace: leaky.trace,
        end_to_end_trace: e2e_trace,
        gap,
        class_histogram,
    };
    Ok((results, artifacts))
}

/// Runs every configured protocol on every split. `parallel` bounds the
/// worker threads (0 uses rayon's default). Results come back sorted, so the
/// output does not depend on scheduling.
pub fn run_matrix(
    videos: &[VideoRecord],
    config: &HarnessConfig,
    parallel: usize,
    cache: Option<&FeatureCache>,
) -> Result<MatrixOutput> {
    config.validate()?;
    if videos.len() < 10 {
        return Err(LeakError::domain(format!("need at least 10 videos, got {}", videos.len())));
    }
    let protocols = config.protocol_grid(config.extractor.architecture.feature_dim);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| LeakError::domain(format!("thread pool: {e}")))?;
    let per_split: Vec<Result<(Vec<RunResult>, SplitArtifacts)>> = pool.install(|| {
        (0..config.splits.n_splits)
            .into_par_iter()
            .map(|i| run_split(videos, config, &protocols, i, cache))
            .collect()
    });
    let mut results = Vec::new();
    let mut artifacts = Vec::new();
    for r in per_split {
        let (res, art) = r?;
        results.extend(res);
        artifacts.push(art);
    }
    results.sort_by_key(RunResult::sort_key);
    Ok(MatrixOutput { results, artifacts, dominant_class_share: dominant_class_share(videos)? })
}

/// One protocol over `n_splits` splits.
pub fn run_protocol(
    videos: &[VideoRecord],
    protocol: ProtocolId,
    n_splits: usize,
    config: &HarnessConfig,
) -> Result<Vec<RunResult>> {
    let mut cfg = config.clone();
    cfg.protocols.ids = vec![protocol];
    cfg.splits.n_splits = n_splits;
    Ok(run_matrix(videos, &cfg, 0, None)?.results)
}

/// Groups results by (protocol, pooling, kernel) into reports, in table order.
pub fn summarize(results: &[RunResult]) -> Vec<ProtocolReport> {
    let mut groups: BTreeMap<(usize, Option<PoolingMethod>, Option<String>), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.protocol.order(), r.pooling, r.kernel.clone())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|runs| {
            let first = runs[0];
            let ok: Vec<&CorrelationResult<f64>> = runs.iter().filter_map(|r| r.correlation()).collect();
            let plcc: Vec<f64> = ok.iter().map(|c| c.plcc).collect();
            let srocc: Vec<f64> = ok.iter().map(|c| c.srocc).collect();
            let mut by_split: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in &runs {
                if let Some(c) = r.correlation() {
                    let e = by_split.entry(r.split_index).or_default();
                    e.0.push(c.plcc);
                    e.1.push(c.srocc);
                }
            }
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let mut schemes: Vec<&str> = runs.iter().map(|r| r.scheme.as_str()).collect();
            schemes.dedup();
            ProtocolReport {
                protocol: first.protocol,
                pooling: first.pooling,
                kernel: first.kernel.clone(),
                scheme: schemes.join("+"),
                plcc: mean_std(&plcc).ok(),
                srocc: mean_std(&srocc).ok(),
                split_plcc: by_split.values().map(|(p, _)| avg(p)).collect(),
                split_srocc: by_split.values().map(|(_, s)| avg(s)).collect(),
                runs: runs.len(),
                failures: runs.len() - ok.len(),
                ft_leaky: first.protocol.has_flags().then(|| first.protocol.ft_leaky()),
                test_tainted: first.protocol.has_flags().then(|| first.protocol.test_tainted()),
                reference: reference_for(first.protocol),
            }
        })
        .collect()
}

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn results_to_jsonl(results: &[RunResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn results_from_jsonl(text: &str, path: &Path) -> Result<Vec<RunResult>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LeakError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactsFile {
    pub dominant_class_share: f64,
    pub splits: Vec<SplitArtifacts>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| LeakError::io(path, e))
}

/// Writes results, timings, artifacts, a summary and per-split trace CSVs.
pub fn write_outputs(dir: &Path, output: &MatrixOutput) -> Result<()> {
    fs::create_dir_all(dir.join("traces")).map_err(|e| LeakError::io(dir, e))?;
    write(&dir.join(RESULTS_FILE), results_to_jsonl(&output.results)?)?;
    let mut timings = String::new();
    for r in &output.results {
        let t = TimingRecord {
            protocol: r.protocol,
            pooling: r.pooling,
            kernel: r.kernel.clone(),
            split_index: r.split_index,
            fold: r.fold,
            replicate: r.replicate,
            elapsed_ms: r.elapsed_ms,
        };
        timings.push_str(&serde_json::to_string(&t)?);
        timings.push('\n');
    }
    write(&dir.join(TIMINGS_FILE), timings)?;
    let artifacts = ArtifactsFile { dominant_class_share: output.dominant_class_share, splits: output.artifacts.clone() };
    write(&dir.join(ARTIFACTS_FILE), serde_json::to_string(&artifacts)?)?;
    write(&dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summarize(&output.results))?)?;
    for a in &output.artifacts {
        let traces = [("clean", a.clean_trace.as_ref().map(TrainTrace::to_csv)), ("leaky", a.leaky_trace.as_ref().map(TrainTrace::to_csv))];
        for (tag, csv) in traces {
            if let Some(csv) = csv {
                write(&dir.join("traces").join(format!("split{}_{tag}.csv", a.split_index)), csv)?;
            }
        }
        if let Some(t) = &a.end_to_end_trace {
            write(&dir.join("traces").join(format!("split{}_end_to_end.csv", a.split_index)), t.to_csv())?;
        }
    }
    Ok(())
}
