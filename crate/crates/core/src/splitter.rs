//! Split plans: the correct protocol, frame-pooled fine-tuning leakage, and
//! tainted cross-validation folds, plus an independent audit.

use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataset::VideoRecord;
use crate::error::{LeakError, Result};
use crate::seed;

/// Integer ratio `train : val`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
}

impl SplitRatio {
    pub const fn new(train: u32, val: u32) -> Self {
        SplitRatio { train, val }
    }

    /// Size of the second part for `n` items, rounded down.
    pub fn second_part(&self, n: usize) -> usize {
        n * self.val as usize / (self.train + self.val) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 || self.val == 0 {
            return Err(LeakError::domain(format!("degenerate ratio {}:{}", self.train, self.val)));
        }
        Ok(())
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::new(3, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSampling {
    /// Uniform random without replacement.
    #[default]
    Random,
    /// Evenly spaced indices.
    Strided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    pub frame_fraction: f64,
    /// Fine-tuning pool : test, at the video level.
    pub pool_test_ratio: SplitRatio,
    /// Train : validation inside the fine-tuning pool.
    pub train_val_ratio: SplitRatio,
    pub sampling: FrameSampling,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            frame_fraction: 0.2,
            pool_test_ratio: SplitRatio::new(4, 1),
            train_val_ratio: SplitRatio::default(),
            sampling: FrameSampling::Random,
        }
    }
}

/// One frame, `(video_id, frame_index)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef(pub String, pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_videos: Vec<String>,
    pub val_videos: Vec<String>,
    pub test_videos: Vec<String>,
    pub train_frames: Vec<FrameRef>,
    pub val_frames: Vec<FrameRef>,
    pub ft_leaky: bool,
    pub test_tainted: bool,
    pub seed: u64,
}

impl SplitPlan {
    /// Videos that took part in fine-tuning (train ∪ val).
    pub fn fine_tune_videos(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.train_videos
            .iter()
            .chain(&self.val_videos)
            .filter(|v| seen.insert(v.as_str()))
            .cloned()
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSet {
    pub folds: Vec<SplitPlan>,
    pub replicate_index: usize,
    /// Per fold: number of test videos that were part of fine-tuning.
    pub overlap: Vec<usize>,
}

/// Number of frames sampled from a video of `n_frames` frames, at least one.
pub fn sampled_frame_count(n_frames: usize, fraction: f64) -> usize {
    // The epsilon absorbs representation error such as 0.2 * 240.
    let k = (fraction * n_frames as f64 + 1e-9).floor() as usize;
    k.clamp(1, n_frames.max(1))
}

fn sample_frames(
    video: &VideoRecord,
    fraction: f64,
    sampling: FrameSampling,
    rng: &mut seed::Rng,
) -> Vec<FrameRef> {
    let n = video.frames.len();
    let k = sampled_frame_count(n, fraction);
    let mut picks: Vec<usize> = match sampling {
        FrameSampling::Random => index::sample(rng, n, k).into_vec(),
        FrameSampling::Strided => (0..k).map(|i| i * n / k).collect(),
    };
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| FrameRef(video.video_id.clone(), video.frames[i].frame_index))
        .collect()
}

struct PoolSplit<'a> {
    pool: Vec<&'a VideoRecord>,
    test: Vec<String>,
}

fn check_options(videos: &[VideoRecord], opts: &SplitOptions) -> Result<()> {
    if !(opts.frame_fraction > 0.0 && opts.frame_fraction <= 1.0) {
        return Err(LeakError::domain(format!(
            "frame_fraction must be in (0, 1], got {}",
            opts.frame_fraction
        )));
    }
    opts.pool_test_ratio.validate()?;
    opts.train_val_ratio.validate()?;
    if videos.len() < 5 {
        return Err(LeakError::domain(format!(
            "need at least 5 videos to split, got {}",
            videos.len()
        )));
    }
    Ok(())
}

/// Video-level pool/test split shared by both fine-tuning protocols, so the
/// same seed yields the same test set.
fn pool_test_split<'a>(videos: &'a [VideoRecord], opts: &SplitOptions, rng: &mut seed::Rng) -> Result<PoolSplit<'a>> {
    let mut order: Vec<&VideoRecord> = videos.iter().collect();
    order.shuffle(rng);
    let n_test = opts.pool_test_ratio.second_part(order.len());
    if n_test == 0 {
        return Err(LeakError::domain("split leaves the test set empty"));
    }
    let test = order.split_off(order.len() - n_test);
    Ok(PoolSplit {
        pool: order,
        test: test.into_iter().map(|v| v.video_id.clone()).collect(),
    })
}

/// The correct protocol: 4:1 pool/test at the video level, then the pool's
/// videos split train:val, then frames sampled per video.
pub fn split_clean(videos: &[VideoRecord], opts: &SplitOptions, seed: u64) -> Result<SplitPlan> {
    check_options(videos, opts)?;
    let mut rng = seed::rng(seed);
    let PoolSplit { mut pool, test } = pool_test_split(videos, opts, &mut rng)?;
    let n_val = opts.train_val_ratio.second_part(pool.len());
    if n_val == 0 || n_val == pool.len() {
        return Err(LeakError::domain("too few videos to populate train, validation and test"));
    }
    let val = pool.split_off(pool.len() - n_val);
    let train = pool;

    let mut frame_rng = seed::rng(seed::derive(seed, "frames", 0));
    let mut sample = |vs: &[&VideoRecord]| -> Vec<FrameRef> {
        vs.iter()
            .flat_map(|v| sample_frames(v, opts.frame_fraction, opts.sampling, &mut frame_rng))
            .collect()
    };
    // Frames are drawn in pool order so leaky and clean plans sample identically.
    let train_frames = sample(&train);
    let val_frames = sample(&val);

    Ok(SplitPlan {
        train_videos: train.iter().map(|v| v.video_id.clone()).collect(),
        val_videos: val.iter().map(|v| v.video_id.clone()).collect(),
        test_videos: test,
        train_frames,
        val_frames,
        ft_leaky: false,
        test_tainted: false,
        seed,
    })
}

/// The leaky protocol: identical video split and frame sampling, but all
/// sampled frames are pooled and split train:val at the frame level.
pub fn split_ft_leaky(videos: &[VideoRecord], opts: &SplitOptions, seed: u64) -> Result<SplitPlan> {
    check_options(videos, opts)?;
    let mut rng = seed::rng(seed);
    let PoolSplit { pool, test } = pool_test_split(videos, opts, &mut rng)?;
    // Same order as split_clean's train-then-val sampling.
    let n_val_videos = opts.train_val_ratio.second_part(pool.len());
    let (head, tail) = pool.split_at(pool.len() - n_val_videos);
    let mut frame_rng = seed::rng(seed::derive(seed, "frames", 0));
    let mut pooled: Vec<FrameRef> = head
        .iter()
        .chain(tail)
        .flat_map(|v| sample_frames(v, opts.frame_fraction, opts.sampling, &mut frame_rng))
        .collect();

    pooled.shuffle(&mut seed::rng(seed::derive(seed, "frame-pool", 0)));
    let n_val = opts.train_val_ratio.second_part(pooled.len());
    if n_val == 0 || n_val == pooled.len() {
        return Err(LeakError::domain("too few frames to populate train and validation"));
    }
    let val_frames = pooled.split_off(pooled.len() - n_val);
    let train_frames = pooled;

    let videos_of = |frames: &[FrameRef]| -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out: Vec<String> = frames
            .iter()
            .filter(|f| seen.insert(f.0.as_str()))
            .map(|f| f.0.clone())
            .collect();
        out.sort();
        out
    };
    let train_videos = videos_of(&train_frames);
    let val_videos = videos_of(&val_frames);
    let train_set: HashSet<&String> = train_videos.iter().collect();
    let ft_leaky = val_videos.iter().any(|v| train_set.contains(v));

    Ok(SplitPlan {
        train_videos,
        val_videos,
        test_videos: test,
        train_frames,
        val_frames,
        ft_leaky,
        test_tainted: false,
        seed,
    })
}

/// K-fold partitions of all videos, ignoring fine-tuning membership. Each
/// fold keeps the fine-tuning frames of `ft_plan`, so an audit sees the
/// overlap between the fold's test set and the fine-tuning videos.
pub fn make_tainted_folds(
    videos: &[VideoRecord],
    k: usize,
    replicates: usize,
    ft_plan: &SplitPlan,
    seed: u64,
) -> Result<Vec<FoldSet>> {
    if k < 2 {
        return Err(LeakError::domain(format!("need at least 2 folds, got {k}")));
    }
    if k > videos.len() {
        return Err(LeakError::domain(format!("{k} folds exceed {} videos", videos.len())));
    }
    let ft: HashSet<String> = ft_plan.fine_tune_videos().into_iter().collect();
    (0..replicates)
        .map(|r| {
            let rep_seed = seed::derive(seed, "replicate", r as u64);
            let mut ids: Vec<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
            ids.shuffle(&mut seed::rng(rep_seed));
            let (base, extra) = (ids.len() / k, ids.len() % k);
            let mut start = 0;
            let mut folds = Vec::with_capacity(k);
            let mut overlap = Vec::with_capacity(k);
            for f in 0..k {
                let len = base + usize::from(f < extra);
                let test: Vec<String> = ids[start..start + len].iter().map(|s| s.to_string()).collect();
                start += len;
                let seen = test.iter().filter(|v| ft.contains(*v)).count();
                overlap.push(seen);
                folds.push(SplitPlan {
                    train_videos: ft_plan.train_videos.clone(),
                    val_videos: ft_plan.val_videos.clone(),
                    test_videos: test,
                    train_frames: ft_plan.train_frames.clone(),
                    val_frames: ft_plan.val_frames.clone(),
                    ft_leaky: ft_plan.ft_leaky,
                    test_tainted: seen > 0,
                    seed: rep_seed,
                });
            }
            Ok(FoldSet { folds, replicate_index: r, overlap })
        })
        .collect()
}

/// Leakage found by recomputing everything from the plan's lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Videos with frames in both train and validation.
    pub videos_in_train_and_val: usize,
    /// Test videos that also appear in train or validation.
    pub test_videos_seen_in_fine_tuning: usize,
    pub ft_leaky: bool,
    pub test_tainted: bool,
    pub declared_ft_leaky: bool,
    pub declared_test_tainted: bool,
}

impl AuditReport {
    pub fn flags_consistent(&self) -> bool {
        self.ft_leaky == self.declared_ft_leaky && self.test_tainted == self.declared_test_tainted
    }

    pub fn is_clean(&self) -> bool {
        !self.ft_leaky && !self.test_tainted
    }
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "videos with frames in train and val : {}", self.videos_in_train_and_val)?;
        writeln!(f, "test videos seen in fine-tuning     : {}", self.test_videos_seen_in_fine_tuning)?;
        writeln!(f, "ft_leaky     computed={} declared={}", self.ft_leaky, self.declared_ft_leaky)?;
        writeln!(f, "test_tainted computed={} declared={}", self.test_tainted, self.declared_test_tainted)?;
        write!(
            f,
            "verdict: {}",
            match (self.flags_consistent(), self.is_clean()) {
                (false, _) => "INCONSISTENT (declared flags differ from audit)",
                (true, true) => "clean",
                (true, false) => "leaky (as declared)",
            }
        )
    }
}

/// Audits `plan` against the dataset. Fails on dangling references.
pub fn audit(plan: &SplitPlan, videos: &[VideoRecord]) -> Result<AuditReport> {
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    for id in plan.train_videos.iter().chain(&plan.val_videos).chain(&plan.test_videos) {
        if !by_id.contains_key(id.as_str()) {
            return Err(LeakError::Integrity(format!("plan references unknown video `{id}`")));
        }
    }
    for FrameRef(id, idx) in plan.train_frames.iter().chain(&plan.val_frames) {
        let ok = by_id
            .get(id.as_str())
            .is_some_and(|v| v.frames.iter().any(|f| f.frame_index == *idx));
        if !ok {
            return Err(LeakError::Integrity(format!("plan references missing frame ({id}, {idx})")));
        }
    }
    Ok(audit_lists(plan))
}

/// Audit without a dataset: overlap counts only, no reference checks.
pub fn audit_lists(plan: &SplitPlan) -> AuditReport {
    let train_frame_videos: HashSet<&str> = plan.train_frames.iter().map(|f| f.0.as_str()).collect();
    let val_frame_videos: HashSet<&str> = plan.val_frames.iter().map(|f| f.0.as_str()).collect();
    let both = train_frame_videos.intersection(&val_frame_videos).count();
    let ft: HashSet<&str> = plan
        .train_videos
        .iter()
        .chain(&plan.val_videos)
        .map(String::as_str)
        .chain(train_frame_videos.iter().copied())
        .chain(val_frame_videos.iter().copied())
        .collect();
    let test: HashSet<&str> = plan.test_videos.iter().map(String::as_str).collect();
    let tainted = test.iter().filter(|v| ft.contains(*v)).count();
    AuditReport {
        videos_in_train_and_val: both,
        test_videos_seen_in_fine_tuning: tainted,
        ft_leaky: both > 0,
        test_tainted: tainted > 0,
        declared_ft_leaky: plan.ft_leaky,
        declared_test_tainted: plan.test_tainted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GeneratorConfig};

    fn data(n: usize, frames: usize) -> Vec<VideoRecord> {
        generate(&GeneratorConfig {
            n_videos: n,
            frames_per_video: frames,
            feature_dim: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn ten_videos_split_six_two_two() {
        let v = data(10, 4);
        let opts = SplitOptions { frame_fraction: 1.0, ..Default::default() };
        let plan = split_clean(&v, &opts, 1).unwrap();
        assert_eq!((plan.train_videos.len(), plan.val_videos.len(), plan.test_videos.len()), (6, 2, 2));
        let all: HashSet<_> = plan.train_videos.iter().chain(&plan.val_videos).chain(&plan.test_videos).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(plan.train_frames.len(), 24);
    }

    #[test]
    fn pool_test_sizes_for_1200() {
        let opts = SplitOptions::default();
        assert_eq!(opts.pool_test_ratio.second_part(1200), 240);
        assert_eq!(sampled_frame_count(240, 0.2), 48);
        assert_eq!(sampled_frame_count(40, 0.2), 8);
        assert_eq!(sampled_frame_count(3, 0.01), 1);
    }

    #[test]
    fn strided_sampling_is_even() {
        let v = data(5, 10);
        let mut rng = seed::rng(0);
        let picks = sample_frames(&v[0], 0.5, FrameSampling::Strided, &mut rng);
        let idx: Vec<usize> = picks.iter().map(|f| f.1).collect();
        assert_eq!(idx, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn too_few_videos() {
        let v = data(4, 4);
        assert!(split_clean(&v, &SplitOptions::default(), 0).is_err());
        let bad = SplitOptions { frame_fraction: 0.0, ..Default::default() };
        assert!(split_clean(&data(10, 4), &bad, 0).is_err());
    }

    #[test]
    fn clean_and_leaky_share_test_set_and_frames() {
        let v = data(40, 10);
        let opts = SplitOptions::default();
        let c = split_clean(&v, &opts, 5).unwrap();
        let l = split_ft_leaky(&v, &opts, 5).unwrap();
        assert_eq!(c.test_videos, l.test_videos);
        let mut cf: Vec<_> = c.train_frames.iter().chain(&c.val_frames).cloned().collect();
        let mut lf: Vec<_> = l.train_frames.iter().chain(&l.val_frames).cloned().collect();
        cf.sort();
        lf.sort();
        assert_eq!(cf, lf);
    }

    #[test]
    fn single_frame_videos_cannot_leak() {
        let v = data(40, 10);
        let opts = SplitOptions { frame_fraction: 0.01, ..Default::default() };
        let l = split_ft_leaky(&v, &opts, 2).unwrap();
        let report = audit(&l, &v).unwrap();
        assert_eq!(report.videos_in_train_and_val, 0);
        assert!(!l.ft_leaky);
        assert!(report.flags_consistent());
    }

    #[test]
    fn leave_one_out_taint_matches_membership() {
        let v = data(12, 3);
        let ft = split_clean(&v, &SplitOptions::default(), 3).unwrap();
        let ftv: HashSet<String> = ft.fine_tune_videos().into_iter().collect();
        let sets = make_tainted_folds(&v, v.len(), 1, &ft, 8).unwrap();
        for fold in &sets[0].folds {
            assert_eq!(fold.test_videos.len(), 1);
            assert_eq!(fold.test_tainted, ftv.contains(&fold.test_videos[0]));
            assert!(audit(fold, &v).unwrap().flags_consistent());
        }
    }

    #[test]
    fn fold_errors() {
        let v = data(6, 2);
        let ft = split_clean(&v, &SplitOptions::default(), 0).unwrap();
        assert!(make_tainted_folds(&v, 1, 1, &ft, 0).is_err());
        assert!(make_tainted_folds(&v, 7, 1, &ft, 0).is_err());
    }

    #[test]
    fn replicate_seeds_distinct() {
        let v = data(30, 2);
        let ft = split_clean(&v, &SplitOptions::default(), 0).unwrap();
        let sets = make_tainted_folds(&v, 5, 10, &ft, 77).unwrap();
        let seeds: HashSet<u64> = sets.iter().map(|s| s.folds[0].seed).collect();
        assert_eq!(sets.iter().map(|s| s.folds.len()).sum::<usize>(), 50);
        assert_eq!(seeds.len(), 10);
    }

    #[test]
    fn dangling_frame_is_integrity_error() {
        let v = data(10, 2);
        let mut plan = split_clean(&v, &SplitOptions::default(), 0).unwrap();
        plan.train_frames.push(FrameRef(plan.train_videos[0].clone(), 99));
        assert!(matches!(audit(&plan, &v), Err(LeakError::Integrity(_))));
        plan.train_frames.pop();
        plan.test_videos.push("ghost".into());
        assert!(matches!(audit(&plan, &v), Err(LeakError::Integrity(_))));
    }

    #[test]
    fn tampered_flags_detected() {
        let v = data(20, 8);
        let opts = SplitOptions { frame_fraction: 1.0, ..Default::default() };
        let mut plan = split_ft_leaky(&v, &opts, 0).unwrap();
        assert!(plan.ft_leaky);
        plan.ft_leaky = false;
        assert!(!audit(&plan, &v).unwrap().flags_consistent());
    }

    #[test]
    fn plan_json_round_trip() {
        let v = data(10, 5);
        let plan = split_ft_leaky(&v, &SplitOptions::default(), 4).unwrap();
        assert_eq!(SplitPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
    }
}
