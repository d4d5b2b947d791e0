//! Surrogate feature network: a frozen random projection ("pre-trained
//! body"), one trainable hidden layer whose activations are the frame
//! features, and a five-way softmax head over MOS classes.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{classify_mos, ClassLabel, VideoRecord};
use crate::error::{LeakError, Result};
use crate::nn::{self, Dense, Velocity};
use crate::seed;
use crate::splitter::{FrameRef, SplitPlan};

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Width of the frozen body.
    pub body_dim: usize,
    /// Width of the feature layer.
    pub feature_dim: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig { body_dim: 128, feature_dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub version: u32,
    /// Frozen `H × D` projection followed by a rectifier.
    pub embed_weights: Array2<f64>,
    pub hidden: Dense,
    pub head: Dense,
}

/// Parameter gradients of the two trainable layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub hidden_weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

struct Forward {
    hidden_pre: Array2<f64>,
    features: Array2<f64>,
    probs: Array2<f64>,
}

impl Extractor {
    /// A fresh, never fine-tuned extractor. The body is Gaussian with
    /// variance `1/D`; hidden and head layers use Xavier initialization.
    pub fn new(input_dim: usize, config: &ExtractorConfig, seed_value: u64) -> Result<Self> {
        if input_dim == 0 || config.body_dim == 0 || config.feature_dim == 0 {
            return Err(LeakError::domain("extractor dimensions must be positive"));
        }
        let mut rng = seed::rng(seed::derive(seed_value, "extractor-body", 0));
        let embed_weights = nn::gaussian_matrix(config.body_dim, input_dim, (1.0 / input_dim as f64).sqrt(), &mut rng);
        let mut rng = seed::rng(seed::derive(seed_value, "extractor-head", 0));
        let hidden = Dense::xavier(config.body_dim, config.feature_dim, &mut rng);
        let head = Dense::xavier(config.feature_dim, ClassLabel::COUNT, &mut rng);
        Ok(Extractor { version: WEIGHTS_VERSION, embed_weights, hidden, head })
    }

    pub fn input_dim(&self) -> usize {
        self.embed_weights.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.outputs()
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(LeakError::domain(format!(
                "extractor expects {}-dimensional frames, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Frozen body activations.
    pub fn embed(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(nn::relu(x.dot(&self.embed_weights.t())))
    }

    fn forward_embedded(&self, e: ArrayView2<'_, f64>) -> Forward {
        let hidden_pre = self.hidden.forward(e);
        let features = nn::relu(hidden_pre.clone());
        let probs = nn::softmax(&self.head.forward(features.view()));
        Forward { hidden_pre, features, probs }
    }

    /// Class probabilities for raw frames.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let e = self.embed(x)?;
        Ok(self.forward_embedded(e.view()).probs)
    }

    /// Mean cross-entropy and its gradients for embedded inputs.
    fn loss_grad_embedded(&self, e: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Gradients) {
        let fwd = self.forward_embedded(e);
        let b = labels.len() as f64;
        let loss = cross_entropy(&fwd.probs, labels);
        let mut dlogits = fwd.probs;
        for (mut row, &y) in dlogits.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        dlogits /= b;
        let (head_weights, head_bias, dfeat) = self.head.backward(fwd.features.view(), &dlogits);
        let dpre = nn::relu_backward(dfeat, &fwd.hidden_pre);
        let (hidden_weights, hidden_bias, _) = self.hidden.backward(e, &dpre);
        (loss, Gradients { hidden_weights, hidden_bias, head_weights, head_bias })
    }

    /// Mean cross-entropy over raw frames and its gradients with respect to
    /// the trainable layers.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Gradients)> {
        check_labels(labels, x.nrows())?;
        let e = self.embed(x)?;
        Ok(self.loss_grad_embedded(e.view(), labels))
    }

    fn parameters_finite(&self) -> bool {
        [&self.hidden, &self.head]
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|w| w.is_finite()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Extractor = serde_json::from_str(s)?;
        if e.version != WEIGHTS_VERSION {
            return Err(LeakError::domain(format!("unsupported extractor weight version {}", e.version)));
        }
        Ok(e)
    }

    /// SHA-256 of the serialized weights, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("extractor serializes"));
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn check_labels(labels: &[usize], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(LeakError::domain(format!("{rows} frames but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= ClassLabel::COUNT) {
        return Err(LeakError::domain(format!("class index {bad} out of range")));
    }
    Ok(())
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -(probs[[i, y]].max(1e-300)).ln())
        .sum();
    total / labels.len() as f64
}

fn accuracy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let hits = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| nn::argmax(row.view()) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Hidden-layer activations for each frame (`n × F`).
pub fn extract_features(extractor: &Extractor, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let e = extractor.embed(frames)?;
    Ok(extractor.forward_embedded(e.view()).features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub momentum: f64,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub max_iterations: usize,
    /// Training frames between validation passes.
    pub validation_every: usize,
    /// Validations without improvement before the learning rate drops.
    pub patience: usize,
    /// Multiplier applied on a drop; 1.0 disables dropping.
    pub lr_drop_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            momentum: 0.9,
            learning_rate: 0.01,
            minibatch_size: 32,
            max_iterations: 1500,
            validation_every: 320,
            patience: 5,
            lr_drop_factor: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The published fine-tuning constants: β = 0.9, α = 1e-4, with the
    /// ÷10 drop on stalled validation loss enabled.
    pub fn published() -> Self {
        TrainConfig { learning_rate: 1e-4, lr_drop_factor: 0.1, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.momentum, self.learning_rate, self.lr_drop_factor].iter().all(|v| v.is_finite());
        if !finite || !(0.0..1.0).contains(&self.momentum) || self.learning_rate < 0.0 {
            return Err(LeakError::domain("momentum must be in [0, 1) and learning_rate >= 0"));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return Err(LeakError::domain("lr_drop_factor must be in (0, 1]"));
        }
        if self.minibatch_size == 0 || self.max_iterations == 0 || self.validation_every == 0 {
            return Err(LeakError::domain("minibatch_size, max_iterations and validation_every must be positive"));
        }
        if self.validation_every > self.max_iterations * self.minibatch_size {
            return Err(LeakError::domain(format!(
                "validation_every ({}) exceeds the frames seen in training ({})",
                self.validation_every,
                self.max_iterations * self.minibatch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: usize,
    pub frames_seen: usize,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Accuracy on held-out monitor frames, when a monitor set was given.
    /// Never used for model selection.
    pub test_acc: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub iterations: Vec<IterationRecord>,
    pub validations: Vec<ValidationRecord>,
    pub selected_iteration: usize,
}

impl TrainTrace {
    pub fn selected(&self) -> Option<&ValidationRecord> {
        self.validations.iter().find(|v| v.iteration == self.selected_iteration)
    }

    /// CSV with columns `iteration,train_loss,train_acc,val_loss,val_acc`;
    /// validation columns are empty on iterations without a validation pass.
    pub fn to_csv(&self) -> String {
        let vals: HashMap<usize, &ValidationRecord> = self.validations.iter().map(|v| (v.iteration, v)).collect();
        let mut out = String::from("iteration,train_loss,train_acc,val_loss,val_acc\n");
        for it in &self.iterations {
            let (vl, va) = vals
                .get(&it.iteration)
                .map_or((String::new(), String::new()), |v| (v.val_loss.to_string(), v.val_acc.to_string()));
            let _ = writeln!(out, "{},{},{},{},{}", it.iteration, it.train_loss, it.train_acc, vl, va);
        }
        out
    }
}

/// Labeled frames gathered from a dataset.
pub struct FrameBatch {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn gather_frames(refs: &[FrameRef], videos: &[VideoRecord]) -> Result<FrameBatch> {
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let d = videos.first().map_or(0, VideoRecord::feature_dim);
    let mut data = Vec::with_capacity(refs.len() * d);
    let mut labels = Vec::with_capacity(refs.len());
    for FrameRef(id, idx) in refs {
        let video = by_id
            .get(id.as_str())
            .ok_or_else(|| LeakError::Integrity(format!("unknown video `{id}`")))?;
        let frame = video
            .frames
            .iter()
            .find(|f| f.frame_index == *idx)
            .ok_or_else(|| LeakError::Integrity(format!("missing frame ({id}, {idx})")))?;
        data.extend_from_slice(&frame.raw_features);
        labels.push(classify_mos(video.mos)?.index());
    }
    let x = Array2::from_shape_vec((refs.len(), d), data)
        .map_err(|e| LeakError::Integrity(format!("ragged frame dimensions: {e}")))?;
    Ok(FrameBatch { x, labels })
}

/// Fine-tunes on the plan's training frames, validating on its validation
/// frames, and returns the snapshot with the lowest validation loss.
pub fn fine_tune(
    extractor: &Extractor,
    plan: &SplitPlan,
    videos: &[VideoRecord],
    config: &TrainConfig,
) -> Result<(Extractor, TrainTrace)> {
    fine_tune_monitored(extractor, plan, videos, config, &[])
}

/// [`fine_tune`] that also records accuracy on `monitor` frames at every
/// validation pass.
pub fn fine_tune_monitored(
    extractor: &Extractor,
    plan: &SplitPlan,
    videos: &[VideoRecord],
    config: &TrainConfig,
    monitor: &[FrameRef],
) -> Result<(Extractor, TrainTrace)> {
    if plan.train_frames.is_empty() || plan.val_frames.is_empty() {
        return Err(LeakError::domain("fine-tuning needs non-empty train and validation frame sets"));
    }
    let train = gather_frames(&plan.train_frames, videos)?;
    let val = gather_frames(&plan.val_frames, videos)?;
    let mon = if monitor.is_empty() { None } else { Some(gather_frames(monitor, videos)?) };
    train_classifier(extractor, &train, &val, mon.as_ref(), config)
}

/// The training loop on pre-gathered frames.
pub fn train_classifier(
    extractor: &Extractor,
    train: &FrameBatch,
    val: &FrameBatch,
    monitor: Option<&FrameBatch>,
    config: &TrainConfig,
) -> Result<(Extractor, TrainTrace)> {
    config.validate()?;
    if train.labels.is_empty() || val.labels.is_empty() {
        return Err(LeakError::domain("fine-tuning needs non-empty train and validation frame sets"));
    }
    check_labels(&train.labels, train.x.nrows())?;
    check_labels(&val.labels, val.x.nrows())?;

    // The body is frozen, so its activations are computed once.
    let train_e = extractor.embed(train.x.view())?;
    let val_e = extractor.embed(val.x.view())?;
    let mon_e = monitor.map(|m| extractor.embed(m.x.view())).transpose()?;

    let mut model = extractor.clone();
    let mut v_hidden = Velocity::zeros_like(&model.hidden);
    let mut v_head = Velocity::zeros_like(&model.head);
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..train.labels.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut lr = config.learning_rate;
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, Extractor)> = None;
    let mut stalled = 0;
    let mut frames_seen = 0;
    let mut next_validation = config.validation_every;

    for iteration in 1..=config.max_iterations {
        let mut batch = Vec::with_capacity(config.minibatch_size);
        while batch.len() < config.minibatch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let xb = train_e.select(Axis(0), &batch);
        let yb: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
        let (loss, grads) = model.loss_grad_embedded(xb.view(), &yb);
        if !loss.is_finite() {
            return Err(LeakError::Diverged { iteration });
        }
        let probs = model.forward_embedded(xb.view()).probs;
        trace.iterations.push(IterationRecord { iteration, train_loss: loss, train_acc: accuracy(&probs, &yb) });

        nn::momentum_step(&mut model.hidden, &mut v_hidden, &grads.hidden_weights, &grads.hidden_bias, config.momentum, lr);
        nn::momentum_step(&mut model.head, &mut v_head, &grads.head_weights, &grads.head_bias, config.momentum, lr);
        frames_seen += batch.len();
        if !model.parameters_finite() {
            return Err(LeakError::Diverged { iteration });
        }

        let due = frames_seen >= next_validation;
        if due || iteration == config.max_iterations {
            while next_validation <= frames_seen {
                next_validation += config.validation_every;
            }
            let vp = model.forward_embedded(val_e.view()).probs;
            let val_loss = cross_entropy(&vp, &val.labels);
            if !val_loss.is_finite() {
                return Err(LeakError::Diverged { iteration });
            }
            let test_acc = match (&mon_e, monitor) {
                (Some(e), Some(m)) => Some(accuracy(&model.forward_embedded(e.view()).probs, &m.labels)),
                _ => None,
            };
            trace.validations.push(ValidationRecord {
                iteration,
                frames_seen,
                val_loss,
                val_acc: accuracy(&vp, &val.labels),
                test_acc,
                learning_rate: lr,
            });
            if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                best = Some((val_loss, model.clone()));
                trace.selected_iteration = iteration;
                stalled = 0;
            } else {
                stalled += 1;
                if config.lr_drop_factor < 1.0 && stalled >= config.patience.max(1) {
                    lr *= config.lr_drop_factor;
                    stalled = 0;
                }
            }
        }
    }
    let (_, selected) = best.expect("at least one validation pass");
    Ok((selected, trace))
}

/// Validation accuracy minus test accuracy at the selected snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub clean_gap: f64,
    pub leaky_gap: f64,
    /// `leaky_gap − clean_gap`.
    pub difference: f64,
}

fn selected_gap(trace: &TrainTrace) -> Result<f64> {
    let sel = trace
        .selected()
        .ok_or_else(|| LeakError::domain("trace has no validation points"))?;
    let test = sel
        .test_acc
        .ok_or_else(|| LeakError::domain("trace has no test accuracy at the selected point"))?;
    Ok(sel.val_acc - test)
}

pub fn validation_gap(trace_clean: &TrainTrace, trace_leaky: &TrainTrace) -> Result<GapStats> {
    let clean_gap = selected_gap(trace_clean)?;
    let leaky_gap = selected_gap(trace_leaky)?;
    Ok(GapStats { clean_gap, leaky_gap, difference: leaky_gap - clean_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    /// Videos per predicted class (majority vote over frames).
    pub counts: [usize; ClassLabel::COUNT],
    pub percent: [f64; ClassLabel::COUNT],
    /// Share of videos whose voted class equals the true class.
    pub accuracy: f64,
    /// Accuracy of always predicting the most frequent true class.
    pub dominant_class_baseline: f64,
}

/// Per-video majority-vote class histogram; ties go to the better class.
pub fn class_distribution(extractor: &Extractor, videos: &[VideoRecord]) -> Result<ClassDistribution> {
    if videos.is_empty() {
        return Err(LeakError::domain("class distribution of no videos"));
    }
    let mut counts = [0usize; ClassLabel::COUNT];
    let mut hits = 0;
    for v in videos {
        let probs = extractor.predict_proba(v.frame_matrix().view())?;
        let mut votes = [0usize; ClassLabel::COUNT];
        for row in probs.rows() {
            votes[nn::argmax(row)] += 1;
        }
        let voted = (0..ClassLabel::COUNT).fold(0, |b, c| if votes[c] > votes[b] { c } else { b });
        counts[voted] += 1;
        if voted == v.class().index() {
            hits += 1;
        }
    }
    let n = videos.len() as f64;
    Ok(ClassDistribution {
        counts,
        percent: counts.map(|c| 100.0 * c as f64 / n),
        accuracy: hits as f64 / n,
        dominant_class_baseline: crate::dataset::dominant_class_share(videos)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GeneratorConfig};
    use crate::splitter::{split_clean, SplitOptions};
    use ndarray::array;

    fn small() -> (Vec<VideoRecord>, SplitPlan) {
        let v = generate(&GeneratorConfig { n_videos: 30, frames_per_video: 10, feature_dim: 6, ..Default::default() }).unwrap();
        let plan = split_clean(&v, &SplitOptions { frame_fraction: 0.5, ..Default::default() }, 1).unwrap();
        (v, plan)
    }

    fn tiny_config() -> ExtractorConfig {
        ExtractorConfig { body_dim: 16, feature_dim: 8 }
    }

    #[test]
    fn zero_frame_gives_bias_activation() {
        let e = Extractor::new(4, &tiny_config(), 3).unwrap();
        let mut e2 = e.clone();
        e2.hidden.bias = Array1::from_iter((0..8).map(|i| i as f64 - 3.5));
        let f = extract_features(&e2, Array2::zeros((1, 4)).view()).unwrap();
        assert_eq!(f.row(0).to_vec(), e2.hidden.bias.mapv(|b| b.max(0.0)).to_vec());
    }

    #[test]
    fn same_frame_twice_identical_rows() {
        let e = Extractor::new(3, &tiny_config(), 5).unwrap();
        let f = extract_features(&e, array![[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]].view()).unwrap();
        assert_eq!(f.row(0), f.row(1));
        assert!(extract_features(&e, array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn softmax_outputs_normalized() {
        let e = Extractor::new(3, &tiny_config(), 5).unwrap();
        let p = e.predict_proba(array![[10.0, -30.0, 2.0], [0.0, 0.0, 0.0]].view()).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (v, plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, max_iterations: 20, validation_every: 64, ..Default::default() };
        let (out, trace) = fine_tune(&e, &plan, &v, &cfg).unwrap();
        assert_eq!(out, e);
        let first = trace.validations[0].val_loss;
        assert!(trace.validations.iter().all(|r| r.val_loss == first));
    }

    #[test]
    fn selected_snapshot_has_min_validation_loss() {
        let (v, plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig { max_iterations: 200, validation_every: 32, ..Default::default() };
        let (out, trace) = fine_tune(&e, &plan, &v, &cfg).unwrap();
        let min = trace.validations.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(trace.selected().unwrap().val_loss, min);
        let val = gather_frames(&plan.val_frames, &v).unwrap();
        let (recomputed, _) = out.loss_and_gradients(val.x.view(), &val.labels).unwrap();
        assert_eq!(recomputed, min);
    }

    #[test]
    fn lr_drop_applies_after_patience() {
        let (v, plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            max_iterations: 300,
            validation_every: 32,
            patience: 2,
            lr_drop_factor: 0.1,
            ..Default::default()
        };
        let (_, trace) = fine_tune(&e, &plan, &v, &cfg).unwrap();
        let last = trace.validations.last().unwrap().learning_rate;
        assert!(last < 0.5, "learning rate never dropped");
    }

    #[test]
    fn empty_sets_and_divergence() {
        let (v, mut plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 1e200, max_iterations: 50, ..Default::default() };
        assert!(matches!(fine_tune(&e, &plan, &v, &cfg), Err(LeakError::Diverged { .. })));
        plan.val_frames.clear();
        assert!(fine_tune(&e, &plan, &v, &TrainConfig::default()).is_err());
    }

    #[test]
    fn weights_json_round_trip_and_hash() {
        let e = Extractor::new(4, &tiny_config(), 9).unwrap();
        let back = Extractor::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.content_hash(), e.content_hash());
        let mut other = e.clone();
        other.head.bias[0] += 1e-9;
        assert_ne!(other.content_hash(), e.content_hash());
    }

    #[test]
    fn trace_csv_shape() {
        let (v, plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig { max_iterations: 10, validation_every: 64, ..Default::default() };
        let (_, trace) = fine_tune(&e, &plan, &v, &cfg).unwrap();
        let csv = trace.to_csv();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("iteration,train_loss,train_acc,val_loss,val_acc"));
        assert_eq!(csv.lines().filter(|l| !l.ends_with(',')).count(), 1 + trace.validations.len());
    }

    #[test]
    fn validation_gap_reflexive() {
        let (v, plan) = small();
        let e = Extractor::new(6, &tiny_config(), 1).unwrap();
        let cfg = TrainConfig { max_iterations: 30, validation_every: 64, ..Default::default() };
        let (_, trace) = fine_tune_monitored(&e, &plan, &v, &cfg, &plan.val_frames).unwrap();
        assert_eq!(validation_gap(&trace, &trace).unwrap().difference, 0.0);
        let (_, bare) = fine_tune(&e, &plan, &v, &cfg).unwrap();
        assert!(validation_gap(&bare, &bare).is_err());
        assert!(validation_gap(&TrainTrace::default(), &trace).is_err());
    }

    #[test]
    fn perfect_classifier_histogram() {
        // Head that always votes Mediocre.
        let mut e = Extractor::new(2, &tiny_config(), 0).unwrap();
        e.head.weights.fill(0.0);
        e.head.bias = array![0.0, 0.0, 10.0, 0.0, 0.0];
        let videos: Vec<VideoRecord> = (0..4)
            .map(|i| VideoRecord::from_matrix(format!("v{i}"), 3.0, &array![[1.0, 2.0], [0.5, 0.1]]).unwrap())
            .collect();
        let d = class_distribution(&e, &videos).unwrap();
        assert_eq!(d.percent, [0.0, 0.0, 100.0, 0.0, 0.0]);
        assert_eq!(d.accuracy, 1.0);
        assert_eq!(d.dominant_class_baseline, 1.0);
    }
}
