//! Direct regression variant: the extractor body plus a fully connected
//! regression head, trained on MOS; a video's score is its mean frame score.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::VideoRecord;
use crate::error::{LeakError, Result};
use crate::extractor::{gather_frames, Extractor};
use crate::nn::{self, Dense, Velocity};
use crate::seed::{self, Rng};
use crate::splitter::SplitPlan;

/// Head widths of the full-size network; divided by `layer_scale`.
pub const PUBLISHED_LAYER_SIZES: [usize; 3] = [1024, 512, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionHeadConfig {
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
    /// Body learning rate; the head trains at `head_lr_multiplier` times it.
    pub learning_rate: f64,
    pub head_lr_multiplier: f64,
    pub lr_decay_per_epoch: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for RegressionHeadConfig {
    fn default() -> Self {
        RegressionHeadConfig {
            layer_sizes: scaled_layer_sizes(DEFAULT_LAYER_DIVISOR),
            dropout_rate: 0.25,
            learning_rate: 1e-3,
            head_lr_multiplier: 10.0,
            lr_decay_per_epoch: 0.75,
            epochs: 10,
            momentum: 0.9,
            minibatch_size: 32,
            seed: 0,
        }
    }
}

/// At 1/16 the last layer has two units, and rectifier death then leaves a
/// constant predictor in most splits.
pub const DEFAULT_LAYER_DIVISOR: usize = 4;

/// `PUBLISHED_LAYER_SIZES / divisor`, each at least 1.
pub fn scaled_layer_sizes(divisor: usize) -> Vec<usize> {
    PUBLISHED_LAYER_SIZES.iter().map(|s| (s / divisor.max(1)).max(1)).collect()
}

impl RegressionHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(LeakError::domain("regression head needs at least one non-empty hidden layer"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LeakError::domain("dropout_rate must be in [0, 1)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0)
            || !(self.head_lr_multiplier.is_finite() && self.head_lr_multiplier > 0.0)
        {
            return Err(LeakError::domain("learning rates must be finite, base >= 0, multiplier > 0"));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(LeakError::domain("lr_decay_per_epoch must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.minibatch_size == 0 {
            return Err(LeakError::domain("momentum must be in [0, 1) and minibatch_size positive"));
        }
        Ok(())
    }

    /// Body learning rate during epoch `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay_per_epoch.powi(epoch as i32)
    }
}

/// Frame-score network. Only the body's embedding and feature layer are
/// used; its classification head is carried along unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionNet {
    pub body: Extractor,
    pub layers: Vec<Dense>,
    pub output: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegressionTrace {
    pub epochs: Vec<EpochRecord>,
}

impl RegressionTrace {
    /// Same columns as the classifier trace; accuracy columns stay empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},,{},", e.epoch, e.train_loss, e.val_loss);
        }
        out
    }
}

struct Cache {
    /// Inputs to every dense layer, body feature layer first.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the body layer and each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Dropout scale masks per hidden layer (empty when dropout is off).
    masks: Vec<Array2<f64>>,
    out: Array1<f64>,
}

/// Per-layer gradients, ordered body feature layer, hidden layers, output.
pub type LayerGradients = Vec<(Array2<f64>, Array1<f64>)>;

impl RegressionNet {
    pub fn new(body: &Extractor, config: &RegressionHeadConfig, output_bias: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, "regression-head", 0));
        let mut layers = Vec::with_capacity(config.layer_sizes.len());
        let mut width = body.feature_dim();
        for &size in &config.layer_sizes {
            layers.push(Dense::xavier(width, size, &mut rng));
            width = size;
        }
        let mut output = Dense::xavier(width, 1, &mut rng);
        output.bias[0] = output_bias;
        Ok(RegressionNet { body: body.clone(), layers, output })
    }

    fn forward(&self, e: ArrayView2<'_, f64>, dropout: Option<(f64, &mut Rng)>) -> Cache {
        let mut inputs = vec![e.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::new();
        let p0 = self.body.hidden.forward(e);
        let mut h = nn::relu(p0.clone());
        pre.push(p0);
        let mut dropout = dropout;
        for layer in &self.layers {
            inputs.push(h.clone());
            let p = layer.forward(h.view());
            h = nn::relu(p.clone());
            pre.push(p);
            if let Some((rate, rng)) = dropout.as_mut() {
                let keep = 1.0 - *rate;
                let mask = Array2::from_shape_fn(h.raw_dim(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                h *= &mask;
                masks.push(mask);
            }
        }
        let out = self.output.forward(h.view()).column(0).to_owned();
        inputs.push(h);
        Cache { inputs, pre, masks, out }
    }

    fn backward(&self, cache: &Cache, targets: &[f64]) -> (f64, LayerGradients) {
        let b = targets.len() as f64;
        let resid = &cache.out - &Array1::from(targets.to_vec());
        let loss = 0.5 * resid.dot(&resid) / b;
        let dy = (resid / b).insert_axis(Axis(1));
        let last = self.layers.len();
        let mut grads = Vec::with_capacity(last + 2);
        let (dw, db, mut dh) = self.output.backward(cache.inputs[last + 1].view(), &dy);
        grads.push((dw, db));
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = cache.masks.get(i) {
                dh *= mask;
            }
            let dp = nn::relu_backward(dh, &cache.pre[i + 1]);
            let (dw, db, dx) = layer.backward(cache.inputs[i + 1].view(), &dp);
            grads.push((dw, db));
            dh = dx;
        }
        let dp = nn::relu_backward(dh, &cache.pre[0]);
        let (dw, db, _) = self.body.hidden.backward(cache.inputs[0].view(), &dp);
        grads.push((dw, db));
        grads.reverse();
        (loss, grads)
    }

    /// Half mean squared error and its gradients with dropout disabled.
    pub fn loss_and_gradients(&self, frames: ArrayView2<'_, f64>, targets: &[f64]) -> Result<(f64, LayerGradients)> {
        if frames.nrows() != targets.len() || targets.is_empty() {
            return Err(LeakError::domain("frames and targets must be non-empty and of equal length"));
        }
        let e = self.body.embed(frames)?;
        Ok(self.backward(&self.forward(e.view(), None), targets))
    }

    /// Trainable layers in gradient order.
    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut all = vec![&mut self.body.hidden];
        all.extend(self.layers.iter_mut());
        all.push(&mut self.output);
        all
    }

    /// Per-frame scores with dropout off.
    pub fn predict_frames(&self, frames: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let e = self.body.embed(frames)?;
        Ok(self.forward(e.view(), None).out.to_vec())
    }

    fn finite(&self) -> bool {
        std::iter::once(&self.body.hidden)
            .chain(&self.layers)
            .chain(std::iter::once(&self.output))
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|w| w.is_finite()))
    }
}

/// Mean frame score over every frame of `video`.
pub fn predict_video(model: &RegressionNet, video: &VideoRecord) -> Result<f64> {
    if video.frames.is_empty() {
        return Err(LeakError::domain(format!("video `{}` has no frames", video.video_id)));
    }
    let scores = model.predict_frames(video.frame_matrix().view())?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Trains body feature layer and head on the plan's sampled training
/// frames with MOS targets and returns the final-epoch model.
pub fn train_regression(
    body: &Extractor,
    plan: &SplitPlan,
    videos: &[VideoRecord],
    config: &RegressionHeadConfig,
) -> Result<(RegressionNet, RegressionTrace)> {
    config.validate()?;
    if plan.train_frames.is_empty() || plan.val_frames.is_empty() {
        return Err(LeakError::domain("regression training needs non-empty train and validation frame sets"));
    }
    let mos: std::collections::HashMap<&str, f64> = videos.iter().map(|v| (v.video_id.as_str(), v.mos)).collect();
    let targets_of = |refs: &[crate::splitter::FrameRef]| -> Vec<f64> { refs.iter().map(|r| mos[r.0.as_str()]).collect() };
    let train = gather_frames(&plan.train_frames, videos)?;
    let val = gather_frames(&plan.val_frames, videos)?;
    let y_train = targets_of(&plan.train_frames);
    let y_val = targets_of(&plan.val_frames);

    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let mut model = RegressionNet::new(body, config, mean)?;
    let train_e = body.embed(train.x.view())?;
    let val_e = body.embed(val.x.view())?;

    let mut velocities: Vec<Velocity> = model.layers_mut().iter().map(|l| Velocity::zeros_like(l)).collect();
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let mut trace = RegressionTrace::default();
    let mut iteration = 0;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.minibatch_size) {
            iteration += 1;
            let xb = train_e.select(Axis(0), batch);
            let yb: Vec<f64> = batch.iter().map(|&i| y_train[i]).collect();
            let dropout = (config.dropout_rate > 0.0).then_some((config.dropout_rate, &mut rng));
            let cache = model.forward(xb.view(), dropout);
            let (loss, grads) = model.backward(&cache, &yb);
            if !loss.is_finite() {
                return Err(LeakError::Diverged { iteration });
            }
            total += loss * batch.len() as f64;
            for (i, ((layer, vel), (dw, db))) in model.layers_mut().into_iter().zip(&mut velocities).zip(&grads).enumerate() {
                let rate = if i == 0 { lr } else { lr * config.head_lr_multiplier };
                nn::momentum_step(layer, vel, dw, db, config.momentum, rate);
            }
            if !model.finite() {
                return Err(LeakError::Diverged { iteration });
            }
        }
        let val_pred = model.forward(val_e.view(), None).out;
        let val_loss = 0.5 * val_pred.iter().zip(&y_val).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / y_val.len() as f64;
        trace.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / y_train.len() as f64,
            val_loss,
            learning_rate: lr,
        });
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GeneratorConfig};
    use crate::extractor::ExtractorConfig;
    use crate::splitter::{split_clean, SplitOptions};
    use ndarray::array;

    fn body(d: usize) -> Extractor {
        Extractor::new(d, &ExtractorConfig { body_dim: 16, feature_dim: 8 }, 2).unwrap()
    }

    #[test]
    fn layer_scaling() {
        assert_eq!(scaled_layer_sizes(16), vec![64, 32, 2]);
        assert_eq!(scaled_layer_sizes(1), vec![1024, 512, 32]);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = RegressionHeadConfig { learning_rate: 1e-4, ..Default::default() };
        assert!((cfg.learning_rate_at(2) - 1e-4 * 0.5625).abs() < 1e-18);
        assert_eq!(cfg.learning_rate_at(0), 1e-4);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let v = generate(&GeneratorConfig { n_videos: 20, frames_per_video: 5, feature_dim: 4, ..Default::default() }).unwrap();
        let plan = split_clean(&v, &SplitOptions::default(), 0).unwrap();
        let cfg = RegressionHeadConfig { dropout_rate: 0.0, epochs: 0, ..Default::default() };
        let (model, trace) = train_regression(&body(4), &plan, &v, &cfg).unwrap();
        assert!(trace.epochs.is_empty());
        let mean = plan.train_frames.iter().map(|r| v.iter().find(|x| x.video_id == r.0).unwrap().mos).sum::<f64>()
            / plan.train_frames.len() as f64;
        assert_eq!(model, RegressionNet::new(&body(4), &cfg, mean).unwrap());
    }

    #[test]
    fn constant_model_and_two_frame_average() {
        let mut m = RegressionNet::new(&body(2), &RegressionHeadConfig::default(), 0.0).unwrap();
        m.output.weights.fill(0.0);
        m.output.bias[0] = 3.7;
        let video = VideoRecord::from_matrix("a", 2.0, &array![[1.0, 2.0], [0.0, -1.0], [4.0, 4.0]]).unwrap();
        assert!((predict_video(&m, &video).unwrap() - 3.7).abs() < 1e-12);

        // Output reads the first input coordinate through identity-like layers.
        let mut lin = RegressionNet::new(&body(2), &RegressionHeadConfig { layer_sizes: vec![1], ..Default::default() }, 0.0).unwrap();
        lin.body.embed_weights = array![[1.0, 0.0]];
        lin.body.hidden = Dense { weights: array![[1.0]], bias: array![0.0] };
        lin.layers = vec![Dense { weights: array![[1.0]], bias: array![0.0] }];
        lin.output = Dense { weights: array![[1.0]], bias: array![0.0] };
        let two = VideoRecord::from_matrix("b", 3.0, &array![[2.0, 9.0], [4.0, -9.0]]).unwrap();
        assert_eq!(predict_video(&lin, &two).unwrap(), 3.0);
        let empty = VideoRecord { video_id: "e".into(), mos: 3.0, frames: vec![] };
        assert!(predict_video(&lin, &empty).is_err());
    }

    #[test]
    fn evaluation_is_deterministic_and_order_free() {
        let m = RegressionNet::new(&body(3), &RegressionHeadConfig::default(), 3.0).unwrap();
        let video = VideoRecord::from_matrix("a", 2.0, &array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [4.0, 4.0, 1.0]]).unwrap();
        let mut rev = video.clone();
        rev.frames.reverse();
        let a = predict_video(&m, &video).unwrap();
        assert_eq!(a, predict_video(&m, &video).unwrap());
        assert!((a - predict_video(&m, &rev).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RegressionHeadConfig { dropout_rate: 1.0, ..Default::default() }.validate().is_err());
        assert!(RegressionHeadConfig { layer_sizes: vec![], ..Default::default() }.validate().is_err());
        assert!(RegressionHeadConfig { lr_decay_per_epoch: 0.0, ..Default::default() }.validate().is_err());
    }
}
