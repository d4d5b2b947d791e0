//! Video records, the MOS class mapping, the synthetic generator and the
//! manifest reader/writer.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LeakError, Result};
use crate::matrix_io;
use crate::seed;

pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub video_id: String,
    pub frame_index: usize,
    pub raw_features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub mos: f64,
    pub frames: Vec<FrameSample>,
}

impl VideoRecord {
    /// Builds a record from a frames×D matrix, validating MOS and shape.
    pub fn from_matrix(video_id: impl Into<String>, mos: f64, frames: &Array2<f64>) -> Result<Self> {
        let video_id = video_id.into();
        check_mos(mos)?;
        if frames.nrows() == 0 {
            return Err(LeakError::domain(format!("video `{video_id}` has no frames")));
        }
        let frames = frames
            .outer_iter()
            .enumerate()
            .map(|(i, row)| FrameSample {
                video_id: video_id.clone(),
                frame_index: i,
                raw_features: row.to_vec(),
            })
            .collect();
        Ok(VideoRecord { video_id, mos, frames })
    }

    pub fn class(&self) -> ClassLabel {
        classify_mos(self.mos).expect("VideoRecord MOS validated on construction")
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.raw_features.len())
    }

    pub fn frame_matrix(&self) -> Array2<f64> {
        let d = self.feature_dim();
        let data = self.frames.iter().flat_map(|f| f.raw_features.iter().copied()).collect();
        Array2::from_shape_vec((self.frames.len(), d), data).expect("uniform frame dimension")
    }
}

/// The five MOS intervals. Index 0 is the best class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    VeryGood,
    Good,
    Mediocre,
    Poor,
    VeryPoor,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::VeryGood,
        ClassLabel::Good,
        ClassLabel::Mediocre,
        ClassLabel::Poor,
        ClassLabel::VeryPoor,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn check_mos(mos: f64) -> Result<()> {
    if !(MOS_MIN..=MOS_MAX).contains(&mos) {
        return Err(LeakError::domain(format!("MOS {mos} outside [1.0, 5.0]")));
    }
    Ok(())
}

/// Maps a MOS to its class. Boundaries are closed above; VeryGood is
/// `[4.2, 5.0]` and VeryPoor is `[1.0, 1.8]`.
pub fn classify_mos(mos: f64) -> Result<ClassLabel> {
    check_mos(mos)?;
    Ok(if mos >= 4.2 {
        ClassLabel::VeryGood
    } else if mos > 3.4 {
        ClassLabel::Good
    } else if mos > 2.6 {
        ClassLabel::Mediocre
    } else if mos > 1.8 {
        ClassLabel::Poor
    } else {
        ClassLabel::VeryPoor
    })
}

pub fn class_counts(videos: &[VideoRecord]) -> [usize; ClassLabel::COUNT] {
    let mut counts = [0; ClassLabel::COUNT];
    for v in videos {
        counts[v.class().index()] += 1;
    }
    counts
}

/// Share of videos belonging to the most frequent class: the accuracy of
/// always predicting that class.
pub fn dominant_class_share(videos: &[VideoRecord]) -> Result<f64> {
    if videos.is_empty() {
        return Err(LeakError::domain("dominant class share of an empty video list"));
    }
    let max = class_counts(videos).into_iter().max().unwrap_or(0);
    Ok(max as f64 / videos.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub feature_dim: usize,
    pub quality_signal_strength: f64,
    pub video_nuisance_strength: f64,
    pub frame_noise_strength: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_videos: 300,
            frames_per_video: 40,
            feature_dim: 32,
            quality_signal_strength: 1.0,
            video_nuisance_strength: 1.5,
            frame_noise_strength: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.frames_per_video == 0 || self.feature_dim == 0 {
            return Err(LeakError::domain(
                "n_videos, frames_per_video and feature_dim must be positive",
            ));
        }
        for (name, v) in [
            ("quality_signal_strength", self.quality_signal_strength),
            ("video_nuisance_strength", self.video_nuisance_strength),
            ("frame_noise_strength", self.frame_noise_strength),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(LeakError::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Fixed nonlinear embedding of a quality value into `dim` dimensions.
/// Component `k` (1-based) is `sin(k q / 5) + (q / 5)^((k mod 3) + 1)`.
pub fn quality_embedding(q: f64, dim: usize) -> Vec<f64> {
    (1..=dim)
        .map(|k| {
            let kf = k as f64;
            (kf * q / 5.0).sin() + (q / 5.0).powi((k % 3) as i32 + 1)
        })
        .collect()
}

/// Generates a synthetic dataset. Frames of one video share a per-video
/// nuisance vector, so video identity is recoverable from any frame.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<VideoRecord>> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let d = config.feature_dim;
    let mut videos = Vec::with_capacity(config.n_videos);
    for v in 0..config.n_videos {
        let mos: f64 = rng.random_range(MOS_MIN..=MOS_MAX);
        let signal = quality_embedding(mos, d);
        let nuisance: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let video_id = format!("v{v:05}");
        let frames = (0..config.frames_per_video)
            .map(|i| {
                let raw_features = (0..d)
                    .map(|k| {
                        let eta: f64 = rng.sample(StandardNormal);
                        config.quality_signal_strength * signal[k]
                            + config.video_nuisance_strength * nuisance[k]
                            + config.frame_noise_strength * eta
                    })
                    .collect();
                FrameSample {
                    video_id: video_id.clone(),
                    frame_index: i,
                    raw_features,
                }
            })
            .collect();
        videos.push(VideoRecord { video_id, mos, frames });
    }
    Ok(videos)
}

pub const MANIFEST_HEADER: [&str; 3] = ["video_id", "mos", "frame_file"];

/// Writes `manifest.csv` plus one binary frame matrix per video under `frames/`.
pub fn write_manifest(dir: &Path, videos: &[VideoRecord]) -> Result<()> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| LeakError::io(&frames_dir, e))?;
    let mut out = String::from("video_id,mos,frame_file\n");
    for v in videos {
        let rel = format!("frames/{}.bin", v.video_id);
        matrix_io::write_binary(&dir.join(&rel), &v.frame_matrix())?;
        // `{:?}` prints the shortest representation that round-trips.
        out.push_str(&format!("{},{:?},{}\n", v.video_id, v.mos, rel));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, out).map_err(|e| LeakError::io(&path, e))
}

/// Reads a manifest. Rows sharing a `video_id` are grouped into one video,
/// with frames concatenated in row order. Relative frame paths resolve
/// against the manifest's directory.
pub fn ingest_manifest(path: &Path) -> Result<Vec<VideoRecord>> {
    let text = fs::read_to_string(path).map_err(|e| LeakError::io(path, e))?;
    if text.trim().is_empty() {
        log::warn!("manifest {} is empty", path.display());
        return Ok(Vec::new());
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let parse_err = |line: usize, message: String| LeakError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().expect("non-empty manifest");
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != MANIFEST_HEADER {
        return Err(parse_err(hline + 1, format!("expected header `video_id,mos,frame_file`, found `{header}`")));
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (f64, Vec<Array2<f64>>)> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 || fields[0].is_empty() {
            return Err(parse_err(lineno, format!("expected 3 fields, found `{line}`")));
        }
        let mos: f64 = fields[1]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad MOS `{}`: {e}", fields[1])))?;
        if !(MOS_MIN..=MOS_MAX).contains(&mos) {
            return Err(LeakError::Domain(format!(
                "{}:{lineno}: MOS {mos} outside [1.0, 5.0]",
                path.display()
            )));
        }
        let frames = matrix_io::read_any(&base.join(fields[2]))?;
        if frames.nrows() == 0 {
            return Err(parse_err(lineno, format!("frame file `{}` has no rows", fields[2])));
        }
        match dim {
            None => dim = Some(frames.ncols()),
            Some(d) if d != frames.ncols() => {
                return Err(parse_err(
                    lineno,
                    format!("frame dimension {} differs from dataset dimension {d}", frames.ncols()),
                ))
            }
            _ => {}
        }
        let id = fields[0].to_string();
        match groups.get_mut(&id) {
            Some((m, parts)) => {
                if *m != mos {
                    return Err(parse_err(lineno, format!("video `{id}` listed with conflicting MOS {m} and {mos}")));
                }
                parts.push(frames);
            }
            None => {
                order.push(id.clone());
                groups.insert(id, (mos, vec![frames]));
            }
        }
    }

    order
        .into_iter()
        .map(|id| {
            let (mos, parts) = groups.remove(&id).expect("grouped id");
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            let all = ndarray::concatenate(ndarray::Axis(0), &views).expect("uniform columns");
            VideoRecord::from_matrix(id, mos, &all)
        })
        .collect()
}

/// Looks up videos by id.
pub fn index_by_id(videos: &[VideoRecord]) -> HashMap<&str, &VideoRecord> {
    videos.iter().map(|v| (v.video_id.as_str(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_boundaries() {
        assert_eq!(classify_mos(4.2).unwrap(), ClassLabel::VeryGood);
        assert_eq!(classify_mos(5.0).unwrap(), ClassLabel::VeryGood);
        assert_eq!(classify_mos(3.4).unwrap(), ClassLabel::Mediocre);
        assert_eq!(classify_mos(3.4000001).unwrap(), ClassLabel::Good);
        assert_eq!(classify_mos(2.6).unwrap(), ClassLabel::Poor);
        assert_eq!(classify_mos(1.8).unwrap(), ClassLabel::VeryPoor);
        assert_eq!(classify_mos(1.0).unwrap(), ClassLabel::VeryPoor);
    }

    #[test]
    fn out_of_range_mos_names_value() {
        let err = classify_mos(5.3).unwrap_err().to_string();
        assert!(err.contains("5.3"), "{err}");
        assert!(classify_mos(0.99).is_err());
        assert!(classify_mos(f64::NAN).is_err());
    }

    #[test]
    fn dominant_share_counts() {
        let mk = |mos| VideoRecord::from_matrix("x", mos, &Array2::zeros((1, 2))).unwrap();
        assert_eq!(dominant_class_share(&[mk(3.0), mk(3.0)]).unwrap(), 1.0);
        let share = dominant_class_share(&[mk(4.0), mk(4.0), mk(2.0)]).unwrap();
        assert!((share - 2.0 / 3.0).abs() < 1e-15);
        assert!(dominant_class_share(&[]).is_err());
    }

    #[test]
    fn noise_free_frames_equal_scaled_embedding() {
        let cfg = GeneratorConfig {
            n_videos: 4,
            frames_per_video: 5,
            feature_dim: 6,
            quality_signal_strength: 2.0,
            video_nuisance_strength: 0.0,
            frame_noise_strength: 0.0,
            seed: 3,
        };
        for v in generate(&cfg).unwrap() {
            let expect: Vec<f64> = quality_embedding(v.mos, 6).iter().map(|x| 2.0 * x).collect();
            for f in &v.frames {
                assert_eq!(f.raw_features, expect);
                assert_eq!(f.video_id, v.video_id);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig { n_videos: 12, seed: 99, ..Default::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig { seed: 100, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn invalid_strength_rejected() {
        let cfg = GeneratorConfig { frame_noise_strength: -1.0, ..Default::default() };
        assert!(generate(&cfg).is_err());
        let cfg = GeneratorConfig { quality_signal_strength: f64::INFINITY, ..Default::default() };
        assert!(generate(&cfg).is_err());
    }
}
