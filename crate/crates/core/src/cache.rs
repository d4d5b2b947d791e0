//! On-disk store of per-frame and pooled features, keyed by extractor id
//! and the extractor's content hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::VideoRecord;
use crate::error::{LeakError, Result};
use crate::extractor::{extract_features, Extractor};
use crate::matrix_io;
use crate::pooling::{pool, PoolingMethod};

const INDEX_FILE: &str = "index.json";

/// Features of every video under one extractor, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub extractor_hash: String,
    pub video_ids: Vec<String>,
    /// Row range of each video inside `frames`.
    pub offsets: Vec<(usize, usize)>,
    pub frames: Array2<f64>,
    pub pooled: BTreeMap<PoolingMethod, Array2<f64>>,
}

impl FeatureStore {
    pub fn compute(extractor: &Extractor, videos: &[VideoRecord], methods: &[PoolingMethod]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(videos.len());
        let mut offsets = Vec::with_capacity(videos.len());
        let mut start = 0;
        for v in videos {
            let f = extract_features(extractor, v.frame_matrix().view())?;
            offsets.push((start, f.nrows()));
            start += f.nrows();
            blocks.push(f);
        }
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let frames = if views.is_empty() {
            Array2::zeros((0, extractor.feature_dim()))
        } else {
            ndarray::concatenate(Axis(0), &views).map_err(|e| LeakError::Integrity(e.to_string()))?
        };
        let mut store = FeatureStore {
            extractor_hash: extractor.content_hash(),
            video_ids: videos.iter().map(|v| v.video_id.clone()).collect(),
            offsets,
            frames,
            pooled: BTreeMap::new(),
        };
        for &m in methods {
            store.ensure_pooled(m)?;
        }
        Ok(store)
    }

    pub fn video_frames(&self, i: usize) -> ndarray::ArrayView2<'_, f64> {
        let (start, len) = self.offsets[i];
        self.frames.slice(s![start..start + len, ..])
    }

    pub fn ensure_pooled(&mut self, method: PoolingMethod) -> Result<&Array2<f64>> {
        if !self.pooled.contains_key(&method) {
            let mut out = Array2::zeros((self.video_ids.len(), self.frames.ncols()));
            for i in 0..self.video_ids.len() {
                out.row_mut(i).assign(&pool(self.video_frames(i), method)?);
            }
            self.pooled.insert(method, out);
        }
        Ok(&self.pooled[&method])
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Index {
    entries: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    hash: String,
    videos: Vec<CachedVideo>,
    frames_file: String,
    pooled: BTreeMap<PoolingMethod, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedVideo {
    id: String,
    start: usize,
    rows: usize,
}

/// A directory of binary feature matrices with a JSON index.
/// Clones share one index lock, so a cache can be used from parallel workers.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
    index_lock: Arc<Mutex<()>>,
}

impl FeatureCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LeakError::io(&dir, e))?;
        Ok(FeatureCache { dir, index_lock: Arc::new(Mutex::new(())) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join(INDEX_FILE)
    }

    fn read_index(&self) -> Result<Index> {
        let path = self.index_path();
        match fs::read_to_string(&path) {
            Ok(s) => Ok(serde_json::from_str(&s)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Index::default()),
            Err(e) => Err(LeakError::io(&path, e)),
        }
    }

    fn write_index(&self, index: &Index) -> Result<()> {
        let path = self.index_path();
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(index)?).map_err(|e| LeakError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| LeakError::io(&path, e))
    }

    /// Loads the features stored under `id`, or computes and stores them.
    /// An entry whose hash differs from `extractor`'s is a stale-cache error.
    pub fn features(
        &self,
        id: &str,
        extractor: &Extractor,
        videos: &[VideoRecord],
        methods: &[PoolingMethod],
    ) -> Result<FeatureStore> {
        let hash = extractor.content_hash();
        let index = self.read_index()?;
        if let Some(entry) = index.entries.get(id) {
            if entry.hash != hash {
                return Err(LeakError::StaleCache { id: id.to_string(), stored: entry.hash.clone(), actual: hash });
            }
            let cached: Vec<&str> = entry.videos.iter().map(|v| v.id.as_str()).collect();
            let wanted: Vec<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
            if cached != wanted {
                return Err(LeakError::StaleCache {
                    id: id.to_string(),
                    stored: format!("{} cached videos", cached.len()),
                    actual: format!("{} requested videos", wanted.len()),
                });
            }
            let mut store = FeatureStore {
                extractor_hash: hash,
                video_ids: entry.videos.iter().map(|v| v.id.clone()).collect(),
                offsets: entry.videos.iter().map(|v| (v.start, v.rows)).collect(),
                frames: matrix_io::read_binary(&self.dir.join(&entry.frames_file))?,
                pooled: BTreeMap::new(),
            };
            for (m, file) in &entry.pooled {
                store.pooled.insert(*m, matrix_io::read_binary(&self.dir.join(file))?);
            }
            let missing: Vec<PoolingMethod> = methods.iter().copied().filter(|m| !store.pooled.contains_key(m)).collect();
            if !missing.is_empty() {
                for &m in &missing {
                    store.ensure_pooled(m)?;
                }
                self.persist(id, &store)?;
            }
            return Ok(store);
        }
        let store = FeatureStore::compute(extractor, videos, methods)?;
        self.persist(id, &store)?;
        Ok(store)
    }

    fn persist(&self, id: &str, store: &FeatureStore) -> Result<()> {
        let stem: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        let frames_file = format!("{stem}.frames.bin");
        matrix_io::write_binary(&self.dir.join(&frames_file), &store.frames)?;
        let mut pooled = BTreeMap::new();
        for (m, mat) in &store.pooled {
            let file = format!("{stem}.{}.bin", m.name());
            matrix_io::write_binary(&self.dir.join(&file), mat)?;
            pooled.insert(*m, file);
        }
        let videos = store
            .video_ids
            .iter()
            .zip(&store.offsets)
            .map(|(id, &(start, rows))| CachedVideo { id: id.clone(), start, rows })
            .collect();
        // Re-read under the lock so entries added by other workers survive.
        let _guard = self.index_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut index = self.read_index()?;
        index.entries.insert(id.to_string(), IndexEntry { hash: store.extractor_hash.clone(), videos, frames_file, pooled });
        self.write_index(&index)
    }
}
