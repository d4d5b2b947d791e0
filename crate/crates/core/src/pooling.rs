//! Temporal pooling of frame features into one video-level vector.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LeakError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMethod {
    #[default]
    Mean,
    Median,
    Min,
    Max,
}

impl PoolingMethod {
    pub const ALL: [PoolingMethod; 4] = [
        PoolingMethod::Mean,
        PoolingMethod::Median,
        PoolingMethod::Min,
        PoolingMethod::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolingMethod::Mean => "mean",
            PoolingMethod::Median => "median",
            PoolingMethod::Min => "min",
            PoolingMethod::Max => "max",
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingMethod {
    type Err = LeakError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s || (s == "avg" && *m == PoolingMethod::Mean))
            .ok_or_else(|| LeakError::domain(format!("unknown pooling method `{s}`")))
    }
}

/// Column-wise statistic over the rows of an `n × F` feature matrix.
pub fn pool<T: Scalar>(features: ArrayView2<'_, T>, method: PoolingMethod) -> Result<Array1<T>> {
    let n = features.nrows();
    if n == 0 {
        return Err(LeakError::domain("cannot pool an empty feature matrix"));
    }
    let col_fold = |init: T, f: fn(T, T) -> T| {
        features.fold_axis(Axis(0), init, |&acc, &x| f(acc, x))
    };
    Ok(match method {
        PoolingMethod::Mean => pool_sorted_mean(features),
        PoolingMethod::Min => col_fold(T::infinity(), T::min),
        PoolingMethod::Max => col_fold(T::neg_infinity(), T::max),
        PoolingMethod::Median => features
            .axis_iter(Axis(1))
            .map(|col| {
                let mut v = col.to_vec();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
                }
            })
            .collect(),
    })
}

/// Mean that sums each column in sorted order, making the result exactly
/// invariant to row permutations.
fn pool_sorted_mean<T: Scalar>(features: ArrayView2<'_, T>) -> Array1<T> {
    let n = T::count(features.nrows());
    features
        .axis_iter(Axis(1))
        .map(|col| {
            let mut v = col.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            v.into_iter().fold(T::zero(), |a, x| a + x) / n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn two_point_arithmetic() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        assert_eq!(pool(x.view(), PoolingMethod::Mean).unwrap(), array![1.0, 1.0]);
        assert_eq!(pool(x.view(), PoolingMethod::Min).unwrap(), array![0.0, 0.0]);
        assert_eq!(pool(x.view(), PoolingMethod::Max).unwrap(), array![2.0, 2.0]);
        assert_eq!(pool(x.view(), PoolingMethod::Median).unwrap(), array![1.0, 1.0]);
    }

    #[test]
    fn constant_rows_return_row() {
        let x = array![[0.1f32, -3.0, 7.5], [0.1, -3.0, 7.5], [0.1, -3.0, 7.5]];
        for m in PoolingMethod::ALL {
            assert_eq!(pool(x.view(), m).unwrap(), array![0.1f32, -3.0, 7.5], "{m}");
        }
    }

    #[test]
    fn odd_median() {
        let x = array![[3.0], [1.0], [2.0]];
        assert_eq!(pool(x.view(), PoolingMethod::Median).unwrap(), array![2.0]);
    }

    #[test]
    fn empty_is_error() {
        let x: Array2<f64> = Array2::zeros((0, 3));
        assert!(pool(x.view(), PoolingMethod::Mean).is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("avg".parse::<PoolingMethod>().unwrap(), PoolingMethod::Mean);
        assert_eq!("max".parse::<PoolingMethod>().unwrap(), PoolingMethod::Max);
        assert!("mode".parse::<PoolingMethod>().is_err());
    }

    fn matrix() -> impl Strategy<Value = Array2<f64>> {
        (1usize..9, 1usize..5).prop_flat_map(|(n, f)| {
            prop::collection::vec(-100.0f64..100.0, n * f)
                .prop_map(move |v| Array2::from_shape_vec((n, f), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ordering_min_mean_median_max(x in matrix()) {
            let [mean, median, min, max] = PoolingMethod::ALL.map(|m| pool(x.view(), m).unwrap());
            for j in 0..x.ncols() {
                prop_assert!(min[j] <= median[j] && median[j] <= max[j]);
                prop_assert!(min[j] <= mean[j] && mean[j] <= max[j]);
            }
        }

        #[test]
        fn permutation_invariant(x in matrix(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rows: Vec<usize> = (0..x.nrows()).collect();
            rows.shuffle(&mut crate::seed::rng(seed));
            let shuffled = x.select(Axis(0), &rows);
            for m in PoolingMethod::ALL {
                prop_assert_eq!(pool(x.view(), m).unwrap(), pool(shuffled.view(), m).unwrap());
            }
        }
    }
}
