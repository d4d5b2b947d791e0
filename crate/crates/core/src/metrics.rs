//! PLCC, SROCC and their aggregation across folds.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{LeakError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub plcc: T,
    pub srocc: T,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd<T> {
    pub mean: T,
    /// Sample standard deviation (n − 1 denominator); 0 for one value.
    pub std: T,
}

impl<T: Scalar> std::fmt::Display for MeanStd<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} (±{:.2})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate<T> {
    pub plcc: MeanStd<T>,
    pub srocc: MeanStd<T>,
    pub count: usize,
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(LeakError::domain(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(LeakError::domain("correlation needs at least 2 samples"));
    }
    Ok(())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b) / T::count(v.len())
}

/// Sample Pearson correlation.
pub fn plcc<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > T::zero() && syy > T::zero()) {
        return Err(LeakError::UndefinedCorrelation("constant input"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of the ranks they occupy.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let r = T::count(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn srocc<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    plcc(&average_ranks(x), &average_ranks(y))
}

pub fn correlate<T: Scalar>(predicted: &[T], truth: &[T]) -> Result<CorrelationResult<T>> {
    Ok(CorrelationResult {
        plcc: plcc(predicted, truth)?,
        srocc: srocc(predicted, truth)?,
        n: predicted.len(),
    })
}

pub fn mean_std<T: Scalar>(values: &[T]) -> Result<MeanStd<T>> {
    if values.is_empty() {
        return Err(LeakError::domain("mean of no values"));
    }
    let m = mean(values);
    let std = if values.len() < 2 {
        T::zero()
    } else {
        let ss = values.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
        (ss / T::count(values.len() - 1)).sqrt()
    };
    Ok(MeanStd { mean: m, std })
}

pub fn aggregate<T: Scalar>(results: &[CorrelationResult<T>]) -> Result<Aggregate<T>> {
    if results.is_empty() {
        return Err(LeakError::domain("cannot aggregate zero results"));
    }
    let p: Vec<T> = results.iter().map(|r| r.plcc).collect();
    let s: Vec<T> = results.iter().map(|r| r.srocc).collect();
    Ok(Aggregate {
        plcc: mean_std(&p)?,
        srocc: mean_std(&s)?,
        count: results.len(),
    })
}
