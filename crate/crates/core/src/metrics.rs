//! Angular-error accuracy metrics and sparsification-based uncertainty
//! evaluation.
//!
//! A sparsification curve sorts pixels by their uncertainty and evaluates an
//! error metric on the `x%` most confident pixels for `x = 1, …, 100`.
//! The oracle curve sorts by the true error instead; it is the best any
//! uncertainty ranking can do. AUSC is the mean of the 100 curve values and
//! AUSE is the AUSC of `estimated − oracle`.
//!
//! All angles are in degrees.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapio::NormalMap;
use crate::sphere::angle_between;

/// Accuracy thresholds in degrees.
pub const THRESHOLDS_DEG: [f64; 5] = [5.0, 7.5, 11.25, 22.5, 30.0];

/// An angular error paired with the uncertainty assigned to that pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    error_deg: f64,
    uncertainty: f64,
}

impl ErrorSample {
    pub fn new(error_deg: f64, uncertainty: f64) -> Result<Self> {
        if !(0.0..=180.0).contains(&error_deg) {
            return Err(Error::domain("error_deg", error_deg, "[0, 180]"));
        }
        if uncertainty.is_nan() {
            return Err(Error::domain("uncertainty", uncertainty, "not NaN"));
        }
        Ok(ErrorSample {
            error_deg,
            uncertainty,
        })
    }

    pub fn error_deg(&self) -> f64 {
        self.error_deg
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }
}

/// Summary accuracy metrics. `pct_*` is the percentage of errors strictly
/// below the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mean: f64,
    pub median: f64,
    pub rmse: f64,
    pub pct_5: f64,
    pub pct_7_5: f64,
    pub pct_11_25: f64,
    pub pct_22_5: f64,
    pub pct_30: f64,
}

impl MetricsReport {
    /// Percentage below one of [`THRESHOLDS_DEG`].
    pub fn pct_below(&self, threshold_deg: f64) -> Option<f64> {
        let i = THRESHOLDS_DEG.iter().position(|&t| t == threshold_deg)?;
        Some(
            [
                self.pct_5,
                self.pct_7_5,
                self.pct_11_25,
                self.pct_22_5,
                self.pct_30,
            ][i],
        )
    }
}

/// Per-pixel angular error in degrees; `None` wherever either map is
/// invalid.
pub fn angular_errors(pred: &NormalMap, gt: &NormalMap) -> Result<Vec<Option<f64>>> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(pred
        .directions()
        .zip(gt.directions())
        .map(|(p, g)| Some(angle_between(p?, g?).degrees()))
        .collect())
}

/// Values sorted ascending; every metric is evaluated on a sorted copy so
/// results depend only on the multiset of errors.
fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean_sorted(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rmse_sorted(v: &[f64]) -> f64 {
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

fn pct_below_sorted(v: &[f64], t: f64) -> f64 {
    let below = v.partition_point(|&e| e < t);
    100.0 * below as f64 / v.len() as f64
}

/// Mean, median, RMSE and threshold accuracies of a set of errors.
pub fn summarize(errors_deg: &[f64]) -> Result<MetricsReport> {
    if errors_deg.is_empty() {
        return Err(Error::EmptyInput);
    }
    let v = sorted(errors_deg);
    let pct = |t| pct_below_sorted(&v, t);
    Ok(MetricsReport {
        mean: mean_sorted(&v),
        median: median_sorted(&v),
        rmse: rmse_sorted(&v),
        pct_5: pct(5.0),
        pct_7_5: pct(7.5),
        pct_11_25: pct(11.25),
        pct_22_5: pct(22.5),
        pct_30: pct(30.0),
    })
}

/// The error metric a sparsification curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Metric {
    Mean,
    Median,
    Rmse,
    /// `100 − pct_below(t)`: the accuracy at threshold `t` turned into an
    /// error.
    ErrorAbove(f64),
}

impl Metric {
    /// Evaluates on ascending-sorted errors.
    fn eval_sorted(self, v: &[f64]) -> f64 {
        match self {
            Metric::Mean => mean_sorted(v),
            Metric::Median => median_sorted(v),
            Metric::Rmse => rmse_sorted(v),
            Metric::ErrorAbove(t) => 100.0 - pct_below_sorted(v, t),
        }
    }

    /// Evaluates on errors in any order.
    pub fn eval(self, errors_deg: &[f64]) -> Result<f64> {
        if errors_deg.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(self.eval_sorted(&sorted(errors_deg)))
    }

    /// The name used on the command line and in JSON keys.
    pub fn name(self) -> String {
        match self {
            Metric::Mean => "mean".into(),
            Metric::Median => "median".into(),
            Metric::Rmse => "rmse".into(),
            Metric::ErrorAbove(t) => format!("pct_{}", t.to_string().replace('.', "_")),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Metric::Mean),
            "median" => Ok(Metric::Median),
            "rmse" => Ok(Metric::Rmse),
            _ => THRESHOLDS_DEG
                .iter()
                .map(|&t| Metric::ErrorAbove(t))
                .find(|m| m.name() == s)
                .ok_or_else(|| {
                    Error::Shape(format!(
                        "unknown metric {s:?}; expected mean, median, rmse, pct_5, pct_7_5, pct_11_25, pct_22_5 or pct_30"
                    ))
                }),
        }
    }
}

/// Metric values at `x = 1, …, 100` percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsificationCurve {
    values: Vec<f64>,
}

impl SparsificationCurve {
    pub const POINTS: usize = 100;

    /// Wraps 100 values for `x = 1..=100`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::POINTS {
            return Err(Error::Shape(format!(
                "a sparsification curve has 100 points, got {}",
                values.len()
            )));
        }
        Ok(SparsificationCurve { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `x` percent, `1 ≤ x ≤ 100`.
    pub fn at(&self, x_percent: usize) -> f64 {
        self.values[x_percent - 1]
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (i + 1, v))
    }

    /// CSV with header `x_percent,value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<W> {
        let mut w = crate::mapio::CsvWriter::new(out, &["x_percent", "value"])?;
        for (x, v) in self.points() {
            w.row(&[x.to_string(), v.to_string()])?;
        }
        w.finish()
    }
}

/// Number of samples in the `x%` prefix: `⌈x·N/100⌉`.
pub fn prefix_len(x_percent: usize, n: usize) -> usize {
    (x_percent * n).div_ceil(100)
}

fn curve_from_order(errors_in_order: &[f64], metric: Metric) -> SparsificationCurve {
    let n = errors_in_order.len();
    let values = (1..=SparsificationCurve::POINTS)
        .map(|x| {
            let prefix = sorted(&errors_in_order[..prefix_len(x, n)]);
            metric.eval_sorted(&prefix)
        })
        .collect();
    SparsificationCurve { values }
}

fn curve_by<K>(samples: &[ErrorSample], metric: Metric, key: K) -> Result<SparsificationCurve>
where
    K: Fn(&ErrorSample) -> f64,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        key(&samples[a])
            .total_cmp(&key(&samples[b]))
            .then(a.cmp(&b))
    });
    let errors: Vec<f64> = order.iter().map(|&i| samples[i].error_deg).collect();
    Ok(curve_from_order(&errors, metric))
}

/// Sparsification by ascending uncertainty (ties by original index).
pub fn sparsification(samples: &[ErrorSample], metric: Metric) -> Result<SparsificationCurve> {
    curve_by(samples, metric, ErrorSample::uncertainty)
}

/// Sparsification by ascending true error.
pub fn oracle_curve(samples: &[ErrorSample], metric: Metric) -> Result<SparsificationCurve> {
    curve_by(samples, metric, ErrorSample::error_deg)
}

/// Area under a sparsification curve: the mean of its 100 values.
pub fn ausc(curve: &SparsificationCurve) -> f64 {
    curve.values.iter().sum::<f64>() / curve.values.len() as f64
}

/// Area under the sparsification error, `AUSC(estimated − oracle)`.
pub fn ause(estimated: &SparsificationCurve, oracle: &SparsificationCurve) -> Result<f64> {
    if estimated.values.len() != oracle.values.len() {
        return Err(Error::Shape("curves are on different x grids".into()));
    }
    let diff = estimated
        .values
        .iter()
        .zip(&oracle.values)
        .map(|(e, o)| e - o)
        .collect();
    Ok(ausc(&SparsificationCurve { values: diff }))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    Ok(cov / (va * vb).sqrt())
}
