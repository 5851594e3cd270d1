use std::io::Write;

use serde::Serialize;

use super::TrialResult;
use crate::{Error, Result};

/// Order statistics of one metric. Quartiles interpolate linearly between
/// order statistics at rank `(n - 1) * p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_values(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Usage("cannot summarize an empty result set".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("summary input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    Ok(Summary {
        n: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

/// Summaries of every per-trial metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub cumulative_reward: Summary,
    pub final_area_pct: Summary,
    pub mean_area_pct: Summary,
    pub final_centroid_x: Summary,
    pub final_centroid_y: Summary,
}

impl MetricSummary {
    pub fn named(&self) -> [(&'static str, &Summary); 5] {
        [
            ("cumulative_reward", &self.cumulative_reward),
            ("final_area_pct", &self.final_area_pct),
            ("mean_area_pct", &self.mean_area_pct),
            ("final_centroid_x", &self.final_centroid_x),
            ("final_centroid_y", &self.final_centroid_y),
        ]
    }
}

pub fn summarize(results: &[TrialResult]) -> Result<MetricSummary> {
    let col = |f: fn(&TrialResult) -> f64| summarize_values(&results.iter().map(f).collect::<Vec<_>>());
    Ok(MetricSummary {
        cumulative_reward: col(|r| r.cumulative_reward)?,
        final_area_pct: col(|r| r.final_area_pct)?,
        mean_area_pct: col(|r| r.mean_area_pct)?,
        final_centroid_x: col(|r| r.final_centroid_x)?,
        final_centroid_y: col(|r| r.final_centroid_y)?,
    })
}

pub const SUMMARY_CSV_HEADER: [&str; 10] = ["policy", "metric", "n", "mean", "median", "q1", "q3", "iqr", "min", "max"];

/// One row per policy and metric: the box-plot statistics.
pub fn write_summary_csv<W: Write>(out: W, rows: &[(String, MetricSummary)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for (policy, summary) in rows {
        for (metric, s) in summary.named() {
            w.write_record([
                policy.clone(),
                metric.to_string(),
                s.n.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.q1.to_string(),
                s.q3.to_string(),
                s.iqr.to_string(),
                s.min.to_string(),
                s.max.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("summary csv", e))?;
    Ok(())
}
