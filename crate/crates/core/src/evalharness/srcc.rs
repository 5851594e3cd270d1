use std::io::Write;

use serde::Serialize;

use super::TrialResult;
use crate::simenv::StartPosition;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Estimator::Pearson),
            "spearman" => Ok(Estimator::Spearman),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// A correlation coefficient, or a flag that one series had no variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Defined(r) => Some(*r),
            Correlation::Undefined => None,
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Usage("correlation needs at least two pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Ranks starting at 1; ties share their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCorrelation {
    pub metric: &'static str,
    pub nominal_mean: f64,
    pub perturbed_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrccGroup {
    pub start: StartPosition,
    pub n: usize,
    pub metrics: Vec<MetricCorrelation>,
}

impl SrccGroup {
    pub fn metric(&self, name: &str) -> Option<&MetricCorrelation> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

/// Per start position and metric: nominal mean, perturbed mean and the
/// correlation across paired runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SRCCReport {
    pub estimator: Estimator,
    pub groups: Vec<SrccGroup>,
}

/// Metrics correlated by the study. `object_area` is the episode-mean area;
/// `final_area` is the area on the last frame.
pub const SRCC_METRICS: [(&str, fn(&TrialResult) -> f64); 5] = [
    ("cumulative_reward", |r| r.cumulative_reward),
    ("object_area", |r| r.mean_area_pct),
    ("final_area", |r| r.final_area_pct),
    ("centroid_x", |r| r.final_centroid_x),
    ("centroid_y", |r| r.final_centroid_y),
];

/// Correlates paired nominal and perturbed runs within each start position.
/// Run `i` of both lists must share its seed and start position.
pub fn srcc(nominal: &[TrialResult], perturbed: &[TrialResult], estimator: Estimator) -> Result<SRCCReport> {
    if nominal.len() != perturbed.len() {
        return Err(Error::Usage(format!(
            "{} nominal runs but {} perturbed runs",
            nominal.len(),
            perturbed.len()
        )));
    }
    for (a, b) in nominal.iter().zip(perturbed) {
        if a.seed != b.seed || a.start != b.start {
            return Err(Error::Usage(format!(
                "run {} is not paired: seed {} / {}, start {} / {}",
                a.trial, a.seed, b.seed, a.start, b.start
            )));
        }
    }
    let mut groups = Vec::new();
    for start in StartPosition::FIXED {
        let idx: Vec<usize> = (0..nominal.len()).filter(|&i| nominal[i].start == start).collect();
        if idx.is_empty() {
            continue;
        }
        let mut metrics = Vec::with_capacity(SRCC_METRICS.len());
        for (name, f) in SRCC_METRICS {
            let x: Vec<f64> = idx.iter().map(|&i| f(&nominal[i])).collect();
            let y: Vec<f64> = idx.iter().map(|&i| f(&perturbed[i])).collect();
            let corr = match estimator {
                Estimator::Pearson => pearson(&x, &y)?,
                Estimator::Spearman => spearman(&x, &y)?,
            };
            let n = x.len() as f64;
            metrics.push(MetricCorrelation {
                metric: name,
                nominal_mean: x.iter().sum::<f64>() / n,
                perturbed_mean: y.iter().sum::<f64>() / n,
                correlation: corr.value(),
                defined: corr.value().is_some(),
            });
        }
        groups.push(SrccGroup {
            start,
            n: idx.len(),
            metrics,
        });
    }
    if groups.windows(2).any(|g| g[0].n != g[1].n) {
        return Err(Error::Usage("start-position groups differ in size".into()));
    }
    Ok(SRCCReport { estimator, groups })
}

impl SRCCReport {
    pub fn group(&self, start: StartPosition) -> Option<&SrccGroup> {
        self.groups.iter().find(|g| g.start == start)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("report serialisation: {e}")))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start", "metric", "n", "nominal_mean", "perturbed_mean", "correlation", "defined"])?;
        for g in &self.groups {
            for m in &g.metrics {
                w.write_record([
                    g.start.to_string(),
                    m.metric.to_string(),
                    g.n.to_string(),
                    m.nominal_mean.to_string(),
                    m.perturbed_mean.to_string(),
                    m.correlation.map(|c| c.to_string()).unwrap_or_default(),
                    m.defined.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("srcc csv", e))?;
        Ok(())
    }

    /// Fixed-width table, one row per start position and metric.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:<18} {:>4} {:>12} {:>12} {:>8}\n", "start", "metric", "n", "nominal", "perturbed", "r");
        for g in &self.groups {
            for m in &g.metrics {
                let r = m.correlation.map_or("undef".to_string(), |c| format!("{c:.3}"));
                out.push_str(&format!(
                    "{:<8} {:<18} {:>4} {:>12.3} {:>12.3} {:>8}\n",
                    g.start.as_str(),
                    m.metric,
                    g.n,
                    m.nominal_mean,
                    m.perturbed_mean,
                    r
                ));
            }
        }
        out
    }
}
