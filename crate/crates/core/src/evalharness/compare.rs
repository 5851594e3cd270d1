use std::io::Write;

use super::{run_trials, summarize, write_summary_csv, MetricSummary, Policy, TrialResult, TrialSpec};
use crate::{Error, Result};

/// Per-policy results on one shared seed set.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<(String, MetricSummary)>,
    pub results: Vec<Vec<TrialResult>>,
}

impl Comparison {
    pub fn summary(&self, policy: &str) -> Option<&MetricSummary> {
        self.rows.iter().find(|(n, _)| n == policy).map(|(_, s)| s)
    }

    /// Side-by-side mean cumulative reward and spread per policy.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>12} {:>12} {:>12} {:>10} {:>12}\n",
            "policy", "mean_reward", "median", "iqr", "area_pct", "cx_iqr_px"
        );
        for (name, s) in &self.rows {
            out.push_str(&format!(
                "{:<20} {:>12.3} {:>12.3} {:>12.3} {:>10.3} {:>12.3}\n",
                name,
                s.cumulative_reward.mean,
                s.cumulative_reward.median,
                s.cumulative_reward.iqr,
                s.final_area_pct.mean,
                s.final_centroid_x.iqr
            ));
        }
        out
    }
}

/// Evaluates every policy on the same trials.
pub fn compare(policies: &[&dyn Policy], spec: &TrialSpec) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(policies.len());
    let mut results: Vec<Vec<TrialResult>> = Vec::with_capacity(policies.len());
    for p in policies {
        let name = p.name();
        let res = run_trials(*p, spec)?;
        if let Some(first) = results.first() {
            let seeds = |r: &[TrialResult]| r.iter().map(|t| (t.seed, t.start)).collect::<Vec<_>>();
            if seeds(first) != seeds(&res) {
                return Err(Error::Usage("policies were evaluated on different seed sets".into()));
            }
        }
        rows.push((name, summarize(&res)?));
        results.push(res);
    }
    Ok(Comparison { rows, results })
}

pub fn write_comparison_csv<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    write_summary_csv(out, &cmp.rows)
}
