use std::io::Write;

use super::{ActionVector, Observation};
use crate::rewards::RewardBreakdown;
use crate::Result;

/// One step of a logged episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub action: ActionVector,
    pub observation: Observation,
    pub reward: RewardBreakdown,
}

const HEADER: [&str; 20] = [
    "t", "a1", "a2", "a3", "a4", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "reward", "r_area",
    "r_position", "r_offset", "penalty", "delta_area",
];

/// Writes a trajectory as CSV: step index, actions, state channels, total
/// reward and its components.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        let mut rec = Vec::with_capacity(HEADER.len());
        rec.push(row.t.to_string());
        rec.extend(row.action.values().iter().map(f64::to_string));
        rec.extend(row.observation.to_array().iter().map(f64::to_string));
        let r = &row.reward;
        rec.extend([r.total, r.area, r.position, r.offset, r.penalty, r.delta_area].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| crate::Error::io("trajectory csv", e))?;
    Ok(())
}
