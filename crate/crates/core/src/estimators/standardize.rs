//! Stratified proportions and direct standardization.

use crate::dgp::{Arm, N_STRATA};
use crate::error::{Error, Result};
use crate::samples::{AnalyticSample, AnalyticSampleKind};

use super::{cell_label, CellTable};

/// Members and events per cell.
pub(crate) fn cell_counts(
    sample: &AnalyticSample<'_>,
) -> ([[u64; 2]; N_STRATA], [[u64; 2]; N_STRATA]) {
    let mut n = [[0u64; 2]; N_STRATA];
    let mut events = [[0u64; 2]; N_STRATA];
    for m in &sample.members {
        let (s, a) = (m.stratum(), m.record.arm().index());
        n[s][a] += 1;
        events[s][a] += u64::from(m.has_event());
    }
    (n, events)
}

pub(crate) fn nonempty(n: &[[u64; 2]; N_STRATA]) -> Result<()> {
    for (s, row) in n.iter().enumerate() {
        for arm in Arm::BOTH {
            if row[arm.index()] == 0 {
                return Err(Error::estimation(format!(
                    "empty cell ({})",
                    cell_label(s, arm)
                )));
            }
        }
    }
    Ok(())
}

/// Events over members in each (stratum, arm) cell.
pub fn stratum_risks_proportion(sample: &AnalyticSample<'_>) -> Result<CellTable> {
    if sample.kind == AnalyticSampleKind::ObservedPregnancies {
        return Err(Error::Contract(
            "proportions are undefined for a sample with censored members".into(),
        ));
    }
    let (n, events) = cell_counts(sample);
    nonempty(&n)?;
    let mut risks = [[0.0; 2]; N_STRATA];
    for s in 0..N_STRATA {
        for a in 0..2 {
            risks[s][a] = events[s][a] as f64 / n[s][a] as f64;
        }
    }
    Ok(risks)
}

/// Weighted average of stratum risks per arm, `[treated, untreated]`.
pub fn standardize(risks: &CellTable, weights: &[f64; N_STRATA]) -> Result<[f64; 2]> {
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::estimation(format!(
            "invalid stratum weights {weights:?}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::estimation(format!("stratum weights sum to {total}")));
    }
    let mut out = [0.0; 2];
    for (row, w) in risks.iter().zip(weights) {
        for a in 0..2 {
            out[a] += w * row[a];
        }
    }
    Ok(out)
}
