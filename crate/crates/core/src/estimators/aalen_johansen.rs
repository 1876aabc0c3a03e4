//! Aalen-Johansen cumulative incidence with one competing event.
//!
//! Time is measured from LMP week 9. A pregnancy censored at its index
//! encounter would sit at time zero; it is moved to a small positive time so
//! it still enters the risk set.

use crate::dgp::{Arm, LMP_OFFSET, N_STRATA};
use crate::error::{Error, Result};
use crate::missingness::ObservedPregnancy;
use crate::samples::AnalyticSample;

use super::standardize::nonempty;
use super::{cell_label, CellTable};

/// LMP week at which analysis time starts.
pub const ORIGIN_LMP_WEEK: u8 = 9;
/// Analysis time for pregnancies censored at the index encounter.
pub const INDEX_CENSOR_TIME: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellStatus {
    // Order matters: events are processed before censorings at tied times.
    Event,
    Competing,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AjObservation {
    pub time: f64,
    pub status: CellStatus,
}

impl AjObservation {
    pub fn new(time: f64, status: CellStatus) -> Self {
        AjObservation { time, status }
    }

    pub fn from_member(m: &ObservedPregnancy<'_>) -> Self {
        let lmp_time = |conception_week: u8| {
            f64::from(conception_week + LMP_OFFSET) - f64::from(ORIGIN_LMP_WEEK)
        };
        match (m.outcome, m.censor_week) {
            (Some(o), _) => AjObservation::new(
                lmp_time(o.observed_week),
                if o.preeclampsia {
                    CellStatus::Event
                } else {
                    CellStatus::Competing
                },
            ),
            (None, Some(c)) => {
                AjObservation::new(lmp_time(c).max(INDEX_CENSOR_TIME), CellStatus::Censored)
            }
            (None, None) => unreachable!("censored pregnancy without a censoring week"),
        }
    }
}

/// State of the estimator just after one distinct event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AjStep {
    pub time: f64,
    pub at_risk: u64,
    pub events: u64,
    pub competing: u64,
    pub cif_event: f64,
    pub cif_competing: f64,
    pub survival: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeIncidence {
    pub steps: Vec<AjStep>,
    /// No event or competing event was observed.
    pub all_censored: bool,
}

impl CumulativeIncidence {
    /// Cumulative incidence of the event at the last observed time.
    pub fn cif(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cif_event)
    }
}

/// Product-limit estimate over a set of observations. Sorts `obs` in place.
pub fn aalen_johansen(obs: &mut [AjObservation]) -> Result<CumulativeIncidence> {
    if obs.is_empty() {
        return Err(Error::estimation("Aalen-Johansen on an empty cell"));
    }
    if let Some(bad) = obs.iter().find(|o| !(o.time.is_finite() && o.time > 0.0)) {
        return Err(Error::estimation(format!(
            "non-positive analysis time {}",
            bad.time
        )));
    }
    obs.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.status.cmp(&b.status)));

    let mut at_risk = obs.len() as u64;
    let (mut surv, mut cif_e, mut cif_c) = (1.0f64, 0.0f64, 0.0f64);
    let mut steps = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].time;
        let (mut d_e, mut d_c, mut d_cens) = (0u64, 0u64, 0u64);
        while i < obs.len() && obs[i].time == t {
            match obs[i].status {
                CellStatus::Event => d_e += 1,
                CellStatus::Competing => d_c += 1,
                CellStatus::Censored => d_cens += 1,
            }
            i += 1;
        }
        if d_e + d_c > 0 {
            let n = at_risk as f64;
            cif_e += surv * d_e as f64 / n;
            cif_c += surv * d_c as f64 / n;
            surv *= 1.0 - (d_e + d_c) as f64 / n;
            steps.push(AjStep {
                time: t,
                at_risk,
                events: d_e,
                competing: d_c,
                cif_event: cif_e,
                cif_competing: cif_c,
                survival: surv,
            });
        }
        at_risk -= d_e + d_c + d_cens;
    }
    Ok(CumulativeIncidence {
        all_censored: steps.is_empty(),
        steps,
    })
}

pub fn aalen_johansen_cif(obs: &mut [AjObservation]) -> Result<f64> {
    Ok(aalen_johansen(obs)?.cif())
}

/// Cumulative incidence at the horizon in each (stratum, arm) cell.
pub fn stratum_risks_aalen_johansen(sample: &AnalyticSample<'_>) -> Result<CellTable> {
    let mut cells: Vec<[Vec<AjObservation>; 2]> =
        (0..N_STRATA).map(|_| [Vec::new(), Vec::new()]).collect();
    let mut n = [[0u64; 2]; N_STRATA];
    for m in &sample.members {
        let (s, a) = (m.stratum(), m.record.arm().index());
        cells[s][a].push(AjObservation::from_member(m));
        n[s][a] += 1;
    }
    nonempty(&n)?;
    let mut risks = [[0.0; 2]; N_STRATA];
    for (s, row) in cells.iter_mut().enumerate() {
        for arm in Arm::BOTH {
            let ci = aalen_johansen(&mut row[arm.index()])
                .map_err(|e| Error::estimation(format!("{e} ({})", cell_label(s, arm))))?;
            risks[s][arm.index()] = ci.cif();
        }
    }
    Ok(risks)
}
