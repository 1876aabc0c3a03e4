//! Risk estimation, truth, bounds and bias.
//!
//! Risks are estimated within each (stratum, arm) cell and then
//! standardized to the analytic sample's own covariate distribution. The
//! delivery and outcome samples use simple proportions; the pregnancy sample
//! uses the Aalen-Johansen estimator with every non-preeclamptic end as a
//! competing event.

pub mod aalen_johansen;
pub mod bounds;
pub mod standardize;

use serde::Serialize;

use crate::dgp::{Arm, Covariates, PregnancyRecord, N_STRATA};
use crate::error::{Error, Result};
use crate::samples::{AnalyticSample, AnalyticSampleKind};

pub use aalen_johansen::{
    aalen_johansen, aalen_johansen_cif, stratum_risks_aalen_johansen, AjObservation, CellStatus,
};
pub use bounds::{bounds, BoundsAssumption, BoundsSet};
pub use standardize::{standardize, stratum_risks_proportion};

/// A per-cell quantity, indexed `[stratum][arm.index()]`.
pub type CellTable = [[f64; 2]; N_STRATA];

pub(crate) fn cell_label(stratum: usize, arm: Arm) -> String {
    let cov = Covariates::from_stratum(stratum);
    format!(
        "severity={}, rural={}, arm={}",
        cov.severity.label(),
        cov.rural,
        arm.label()
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub risk_treated: f64,
    pub risk_untreated: f64,
    pub rd_per100: f64,
    pub rr: f64,
}

impl EffectEstimate {
    pub fn from_risks(risk_treated: f64, risk_untreated: f64) -> Result<Self> {
        for (r, arm) in [
            (risk_treated, Arm::Treated),
            (risk_untreated, Arm::Untreated),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::estimation(format!(
                    "{} risk {r} outside [0, 1]",
                    arm.label()
                )));
            }
        }
        if risk_untreated <= 0.0 {
            return Err(Error::estimation(
                "non-initiator risk is zero; risk ratio undefined",
            ));
        }
        Ok(EffectEstimate {
            risk_treated,
            risk_untreated,
            rd_per100: 100.0 * (risk_treated - risk_untreated),
            rr: risk_treated / risk_untreated,
        })
    }

    pub fn risk(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.risk_treated,
            Arm::Untreated => self.risk_untreated,
        }
    }
}

/// Effects under complete follow-up of the whole target population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRecord {
    pub estimate: EffectEstimate,
    pub n: u64,
}

/// Truth from both potential trajectories of every pregnancy.
pub fn truth(records: &[PregnancyRecord]) -> Result<TruthRecord> {
    if records.is_empty() {
        return Err(Error::estimation("truth over an empty cohort"));
    }
    let mut events = [0u64; 2];
    for r in records {
        for arm in Arm::BOTH {
            events[arm.index()] += u64::from(r.trajectory(arm).has_preeclampsia());
        }
    }
    let n = records.len() as u64;
    Ok(TruthRecord {
        estimate: EffectEstimate::from_risks(
            events[0] as f64 / n as f64,
            events[1] as f64 / n as f64,
        )?,
        n,
    })
}

/// Estimate minus truth. Risks in percentage points, RD per 100, RR on the
/// log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasRecord {
    pub bias_risk_treated: f64,
    pub bias_risk_untreated: f64,
    pub bias_rd_per100: f64,
    pub bias_log_rr: f64,
}

pub fn bias(est: &EffectEstimate, truth: &TruthRecord) -> Result<BiasRecord> {
    let t = &truth.estimate;
    if est.rr <= 0.0 || t.rr <= 0.0 {
        return Err(Error::estimation(format!(
            "log risk ratio undefined (estimate {}, truth {})",
            est.rr, t.rr
        )));
    }
    Ok(BiasRecord {
        bias_risk_treated: 100.0 * (est.risk_treated - t.risk_treated),
        bias_risk_untreated: 100.0 * (est.risk_untreated - t.risk_untreated),
        bias_rd_per100: est.rd_per100 - t.rd_per100,
        bias_log_rr: est.rr.ln() - t.rr.ln(),
    })
}

/// The analysis each sample gets: proportions for deliveries and outcomes,
/// Aalen-Johansen for pregnancies.
pub fn estimate_primary(sample: &AnalyticSample<'_>) -> Result<EffectEstimate> {
    let risks = match sample.kind {
        AnalyticSampleKind::ObservedDeliveries | AnalyticSampleKind::ObservedOutcomes => {
            stratum_risks_proportion(sample)?
        }
        AnalyticSampleKind::ObservedPregnancies => stratum_risks_aalen_johansen(sample)?,
    };
    let [r1, r0] = standardize(&risks, &sample.stratum_weights)?;
    EffectEstimate::from_risks(r1, r0)
}
