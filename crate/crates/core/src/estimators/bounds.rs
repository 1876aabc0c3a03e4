//! Extreme-case bounds for the pregnancy sample.
//!
//! Every censored pregnancy is imputed as an event or a non-event according
//! to its arm, then risks are estimated as stratified proportions and
//! standardized like the primary analysis.

use serde::Serialize;

use crate::dgp::{Arm, N_STRATA};
use crate::error::{Error, Result};
use crate::samples::{AnalyticSample, AnalyticSampleKind};

use super::standardize::{nonempty, standardize};
use super::EffectEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundsAssumption {
    AllEvent,
    TreatedEventOnly,
    UntreatedEventOnly,
    NoneEvent,
}

impl BoundsAssumption {
    pub const ALL: [BoundsAssumption; 4] = [
        BoundsAssumption::AllEvent,
        BoundsAssumption::TreatedEventOnly,
        BoundsAssumption::UntreatedEventOnly,
        BoundsAssumption::NoneEvent,
    ];

    /// Whether a censored pregnancy in `arm` is imputed as an event.
    pub fn imputes_event(self, arm: Arm) -> bool {
        matches!(
            (self, arm),
            (BoundsAssumption::AllEvent, _)
                | (BoundsAssumption::TreatedEventOnly, Arm::Treated)
                | (BoundsAssumption::UntreatedEventOnly, Arm::Untreated)
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            BoundsAssumption::AllEvent => "AllEvent",
            BoundsAssumption::TreatedEventOnly => "TreatedEventOnly",
            BoundsAssumption::UntreatedEventOnly => "UntreatedEventOnly",
            BoundsAssumption::NoneEvent => "NoneEvent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsSet {
    pub estimates: [(BoundsAssumption, EffectEstimate); 4],
}

impl BoundsSet {
    /// Smallest and largest risk in `arm` over the four assumptions.
    pub fn risk_range(&self, arm: Arm) -> (f64, f64) {
        self.estimates
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, e)| {
                (lo.min(e.risk(arm)), hi.max(e.risk(arm)))
            })
    }

    pub fn get(&self, assumption: BoundsAssumption) -> &EffectEstimate {
        &self
            .estimates
            .iter()
            .find(|(a, _)| *a == assumption)
            .expect("all assumptions present")
            .1
    }
}

pub fn bounds(sample: &AnalyticSample<'_>) -> Result<BoundsSet> {
    if sample.kind != AnalyticSampleKind::ObservedPregnancies {
        return Err(Error::Contract(format!(
            "bounds need the pregnancy sample, got {}",
            sample.kind.label()
        )));
    }
    let mut n = [[0u64; 2]; N_STRATA];
    let mut events = [[0u64; 2]; N_STRATA];
    let mut censored = [[0u64; 2]; N_STRATA];
    for m in &sample.members {
        let (s, a) = (m.stratum(), m.record.arm().index());
        n[s][a] += 1;
        events[s][a] += u64::from(m.has_event());
        censored[s][a] += u64::from(m.censored());
    }
    nonempty(&n)?;
    let estimate = |assumption: BoundsAssumption| -> Result<EffectEstimate> {
        let mut risks = [[0.0; 2]; N_STRATA];
        for s in 0..N_STRATA {
            for arm in Arm::BOTH {
                let a = arm.index();
                let imputed = if assumption.imputes_event(arm) {
                    censored[s][a]
                } else {
                    0
                };
                risks[s][a] = (events[s][a] + imputed) as f64 / n[s][a] as f64;
            }
        }
        let [r1, r0] = standardize(&risks, &sample.stratum_weights)?;
        EffectEstimate::from_risks(r1, r0)
    };
    Ok(BoundsSet {
        estimates: [
            (
                BoundsAssumption::AllEvent,
                estimate(BoundsAssumption::AllEvent)?,
            ),
            (
                BoundsAssumption::TreatedEventOnly,
                estimate(BoundsAssumption::TreatedEventOnly)?,
            ),
            (
                BoundsAssumption::UntreatedEventOnly,
                estimate(BoundsAssumption::UntreatedEventOnly)?,
            ),
            (
                BoundsAssumption::NoneEvent,
                estimate(BoundsAssumption::NoneEvent)?,
            ),
        ],
    })
}
