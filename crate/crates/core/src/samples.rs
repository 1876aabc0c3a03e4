//! Analytic samples drawn from a study sample.
//!
//! | kind         | members                                      |
//! |--------------|----------------------------------------------|
//! | Deliveries   | observed stillbirth or live birth             |
//! | Outcomes     | any observed outcome, miscarriage included    |
//! | Pregnancies  | everyone, censored pregnancies included      |
//!
//! Each sample carries the joint (severity, rurality) distribution of its own
//! members, which is the reference population for standardization.

use serde::Serialize;

use crate::dgp::{OutcomeClass, N_STRATA};
use crate::error::{Error, Result};
use crate::missingness::ObservedPregnancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AnalyticSampleKind {
    ObservedDeliveries,
    ObservedOutcomes,
    ObservedPregnancies,
}

impl AnalyticSampleKind {
    pub const ALL: [AnalyticSampleKind; 3] = [
        AnalyticSampleKind::ObservedDeliveries,
        AnalyticSampleKind::ObservedOutcomes,
        AnalyticSampleKind::ObservedPregnancies,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnalyticSampleKind::ObservedDeliveries => "observed_deliveries",
            AnalyticSampleKind::ObservedOutcomes => "observed_outcomes",
            AnalyticSampleKind::ObservedPregnancies => "observed_pregnancies",
        }
    }

    /// Membership rule.
    pub fn admits(self, p: &ObservedPregnancy<'_>) -> bool {
        match self {
            AnalyticSampleKind::ObservedPregnancies => true,
            AnalyticSampleKind::ObservedOutcomes => p.outcome.is_some(),
            AnalyticSampleKind::ObservedDeliveries => p
                .outcome
                .is_some_and(|o| o.class != OutcomeClass::Miscarriage),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticSample<'a> {
    pub kind: AnalyticSampleKind,
    pub members: Vec<ObservedPregnancy<'a>>,
    /// Share of members in each stratum (see [`crate::dgp::Covariates::stratum`]).
    pub stratum_weights: [f64; N_STRATA],
}

impl AnalyticSample<'_> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn build_analytic_sample<'a>(
    study: &[ObservedPregnancy<'a>],
    kind: AnalyticSampleKind,
) -> Result<AnalyticSample<'a>> {
    let members: Vec<_> = study.iter().filter(|p| kind.admits(p)).copied().collect();
    if members.is_empty() {
        return Err(Error::estimation(format!(
            "empty analytic sample ({})",
            kind.label()
        )));
    }
    let mut counts = [0u64; N_STRATA];
    for m in &members {
        counts[m.stratum()] += 1;
    }
    let n = members.len() as f64;
    Ok(AnalyticSample {
        kind,
        stratum_weights: counts.map(|c| c as f64 / n),
        members,
    })
}

/// Pregnancy and event counts for one arm of one analytic sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleCounts {
    pub n: u64,
    pub n_events: u64,
    pub n_censored: u64,
}

/// Counts indexed by arm (treated first).
pub fn sample_counts(sample: &AnalyticSample<'_>) -> [SampleCounts; 2] {
    let mut out = [SampleCounts {
        n: 0,
        n_events: 0,
        n_censored: 0,
    }; 2];
    for m in &sample.members {
        let c = &mut out[m.record.arm().index()];
        c.n += 1;
        c.n_events += u64::from(m.has_event());
        c.n_censored += u64::from(m.censored());
    }
    out
}
