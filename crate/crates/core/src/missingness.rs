//! Missing-outcome injection.
//!
//! Two mechanisms turn a target population into a study sample:
//!
//! * **measured** (MAR): a weekly logistic model in severity and rurality,
//!   drawn over weeks 8..=41. If it fires before the outcome is observed the
//!   pregnancy is censored at its most recent encounter at or before that
//!   week.
//! * **miscarriage** (MNAR): a miscarriage goes unrecorded with a probability
//!   that falls with gestational week; the pregnancy is censored at its last
//!   encounter before the miscarriage.
//!
//! Both models use balancing intercepts: at the population mean of their
//! covariates they reproduce the configured marginal probability exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dgp::{Covariates, OutcomeClass, PotentialTrajectory, PregnancyRecord};
use crate::error::{Error, Result};
use crate::prob::{balancing_intercept, expit, weekly_from_marginal};
use crate::rng::{Domain, Purpose, StreamKey};
use crate::scenario::{MissingnessSpec, ScenarioSpec};
use crate::schedule::{CoefficientSchedules, FIRST_WEEK, LAST_WEEK};

/// First and last week of the measured-missingness draws.
pub const MEASURED_FIRST_WEEK: u8 = FIRST_WEEK + 1;
pub const MEASURED_LAST_WEEK: u8 = LAST_WEEK + 1;
/// Ceiling applied when `target x inflation` reaches 1.
pub const MISCARRIAGE_MARGINAL_CAP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MissingCause {
    None,
    Measured,
    Miscarriage,
}

impl MissingCause {
    pub fn label(self) -> &'static str {
        match self {
            MissingCause::None => "none",
            MissingCause::Measured => "measured",
            MissingCause::Miscarriage => "miscarriage",
        }
    }
}

/// Target-population summaries the balancing intercepts are centered on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortStats {
    /// Mean severity code (0, 1, 2) among non-initiators.
    pub mean_severity: f64,
    /// Rural share among non-initiators.
    pub rural_share: f64,
    /// Mean conception week of miscarriage among pregnancies whose assigned
    /// arm ends in miscarriage. `None` when there are none.
    pub mean_miscarriage_week: Option<f64>,
}

pub fn cohort_stats(records: &[PregnancyRecord]) -> CohortStats {
    let mut n_untreated = 0u64;
    let mut severity_sum = 0u64;
    let mut rural = 0u64;
    let mut n_misc = 0u64;
    let mut misc_week_sum = 0u64;
    for r in records {
        if !r.treated {
            n_untreated += 1;
            severity_sum += r.covariates.severity.index() as u64;
            rural += u64::from(r.covariates.rural);
        }
        let obs = r.observed();
        if obs.is_miscarriage() {
            n_misc += 1;
            misc_week_sum += u64::from(obs.end_week);
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CohortStats {
        mean_severity: ratio(severity_sum, n_untreated),
        rural_share: ratio(rural, n_untreated),
        mean_miscarriage_week: (n_misc > 0).then(|| ratio(misc_week_sum, n_misc)),
    }
}

/// Measured-missingness model: `expit(intercept + a1 * s + a2 * r)` per week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredModel {
    pub weekly_marginal: f64,
    pub intercept: f64,
    pub severity_log_or: f64,
    pub rural_log_or: f64,
}

impl MeasuredModel {
    pub fn prob(&self, cov: &Covariates) -> f64 {
        expit(self.linear_predictor(cov.severity.index() as f64, f64::from(u8::from(cov.rural))))
    }

    pub fn linear_predictor(&self, severity: f64, rural: f64) -> f64 {
        self.intercept + self.severity_log_or * severity + self.rural_log_or * rural
    }
}

/// Miscarriage-missingness model: `expit(intercept + d1 * g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiscarriageModel {
    pub marginal: f64,
    pub intercept: f64,
    pub per_week_log_or: f64,
}

impl MiscarriageModel {
    pub fn prob(&self, week: f64) -> f64 {
        expit(self.intercept + self.per_week_log_or * week)
    }
}

/// Calibrated missingness models for one scenario. A mechanism with a zero
/// target is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissingnessModelParams {
    pub measured: Option<MeasuredModel>,
    pub miscarriage: Option<MiscarriageModel>,
    pub stats: CohortStats,
    /// The miscarriage marginal was capped below 1.
    pub miscarriage_marginal_capped: bool,
}

/// Fit the balancing intercepts for `spec` against `stats`.
pub fn calibrate(
    sched: &CoefficientSchedules,
    spec: &MissingnessSpec,
    stats: &CohortStats,
) -> Result<MissingnessModelParams> {
    let measured = if spec.target_measured_pct > 0.0 {
        let weekly =
            weekly_from_marginal(spec.target_measured_pct, spec.followup_weeks_for_conversion)?;
        let intercept = balancing_intercept(weekly)?
            - sched.measured_severity_log_or * stats.mean_severity
            - sched.measured_rural_log_or * stats.rural_share;
        Some(MeasuredModel {
            weekly_marginal: weekly,
            intercept,
            severity_log_or: sched.measured_severity_log_or,
            rural_log_or: sched.measured_rural_log_or,
        })
    } else {
        None
    };

    let mut capped = false;
    let miscarriage = if spec.target_miscarriage_pct > 0.0 {
        let mut marginal = spec.miscarriage_marginal();
        if marginal >= 1.0 {
            marginal = MISCARRIAGE_MARGINAL_CAP;
            capped = true;
        }
        let center = stats.mean_miscarriage_week.unwrap_or(0.0);
        let intercept = balancing_intercept(marginal)? - sched.miscarriage_per_week_log_or * center;
        Some(MiscarriageModel {
            marginal,
            intercept,
            per_week_log_or: sched.miscarriage_per_week_log_or,
        })
    } else {
        None
    };

    Ok(MissingnessModelParams {
        measured,
        miscarriage,
        stats: *stats,
        miscarriage_marginal_capped: capped,
    })
}

/// First week in 8..=41 at which the measured mechanism fires.
pub fn measured_missing_week(
    params: &MissingnessModelParams,
    cov: &Covariates,
    rng: &mut ChaCha8Rng,
) -> Option<u8> {
    let model = params.measured.as_ref()?;
    let p = model.prob(cov);
    (MEASURED_FIRST_WEEK..=MEASURED_LAST_WEEK).find(|_| rng.gen::<f64>() < p)
}

/// Whether a miscarriage goes unrecorded. Only defined for trajectories that
/// end in miscarriage.
pub fn miscarriage_missing(
    params: &MissingnessModelParams,
    trajectory: &PotentialTrajectory,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    if !trajectory.is_miscarriage() {
        return Err(Error::Contract(format!(
            "miscarriage_missing called for a {:?} at week {}",
            trajectory.class(),
            trajectory.end_week
        )));
    }
    Ok(match &params.miscarriage {
        None => false,
        Some(model) => rng.gen::<f64>() < model.prob(f64::from(trajectory.end_week)),
    })
}

/// What the study records for a pregnancy with an observed outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObservedOutcome {
    pub class: OutcomeClass,
    /// Conception week the outcome is observed (end week + 1).
    pub observed_week: u8,
    pub preeclampsia: bool,
}

/// A pregnancy as it appears in the study sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedPregnancy<'a> {
    pub record: &'a PregnancyRecord,
    pub cause: MissingCause,
    /// Week of the last observed encounter, for censored pregnancies.
    pub censor_week: Option<u8>,
    pub outcome: Option<ObservedOutcome>,
}

impl ObservedPregnancy<'_> {
    pub fn censored(&self) -> bool {
        self.cause != MissingCause::None
    }

    pub fn stratum(&self) -> usize {
        self.record.covariates.stratum()
    }

    pub fn treated(&self) -> bool {
        self.record.treated
    }

    /// Prenatal preeclampsia observed.
    pub fn has_event(&self) -> bool {
        self.outcome.is_some_and(|o| o.preeclampsia)
    }
}

/// Resolve one pregnancy against both mechanisms.
pub fn observe<'a>(
    record: &'a PregnancyRecord,
    params: &MissingnessModelParams,
    key: &StreamKey,
) -> ObservedPregnancy<'a> {
    let obs = record.observed();
    let outcome_week = obs.observed_week();
    if params.measured.is_some() {
        let mut rng = key.stream(record.id, Purpose::MeasuredMissing, 0);
        if let Some(w) = measured_missing_week(params, &record.covariates, &mut rng) {
            if w < outcome_week {
                return ObservedPregnancy {
                    record,
                    cause: MissingCause::Measured,
                    censor_week: record.encounters.last_at_or_before(w),
                    outcome: None,
                };
            }
        }
    }
    if params.miscarriage.is_some() && obs.is_miscarriage() {
        let mut rng = key.stream(record.id, Purpose::MiscarriageMissing, 0);
        if miscarriage_missing(params, obs, &mut rng).expect("checked miscarriage") {
            return ObservedPregnancy {
                record,
                cause: MissingCause::Miscarriage,
                censor_week: record.encounters.last_at_or_before(obs.end_week),
                outcome: None,
            };
        }
    }
    ObservedPregnancy {
        record,
        cause: MissingCause::None,
        censor_week: None,
        outcome: Some(ObservedOutcome {
            class: obs.class(),
            observed_week: outcome_week,
            preeclampsia: obs.has_preeclampsia(),
        }),
    }
}

/// Apply the scenario's missingness to every pregnancy. Both arms use the
/// same coefficients.
pub fn apply_missingness<'a>(
    records: &'a [PregnancyRecord],
    scenario: &ScenarioSpec,
    params: &MissingnessModelParams,
    master_seed: u64,
    replicate: u64,
) -> Vec<ObservedPregnancy<'a>> {
    let key = StreamKey::new(
        master_seed,
        replicate,
        Domain::Missingness {
            scenario_id: scenario.id,
        },
    );
    records
        .par_iter()
        .map(|r| observe(r, params, &key))
        .collect()
}
