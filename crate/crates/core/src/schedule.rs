//! Weekly baseline schedules and the model coefficients that act on them.
//!
//! The published coefficients (severity, rurality and preeclampsia effects on
//! the pregnancy-outcome models) are fixed in code. The weekly baselines and
//! the coefficients whose magnitudes are not pinned down (encounter
//! frequency, missingness gradients) come from a TOML schedule file; see
//! `data/default_schedules.toml` for the shipped defaults and the schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::Severity;
use crate::error::{Error, Result};
use crate::prob::logit;
use crate::scenario::TreatmentEffectSpec;

/// First week of follow-up (the index encounter), from conception.
pub const FIRST_WEEK: u8 = 7;
/// Week at which every remaining pregnancy ends.
pub const LAST_WEEK: u8 = 40;
/// Covariate and treatment terms act on miscarriage only before this week.
pub const COVARIATE_CUTOFF_WEEK: u8 = 16;
pub const FIRST_PREECLAMPSIA_WEEK: u8 = 17;
/// Through this week a pregnancy can only continue or end in fetal death.
pub const LAST_BINARY_WEEK: u8 = 20;
pub const FIRST_LIVE_BIRTH_WEEK: u8 = 21;

const DEFAULT_SCHEDULE: &str = include_str!("../data/default_schedules.toml");

/// Whether the two potential-outcome trajectories of a pregnancy share their
/// uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Common,
    Independent,
}

/// Coefficients that are the same in every scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedEffects {
    /// Log-RR of weekly miscarriage by severity (mild, moderate, severe).
    pub miscarriage_severity_log_rr: [f64; 3],
    pub miscarriage_rural_log_rr: f64,
    /// Log-OR of weekly preeclampsia by severity.
    pub preeclampsia_severity_log_or: [f64; 3],
    pub preeclampsia_rural_log_or: f64,
    /// Log-RR of fetal death at a preeclampsia-induced delivery.
    pub pe_induced_fd_log_rr: f64,
}

impl FixedEffects {
    pub fn published() -> Self {
        FixedEffects {
            miscarriage_severity_log_rr: [0.0, 2f64.ln(), 3f64.ln()],
            miscarriage_rural_log_rr: 1.5f64.ln(),
            preeclampsia_severity_log_or: [0.0, 1.5f64.ln(), 2f64.ln()],
            preeclampsia_rural_log_or: 2f64.ln(),
            pe_induced_fd_log_rr: 2.5f64.ln(),
        }
    }
}

/// Weekly schedules plus every coefficient of the generating and
/// missingness models.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedules {
    pub name: String,
    /// Log-probability of fetal death, reference group, indexed by week.
    pub fetal_death_log_p: [f64; 41],
    /// Log-odds of preeclampsia, reference group. Unused before week 17.
    pub preeclampsia_log_odds: [f64; 41],
    /// Log-probability of a prenatal encounter, mild hypertension.
    pub encounter_log_p: [f64; 41],
    /// Probability of live birth; week 40 is `1 - p_fd(40)`.
    pub live_birth_p: [f64; 41],
    pub fixed: FixedEffects,
    /// Log-RR of an encounter for moderate and for severe hypertension.
    pub encounter_moderate_log_rr: f64,
    pub encounter_severe_log_rr: f64,
    /// Log-OR of measured missingness per severity step, and for rural.
    pub measured_severity_log_or: f64,
    pub measured_rural_log_or: f64,
    /// Log-OR of miscarriage missingness per week of gestation. Negative.
    pub miscarriage_per_week_log_or: f64,
    pub miscarriage_inflation: f64,
    pub followup_weeks_for_conversion: u32,
    pub coupling: Coupling,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    format_version: u32,
    name: String,
    followup_weeks_for_conversion: u32,
    miscarriage_inflation: f64,
    potential_outcome_coupling: Coupling,
    encounter: EncounterSection,
    missingness: MissingnessSection,
    weeks: Vec<WeekRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncounterSection {
    moderate_rr: f64,
    severe_rr: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MissingnessSection {
    measured_severity_step_or: f64,
    measured_rural_or: f64,
    miscarriage_per_week_or: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeekRow {
    week: u8,
    fetal_death: Option<f64>,
    preeclampsia: Option<f64>,
    live_birth: Option<f64>,
    encounter: Option<f64>,
}

fn check_prob(value: f64, week: u8, column: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::config(format!(
            "week {week}: {column} probability {value} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_ratio(value: f64, key: &str) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::config(format!(
            "{key} = {value} must be a positive ratio"
        )));
    }
    Ok(value.ln())
}

impl CoefficientSchedules {
    /// The schedules shipped with the crate.
    pub fn default_schedules() -> Self {
        Self::from_toml_str(DEFAULT_SCHEDULE).expect("bundled schedule file is valid")
    }

    /// Text of the bundled default schedule file.
    pub fn default_toml() -> &'static str {
        DEFAULT_SCHEDULE
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Parse and validate a schedule document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScheduleFile =
            toml::from_str(text).map_err(|e| Error::config(format!("schedule file: {e}")))?;
        if file.format_version != 1 {
            return Err(Error::config(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }

        let mut fetal_death = [None; 41];
        let mut preeclampsia = [None; 41];
        let mut live_birth = [None; 41];
        let mut encounter = [None; 41];
        for row in &file.weeks {
            let w = row.week;
            if !(FIRST_WEEK..=LAST_WEEK).contains(&w) {
                return Err(Error::config(format!(
                    "week {w} outside {FIRST_WEEK}..={LAST_WEEK}"
                )));
            }
            let slot = usize::from(w);
            if fetal_death[slot].is_some() || encounter[slot].is_some() {
                return Err(Error::config(format!("week {w} listed twice")));
            }
            let put = |table: &mut [Option<f64>; 41], v: Option<f64>, col: &str, lo: u8, hi: u8| {
                if let Some(v) = v {
                    if !(lo..=hi).contains(&w) {
                        return Err(Error::config(format!(
                            "week {w}: {col} only allowed for weeks {lo}..={hi}"
                        )));
                    }
                    check_prob(v, w, col)?;
                    table[slot] = Some(v);
                }
                Ok(())
            };
            put(
                &mut fetal_death,
                row.fetal_death,
                "fetal_death",
                FIRST_WEEK,
                LAST_WEEK,
            )?;
            put(
                &mut preeclampsia,
                row.preeclampsia,
                "preeclampsia",
                FIRST_PREECLAMPSIA_WEEK,
                LAST_WEEK,
            )?;
            put(
                &mut live_birth,
                row.live_birth,
                "live_birth",
                FIRST_LIVE_BIRTH_WEEK,
                LAST_WEEK,
            )?;
            put(
                &mut encounter,
                row.encounter,
                "encounter",
                FIRST_WEEK + 1,
                LAST_WEEK,
            )?;
        }

        let mut out = CoefficientSchedules {
            name: file.name,
            fetal_death_log_p: [f64::NEG_INFINITY; 41],
            preeclampsia_log_odds: [f64::NEG_INFINITY; 41],
            encounter_log_p: [f64::NEG_INFINITY; 41],
            live_birth_p: [0.0; 41],
            fixed: FixedEffects::published(),
            encounter_moderate_log_rr: check_ratio(
                file.encounter.moderate_rr,
                "encounter.moderate_rr",
            )?,
            encounter_severe_log_rr: check_ratio(file.encounter.severe_rr, "encounter.severe_rr")?,
            measured_severity_log_or: check_ratio(
                file.missingness.measured_severity_step_or,
                "missingness.measured_severity_step_or",
            )?,
            measured_rural_log_or: check_ratio(
                file.missingness.measured_rural_or,
                "missingness.measured_rural_or",
            )?,
            miscarriage_per_week_log_or: check_ratio(
                file.missingness.miscarriage_per_week_or,
                "missingness.miscarriage_per_week_or",
            )?,
            miscarriage_inflation: file.miscarriage_inflation,
            followup_weeks_for_conversion: file.followup_weeks_for_conversion,
            coupling: file.potential_outcome_coupling,
        };

        for w in FIRST_WEEK..=LAST_WEEK {
            let slot = usize::from(w);
            let fd = fetal_death[slot]
                .ok_or_else(|| Error::config(format!("week {w}: fetal_death missing")))?;
            out.fetal_death_log_p[slot] = fd.ln();
            if w >= FIRST_PREECLAMPSIA_WEEK {
                let pe = preeclampsia[slot]
                    .ok_or_else(|| Error::config(format!("week {w}: preeclampsia missing")))?;
                if pe >= 1.0 {
                    return Err(Error::config(format!(
                        "week {w}: preeclampsia probability must be below 1"
                    )));
                }
                out.preeclampsia_log_odds[slot] = logit(pe);
            }
            if (FIRST_LIVE_BIRTH_WEEK..LAST_WEEK).contains(&w) {
                out.live_birth_p[slot] = live_birth[slot]
                    .ok_or_else(|| Error::config(format!("week {w}: live_birth missing")))?;
            }
            if w > FIRST_WEEK {
                let enc = encounter[slot]
                    .ok_or_else(|| Error::config(format!("week {w}: encounter missing")))?;
                out.encounter_log_p[slot] = enc.ln();
            }
        }
        let last = usize::from(LAST_WEEK);
        let derived = 1.0 - fetal_death[last].unwrap_or(0.0);
        if let Some(given) = live_birth[last] {
            if (given - derived).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "week {LAST_WEEK}: live_birth must equal 1 - fetal_death ({derived}), got {given}"
                )));
            }
        }
        out.live_birth_p[last] = derived;

        out.validate()?;
        Ok(out)
    }

    /// Check every invariant of the schedules, including that no covariate
    /// and treatment combination pushes weekly miscarriage above 1.
    /// Encounter probabilities may overflow under the severity multiplier;
    /// those are clamped and counted when the cohort is generated.
    pub fn validate(&self) -> Result<()> {
        let published = FixedEffects::published();
        if self.fixed != published {
            return Err(Error::config(
                "fixed effects differ from the published coefficients",
            ));
        }
        if self.miscarriage_per_week_log_or.is_nan() || self.miscarriage_per_week_log_or >= 0.0 {
            return Err(Error::config(format!(
                "missingness.miscarriage_per_week_or = {} must be below 1",
                self.miscarriage_per_week_log_or.exp()
            )));
        }
        if !self.measured_severity_log_or.is_finite() || !self.measured_rural_log_or.is_finite() {
            return Err(Error::config(
                "measured missingness odds ratios must be finite",
            ));
        }
        if !(self.miscarriage_inflation.is_finite() && self.miscarriage_inflation > 0.0) {
            return Err(Error::config(format!(
                "miscarriage_inflation = {} must be positive",
                self.miscarriage_inflation
            )));
        }
        if self.followup_weeks_for_conversion == 0 {
            return Err(Error::config(
                "followup_weeks_for_conversion must be at least 1",
            ));
        }

        let max_fd_shift = self.max_miscarriage_log_shift();
        for w in FIRST_WEEK..=LAST_WEEK {
            let slot = usize::from(w);
            let fd = self.fetal_death_log_p[slot].exp();
            check_prob(fd, w, "fetal_death")?;
            if w < COVARIATE_CUTOFF_WEEK {
                let worst = (self.fetal_death_log_p[slot] + max_fd_shift).exp();
                if worst > 1.0 {
                    return Err(Error::config(format!(
                        "week {w}: fetal_death {fd} exceeds 1 ({worst}) under the largest covariate and treatment multiplier"
                    )));
                }
            }
            let lb = self.live_birth_p[slot];
            check_prob(lb, w, "live_birth")?;
            if fd + lb > 1.0 + 1e-12 {
                return Err(Error::config(format!(
                    "week {w}: fetal_death + live_birth = {} exceeds 1",
                    fd + lb
                )));
            }
            if w > FIRST_WEEK {
                let enc = self.encounter_log_p[slot].exp();
                check_prob(enc, w, "encounter")?;
            }
            if w >= FIRST_PREECLAMPSIA_WEEK && self.preeclampsia_log_odds[slot].is_nan() {
                return Err(Error::config(format!(
                    "week {w}: preeclampsia log-odds is NaN"
                )));
            }
        }
        Ok(())
    }

    /// Largest log-multiplier on weekly miscarriage over every severity,
    /// rurality, arm and treatment-effect setting.
    fn max_miscarriage_log_shift(&self) -> f64 {
        let f = &self.fixed;
        let rural = f.miscarriage_rural_log_rr.max(0.0);
        let mut worst = 0f64;
        for sev in 0..3 {
            let untreated = f.miscarriage_severity_log_rr[sev];
            worst = worst.max(untreated);
            for te in TreatmentEffectSpec::all() {
                worst = worst.max(untreated + te.miscarriage_log_rr[sev]);
            }
        }
        worst + rural
    }

    pub fn fetal_death_baseline(&self, week: u8) -> f64 {
        self.fetal_death_log_p[usize::from(week)].exp()
    }

    pub fn live_birth(&self, week: u8) -> f64 {
        self.live_birth_p[usize::from(week)]
    }

    pub fn encounter_log_rr(&self, severity: Severity) -> f64 {
        match severity {
            Severity::Mild => 0.0,
            Severity::Moderate => self.encounter_moderate_log_rr,
            Severity::Severe => self.encounter_severe_log_rr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_loads() {
        let s = CoefficientSchedules::default_schedules();
        assert_eq!(s.name, "default");
        assert_eq!(s.followup_weeks_for_conversion, 34);
        assert_eq!(s.miscarriage_inflation, 4.9);
        assert_eq!(s.coupling, Coupling::Common);
        assert!(s.miscarriage_per_week_log_or < 0.0);
        let p40 = s.fetal_death_baseline(40);
        assert!((s.live_birth(40) - (1.0 - p40)).abs() < 1e-15);
    }

    #[test]
    fn published_coefficients_exact() {
        let f = FixedEffects::published();
        assert_eq!(f.miscarriage_severity_log_rr[1], 2f64.ln());
        assert_eq!(f.miscarriage_severity_log_rr[2], 3f64.ln());
        assert_eq!(f.miscarriage_rural_log_rr, 1.5f64.ln());
        assert_eq!(f.preeclampsia_severity_log_or[1], 1.5f64.ln());
        assert_eq!(f.preeclampsia_severity_log_or[2], 2f64.ln());
        assert_eq!(f.preeclampsia_rural_log_or, 2f64.ln());
        assert_eq!(f.pe_induced_fd_log_rr, 2.5f64.ln());
    }

    fn edit(from: &str, to: &str) -> String {
        let text = CoefficientSchedules::default_toml();
        assert!(text.contains(from), "{from}");
        text.replacen(from, to, 1)
    }

    #[test]
    fn probability_above_one_is_rejected() {
        let bad = edit(
            "{ week = 12, fetal_death = 0.009451",
            "{ week = 12, fetal_death = 1.2",
        );
        let err = CoefficientSchedules::from_toml_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("week 12"), "{err}");
    }

    #[test]
    fn covariate_multiplier_overflow_is_rejected() {
        // 0.2 * 5 (treated, mild, increase) * 1.5 (rural) > 1.
        let bad = edit(
            "{ week = 7, fetal_death = 0.0213",
            "{ week = 7, fetal_death = 0.2",
        );
        let err = CoefficientSchedules::from_toml_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("week 7") && err.contains("multiplier"),
            "{err}"
        );
    }

    #[test]
    fn missing_week_is_named() {
        let bad = edit("  { week = 30, fetal_death = 0.0009, encounter = 0.5, preeclampsia = 4.0100e-3, live_birth = 0.005 },\n", "");
        let err = CoefficientSchedules::from_toml_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("week 30"), "{err}");
    }

    #[test]
    fn categorical_overflow_is_rejected() {
        let bad = edit("live_birth = 0.6 }", "live_birth = 0.9995 }");
        let err = CoefficientSchedules::from_toml_str(&bad)
            .unwrap_err()
            .to_string();
        assert!(err.contains("week 39"), "{err}");
    }

    #[test]
    fn miscarriage_gradient_must_be_negative() {
        let bad = edit(
            "miscarriage_per_week_or = 0.8",
            "miscarriage_per_week_or = 1.1",
        );
        assert!(CoefficientSchedules::from_toml_str(&bad).is_err());
    }

    #[test]
    fn week_forty_live_birth_must_complement() {
        let bad = edit(
            "preeclampsia = 3.7400e-1 }",
            "preeclampsia = 3.7400e-1, live_birth = 0.5 }",
        );
        assert!(CoefficientSchedules::from_toml_str(&bad).is_err());
        let ok = edit(
            "preeclampsia = 3.7400e-1 }",
            "preeclampsia = 3.7400e-1, live_birth = 0.9991 }",
        );
        assert!(CoefficientSchedules::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = edit("name = \"default\"", "name = \"default\"\nbeta1 = 0.5");
        assert!(CoefficientSchedules::from_toml_str(&bad).is_err());
    }

    #[test]
    fn independent_coupling_parses() {
        let text = edit(
            "potential_outcome_coupling = \"common\"",
            "potential_outcome_coupling = \"independent\"",
        );
        let s = CoefficientSchedules::from_toml_str(&text).unwrap();
        assert_eq!(s.coupling, Coupling::Independent);
    }
}
