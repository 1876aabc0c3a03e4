//! The 6 × 6 grid of treatment-effect and missingness settings.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::CoefficientSchedules;

/// Direction of the effect of treatment initiation on miscarriage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiscarriageEffect {
    Decrease,
    Null,
    Increase,
}

/// Direction of the effect of treatment initiation on preeclampsia.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreeclampsiaEffect {
    Decrease,
    Null,
}

impl MiscarriageEffect {
    pub fn label(self) -> &'static str {
        match self {
            MiscarriageEffect::Decrease => "decrease",
            MiscarriageEffect::Null => "null",
            MiscarriageEffect::Increase => "increase",
        }
    }
}

impl PreeclampsiaEffect {
    pub fn label(self) -> &'static str {
        match self {
            PreeclampsiaEffect::Decrease => "decrease",
            PreeclampsiaEffect::Null => "null",
        }
    }
}

/// Severity-specific treatment coefficients for one target population.
///
/// `miscarriage_log_rr[s]` multiplies the weekly miscarriage probability of a
/// treated pregnancy with severity `s` (on top of the severity main effect);
/// `preeclampsia_log_or[s]` shifts the weekly preeclampsia log-odds likewise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreatmentEffectSpec {
    pub miscarriage: MiscarriageEffect,
    pub preeclampsia: PreeclampsiaEffect,
    pub miscarriage_log_rr: [f64; 3],
    pub preeclampsia_log_or: [f64; 3],
}

impl TreatmentEffectSpec {
    pub fn new(miscarriage: MiscarriageEffect, preeclampsia: PreeclampsiaEffect) -> Self {
        let miscarriage_log_rr = match miscarriage {
            MiscarriageEffect::Decrease => [0.1f64.ln(), 0.5f64.ln(), 0.8f64.ln()],
            MiscarriageEffect::Null => [0.0; 3],
            MiscarriageEffect::Increase => [5.0f64.ln(), 2.0f64.ln(), 1.1f64.ln()],
        };
        let preeclampsia_log_or = match preeclampsia {
            PreeclampsiaEffect::Decrease => [0.2f64.ln(), 0.5f64.ln(), 0.8f64.ln()],
            PreeclampsiaEffect::Null => [0.0; 3],
        };
        TreatmentEffectSpec {
            miscarriage,
            preeclampsia,
            miscarriage_log_rr,
            preeclampsia_log_or,
        }
    }

    /// The six target populations, in reporting order: preeclampsia effect
    /// outer (decrease, null), miscarriage effect inner (decrease, null,
    /// increase).
    pub fn all() -> [TreatmentEffectSpec; 6] {
        use MiscarriageEffect as M;
        use PreeclampsiaEffect as P;
        [
            Self::new(M::Decrease, P::Decrease),
            Self::new(M::Null, P::Decrease),
            Self::new(M::Increase, P::Decrease),
            Self::new(M::Decrease, P::Null),
            Self::new(M::Null, P::Null),
            Self::new(M::Increase, P::Null),
        ]
    }

    /// Position 1..=6 in [`TreatmentEffectSpec::all`].
    pub fn index(&self) -> u32 {
        let m = match self.miscarriage {
            MiscarriageEffect::Decrease => 1,
            MiscarriageEffect::Null => 2,
            MiscarriageEffect::Increase => 3,
        };
        match self.preeclampsia {
            PreeclampsiaEffect::Decrease => m,
            PreeclampsiaEffect::Null => 3 + m,
        }
    }

    pub fn is_null(&self) -> bool {
        self.miscarriage == MiscarriageEffect::Null && self.preeclampsia == PreeclampsiaEffect::Null
    }
}

/// Target share of non-initiators missing an outcome, split by mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissingnessSpec {
    /// 1..=6, matching the study-sample numbering.
    pub id: u32,
    pub target_measured_pct: f64,
    pub target_miscarriage_pct: f64,
    pub miscarriage_inflation: f64,
    pub followup_weeks_for_conversion: u32,
}

impl MissingnessSpec {
    const GRID: [(f64, f64); 6] = [
        (0.0, 0.05),
        (0.025, 0.025),
        (0.05, 0.0),
        (0.0, 0.20),
        (0.10, 0.10),
        (0.20, 0.0),
    ];

    pub fn all(
        miscarriage_inflation: f64,
        followup_weeks_for_conversion: u32,
    ) -> [MissingnessSpec; 6] {
        std::array::from_fn(|i| {
            let (measured, miscarriage) = Self::GRID[i];
            MissingnessSpec {
                id: i as u32 + 1,
                target_measured_pct: measured,
                target_miscarriage_pct: miscarriage,
                miscarriage_inflation,
                followup_weeks_for_conversion,
            }
        })
    }

    pub fn total_pct(&self) -> f64 {
        self.target_measured_pct + self.target_miscarriage_pct
    }

    /// Marginal probability fed to the miscarriage balancing intercept,
    /// before any clamping.
    pub fn miscarriage_marginal(&self) -> f64 {
        self.target_miscarriage_pct * self.miscarriage_inflation
    }

    pub fn mechanism(&self) -> MechanismMix {
        match (
            self.target_measured_pct > 0.0,
            self.target_miscarriage_pct > 0.0,
        ) {
            (false, _) => MechanismMix::MnarOnly,
            (true, true) => MechanismMix::Mixed,
            (true, false) => MechanismMix::MarOnly,
        }
    }

    /// `"measured=10%,miscarriage=10%"`-style label.
    pub fn label(&self) -> String {
        format!(
            "measured={}%,miscarriage={}%",
            pct(self.target_measured_pct),
            pct(self.target_miscarriage_pct)
        )
    }
}

fn pct(x: f64) -> String {
    let v = x * 100.0;
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// Which missingness mechanisms a spec switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MechanismMix {
    MnarOnly,
    Mixed,
    MarOnly,
}

/// One cell of the scenario matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSpec {
    /// 1..=36: `(treatment index - 1) * 6 + missingness id`.
    pub id: u32,
    pub treatment: TreatmentEffectSpec,
    pub missingness: MissingnessSpec,
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scenario {} (miscarriage {}, preeclampsia {}, {})",
            self.id,
            self.treatment.miscarriage.label(),
            self.treatment.preeclampsia.label(),
            self.missingness.label()
        )
    }
}

pub const N_SCENARIOS: u32 = 36;

/// Cartesian product of the six treatment-effect settings and the six
/// missingness settings. Fails if the schedules do not validate.
pub fn build_scenario_matrix(schedules: &CoefficientSchedules) -> Result<Vec<ScenarioSpec>> {
    schedules.validate()?;
    let missingness = MissingnessSpec::all(
        schedules.miscarriage_inflation,
        schedules.followup_weeks_for_conversion,
    );
    let mut out = Vec::with_capacity(N_SCENARIOS as usize);
    for treatment in TreatmentEffectSpec::all() {
        for miss in missingness {
            out.push(ScenarioSpec {
                id: (treatment.index() - 1) * 6 + miss.id,
                treatment,
                missingness: miss,
            });
        }
    }
    Ok(out)
}

/// Parameters of one batch run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_pregnancies: u64,
    pub master_seed: u64,
    pub scenario_filter: Option<Vec<u32>>,
    pub output_dir: PathBuf,
    pub replicate_id: u64,
}

impl RunConfig {
    pub fn new(n_pregnancies: u64, master_seed: u64) -> Self {
        RunConfig {
            n_pregnancies,
            master_seed,
            scenario_filter: None,
            output_dir: PathBuf::from("out"),
            replicate_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pregnancies == 0 {
            return Err(Error::config("n_pregnancies must be at least 1"));
        }
        if let Some(ids) = &self.scenario_filter {
            if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > N_SCENARIOS) {
                return Err(Error::config(format!("scenario id {bad} outside 1..=36")));
            }
        }
        Ok(())
    }

    /// Scenarios selected by the filter, in matrix order.
    pub fn select<'a>(&self, matrix: &'a [ScenarioSpec]) -> Vec<&'a ScenarioSpec> {
        match &self.scenario_filter {
            None => matrix.iter().collect(),
            Some(ids) => matrix.iter().filter(|s| ids.contains(&s.id)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn matrix() -> Vec<ScenarioSpec> {
        build_scenario_matrix(&CoefficientSchedules::default_schedules()).unwrap()
    }

    #[test]
    fn thirty_six_unique_scenarios() {
        let m = matrix();
        assert_eq!(m.len(), 36);
        let ids: HashSet<u32> = m.iter().map(|s| s.id).collect();
        assert_eq!(ids, (1..=36).collect());
        let pairs: HashSet<(u32, u32)> = m
            .iter()
            .map(|s| (s.treatment.index(), s.missingness.id))
            .collect();
        assert_eq!(pairs.len(), 36);
    }

    #[test]
    fn exactly_one_null_null_mnar_20() {
        let n = matrix()
            .iter()
            .filter(|s| {
                s.treatment.is_null()
                    && s.missingness.target_measured_pct == 0.0
                    && s.missingness.target_miscarriage_pct == 0.20
            })
            .count();
        assert_eq!(n, 1);
    }

    #[test]
    fn increase_miscarriage_filter_yields_twelve() {
        // 2 preeclampsia directions x 6 missingness settings.
        let n = matrix()
            .iter()
            .filter(|s| s.treatment.miscarriage == MiscarriageEffect::Increase)
            .count();
        assert_eq!(n, 12);
    }

    #[test]
    fn treatment_coefficients() {
        let specs = TreatmentEffectSpec::all();
        let distinct: HashSet<(u32, u32)> = specs
            .iter()
            .map(|t| (t.miscarriage as u32, t.preeclampsia as u32))
            .collect();
        assert_eq!(distinct.len(), 6);
        for t in specs {
            let rr = t.miscarriage_log_rr.map(f64::exp);
            let or = t.preeclampsia_log_or.map(f64::exp);
            let want_rr = match t.miscarriage {
                MiscarriageEffect::Decrease => [0.1, 0.5, 0.8],
                MiscarriageEffect::Null => [1.0; 3],
                MiscarriageEffect::Increase => [5.0, 2.0, 1.1],
            };
            let want_or = match t.preeclampsia {
                PreeclampsiaEffect::Decrease => [0.2, 0.5, 0.8],
                PreeclampsiaEffect::Null => [1.0; 3],
            };
            for k in 0..3 {
                assert!((rr[k] - want_rr[k]).abs() < 1e-12);
                assert!((or[k] - want_or[k]).abs() < 1e-12);
            }
            if t.is_null() {
                assert_eq!(t.miscarriage_log_rr, [0.0; 3]);
                assert_eq!(t.preeclampsia_log_or, [0.0; 3]);
            }
        }
    }

    #[test]
    fn missingness_totals() {
        for m in MissingnessSpec::all(4.9, 34) {
            let total = m.total_pct();
            assert!((total - 0.05).abs() < 1e-12 || (total - 0.20).abs() < 1e-12);
        }
        let m4 = MissingnessSpec::all(4.9, 34)[3];
        assert!((m4.miscarriage_marginal() - 0.98).abs() < 1e-12);
        assert_eq!(m4.mechanism(), MechanismMix::MnarOnly);
        assert_eq!(m4.label(), "measured=0%,miscarriage=20%");
        assert_eq!(
            MissingnessSpec::all(4.9, 34)[1].label(),
            "measured=2.5%,miscarriage=2.5%"
        );
    }

    #[test]
    fn run_config_validation() {
        let mut run = RunConfig::new(0, 1);
        assert!(run.validate().is_err());
        run.n_pregnancies = 10;
        assert!(run.validate().is_ok());
        run.scenario_filter = Some(vec![1, 37]);
        assert!(run.validate().is_err());
        run.scenario_filter = Some(vec![3, 36]);
        let m = matrix();
        let picked: Vec<u32> = run.select(&m).iter().map(|s| s.id).collect();
        assert_eq!(picked, vec![3, 36]);
    }
}
