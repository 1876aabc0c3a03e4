//! Target-population generation.
//!
//! Each pregnancy gets baseline covariates, a treatment decision, one
//! potential trajectory per arm and a set of prenatal-encounter weeks.
//! Weeks are counted from conception throughout; an event generated in week
//! `t` is observed in week `t + 1`, which is LMP week `t + 3`.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{clamp_unit, expit};
use crate::rng::{weekly_uniforms, Domain, Purpose, StreamKey};
use crate::scenario::{RunConfig, TreatmentEffectSpec};
use crate::schedule::{
    CoefficientSchedules, Coupling, COVARIATE_CUTOFF_WEEK, FIRST_PREECLAMPSIA_WEEK, FIRST_WEEK,
    LAST_BINARY_WEEK, LAST_WEEK,
};

pub const P_RURAL: f64 = 0.30;
/// Probability of initiating treatment by severity.
pub const P_TREATED: [f64; 3] = [0.25, 0.50, 0.75];
/// Offset between conception and LMP weeks.
pub const LMP_OFFSET: u8 = 2;
/// Fetal deaths observed before this LMP week are miscarriages.
pub const MISCARRIAGE_LMP_LIMIT: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Mild = 0,
    Moderate = 1,
    Severe = 2,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Covariates {
    pub severity: Severity,
    pub rural: bool,
}

/// Number of (severity, rurality) strata.
pub const N_STRATA: usize = 6;

impl Covariates {
    /// Stratum index in `0..6`: severity-major, non-rural first.
    pub fn stratum(&self) -> usize {
        self.severity.index() * 2 + usize::from(self.rural)
    }

    pub fn from_stratum(stratum: usize) -> Covariates {
        Covariates {
            severity: Severity::ALL[stratum / 2],
            rural: stratum % 2 == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Arm {
    Treated,
    Untreated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treated, Arm::Untreated];

    pub fn from_treated(treated: bool) -> Arm {
        if treated {
            Arm::Treated
        } else {
            Arm::Untreated
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::Treated => 0,
            Arm::Untreated => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Treated => "initiator",
            Arm::Untreated => "non-initiator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EndKind {
    FetalDeath,
    LiveBirth,
}

/// Reporting class of a pregnancy end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OutcomeClass {
    Miscarriage,
    Stillbirth,
    LiveBirth,
}

impl OutcomeClass {
    pub fn label(self) -> &'static str {
        match self {
            OutcomeClass::Miscarriage => "miscarriage",
            OutcomeClass::Stillbirth => "stillbirth",
            OutcomeClass::LiveBirth => "live_birth",
        }
    }
}

/// Classify a pregnancy end generated in conception week `end_week`.
pub fn classify(kind: EndKind, end_week: u8) -> OutcomeClass {
    match kind {
        EndKind::LiveBirth => OutcomeClass::LiveBirth,
        EndKind::FetalDeath if end_week + 1 + LMP_OFFSET < MISCARRIAGE_LMP_LIMIT => {
            OutcomeClass::Miscarriage
        }
        EndKind::FetalDeath => OutcomeClass::Stillbirth,
    }
}

/// The pregnancy course under one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PotentialTrajectory {
    pub arm: Arm,
    /// Conception week the pregnancy ended; observed the following week.
    pub end_week: u8,
    pub end_kind: EndKind,
    pub preeclampsia_week: Option<u8>,
    /// The end was the preeclampsia-induced delivery.
    pub pe_induced: bool,
}

impl PotentialTrajectory {
    pub fn observed_week(&self) -> u8 {
        self.end_week + 1
    }

    pub fn observed_lmp_week(&self) -> u8 {
        self.observed_week() + LMP_OFFSET
    }

    pub fn class(&self) -> OutcomeClass {
        classify(self.end_kind, self.end_week)
    }

    pub fn is_miscarriage(&self) -> bool {
        self.class() == OutcomeClass::Miscarriage
    }

    pub fn has_preeclampsia(&self) -> bool {
        self.preeclampsia_week.is_some()
    }
}

/// Prenatal-encounter weeks stored as a bit set over conception weeks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct EncounterSet(u64);

impl EncounterSet {
    /// Just the index encounter.
    pub fn index_only() -> Self {
        EncounterSet(1 << FIRST_WEEK)
    }

    pub fn insert(&mut self, week: u8) {
        debug_assert!(week < 64);
        self.0 |= 1 << week;
    }

    pub fn contains(&self, week: u8) -> bool {
        week < 64 && self.0 & (1 << week) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Weeks in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0u8..64).filter(move |&w| self.contains(w))
    }

    /// Latest encounter week `<= week`, if any.
    pub fn last_at_or_before(&self, week: u8) -> Option<u8> {
        let mask = if week >= 63 {
            u64::MAX
        } else {
            (1u64 << (week + 1)) - 1
        };
        let bits = self.0 & mask;
        if bits == 0 {
            None
        } else {
            Some(63 - bits.leading_zeros() as u8)
        }
    }
}

impl fmt::Debug for EncounterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PregnancyRecord {
    pub id: u64,
    pub covariates: Covariates,
    pub treated: bool,
    pub trajectory_treated: PotentialTrajectory,
    pub trajectory_untreated: PotentialTrajectory,
    pub encounters: EncounterSet,
}

impl PregnancyRecord {
    pub fn arm(&self) -> Arm {
        Arm::from_treated(self.treated)
    }

    pub fn trajectory(&self, arm: Arm) -> &PotentialTrajectory {
        match arm {
            Arm::Treated => &self.trajectory_treated,
            Arm::Untreated => &self.trajectory_untreated,
        }
    }

    /// Trajectory under the assigned treatment (perfect persistence).
    pub fn observed(&self) -> &PotentialTrajectory {
        self.trajectory(self.arm())
    }
}

/// Severity, rurality and treatment for one pregnancy.
pub fn draw_baseline(rng: &mut ChaCha8Rng) -> (Covariates, bool) {
    let u_sev: f64 = rng.gen();
    let severity = if u_sev < 1.0 / 3.0 {
        Severity::Mild
    } else if u_sev < 2.0 / 3.0 {
        Severity::Moderate
    } else {
        Severity::Severe
    };
    let rural = rng.gen::<f64>() < P_RURAL;
    let treated = rng.gen::<f64>() < P_TREATED[severity.index()];
    (Covariates { severity, rural }, treated)
}

fn miscarriage_log_p(
    t: u8,
    cov: &Covariates,
    arm: Arm,
    te: &TreatmentEffectSpec,
    sched: &CoefficientSchedules,
) -> f64 {
    let base = sched.fetal_death_log_p[usize::from(t)];
    if t >= COVARIATE_CUTOFF_WEEK {
        return base;
    }
    let s = cov.severity.index();
    let f = &sched.fixed;
    let mut lp = base + f.miscarriage_severity_log_rr[s];
    if arm == Arm::Treated {
        lp += te.miscarriage_log_rr[s];
    }
    if cov.rural {
        lp += f.miscarriage_rural_log_rr;
    }
    lp
}

/// Weekly probability of fetal death in week `t`. Severity, rurality and
/// treatment act only before week 16.
pub fn miscarriage_prob(
    t: u8,
    cov: &Covariates,
    arm: Arm,
    te: &TreatmentEffectSpec,
    sched: &CoefficientSchedules,
) -> Result<f64> {
    if !(FIRST_WEEK..=LAST_WEEK).contains(&t) {
        return Err(Error::WeekOutOfRange {
            what: "miscarriage_prob",
            week: t,
            lo: FIRST_WEEK,
            hi: LAST_WEEK,
        });
    }
    Ok(clamp_unit(miscarriage_log_p(t, cov, arm, te, sched).exp()).0)
}

/// Weekly probability of preeclampsia onset in week `t`; zero before week 17.
pub fn preeclampsia_prob(
    t: u8,
    cov: &Covariates,
    arm: Arm,
    te: &TreatmentEffectSpec,
    sched: &CoefficientSchedules,
) -> f64 {
    if !(FIRST_PREECLAMPSIA_WEEK..=LAST_WEEK).contains(&t) {
        return 0.0;
    }
    let s = cov.severity.index();
    let f = &sched.fixed;
    let mut lp = sched.preeclampsia_log_odds[usize::from(t)] + f.preeclampsia_severity_log_or[s];
    if arm == Arm::Treated {
        lp += te.preeclampsia_log_or[s];
    }
    if cov.rural {
        lp += f.preeclampsia_rural_log_or;
    }
    expit(lp)
}

/// Probability that a preeclampsia-induced delivery in week `t` is a fetal
/// death: the covariate-free fetal-death probability times 2.5, capped at 1.
/// Weeks past 40 reuse the week-40 baseline.
pub fn pe_induced_fd_prob(t: u8, sched: &CoefficientSchedules) -> f64 {
    pe_induced_fd_prob_raw(t, sched).0
}

fn pe_induced_fd_prob_raw(t: u8, sched: &CoefficientSchedules) -> (f64, bool) {
    let w = t.min(LAST_WEEK);
    clamp_unit((sched.fetal_death_log_p[usize::from(w)] + sched.fixed.pe_induced_fd_log_rr).exp())
}

/// Uniform draws consumed by one trajectory walk, one per week per event
/// type.
#[derive(Debug, Clone)]
pub struct TrajectoryDraws {
    pub outcome: [f64; 42],
    pub preeclampsia: [f64; 42],
    pub pe_induced: [f64; 42],
}

impl TrajectoryDraws {
    pub fn from_streams(key: &StreamKey, pregnancy_id: u64, arm_offset: u64) -> Self {
        TrajectoryDraws {
            outcome: weekly_uniforms(&mut key.stream(
                pregnancy_id,
                Purpose::PregnancyOutcome,
                arm_offset,
            )),
            preeclampsia: weekly_uniforms(&mut key.stream(
                pregnancy_id,
                Purpose::Preeclampsia,
                arm_offset,
            )),
            pe_induced: weekly_uniforms(&mut key.stream(
                pregnancy_id,
                Purpose::PeInduced,
                arm_offset,
            )),
        }
    }
}

/// Weekly probabilities for one (covariates, arm) cell of a scenario.
#[derive(Debug, Clone)]
pub struct ArmHazards {
    arm: Arm,
    fetal_death: [f64; 42],
    live_birth: [f64; 42],
    preeclampsia: [f64; 42],
    pe_induced_fd: [f64; 42],
    /// Entries that had to be clamped into `[0, 1]`.
    pub clamped: u64,
}

impl ArmHazards {
    pub fn new(
        cov: &Covariates,
        arm: Arm,
        te: &TreatmentEffectSpec,
        sched: &CoefficientSchedules,
    ) -> Self {
        let mut h = ArmHazards {
            arm,
            fetal_death: [0.0; 42],
            live_birth: [0.0; 42],
            preeclampsia: [0.0; 42],
            pe_induced_fd: [0.0; 42],
            clamped: 0,
        };
        for t in FIRST_WEEK..=LAST_WEEK {
            let i = usize::from(t);
            let (fd, c1) = clamp_unit(miscarriage_log_p(t, cov, arm, te, sched).exp());
            let (ind, c2) = pe_induced_fd_prob_raw(t, sched);
            h.fetal_death[i] = fd;
            h.live_birth[i] = if t == LAST_WEEK {
                1.0 - fd
            } else {
                sched.live_birth(t)
            };
            h.preeclampsia[i] = preeclampsia_prob(t, cov, arm, te, sched);
            h.pe_induced_fd[i] = ind;
            h.clamped += u64::from(c1) + u64::from(c2);
        }
        h
    }

    /// Walk weeks 7..=40 and resolve the first pregnancy end. A preeclampsia
    /// onset in the same week as or before the natural end replaces that end
    /// with the preeclampsia-induced delivery.
    pub fn walk(&self, draws: &TrajectoryDraws) -> PotentialTrajectory {
        for t in FIRST_WEEK..=LAST_WEEK {
            let i = usize::from(t);
            if draws.preeclampsia[i] < self.preeclampsia[i] {
                let end_kind = if draws.pe_induced[i] < self.pe_induced_fd[i] {
                    EndKind::FetalDeath
                } else {
                    EndKind::LiveBirth
                };
                return PotentialTrajectory {
                    arm: self.arm,
                    end_week: t,
                    end_kind,
                    preeclampsia_week: Some(t),
                    pe_induced: true,
                };
            }
            let u = draws.outcome[i];
            let fd = self.fetal_death[i];
            let natural = if u < fd {
                Some(EndKind::FetalDeath)
            } else if t > LAST_BINARY_WEEK && (t == LAST_WEEK || u < fd + self.live_birth[i]) {
                Some(EndKind::LiveBirth)
            } else {
                None
            };
            if let Some(end_kind) = natural {
                return PotentialTrajectory {
                    arm: self.arm,
                    end_week: t,
                    end_kind,
                    preeclampsia_week: None,
                    pe_induced: false,
                };
            }
        }
        unreachable!("week {LAST_WEEK} always ends the pregnancy")
    }
}

/// Resolve one arm's trajectory from its weekly draws.
pub fn simulate_arm_trajectory(
    cov: &Covariates,
    arm: Arm,
    te: &TreatmentEffectSpec,
    sched: &CoefficientSchedules,
    draws: &TrajectoryDraws,
) -> PotentialTrajectory {
    ArmHazards::new(cov, arm, te, sched).walk(draws)
}

/// Weekly encounter probabilities for one severity level.
#[derive(Debug, Clone)]
pub struct EncounterHazards {
    p: [f64; 42],
    pub clamped: u64,
}

impl EncounterHazards {
    pub fn new(severity: Severity, sched: &CoefficientSchedules) -> Self {
        let mut p = [0.0; 42];
        let mut clamped = 0;
        let shift = sched.encounter_log_rr(severity);
        for t in FIRST_WEEK + 1..=LAST_WEEK {
            let (v, c) = clamp_unit((sched.encounter_log_p[usize::from(t)] + shift).exp());
            p[usize::from(t)] = v;
            clamped += u64::from(c);
        }
        EncounterHazards { p, clamped }
    }

    pub fn prob(&self, week: u8) -> f64 {
        self.p[usize::from(week)]
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> EncounterSet {
        let mut set = EncounterSet::index_only();
        for t in FIRST_WEEK + 1..=LAST_WEEK {
            if rng.gen::<f64>() < self.p[usize::from(t)] {
                set.insert(t);
            }
        }
        set
    }
}

/// Index encounter at week 7 plus independent weekly encounters, 8..=40.
pub fn generate_encounters(
    severity: Severity,
    sched: &CoefficientSchedules,
    rng: &mut ChaCha8Rng,
) -> EncounterSet {
    EncounterHazards::new(severity, sched).draw(rng)
}

/// A generated target population.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub treatment: TreatmentEffectSpec,
    pub records: Vec<PregnancyRecord>,
    /// Probability-table entries clamped into `[0, 1]` while generating.
    pub clamp_count: u64,
}

/// Precomputed probability tables for every (stratum, arm) cell.
struct CohortTables {
    arms: Vec<[ArmHazards; 2]>,
    encounters: [EncounterHazards; 3],
}

impl CohortTables {
    fn new(te: &TreatmentEffectSpec, sched: &CoefficientSchedules) -> Self {
        let arms = (0..N_STRATA)
            .map(|s| {
                let cov = Covariates::from_stratum(s);
                [
                    ArmHazards::new(&cov, Arm::Treated, te, sched),
                    ArmHazards::new(&cov, Arm::Untreated, te, sched),
                ]
            })
            .collect();
        let encounters = Severity::ALL.map(|s| EncounterHazards::new(s, sched));
        CohortTables { arms, encounters }
    }

    fn clamp_count(&self) -> u64 {
        let arms: u64 = self.arms.iter().flatten().map(|h| h.clamped).sum();
        arms + self.encounters.iter().map(|e| e.clamped).sum::<u64>()
    }
}

fn generate_one(
    id: u64,
    key: &StreamKey,
    tables: &CohortTables,
    coupling: Coupling,
) -> PregnancyRecord {
    let (covariates, treated) = draw_baseline(&mut key.stream(id, Purpose::Baseline, 0));
    let cell = &tables.arms[covariates.stratum()];
    let untreated_draws = TrajectoryDraws::from_streams(key, id, 0);
    let trajectory_untreated = cell[1].walk(&untreated_draws);
    let trajectory_treated = match coupling {
        Coupling::Common => cell[0].walk(&untreated_draws),
        Coupling::Independent => cell[0].walk(&TrajectoryDraws::from_streams(key, id, 1)),
    };
    let encounters = tables.encounters[covariates.severity.index()].draw(&mut key.stream(
        id,
        Purpose::Encounters,
        0,
    ));
    PregnancyRecord {
        id,
        covariates,
        treated,
        trajectory_treated,
        trajectory_untreated,
        encounters,
    }
}

/// Generate `run.n_pregnancies` pregnancies with both potential trajectories.
///
/// Content depends only on the master seed, the replicate and the treatment
/// setting; it is the same for any number of worker threads.
pub fn generate_cohort(
    run: &RunConfig,
    te: &TreatmentEffectSpec,
    sched: &CoefficientSchedules,
) -> Cohort {
    let key = StreamKey::new(run.master_seed, run.replicate_id, Domain::Cohort);
    let tables = CohortTables::new(te, sched);
    let records = (0..run.n_pregnancies)
        .into_par_iter()
        .map(|id| generate_one(id, &key, &tables, sched.coupling))
        .collect();
    Cohort {
        treatment: *te,
        records,
        clamp_count: tables.clamp_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{MiscarriageEffect as M, PreeclampsiaEffect as P};

    fn sched() -> CoefficientSchedules {
        CoefficientSchedules::default_schedules()
    }

    fn cov(severity: Severity, rural: bool) -> Covariates {
        Covariates { severity, rural }
    }

    fn draws_with(f: impl Fn(&mut TrajectoryDraws)) -> TrajectoryDraws {
        // 0.999 never fires any event except the week-40 live birth.
        let mut d = TrajectoryDraws {
            outcome: [0.999_999; 42],
            preeclampsia: [0.999_999; 42],
            pe_induced: [0.999_999; 42],
        };
        f(&mut d);
        d
    }

    #[test]
    fn miscarriage_prob_ignores_covariates_from_week_16() {
        let s = sched();
        let base = s.fetal_death_baseline(16);
        for te in TreatmentEffectSpec::all() {
            for sev in Severity::ALL {
                for rural in [false, true] {
                    for arm in Arm::BOTH {
                        let p = miscarriage_prob(16, &cov(sev, rural), arm, &te, &s).unwrap();
                        assert_eq!(p, base);
                    }
                }
            }
        }
    }

    #[test]
    fn miscarriage_prob_increase_mild_treated() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Increase, P::Null);
        let p = miscarriage_prob(10, &cov(Severity::Mild, false), Arm::Treated, &te, &s).unwrap();
        assert!((p - 5.0 * s.fetal_death_baseline(10)).abs() < 1e-15);
    }

    #[test]
    fn miscarriage_prob_rejects_weeks_outside_follow_up() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        let c = cov(Severity::Mild, false);
        assert!(miscarriage_prob(6, &c, Arm::Treated, &te, &s).is_err());
        assert!(miscarriage_prob(41, &c, Arm::Treated, &te, &s).is_err());
    }

    #[test]
    fn null_scenario_arms_agree() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        for t in FIRST_WEEK..=LAST_WEEK {
            for st in 0..N_STRATA {
                let c = Covariates::from_stratum(st);
                assert_eq!(
                    miscarriage_prob(t, &c, Arm::Treated, &te, &s).unwrap(),
                    miscarriage_prob(t, &c, Arm::Untreated, &te, &s).unwrap()
                );
                assert_eq!(
                    preeclampsia_prob(t, &c, Arm::Treated, &te, &s),
                    preeclampsia_prob(t, &c, Arm::Untreated, &te, &s)
                );
            }
        }
    }

    #[test]
    fn preeclampsia_zero_before_week_17() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Decrease);
        for t in FIRST_WEEK..FIRST_PREECLAMPSIA_WEEK {
            assert_eq!(
                preeclampsia_prob(t, &cov(Severity::Severe, true), Arm::Treated, &te, &s),
                0.0
            );
        }
    }

    #[test]
    fn preeclampsia_odds_ratios() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        let odds = |p: f64| p / (1.0 - p);
        for t in FIRST_PREECLAMPSIA_WEEK..=LAST_WEEK {
            let mild = preeclampsia_prob(t, &cov(Severity::Mild, false), Arm::Untreated, &te, &s);
            let moderate =
                preeclampsia_prob(t, &cov(Severity::Moderate, false), Arm::Untreated, &te, &s);
            let rural = preeclampsia_prob(t, &cov(Severity::Mild, true), Arm::Untreated, &te, &s);
            assert!((odds(moderate) / odds(mild) - 1.5).abs() < 1e-9, "week {t}");
            assert!((odds(rural) / odds(mild) - 2.0).abs() < 1e-9, "week {t}");
        }
    }

    #[test]
    fn pe_induced_multiplier_and_clamp() {
        let mut s = sched();
        s.fetal_death_log_p[20] = 0.01f64.ln();
        assert!((pe_induced_fd_prob(20, &s) - 0.025).abs() < 1e-15);
        s.fetal_death_log_p[21] = 0.5f64.ln();
        assert_eq!(pe_induced_fd_prob(21, &s), 1.0);
        let d = sched();
        for t in FIRST_PREECLAMPSIA_WEEK..=LAST_WEEK {
            let ratio = pe_induced_fd_prob(t, &d) / d.fetal_death_baseline(t);
            assert!((ratio - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_miscarriage_without_preeclampsia() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        let d = draws_with(|d| d.outcome[12] = 0.0);
        let tr = simulate_arm_trajectory(&cov(Severity::Mild, false), Arm::Untreated, &te, &s, &d);
        assert_eq!(tr.end_week, 12);
        assert_eq!(tr.observed_week(), 13);
        assert_eq!(tr.end_kind, EndKind::FetalDeath);
        assert_eq!(tr.preeclampsia_week, None);
        assert!(!tr.pe_induced);
        assert_eq!(tr.class(), OutcomeClass::Miscarriage);
    }

    #[test]
    fn preeclampsia_before_natural_end_takes_over() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        // Live birth would be drawn at week 25 (u below fd + lb but above fd).
        let d = draws_with(|d| {
            d.preeclampsia[20] = 0.0;
            d.outcome[25] = 0.0015;
            d.pe_induced[20] = 0.0;
        });
        let tr = simulate_arm_trajectory(&cov(Severity::Mild, false), Arm::Untreated, &te, &s, &d);
        assert_eq!(tr.preeclampsia_week, Some(20));
        assert!(tr.pe_induced);
        assert_eq!(tr.end_week, 20);
        // pe_induced draw 0 is below 2.5 * p_fd(20): induced fetal death.
        assert_eq!(tr.end_kind, EndKind::FetalDeath);
        assert_eq!(tr.class(), OutcomeClass::Stillbirth);

        let d = draws_with(|d| {
            d.preeclampsia[20] = 0.0;
            d.outcome[20] = 0.0;
        });
        let tr = simulate_arm_trajectory(&cov(Severity::Mild, false), Arm::Untreated, &te, &s, &d);
        assert_eq!(tr.preeclampsia_week, Some(20), "same-week onset wins");
        assert_eq!(tr.end_kind, EndKind::LiveBirth);
    }

    #[test]
    fn survival_to_week_40_forces_an_end() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        let tr = simulate_arm_trajectory(
            &cov(Severity::Mild, false),
            Arm::Untreated,
            &te,
            &s,
            &draws_with(|_| {}),
        );
        assert_eq!(tr.end_week, 40);
        assert_eq!(tr.end_kind, EndKind::LiveBirth);
        let d = draws_with(|d| d.outcome[40] = 0.0);
        let tr = simulate_arm_trajectory(&cov(Severity::Mild, false), Arm::Untreated, &te, &s, &d);
        assert_eq!((tr.end_week, tr.end_kind), (40, EndKind::FetalDeath));
    }

    #[test]
    fn no_live_birth_before_week_21() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        // A draw just above fd would be a live birth in the categorical weeks.
        let d = draws_with(|d| d.outcome[20] = s.fetal_death_baseline(20) + 1e-6);
        let tr = simulate_arm_trajectory(&cov(Severity::Mild, false), Arm::Untreated, &te, &s, &d);
        assert_eq!(tr.end_week, 40);
    }

    #[test]
    fn miscarriage_boundary_is_lmp_20() {
        // Generated at conception 16 -> observed LMP 19; 17 -> LMP 20.
        assert_eq!(classify(EndKind::FetalDeath, 16), OutcomeClass::Miscarriage);
        assert_eq!(classify(EndKind::FetalDeath, 17), OutcomeClass::Stillbirth);
        assert_eq!(classify(EndKind::LiveBirth, 21), OutcomeClass::LiveBirth);
    }

    #[test]
    fn encounter_set_queries() {
        let mut e = EncounterSet::index_only();
        e.insert(12);
        e.insert(30);
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![7, 12, 30]);
        assert_eq!(e.last_at_or_before(7), Some(7));
        assert_eq!(e.last_at_or_before(11), Some(7));
        assert_eq!(e.last_at_or_before(12), Some(12));
        assert_eq!(e.last_at_or_before(41), Some(30));
        assert_eq!(e.last_at_or_before(6), None);
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn baseline_draw_is_deterministic() {
        let key = StreamKey::new(9, 0, Domain::Cohort);
        let a = draw_baseline(&mut key.stream(123, Purpose::Baseline, 0));
        let b = draw_baseline(&mut key.stream(123, Purpose::Baseline, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_shares() {
        let key = StreamKey::new(2024, 0, Domain::Cohort);
        let n = 1_000_000u64;
        let mut sev = [0u64; 3];
        let mut treated = [0u64; 3];
        let mut rural = 0u64;
        for id in 0..n {
            let (c, t) = draw_baseline(&mut key.stream(id, Purpose::Baseline, 0));
            sev[c.severity.index()] += 1;
            treated[c.severity.index()] += u64::from(t);
            rural += u64::from(c.rural);
        }
        for k in 0..3 {
            let share = sev[k] as f64 / n as f64;
            assert!((share - 1.0 / 3.0).abs() < 0.005, "severity {k}: {share}");
            let pt = treated[k] as f64 / sev[k] as f64;
            assert!((pt - P_TREATED[k]).abs() < 0.01, "treated | {k}: {pt}");
        }
        assert!((rural as f64 / n as f64 - 0.30).abs() < 0.005);
    }

    #[test]
    fn encounters_always_include_index_week_and_match_rates() {
        let s = sched();
        let key = StreamKey::new(5, 0, Domain::Cohort);
        let mild = EncounterHazards::new(Severity::Mild, &s);
        let severe = EncounterHazards::new(Severity::Severe, &s);
        let n = 100_000u64;
        let mut hits = [0u64; 42];
        for id in 0..n {
            let e = generate_encounters(
                Severity::Mild,
                &s,
                &mut key.stream(id, Purpose::Encounters, 0),
            );
            assert!(e.contains(7));
            for w in e.iter() {
                hits[usize::from(w)] += 1;
            }
        }
        for t in 8..=40u8 {
            let p = mild.prob(t);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let rate = hits[usize::from(t)] as f64 / n as f64;
            assert!((rate - p).abs() <= 5.0 * se, "week {t}: {rate} vs {p}");
            assert!(severe.prob(t) >= mild.prob(t));
        }
    }

    #[test]
    fn cohort_is_deterministic_and_thread_independent() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Increase, P::Decrease);
        let run = RunConfig::new(3_000, 77);
        let a = generate_cohort(&run, &te, &s);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| generate_cohort(&run, &te, &s));
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 3_000);
        assert!(
            generate_cohort(&RunConfig::new(1, 77), &te, &s)
                .records
                .len()
                == 1
        );
    }

    #[test]
    fn cohort_trajectory_invariants() {
        let s = sched();
        for te in TreatmentEffectSpec::all() {
            let cohort = generate_cohort(&RunConfig::new(20_000, 3), &te, &s);
            for r in &cohort.records {
                assert_eq!(r.encounters.iter().next(), Some(7));
                for arm in Arm::BOTH {
                    let tr = r.trajectory(arm);
                    assert_eq!(tr.arm, arm);
                    assert!((7..=40).contains(&tr.end_week));
                    if let Some(pe) = tr.preeclampsia_week {
                        assert!((17..=40).contains(&pe));
                        assert!(tr.pe_induced);
                        assert_eq!(tr.end_week, pe);
                        assert_ne!(tr.class(), OutcomeClass::Miscarriage);
                        assert!(tr.observed_lmp_week() >= 20);
                    } else {
                        assert!(!tr.pe_induced);
                    }
                }
                if te.is_null() && s.coupling == Coupling::Common {
                    assert_eq!(
                        r.trajectory_treated.end_week,
                        r.trajectory_untreated.end_week
                    );
                    assert_eq!(
                        r.trajectory_treated.preeclampsia_week,
                        r.trajectory_untreated.preeclampsia_week
                    );
                }
            }
        }
    }

    #[test]
    fn confounding_is_monotone() {
        let s = sched();
        let te = TreatmentEffectSpec::new(M::Null, P::Null);
        let cohort = generate_cohort(&RunConfig::new(200_000, 11), &te, &s);
        let mut n = [0f64; 3];
        let mut t = [0f64; 3];
        let mut misc = [[0f64; 2]; 3];
        let mut cnt = [[0f64; 2]; 3];
        for r in &cohort.records {
            let k = r.covariates.severity.index();
            n[k] += 1.0;
            t[k] += f64::from(u8::from(r.treated));
            let ru = usize::from(r.covariates.rural);
            cnt[k][ru] += 1.0;
            misc[k][ru] += f64::from(u8::from(r.trajectory_untreated.is_miscarriage()));
        }
        assert!(t[0] / n[0] < t[1] / n[1] && t[1] / n[1] < t[2] / n[2]);
        for ru in 0..2 {
            assert!(misc[0][ru] / cnt[0][ru] < misc[1][ru] / cnt[1][ru]);
            assert!(misc[1][ru] / cnt[1][ru] < misc[2][ru] / cnt[2][ru]);
        }
        for k in 0..3 {
            assert!(misc[k][0] / cnt[k][0] < misc[k][1] / cnt[k][1]);
        }
    }
}
