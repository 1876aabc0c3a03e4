//! The scenario matrix end to end.
//!
//! Each treatment-effect setting gets one target population. Its truth is
//! computed once and shared by the six missingness settings, which differ
//! only in the missingness streams they draw.

use std::time::Instant;

use serde::Serialize;

use crate::dgp::{generate_cohort, Arm, OutcomeClass, PregnancyRecord};
use crate::error::Result;
use crate::estimators::{
    bias, bounds, estimate_primary, truth, BoundsAssumption, EffectEstimate, TruthRecord,
};
use crate::missingness::{
    apply_missingness, calibrate, cohort_stats, MissingCause, ObservedPregnancy,
};
use crate::samples::{build_analytic_sample, sample_counts, AnalyticSampleKind};
use crate::scenario::{build_scenario_matrix, RunConfig, ScenarioSpec, TreatmentEffectSpec};
use crate::schedule::CoefficientSchedules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AnalysisKind {
    Primary,
    Bound(BoundsAssumption),
}

impl AnalysisKind {
    pub fn label(self) -> String {
        match self {
            AnalysisKind::Primary => "primary".into(),
            AnalysisKind::Bound(a) => format!("bound:{}", a.label()),
        }
    }
}

/// One (scenario, sample, analysis) result.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: ScenarioSpec,
    pub sample: AnalyticSampleKind,
    pub analysis: AnalysisKind,
    pub estimate: EffectEstimate,
    pub truth: EffectEstimate,
    pub bias: crate::estimators::BiasRecord,
    pub n: u64,
    pub n_events: u64,
}

/// Study-sample description for one arm of one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyDescription {
    pub scenario_id: u32,
    pub arm: Arm,
    pub n: u64,
    pub missing_measured: u64,
    pub missing_miscarriage: u64,
    /// Pregnancies by severity, mild first.
    pub by_severity: [u64; 3],
    /// True outcomes under the assigned arm: miscarriage, stillbirth, live birth.
    pub true_outcomes: [u64; 3],
}

/// Analytic-sample counts for one arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCountRow {
    pub scenario_id: u32,
    pub sample: AnalyticSampleKind,
    pub arm: Arm,
    pub n: u64,
    pub n_events: u64,
    pub n_censored: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: ScenarioSpec,
    pub rows: Vec<ResultRow>,
    pub description: [StudyDescription; 2],
    pub counts: Vec<SampleCountRow>,
    pub miscarriage_marginal_capped: bool,
}

pub fn describe_study(scenario_id: u32, study: &[ObservedPregnancy<'_>]) -> [StudyDescription; 2] {
    let mut out = Arm::BOTH.map(|arm| StudyDescription {
        scenario_id,
        arm,
        n: 0,
        missing_measured: 0,
        missing_miscarriage: 0,
        by_severity: [0; 3],
        true_outcomes: [0; 3],
    });
    for m in study {
        let d = &mut out[m.record.arm().index()];
        d.n += 1;
        match m.cause {
            MissingCause::Measured => d.missing_measured += 1,
            MissingCause::Miscarriage => d.missing_miscarriage += 1,
            MissingCause::None => {}
        }
        d.by_severity[m.record.covariates.severity.index()] += 1;
        let class = match m.record.observed().class() {
            OutcomeClass::Miscarriage => 0,
            OutcomeClass::Stillbirth => 1,
            OutcomeClass::LiveBirth => 2,
        };
        d.true_outcomes[class] += 1;
    }
    out
}

/// Missingness, samples and all seven analyses for one scenario.
pub fn run_scenario(
    records: &[PregnancyRecord],
    truth: &TruthRecord,
    scenario: &ScenarioSpec,
    sched: &CoefficientSchedules,
    run: &RunConfig,
) -> Result<ScenarioResult> {
    let params = calibrate(sched, &scenario.missingness, &cohort_stats(records))?;
    let study = apply_missingness(
        records,
        scenario,
        &params,
        run.master_seed,
        run.replicate_id,
    );
    let mut rows = Vec::with_capacity(7);
    let mut counts = Vec::with_capacity(6);
    for kind in AnalyticSampleKind::ALL {
        let sample = build_analytic_sample(&study, kind)?;
        let c = sample_counts(&sample);
        for arm in Arm::BOTH {
            let ca = c[arm.index()];
            counts.push(SampleCountRow {
                scenario_id: scenario.id,
                sample: kind,
                arm,
                n: ca.n,
                n_events: ca.n_events,
                n_censored: ca.n_censored,
            });
        }
        let n = sample.len() as u64;
        let n_events = c[0].n_events + c[1].n_events;
        let mut push = |analysis, estimate: EffectEstimate| -> Result<()> {
            rows.push(ResultRow {
                scenario: *scenario,
                sample: kind,
                analysis,
                estimate,
                truth: truth.estimate,
                bias: bias(&estimate, truth)?,
                n,
                n_events,
            });
            Ok(())
        };
        push(AnalysisKind::Primary, estimate_primary(&sample)?)?;
        if kind == AnalyticSampleKind::ObservedPregnancies {
            for (assumption, est) in bounds(&sample)?.estimates {
                push(AnalysisKind::Bound(assumption), est)?;
            }
        }
    }
    Ok(ScenarioResult {
        scenario: *scenario,
        rows,
        description: describe_study(scenario.id, &study),
        counts,
        miscarriage_marginal_capped: params.miscarriage_marginal_capped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSummary {
    pub treatment: TreatmentEffectSpec,
    pub truth: TruthRecord,
    pub clamp_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDiagnostics {
    pub scenario_id: u32,
    pub wall_ms: u128,
    pub clamp_count: u64,
    pub miscarriage_marginal_capped: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub results: Vec<ScenarioResult>,
    pub truths: Vec<TruthSummary>,
    pub diagnostics: Vec<ScenarioDiagnostics>,
}

impl MatrixRun {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.results.iter().flat_map(|r| r.rows.iter())
    }

    pub fn failed(&self) -> Vec<u32> {
        self.diagnostics
            .iter()
            .filter(|d| d.error.is_some())
            .map(|d| d.scenario_id)
            .collect()
    }

    pub fn scenario(&self, id: u32) -> Option<&ScenarioResult> {
        self.results.iter().find(|r| r.scenario.id == id)
    }
}

/// Run every selected scenario. A scenario whose estimation fails is
/// recorded in the diagnostics and the rest proceed; configuration errors
/// abort.
///
/// `on_cohort` sees each target population after it is generated.
pub fn run_matrix_with(
    run: &RunConfig,
    sched: &CoefficientSchedules,
    mut on_cohort: impl FnMut(&TreatmentEffectSpec, &[PregnancyRecord]) -> Result<()>,
) -> Result<MatrixRun> {
    run.validate()?;
    let matrix = build_scenario_matrix(sched)?;
    let selected = run.select(&matrix);
    let mut out = MatrixRun {
        results: Vec::new(),
        truths: Vec::new(),
        diagnostics: Vec::new(),
    };
    for te in TreatmentEffectSpec::all() {
        let scenarios: Vec<_> = selected.iter().filter(|s| s.treatment == te).collect();
        if scenarios.is_empty() {
            continue;
        }
        let cohort = generate_cohort(run, &te, sched);
        on_cohort(&te, &cohort.records)?;
        let t = match truth(&cohort.records) {
            Ok(t) => t,
            Err(e) => {
                for s in scenarios {
                    out.diagnostics.push(ScenarioDiagnostics {
                        scenario_id: s.id,
                        wall_ms: 0,
                        clamp_count: cohort.clamp_count,
                        miscarriage_marginal_capped: false,
                        error: Some(e.to_string()),
                    });
                }
                continue;
            }
        };
        out.truths.push(TruthSummary {
            treatment: te,
            truth: t,
            clamp_count: cohort.clamp_count,
        });
        for s in scenarios {
            let started = Instant::now();
            let res = run_scenario(&cohort.records, &t, s, sched, run);
            let mut diag = ScenarioDiagnostics {
                scenario_id: s.id,
                wall_ms: 0,
                clamp_count: cohort.clamp_count,
                miscarriage_marginal_capped: false,
                error: None,
            };
            match res {
                Ok(r) => {
                    diag.miscarriage_marginal_capped = r.miscarriage_marginal_capped;
                    out.results.push(r);
                }
                Err(crate::Error::Config(msg)) => return Err(crate::Error::Config(msg)),
                Err(e) => diag.error = Some(e.to_string()),
            }
            diag.wall_ms = started.elapsed().as_millis();
            out.diagnostics.push(diag);
        }
    }
    Ok(out)
}

pub fn run_matrix(run: &RunConfig, sched: &CoefficientSchedules) -> Result<MatrixRun> {
    run_matrix_with(run, sched, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_scenario_gives_seven_rows() {
        let sched = CoefficientSchedules::default_schedules();
        let mut run = RunConfig::new(20_000, 1);
        run.scenario_filter = Some(vec![1]);
        let m = run_matrix(&run, &sched).unwrap();
        assert_eq!(m.results.len(), 1);
        assert_eq!(m.rows().count(), 7);
        assert_eq!(m.results[0].counts.len(), 6);
        assert!(m.failed().is_empty());
        let labels: Vec<_> = m.rows().map(|r| (r.sample, r.analysis.label())).collect();
        assert_eq!(
            labels[0],
            (
                AnalyticSampleKind::ObservedDeliveries,
                "primary".to_string()
            )
        );
        assert_eq!(
            labels[6],
            (
                AnalyticSampleKind::ObservedPregnancies,
                "bound:NoneEvent".to_string()
            )
        );
    }

    #[test]
    fn truth_shared_across_missingness_settings() {
        let sched = CoefficientSchedules::default_schedules();
        let mut run = RunConfig::new(10_000, 2);
        run.scenario_filter = Some((25..=30).collect());
        let m = run_matrix(&run, &sched).unwrap();
        assert_eq!(m.truths.len(), 1);
        let t0 = m.results[0].rows[0].truth;
        for r in m.rows() {
            assert_eq!(r.truth, t0);
        }
    }

    #[test]
    fn description_totals() {
        let sched = CoefficientSchedules::default_schedules();
        let mut run = RunConfig::new(10_000, 3);
        run.scenario_filter = Some(vec![5]);
        let m = run_matrix(&run, &sched).unwrap();
        let d = &m.results[0].description;
        assert_eq!(d[0].n + d[1].n, 10_000);
        for arm in d {
            assert_eq!(arm.by_severity.iter().sum::<u64>(), arm.n);
            assert_eq!(arm.true_outcomes.iter().sum::<u64>(), arm.n);
        }
    }
}
