//! Result tables and their on-disk rendering.
//!
//! Numbers are written with six significant digits so files are identical
//! for any worker count and platform.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::{PregnancyRecord, Severity};
use crate::error::{Error, Result};
use crate::runner::MatrixRun;
use crate::scenario::TreatmentEffectSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Six significant digits in fixed notation.
///
/// ```
/// use pregsim::output::format_sig6;
/// assert_eq!(format_sig6(0.374), "0.374000");
/// assert_eq!(format_sig6(-10.4), "-10.4000");
/// assert_eq!(format_sig6(0.0), "0");
/// ```
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).clamp(0, 20) as usize;
    let s = format!("{x:.decimals$}");
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        "0".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_sig6(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Num(v) => {
                let rounded: f64 = format_sig6(*v).parse().unwrap_or(f64::NAN);
                serde_json::Number::from_f64(rounded).map_or(serde_json::Value::Null, Into::into)
            }
            Cell::Text(s) => s.clone().into(),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(u64::from(v))
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(u64::from(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| Error::Contract(format!("csv rendering of {}: {e}", self.name));
        w.write_record(&self.header).map_err(map)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), c.json()))
                    .collect();
                obj.into()
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("json rendering");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => Ok(self.to_json()),
        }
    }
}

pub const RESULTS_HEADER: &[&str] = &[
    "scenario_id",
    "te_miscarriage",
    "te_preeclampsia",
    "target_measured",
    "target_miscarriage",
    "sample",
    "analysis",
    "r1",
    "r0",
    "rd_per100",
    "rr",
    "true_r1",
    "true_r0",
    "true_rd_per100",
    "true_rr",
    "bias_r1",
    "bias_r0",
    "bias_rd_per100",
    "bias_log_rr",
    "n",
    "n_events",
];

pub fn results_table(run: &MatrixRun) -> Table {
    let mut t = Table::new("results", RESULTS_HEADER);
    for r in run.rows() {
        let sc = &r.scenario;
        t.push(vec![
            sc.id.into(),
            sc.treatment.miscarriage.label().into(),
            sc.treatment.preeclampsia.label().into(),
            sc.missingness.target_measured_pct.into(),
            sc.missingness.target_miscarriage_pct.into(),
            r.sample.label().into(),
            r.analysis.label().into(),
            r.estimate.risk_treated.into(),
            r.estimate.risk_untreated.into(),
            r.estimate.rd_per100.into(),
            r.estimate.rr.into(),
            r.truth.risk_treated.into(),
            r.truth.risk_untreated.into(),
            r.truth.rd_per100.into(),
            r.truth.rr.into(),
            r.bias.bias_risk_treated.into(),
            r.bias.bias_risk_untreated.into(),
            r.bias.bias_rd_per100.into(),
            r.bias.bias_log_rr.into(),
            r.n.into(),
            r.n_events.into(),
        ]);
    }
    t
}

pub fn truth_table(run: &MatrixRun) -> Table {
    let mut t = Table::new(
        "truth",
        &[
            "te_index",
            "te_miscarriage",
            "te_preeclampsia",
            "r1",
            "r0",
            "rd_per100",
            "rr",
            "n",
        ],
    );
    for s in &run.truths {
        let e = &s.truth.estimate;
        t.push(vec![
            s.treatment.index().into(),
            s.treatment.miscarriage.label().into(),
            s.treatment.preeclampsia.label().into(),
            e.risk_treated.into(),
            e.risk_untreated.into(),
            e.rd_per100.into(),
            e.rr.into(),
            s.truth.n.into(),
        ]);
    }
    t
}

pub fn study_sample_table(run: &MatrixRun) -> Table {
    let mut t = Table::new(
        "study_sample",
        &[
            "scenario_id",
            "target_measured",
            "target_miscarriage",
            "arm",
            "n",
            "missing_measured",
            "missing_miscarriage",
            "n_mild",
            "n_moderate",
            "n_severe",
            "true_miscarriage",
            "true_stillbirth",
            "true_live_birth",
        ],
    );
    for r in &run.results {
        for d in &r.description {
            t.push(vec![
                d.scenario_id.into(),
                r.scenario.missingness.target_measured_pct.into(),
                r.scenario.missingness.target_miscarriage_pct.into(),
                d.arm.label().into(),
                d.n.into(),
                d.missing_measured.into(),
                d.missing_miscarriage.into(),
                d.by_severity[0].into(),
                d.by_severity[1].into(),
                d.by_severity[2].into(),
                d.true_outcomes[0].into(),
                d.true_outcomes[1].into(),
                d.true_outcomes[2].into(),
            ]);
        }
    }
    t
}

pub fn analytic_sample_table(run: &MatrixRun) -> Table {
    let mut t = Table::new(
        "analytic_samples",
        &[
            "scenario_id",
            "sample",
            "arm",
            "n",
            "n_events",
            "n_censored",
        ],
    );
    for r in &run.results {
        for c in &r.counts {
            t.push(vec![
                c.scenario_id.into(),
                c.sample.label().into(),
                c.arm.label().into(),
                c.n.into(),
                c.n_events.into(),
                c.n_censored.into(),
            ]);
        }
    }
    t
}

/// Per-pregnancy dump of a target population.
pub fn cohort_table(te: &TreatmentEffectSpec, records: &[PregnancyRecord]) -> Table {
    let mut t = Table::new(
        format!("cohort_te{}", te.index()),
        &[
            "id",
            "severity",
            "rural",
            "treated",
            "end_week_treated",
            "outcome_treated",
            "pe_week_treated",
            "end_week_untreated",
            "outcome_untreated",
            "pe_week_untreated",
            "encounters",
        ],
    );
    let pe = |w: Option<u8>| w.map_or(String::new(), |w| w.to_string());
    for r in records {
        let (a, b) = (&r.trajectory_treated, &r.trajectory_untreated);
        let enc: Vec<String> = r.encounters.iter().map(|w| w.to_string()).collect();
        t.push(vec![
            r.id.into(),
            Severity::label(r.covariates.severity).into(),
            r.covariates.rural.into(),
            r.treated.into(),
            u64::from(a.end_week).into(),
            a.class().label().into(),
            pe(a.preeclampsia_week).into(),
            u64::from(b.end_week).into(),
            b.class().label().into(),
            pe(b.preeclampsia_week).into(),
            enc.join(" ").into(),
        ]);
    }
    t
}

/// Writes files into an output directory and removes them again if the run
/// is abandoned.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            keep: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_table(&mut self, table: &Table, format: OutputFormat) -> Result<PathBuf> {
        let name = format!("{}.{}", table.name, format.extension());
        self.write(&name, &table.render(format)?)
    }

    pub fn file_names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    /// Keep everything written so far.
    pub fn commit(mut self) {
        self.keep = true;
    }
}

impl Drop for ArtifactWriter {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_examples() {
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1234567");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(-0.2941), "-0.294100");
    }

    #[test]
    fn tiny_values_do_not_render_as_negative_zero() {
        assert_eq!(format_sig6(-1e-25), "0");
    }

    #[test]
    fn csv_and_json_round_trip_values() {
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec![
            Cell::Int(3),
            Cell::Num(0.1234567),
            Cell::Text("x,y".into()),
        ]);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv, "a,b,c\n3,0.123457,\"x,y\"\n");
        let json: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(json[0]["b"], serde_json::json!(0.123457));
    }

    #[test]
    fn abandoned_writer_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut w = ArtifactWriter::new(dir.path()).unwrap();
            w.write("a.txt", "x").unwrap();
        }
        assert!(!dir.path().join("a.txt").exists());
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("b.txt", "x").unwrap();
        w.commit();
        assert!(dir.path().join("b.txt").exists());
    }
}
