//! Batch runs on disk: output files plus a manifest describing how they were
//! produced.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::output::{
    analytic_sample_table, cohort_table, results_table, study_sample_table, truth_table,
    ArtifactWriter, OutputFormat,
};
use crate::runner::{run_matrix_with, MatrixRun};
use crate::scenario::RunConfig;
use crate::schedule::CoefficientSchedules;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Schedules together with the text they were parsed from.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub text: String,
    pub schedules: CoefficientSchedules,
}

impl ConfigSource {
    pub fn bundled() -> Self {
        ConfigSource {
            path: None,
            text: CoefficientSchedules::default_toml().to_string(),
            schedules: CoefficientSchedules::default_schedules(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schedules = CoefficientSchedules::from_toml_str(&text)?;
        Ok(ConfigSource {
            path: Some(path.to_path_buf()),
            text,
            schedules,
        })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: u32,
    pub wall_ms: u64,
    pub clamp_count: u64,
    pub miscarriage_marginal_capped: bool,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: Option<String>,
    pub config_sha256: String,
    pub master_seed: u64,
    pub n_pregnancies: u64,
    pub replicate_id: u64,
    pub threads: usize,
    pub format: OutputFormat,
    pub scenario_ids: Vec<u32>,
    pub failed_scenarios: Vec<u32>,
    /// Files covered by the determinism contract.
    pub files: Vec<String>,
    pub total_wall_ms: u64,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchOptions {
    pub format: OutputFormat,
    pub dump_cohort: bool,
}

/// Run the matrix and write every table plus the manifest into
/// `run.output_dir`. Files written before an error are removed.
pub fn execute(
    run: &RunConfig,
    config: &ConfigSource,
    opts: BatchOptions,
) -> Result<(MatrixRun, RunManifest)> {
    let started = Instant::now();
    let mut writer = ArtifactWriter::new(&run.output_dir)?;
    let matrix = run_matrix_with(run, &config.schedules, |te, records| {
        if opts.dump_cohort {
            writer.write_table(&cohort_table(te, records), opts.format)?;
        }
        Ok(())
    })?;
    for table in [
        results_table(&matrix),
        truth_table(&matrix),
        study_sample_table(&matrix),
        analytic_sample_table(&matrix),
    ] {
        writer.write_table(&table, opts.format)?;
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: config.path.as_ref().map(|p| p.display().to_string()),
        config_sha256: config.sha256(),
        master_seed: run.master_seed,
        n_pregnancies: run.n_pregnancies,
        replicate_id: run.replicate_id,
        threads: rayon::current_num_threads(),
        format: opts.format,
        scenario_ids: matrix.diagnostics.iter().map(|d| d.scenario_id).collect(),
        failed_scenarios: matrix.failed(),
        files: writer.file_names(),
        total_wall_ms: started.elapsed().as_millis() as u64,
        scenarios: matrix
            .diagnostics
            .iter()
            .map(|d| ScenarioEntry {
                id: d.scenario_id,
                wall_ms: d.wall_ms as u64,
                clamp_count: d.clamp_count,
                miscarriage_marginal_capped: d.miscarriage_marginal_capped,
                status: if d.error.is_some() { "failed" } else { "ok" }.into(),
                error: d.error.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    writer.write(MANIFEST_FILE, &text)?;
    writer.commit();
    Ok((matrix, manifest))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Names of result files whose bytes differ between two runs. Refuses runs
/// made under different configurations.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<String>> {
    let (ma, mb) = (read_manifest(a)?, read_manifest(b)?);
    if ma.config_sha256 != mb.config_sha256 {
        return Err(Error::Contract(format!(
            "runs used different configurations ({} vs {})",
            ma.config_sha256, mb.config_sha256
        )));
    }
    let mut names: Vec<String> = ma.files.iter().chain(&mb.files).cloned().collect();
    names.sort();
    names.dedup();
    let mut differ = Vec::new();
    for name in names {
        let read = |dir: &Path| fs::read(dir.join(&name)).ok();
        if read(a) != read(b) {
            differ.push(name);
        }
    }
    Ok(differ)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, threads: usize) -> RunManifest {
        let mut run = RunConfig::new(3_000, 17);
        run.scenario_filter = Some(vec![1, 8, 36]);
        run.output_dir = dir.to_path_buf();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            execute(&run, &ConfigSource::bundled(), BatchOptions::default())
                .unwrap()
                .1
        })
    }

    #[test]
    fn writes_all_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_in(dir.path(), 2);
        assert_eq!(m.scenario_ids, vec![1, 8, 36]);
        for f in &m.files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 1 + 3 * 7);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn thread_count_does_not_change_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_in(a.path(), 1);
        run_in(b.path(), 4);
        let differ = compare_runs(a.path(), b.path()).unwrap();
        assert!(differ.is_empty(), "{differ:?}");
    }

    #[test]
    fn compare_refuses_different_configs() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_in(a.path(), 1);
        run_in(b.path(), 1);
        let mut m = read_manifest(b.path()).unwrap();
        m.config_sha256 = "0".repeat(64);
        fs::write(
            b.path().join(MANIFEST_FILE),
            serde_json::to_string(&m).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            compare_runs(a.path(), b.path()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dump_cohort_writes_one_file_per_treatment_setting() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunConfig::new(500, 1);
        run.scenario_filter = Some(vec![1, 2, 7]);
        run.output_dir = dir.path().to_path_buf();
        let opts = BatchOptions {
            format: OutputFormat::Csv,
            dump_cohort: true,
        };
        let (_, m) = execute(&run, &ConfigSource::bundled(), opts).unwrap();
        assert!(m.files.contains(&"cohort_te1.csv".to_string()));
        assert!(m.files.contains(&"cohort_te2.csv".to_string()));
        let dump = fs::read_to_string(dir.path().join("cohort_te1.csv")).unwrap();
        assert_eq!(dump.lines().count(), 501);
    }
}
