//! Turns an input section into a cohort.

use std::path::PathBuf;

use optithresh_core::ingest::{
    apply_inclusion, empirical_histogram, empirical_sample, read_cgm_csv, InclusionDecision,
    SkippedRow, SubjectIngest, SubjectSeries,
};
use optithresh_core::simulation::generate_cohort_with_grid;
use optithresh_core::{Cohort, Member, Method};
use serde::Serialize;

use crate::config::{CsvInput, Representation, SimulationInput};
use crate::error::{CliError, CliResult};

/// What happened to every subject of a CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct IngestionSummary {
    pub path: PathBuf,
    pub subjects: Vec<SubjectIngest>,
    pub skipped_rows: Vec<SkippedRow>,
    /// Empty when the inclusion policy is disabled.
    pub inclusion: Vec<InclusionDecision>,
    pub n_kept: usize,
}

/// Reads the file and drops subjects that fail the inclusion policy.
pub fn read_csv(input: &CsvInput) -> CliResult<(Vec<SubjectSeries>, IngestionSummary)> {
    let report = read_cgm_csv(&input.path, &input.read_options()).map_err(|e| {
        CliError::Data(format!("{}: {e}", input.path.display()))
    })?;
    let mut kept = Vec::new();
    let mut inclusion = Vec::new();
    for s in report.series {
        match &input.inclusion {
            Some(policy) => {
                let d = apply_inclusion(&s, policy);
                if d.keep {
                    kept.push(s);
                } else {
                    log::info!("dropping {}: {}", d.subject_id, d.reason);
                }
                inclusion.push(d);
            }
            None => kept.push(s),
        }
    }
    if kept.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no subject passed the inclusion policy",
            input.path.display()
        )));
    }
    log::info!("{} of {} subjects kept", kept.len(), report.subjects.len());
    let summary = IngestionSummary {
        path: input.path.clone(),
        subjects: report.subjects,
        skipped_rows: report.skipped_rows,
        inclusion,
        n_kept: kept.len(),
    };
    Ok((kept, summary))
}

/// CSV data become unit-bin histograms unless raw samples are requested.
pub fn series_cohort(series: &[SubjectSeries], repr: Representation, grid_size: usize) -> CliResult<Cohort> {
    let data = |e| CliError::from_core("input", e);
    let members = series
        .iter()
        .map(|s| match repr {
            Representation::Sample => empirical_sample(s).map(Member::Sample),
            Representation::Auto | Representation::Histogram => {
                empirical_histogram(s).map(Member::Histogram)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    Cohort::with_grid(members, grid_size).map_err(data)
}

pub fn simulated_cohort(
    input: &SimulationInput,
    method: Method,
    seed: u64,
    grid_size: usize,
) -> CliResult<Cohort> {
    let sim = generate_cohort_with_grid(&input.mixture, seed, grid_size)
        .map_err(|e| CliError::from_core("input.simulation.mixture", e))?;
    let binned = match input.representation {
        Representation::Auto => method.is_discrete(),
        Representation::Histogram => true,
        Representation::Sample => false,
    };
    Ok(if binned { sim.binned } else { sim.empirical })
}
