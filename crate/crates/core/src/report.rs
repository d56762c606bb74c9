//! Report files and plot-ready matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::{RankingReport, SimulationReport};

pub const SIMULATION_REPORT: &str = "simulation_report.json";
pub const SIMULATION_RAW: &str = "simulation_raw.csv";
pub const RANKING_REPORT: &str = "ranking_report.json";
pub const FIG_PERCENT_DIFF: &str = "fig2_percent_diff.csv";
pub const FIG_STOP_POINTS: &str = "fig3_stop_points.csv";
pub const FIG_MEAN_RANKS: &str = "fig4_mean_ranks.csv";

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_bytes(value)?).map_err(|e| Error::io(path, e))
}

/// `dataset,algorithm,perm_index,stop_fold,efold_mean,kcv_mean,percent_diff,energy_fraction`
pub fn write_raw_csv<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &report.rows {
        w.serialize(row)?;
    }
    if report.rows.is_empty() {
        w.write_record([
            "dataset",
            "algorithm",
            "perm_index",
            "stop_fold",
            "efold_mean",
            "kcv_mean",
            "percent_diff",
            "energy_fraction",
        ])?;
    }
    w.flush().map_err(|e| Error::Simulation(e.to_string()))?;
    Ok(())
}

/// Dataset-by-algorithm matrix; absent cells are empty fields.
fn write_matrix<W: Write>(cells: &BTreeMap<(String, String), f64>, out: W) -> Result<()> {
    let datasets: BTreeSet<&str> = cells.keys().map(|(d, _)| d.as_str()).collect();
    let algorithms: BTreeSet<&str> = cells.keys().map(|(_, a)| a.as_str()).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["dataset"];
    header.extend(algorithms.iter().copied());
    w.write_record(&header)?;
    for d in datasets {
        let mut record = vec![d.to_owned()];
        for a in &algorithms {
            record.push(
                cells
                    .get(&(d.to_owned(), a.to_string()))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::Simulation(e.to_string()))?;
    Ok(())
}

pub fn write_percent_diff_matrix<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let cells = report
        .cells
        .iter()
        .map(|c| {
            (
                (c.dataset.clone(), c.algorithm.clone()),
                c.mean_percent_diff,
            )
        })
        .collect();
    write_matrix(&cells, out)
}

pub fn write_stop_point_matrix<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let cells = report
        .cells
        .iter()
        .map(|c| ((c.dataset.clone(), c.algorithm.clone()), c.mean_stop_fold))
        .collect();
    write_matrix(&cells, out)
}

pub fn write_mean_rank_matrix<W: Write>(ranking: &RankingReport, out: W) -> Result<()> {
    let mut cells = BTreeMap::new();
    for d in &ranking.datasets {
        for (a, r) in d.algorithms.iter().zip(&d.mean_efold_ranks) {
            cells.insert((d.dataset.clone(), a.clone()), *r);
        }
    }
    write_matrix(&cells, out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes all simulation outputs into `dir`.
pub fn write_simulation_outputs(
    dir: &Path,
    report: &SimulationReport,
    ranking: &RankingReport,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(SIMULATION_REPORT), report)?;
    write_json(&dir.join(RANKING_REPORT), ranking)?;
    write_raw_csv(report, create(&dir.join(SIMULATION_RAW))?)?;
    write_percent_diff_matrix(report, create(&dir.join(FIG_PERCENT_DIFF))?)?;
    write_stop_point_matrix(report, create(&dir.join(FIG_STOP_POINTS))?)?;
    write_mean_rank_matrix(ranking, create(&dir.join(FIG_MEAN_RANKS))?)?;
    Ok(())
}
