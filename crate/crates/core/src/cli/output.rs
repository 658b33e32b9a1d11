//! Artifact writing: distribution CSVs, JSON reports and the manifest.
//! Every file is written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::macro_solver::MacroState;
use crate::measures::GridMeasure;

pub const DISTRIBUTION_HEADER: [&str; 4] = ["time", "component", "cell_center", "weight"];

/// Fixed scientific notation with 17 significant digits: enough to round
/// trip any `f64`, and independent of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One snapshot of named distributions.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    pub time: f64,
    pub components: Vec<(&'a str, &'a GridMeasure)>,
}

impl<'a> Snapshot<'a> {
    pub fn pair(time: f64, first: (&'a str, &'a GridMeasure), second: (&'a str, &'a GridMeasure)) -> Self {
        Self {
            time,
            components: vec![first, second],
        }
    }
}

pub fn macro_snapshots<'a>(states: &'a [MacroState], names: [&'a str; 2]) -> Vec<Snapshot<'a>> {
    states
        .iter()
        .map(|s| Snapshot::pair(s.t, (names[0], &s.m), (names[1], &s.f)))
        .collect()
}

/// CSV text with one row per snapshot, component and cell.
pub fn distribution_csv(snapshots: &[Snapshot<'_>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISTRIBUTION_HEADER)?;
    for s in snapshots {
        let time = fmt_f64(s.time);
        for (name, measure) in &s.components {
            let grid = measure.grid();
            for (i, weight) in measure.weights().iter().enumerate() {
                w.write_record([time.as_str(), name, &fmt_f64(grid.center(i)), &fmt_f64(*weight)])?;
            }
        }
    }
    Ok(w.into_inner()?)
}

pub fn emit_distribution_csv(snapshots: &[Snapshot<'_>], path: &Path) -> Result<()> {
    write_atomic(path, &distribution_csv(snapshots)?)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct DistributionRow {
    pub time: f64,
    pub component: String,
    pub cell_center: f64,
    pub weight: f64,
}

pub fn load_distribution_csv(path: &Path) -> Result<Vec<DistributionRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<DistributionRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(rows)
}

/// Generic numeric table with a header.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    Ok(w.into_inner()?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(mut self, scenario: &str, seed: u64) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            scenario: scenario.to_string(),
            seed,
            files: self.files.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join("manifest.json"), &bytes)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::TraitGrid;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn single_snapshot_has_two_rows_per_cell() {
        let grid = TraitGrid::new(0.0, 1.0, 4).unwrap();
        let m = GridMeasure::uniform(grid, 0.0, 1.0, 1.0).unwrap();
        let f = GridMeasure::point_mass(grid, 0.6, 2.0);
        let text = distribution_csv(&[Snapshot::pair(0.0, ("male", &m), ("female", &f))]).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&text).unwrap().lines().collect();
        assert_eq!(lines[0], "time,component,cell_center,weight");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let text = distribution_csv(&[]).unwrap();
        assert_eq!(text, b"time,component,cell_center,weight\n");
    }
}
