//! CSV and JSON serialization of functions, spectra, critical points and
//! experiment reports. Files are written atomically.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::{DiscreteFunction, SpectralData};
use crate::error::{LabError, Result};
use crate::optimize::CriticalPoint;
use crate::stability::ExperimentReport;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| LabError::Io(e.error))?;
    Ok(())
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Parse(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct NodeRow {
    node: f64,
    value: f64,
}

/// `node,value` rows.
pub fn function_to_csv(f: &DiscreteFunction) -> Result<String> {
    csv_string(
        f.disc()
            .nodes()
            .iter()
            .zip(f.values().iter())
            .map(|(&node, &value)| NodeRow { node, value }),
    )
}

/// Reads `node,value` rows and checks the nodes against `disc`.
pub fn function_from_csv(
    disc: &std::sync::Arc<crate::discretization::Discretization>,
    text: &str,
) -> Result<DiscreteFunction> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, row) in r.deserialize::<NodeRow>().enumerate() {
        let row = row?;
        let expected = disc.nodes().get(i).copied().ok_or(LabError::Mismatch)?;
        if (row.node - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(LabError::Mismatch);
        }
        values.push(row.value);
    }
    DiscreteFunction::new(disc.clone(), values)
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    eigenvalue: f64,
    residual: f64,
}

pub fn spectrum_to_csv(s: &SpectralData) -> Result<String> {
    csv_string(
        s.eigenvalues
            .iter()
            .zip(&s.residuals)
            .enumerate()
            .map(|(index, (&eigenvalue, &residual))| SpectrumRow {
                index,
                eigenvalue,
                residual,
            }),
    )
}

/// Serializable summary of a [`CriticalPoint`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CriticalPointRecord {
    pub value: f64,
    pub grad_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kernel_dim: usize,
    pub kernel_ambiguous: bool,
    pub hessian_eigenvalues: Vec<f64>,
    pub hessian_residuals: Vec<f64>,
    pub history: Vec<f64>,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl From<&CriticalPoint> for CriticalPointRecord {
    fn from(cp: &CriticalPoint) -> Self {
        Self {
            value: cp.value,
            grad_residual: cp.grad_residual,
            converged: cp.converged,
            iterations: cp.iterations,
            kernel_dim: cp.kernel_dim,
            kernel_ambiguous: cp.kernel_ambiguous,
            hessian_eigenvalues: cp.hessian_spectrum.eigenvalues.clone(),
            hessian_residuals: cp.hessian_spectrum.residuals.clone(),
            history: cp.history.clone(),
            nodes: cp.u.disc().nodes().to_vec(),
            values: cp.u.values().iter().copied().collect(),
        }
    }
}

/// `epsilon,deficit,distance,q_value,in_fit_window` rows.
pub fn report_to_csv(report: &ExperimentReport) -> Result<String> {
    csv_string(&report.rows)
}

/// `log10(distance) log10(deficit)` pairs for rows with positive deficit.
pub fn report_plot_data(report: &ExperimentReport) -> String {
    let mut out = String::from("# log10_distance log10_deficit\n");
    for r in report.rows.iter().filter(|r| r.deficit > 0.0 && r.distance > 0.0) {
        out.push_str(&format!("{} {}\n", r.distance.log10(), r.deficit.log10()));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<ExperimentReport> {
    let report: ExperimentReport = serde_json::from_str(text)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(LabError::Parse(format!("unsupported schema_version {}", report.schema_version)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Discretization;
    use crate::geometry::ManifoldModel;

    #[test]
    fn function_csv_round_trip() {
        let disc = Discretization::build(&ManifoldModel::sphere(3).unwrap(), 16).unwrap();
        let f = DiscreteFunction::from_fn(&disc, |t| t.cos() + 0.1).unwrap();
        let text = function_to_csv(&f).unwrap();
        assert!(text.starts_with("node,value\n"));
        let back = function_from_csv(&disc, &text).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn spectrum_csv_header() {
        let disc = Discretization::build(&ManifoldModel::sphere(3).unwrap(), 32).unwrap();
        let s = disc.laplace_eigenpairs(3).unwrap();
        let text = spectrum_to_csv(&s).unwrap();
        assert_eq!(text.lines().next(), Some("index,eigenvalue,residual"));
        assert_eq!(text.lines().count(), 4);
    }
}
