//! End-to-end runs: configuration, optimisation campaigns with checkpoints,
//! single evaluations, straight-fin baselines, calibration, exports and
//! plots.

mod baseline;
mod campaign;
mod config;
mod export;
mod plot;
mod single;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use baseline::{run_baseline, straight_fins, BaselineEntry, BaselineStatus};
pub use campaign::{
    parse_x, read_ledger, run_optimize, run_resume, BestRecord, Checkpoint, LedgerRow, OptimizeSummary, RunOptions,
};
pub use config::{env_overrides, BaselineSection, CmaesSection, GeometrySection, OutputSection, RunConfig, ENV_PREFIX};
pub use export::{read_fields_csv, write_fields_csv, write_vtk, FieldRow};
pub use plot::{convergence_svg, field_svgs, heatmap_svg, run_plot, Colormap};
pub use single::{run_calibrate, run_evaluate, twin_rectangles, EvaluateInput, EvaluateReport, TWIN_RECTANGLE_SIZE};

use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("{error}\nresidual history: {history}")]
    Solver { error: SolverError, history: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    pub fn config(message: impl Into<String>) -> Self {
        RunError::Config {
            line: None,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Solver { .. } => 3,
            RunError::Io { .. } => 4,
        }
    }
}

/// Writes `contents` to a sibling temporary file and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| RunError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::config("x").exit_code(), 2);
        let s = RunError::Solver {
            error: SolverError::BlockedChannel,
            history: String::new(),
        };
        assert_eq!(s.exit_code(), 3);
        assert_eq!(
            RunError::io(Path::new("a"), io::ErrorKind::NotFound.into()).exit_code(),
            4
        );
    }

    #[test]
    fn config_error_shows_line() {
        let e = RunError::Config {
            line: Some(4),
            message: "bad".into(),
        };
        assert_eq!(e.to_string(), "line 4: bad");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert!(!dir.path().join("f.json.tmp").exists());
    }
}
