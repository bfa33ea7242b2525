//! Single evaluations and calibration.

use std::path::Path;

use serde::Serialize;

use super::baseline::straight_fins;
use super::campaign::{export_fields, RunOptions};
use super::config::RunConfig;
use super::{create_dir, read_file, write_file, RunError};
use crate::calibration::{average_coefficients, read_samples_csv, Coefficients};
use crate::geometry::{decode, read_geometry, write_geometry, DecisionVector, FinShape};
use crate::objective::{cost, CostBreakdown};
use crate::solver::{simulate, SimResult, SolverError};

/// Fin transverse thickness and streamwise length of the twin-rectangle
/// reference design [m].
pub const TWIN_RECTANGLE_SIZE: (f64, f64) = (0.75e-3, 1.0e-3);

/// What to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum EvaluateInput {
    /// A decision vector for the configured geometry.
    Vector(Vec<f64>),
    /// Contents of a geometry file.
    Geometry(String),
    /// Two rectangular fins of [`TWIN_RECTANGLE_SIZE`].
    TwinRectangles,
}

/// Two rectangular fins of [`TWIN_RECTANGLE_SIZE`] placed like the
/// straight-fin baselines.
pub fn twin_rectangles(cfg: &RunConfig) -> Result<Vec<FinShape>, RunError> {
    let (w, l) = TWIN_RECTANGLE_SIZE;
    straight_fins(cfg, w, l).map_err(|e| RunError::config(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub result: SimResult,
    pub cost: CostBreakdown,
    pub fins: usize,
}

fn residual_text(e: &SolverError) -> String {
    match e {
        SolverError::NonConvergence { history, .. } => history
            .iter()
            .enumerate()
            .map(|(k, r)| format!("{k}:{r:.3e}"))
            .collect::<Vec<_>>()
            .join(" "),
        _ => "none".into(),
    }
}

/// Simulates one design and writes `result.json`, `design.geo` and the
/// field exports to the output directory.
pub fn run_evaluate(cfg: &RunConfig, input: &EvaluateInput, opts: &RunOptions) -> Result<EvaluateReport, RunError> {
    let geom = cfg.geometry_params();
    let fins = match input {
        EvaluateInput::Vector(x) => {
            let v = DecisionVector::new(x.clone(), &geom).map_err(|e| RunError::config(e.to_string()))?;
            decode(&v, &geom).map_err(|e| RunError::config(e.to_string()))?.fins
        }
        EvaluateInput::Geometry(text) => read_geometry(text, geom.samples_per_segment).map_err(|e| match e {
            crate::geometry::GeometryError::Parse { line, message } => RunError::Config {
                line: Some(line),
                message,
            },
            other => RunError::config(other.to_string()),
        })?,
        EvaluateInput::TwinRectangles => twin_rectangles(cfg)?,
    };
    let (result, fields) = simulate(&fins, &cfg.sim_setup()).map_err(|e| RunError::Solver {
        history: residual_text(&e),
        error: e,
    })?;
    let breakdown = cost(Ok(&result), &fins, &cfg.domain.design_region, &cfg.penalty);
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    create_dir(&out_dir)?;
    let report = EvaluateReport {
        result,
        cost: breakdown,
        fins: fins.len(),
    };
    write_file(
        &out_dir.join("result.json"),
        serde_json::to_string_pretty(&report).expect("report serialises"),
    )?;
    write_file(&out_dir.join("design.geo"), write_geometry(&fins))?;
    export_fields(&out_dir, &fields, opts.svg.unwrap_or(cfg.output.svg))?;
    Ok(report)
}

/// Averages calibration samples from a CSV file. When `fragment` is
/// given, the coefficients are also written there as a `[physics]` TOML
/// fragment.
pub fn run_calibrate(samples: &Path, fragment: Option<&Path>) -> Result<Coefficients, RunError> {
    let text = read_file(samples)?;
    let rows = read_samples_csv(text.as_bytes()).map_err(|e| match e {
        crate::calibration::CalibrationError::Row { row, message } => RunError::Config {
            line: Some(row),
            message: format!("{}: {message}", samples.display()),
        },
        other => RunError::config(format!("{}: {other}", samples.display())),
    })?;
    let c = average_coefficients(&rows).map_err(|e| RunError::config(e.to_string()))?;
    if let Some(path) = fragment {
        write_file(path, format!("[physics]\nh_f = {:?}\nh_s = {:?}\n", c.h_f, c.h_s))?;
    }
    Ok(c)
}
