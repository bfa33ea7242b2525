//! Exchange-coefficient extraction from aggregate high-fidelity results.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default base-plate to fluid coefficient [W/(m²·K)].
pub const DEFAULT_H_F: f64 = 80.0;
/// Default base-plate to fin coefficient [W/(m²·K)].
pub const DEFAULT_H_S: f64 = 44500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("temperature difference {delta:e} K is too small to define a coefficient")]
    UndefinedCoefficient { delta: f64 },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Which base-plate area a sample describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Base plate in contact with fluid; yields `h_f`.
    FinFree,
    /// Base plate under a fin; yields `h_s`.
    FinAttached,
}

/// Aggregated heat flow through one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    /// Heat rate through the region [W].
    pub q_dot: f64,
    /// Region area [m²].
    pub area: f64,
    /// Average surface temperature [K].
    pub t_surf_avg: f64,
    /// Average fluid or fin temperature [K].
    pub t_bulk_avg: f64,
    pub region: Region,
}

/// Calibrated exchange coefficients [W/(m²·K)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub h_f: f64,
    pub h_s: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            h_f: DEFAULT_H_F,
            h_s: DEFAULT_H_S,
        }
    }
}

/// `q / (A (T_surf − T_bulk))`.
pub fn heat_transfer_coefficient(s: &CalibrationSample) -> Result<f64, CalibrationError> {
    if !(s.area > 0.0 && s.area.is_finite()) {
        return Err(CalibrationError::InvalidSample(format!(
            "area must be positive, got {}",
            s.area
        )));
    }
    if ![s.q_dot, s.t_surf_avg, s.t_bulk_avg].iter().all(|v| v.is_finite()) {
        return Err(CalibrationError::InvalidSample("non-finite value".into()));
    }
    let delta = s.t_surf_avg - s.t_bulk_avg;
    if delta.abs() < 1e-9 {
        return Err(CalibrationError::UndefinedCoefficient { delta });
    }
    Ok(s.q_dot / (s.area * delta))
}

/// Mean coefficient per region; a region without samples keeps its default.
pub fn average_coefficients(samples: &[CalibrationSample]) -> Result<Coefficients, CalibrationError> {
    let mean = |region: Region, default: f64| -> Result<f64, CalibrationError> {
        let values = samples
            .iter()
            .filter(|s| s.region == region)
            .map(heat_transfer_coefficient)
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            log::info!("no {region:?} samples, using the default coefficient {default}");
            return Ok(default);
        }
        let mut sorted = values;
        sorted.sort_by(f64::total_cmp);
        Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
    };
    Ok(Coefficients {
        h_f: mean(Region::FinFree, DEFAULT_H_F)?,
        h_s: mean(Region::FinAttached, DEFAULT_H_S)?,
    })
}

#[derive(Deserialize)]
struct Row {
    region: Region,
    q_dot_w: f64,
    area_m2: f64,
    #[serde(rename = "t_surf_k")]
    t_surf: f64,
    #[serde(rename = "t_bulk_k")]
    t_bulk: f64,
}

/// Reads samples from CSV with the header
/// `region,q_dot_W,area_m2,T_surf_K,T_bulk_K`. Header names are matched
/// case-insensitively; errors report the 1-based file line.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CalibrationError::Row {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect::<csv::StringRecord>();
    let expected = ["region", "q_dot_w", "area_m2", "t_surf_k", "t_bulk_k"];
    if !headers.is_empty() && headers.iter().ne(expected.iter().copied()) {
        return Err(CalibrationError::Row {
            row: 1,
            message: format!(
                "expected header region,q_dot_W,area_m2,T_surf_K,T_bulk_K, got {:?}",
                headers
            ),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CalibrationError::Row {
            row: line,
            message: e.to_string(),
        })?;
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| CalibrationError::Row {
            row: line,
            message: e.to_string(),
        })?;
        let s = CalibrationSample {
            q_dot: row.q_dot_w,
            area: row.area_m2,
            t_surf_avg: row.t_surf,
            t_bulk_avg: row.t_bulk,
            region: row.region,
        };
        heat_transfer_coefficient(&s).map_err(|e| CalibrationError::Row {
            row: line,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}
