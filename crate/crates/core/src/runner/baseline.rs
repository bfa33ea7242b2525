//! Straight-fin reference designs: for each temperature limit, the
//! thinnest pair of rectangular fins that meets it.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::campaign::RunOptions;
use super::config::RunConfig;
use super::{create_dir, write_file, RunError};
use crate::geometry::{make_straight_fin_baseline, write_geometry, FinShape, GeometryError};
use crate::math::Vec2;
use crate::solver::{simulate, SolverError};

/// Rectangular fins of transverse thickness `width` and streamwise
/// `length`, centred on the design region's mid-line and evenly spaced
/// across it.
pub fn straight_fins(cfg: &RunConfig, width: f64, length: f64) -> Result<Vec<FinShape>, GeometryError> {
    let d = cfg.domain.design_region;
    let n = cfg.geometry.n_fins;
    let centers: Vec<Vec2> = (0..n)
        .map(|f| Vec2::new(d.center().x, d.y_min + (2 * f + 1) as f64 / (2 * n) as f64 * d.height()))
        .collect();
    make_straight_fin_baseline(&cfg.geometry_params(), width, length, &centers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStatus {
    /// Bisection bracketed the limit.
    Met,
    /// Even the thinnest allowed fin is cool enough.
    SmallestFin,
    /// Even the thickest allowed fin is too hot.
    Unreachable,
    /// A simulation failed during the search.
    Failed,
}

/// One row of the baseline table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    #[serde(rename = "T_cons")]
    pub t_cons: f64,
    pub status: BaselineStatus,
    /// Fin thickness of the reported design [m].
    pub width: Option<f64>,
    /// Fin length [m].
    pub length: f64,
    /// Pressure loss of the reported design: the straight-fin reference.
    pub dp_sf: Option<f64>,
    #[serde(rename = "T_avg_bp")]
    pub t_avg_bp: Option<f64>,
    pub evaluations: usize,
}

struct Search<'a> {
    cfg: &'a RunConfig,
    cache: HashMap<u64, (f64, f64)>,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, w: f64) -> Result<(f64, f64), SolverError> {
        if let Some(v) = self.cache.get(&w.to_bits()) {
            return Ok(*v);
        }
        let fins = straight_fins(self.cfg, w, self.cfg.baseline.length)?;
        let (r, _) = simulate(&fins, &self.cfg.sim_setup())?;
        self.evaluations += 1;
        log::info!(
            "straight fins w = {:.4} mm: dp {:.4} Pa, T {:.2} K",
            w * 1e3,
            r.dp_loss,
            r.t_avg_bp
        );
        self.cache.insert(w.to_bits(), (r.dp_loss, r.t_avg_bp));
        Ok((r.dp_loss, r.t_avg_bp))
    }

    fn entry(&mut self, t_cons: f64) -> BaselineEntry {
        let b = &self.cfg.baseline;
        let start = self.evaluations;
        let mut row = BaselineEntry {
            t_cons,
            status: BaselineStatus::Failed,
            width: None,
            length: b.length,
            dp_sf: None,
            t_avg_bp: None,
            evaluations: 0,
        };
        let outcome = (|| -> Result<(), SolverError> {
            let (dp_lo, t_lo) = self.eval(b.w_min)?;
            if t_lo <= t_cons {
                row.status = BaselineStatus::SmallestFin;
                row.width = Some(b.w_min);
                row.dp_sf = Some(dp_lo);
                row.t_avg_bp = Some(t_lo);
                return Ok(());
            }
            let (dp_hi, t_hi) = self.eval(b.w_max)?;
            if t_hi > t_cons {
                row.status = BaselineStatus::Unreachable;
                row.width = Some(b.w_max);
                row.dp_sf = Some(dp_hi);
                row.t_avg_bp = Some(t_hi);
                return Ok(());
            }
            let (mut lo, mut hi, mut best) = (b.w_min, b.w_max, (dp_hi, t_hi));
            for _ in 0..b.bisection_steps {
                let mid = 0.5 * (lo + hi);
                let v = self.eval(mid)?;
                if v.1 <= t_cons {
                    hi = mid;
                    best = v;
                } else {
                    lo = mid;
                }
            }
            row.status = BaselineStatus::Met;
            row.width = Some(hi);
            row.dp_sf = Some(best.0);
            row.t_avg_bp = Some(best.1);
            Ok(())
        })();
        if let Err(e) = outcome {
            log::warn!("baseline for T_cons = {t_cons} K failed: {e}");
        }
        row.evaluations = self.evaluations - start;
        row
    }
}

/// Runs the straight-fin search for every `[baseline] T_cons` entry and
/// writes `baseline.csv` and one geometry file per entry to the output
/// directory.
pub fn run_baseline(cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<BaselineEntry>, RunError> {
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| RunError::config(e.to_string()))?;
    let entries: Vec<BaselineEntry> = pool.install(|| {
        cfg.baseline
            .t_cons
            .par_iter()
            .map(|&t| {
                Search {
                    cfg,
                    cache: HashMap::new(),
                    evaluations: 0,
                }
                .entry(t)
            })
            .collect()
    });
    create_dir(&out_dir)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for e in &entries {
            w.serialize(e).map_err(|e| RunError::config(e.to_string()))?;
        }
        w.flush().map_err(|e| RunError::io(&out_dir, e))?;
    }
    write_file(&out_dir.join("baseline.csv"), &buf)?;
    for e in &entries {
        if let Some(w) = e.width {
            if let Ok(fins) = straight_fins(cfg, w, e.length) {
                let mut name = String::new();
                let _ = write!(name, "baseline_T{}.geo", e.t_cons);
                write_file(&out_dir.join(name), write_geometry(&fins))?;
            }
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_fins_are_evenly_spaced() {
        let cfg = RunConfig::default();
        let fins = straight_fins(&cfg, 0.5e-3, 1e-3).unwrap();
        assert_eq!(fins.len(), 2);
        let c0 = fins[0].bbox.center();
        let c1 = fins[1].bbox.center();
        assert!((c0.x - 5e-3).abs() < 1e-15 && (c1.x - 5e-3).abs() < 1e-15);
        assert!((c0.y - 1.25e-3).abs() < 1e-15 && (c1.y - 3.75e-3).abs() < 1e-15);
        assert!(straight_fins(&cfg, 3e-3, 1e-3).is_err());
    }
}
