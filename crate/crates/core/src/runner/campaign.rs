//! Optimisation campaigns: the CMA-ES loop with parallel evaluation, the
//! evaluation ledger, per-generation log, elite geometry files and
//! checkpoint/resume.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::export::{write_fields_csv, write_vtk};
use super::plot::{convergence_svg, field_svgs};
use super::{create_dir, read_file, write_atomic, write_file, RunError};
use crate::cmaes::{self, CmaesConfig, CmaesState, GenerationRecord, Termination};
use crate::geometry::{decode, write_geometry, DecisionVector, FinShape, GeometryParams};
use crate::objective::{cost, failed_cost, geometric_penalty, CostBreakdown, PenaltyConfig};
use crate::solver::{simulate, FieldSet, SimResult, SimSetup, SolverError};

pub const CHECKPOINT_VERSION: u32 = 1;
const LEDGER_FILE: &str = "evaluations.csv";
const LOG_FILE: &str = "generations.csv";

/// Per-invocation settings that are not part of the run configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for candidate evaluation; 0 uses every core.
    pub workers: usize,
    /// Checkpoint location; defaults to `checkpoint.json` in the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Overrides `[output] svg`.
    pub svg: Option<bool>,
    /// Overrides `[output] dir`.
    pub out_dir: Option<PathBuf>,
    /// Stop once this generation has completed, without final outputs, as
    /// if the process had been interrupted.
    pub stop_after: Option<usize>,
}

/// One solver evaluation. `wall_time` and `timestamp` are the only
/// columns that differ between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub generation: usize,
    pub candidate: usize,
    /// `search` for population members, `final` for the re-evaluated elite.
    pub stage: String,
    pub status: String,
    pub j: f64,
    pub dp_loss: Option<f64>,
    #[serde(rename = "T_avg_bp")]
    pub t_avg_bp: Option<f64>,
    pub p_geom: f64,
    pub p_thermal: f64,
    pub flow_iterations: Option<usize>,
    pub energy_closure: Option<f64>,
    pub x: String,
    pub wall_time: f64,
    pub timestamp: f64,
}

/// Best design found so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub generation: usize,
    pub x: Vec<f64>,
    pub cost: CostBreakdown,
    pub result: Option<SimResult>,
}

/// Everything needed to continue a campaign bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub cmaes: CmaesConfig,
    pub state: CmaesState,
    pub best: Option<BestRecord>,
    #[serde(default)]
    pub best_feasible: Option<BestRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| RunError::Config {
            line: Some(e.line()),
            message: format!("checkpoint: {e}"),
        })?;
        if c.version != CHECKPOINT_VERSION {
            return Err(RunError::config(format!(
                "unsupported checkpoint version {}",
                c.version
            )));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        Self::from_json(&read_file(path)?)
    }
}

/// Result of a finished (or deliberately stopped) campaign.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSummary {
    pub termination: Option<Termination>,
    pub generations: usize,
    pub evaluations: usize,
    /// Lowest cost design.
    pub best: Option<BestRecord>,
    /// Lowest pressure loss among designs with no penalty.
    pub best_feasible: Option<BestRecord>,
    pub out_dir: PathBuf,
}

struct Candidate {
    cost: CostBreakdown,
    result: Option<SimResult>,
    status: &'static str,
    wall_time: f64,
}

fn status_of(e: &SolverError) -> &'static str {
    match e {
        SolverError::NonConvergence { .. } => "nonconvergence",
        SolverError::BlockedChannel => "blocked",
        SolverError::InvalidInput(_) => "invalid_input",
        SolverError::Geometry(_) => "geometry_error",
    }
}

/// Decodes one decision vector; `None` when it is not a valid design.
fn decode_fins(x: &[f64], geom: &GeometryParams) -> Option<Vec<FinShape>> {
    match DecisionVector::new(x.to_vec(), geom).and_then(|v| decode(&v, geom)) {
        Ok(d) => Some(d.fins),
        Err(e) => {
            log::debug!("decode failed: {e}");
            None
        }
    }
}

/// Scores the simulation outcome of a decoded design.
fn score(
    fins: &[FinShape],
    outcome: Result<&SimResult, &SolverError>,
    setup: &SimSetup,
    penalty: &PenaltyConfig,
) -> (CostBreakdown, &'static str) {
    match outcome {
        Ok(r) => {
            let c = cost(Ok(r), fins, &setup.domain.design_region, penalty);
            (c, if c.failed { "non_finite" } else { "ok" })
        }
        Err(e) => {
            log::debug!("simulation failed: {e}");
            let p_geom = geometric_penalty(fins, &setup.domain.design_region, penalty.lambda_geom);
            (failed_cost(p_geom, penalty), status_of(e))
        }
    }
}

/// Decodes and simulates one decision vector, mapping every failure to
/// the penalty configuration's failure cost.
pub(crate) fn evaluate_vector(
    x: &[f64],
    geom: &GeometryParams,
    setup: &SimSetup,
    penalty: &PenaltyConfig,
) -> (
    CostBreakdown,
    Option<(SimResult, FieldSet)>,
    Vec<FinShape>,
    &'static str,
) {
    let Some(fins) = decode_fins(x, geom) else {
        return (failed_cost(0.0, penalty), None, Vec::new(), "geometry_error");
    };
    let outcome = simulate(&fins, setup);
    let (c, status) = score(&fins, outcome.as_ref().map(|(r, _)| r), setup, penalty);
    (c, outcome.ok(), fins, status)
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn format_x(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";")
}

fn ledger_row(generation: usize, candidate: usize, stage: &str, x: &[f64], c: &Candidate) -> LedgerRow {
    LedgerRow {
        generation,
        candidate,
        stage: stage.to_string(),
        status: c.status.to_string(),
        j: c.cost.j,
        dp_loss: c.cost.dp_loss,
        t_avg_bp: c.result.as_ref().map(|r| r.t_avg_bp),
        p_geom: c.cost.p_geom,
        p_thermal: c.cost.p_thermal,
        flow_iterations: c.result.as_ref().map(|r| r.flow_iterations),
        energy_closure: c.result.as_ref().map(|r| r.energy_closure),
        x: format_x(x),
        wall_time: c.wall_time,
        timestamp: now(),
    }
}

fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    let exists = path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| RunError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r)
            .map_err(|e| RunError::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

/// Keeps the header and the search rows of generations `1..=generation`.
fn truncate_csv(path: &Path, generation: usize, search_only: bool) -> Result<(), RunError> {
    if !path.exists() {
        return Ok(());
    }
    let text = read_file(path)?;
    let mut out = String::new();
    for (k, line) in text.lines().enumerate() {
        let keep = k == 0 || {
            let mut cols = line.split(',');
            let g = cols.next().and_then(|c| c.parse::<usize>().ok());
            let stage_ok = !search_only || cols.nth(1) == Some("search");
            matches!(g, Some(g) if g <= generation) && stage_ok
        };
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

struct Campaign {
    config: RunConfig,
    cmaes: CmaesConfig,
    state: CmaesState,
    best: Option<BestRecord>,
    best_feasible: Option<BestRecord>,
    out_dir: PathBuf,
    checkpoint: PathBuf,
    svg: bool,
    evaluations: usize,
}

impl Campaign {
    fn checkpoint(&self) -> Result<(), RunError> {
        let c = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            cmaes: self.cmaes.clone(),
            state: self.state.clone(),
            best: self.best.clone(),
            best_feasible: self.best_feasible.clone(),
        };
        write_atomic(&self.checkpoint, c.to_json().as_bytes())
    }

    fn run(mut self, pool: &rayon::ThreadPool, stop_after: Option<usize>) -> Result<OptimizeSummary, RunError> {
        let geom = self.config.geometry_params();
        let setup = self.config.sim_setup();
        let penalty = self.config.penalty.clone();
        let ledger = self.out_dir.join(LEDGER_FILE);
        let log_path = self.out_dir.join(LOG_FILE);
        let every = self.config.output.checkpoint_every;
        let termination = loop {
            let t = cmaes::should_terminate(&self.state, &self.cmaes);
            if t != Termination::Continue {
                break Some(t);
            }
            if stop_after.is_some_and(|s| self.state.generation >= s) {
                break None;
            }
            let xs = self.state.sample(&self.cmaes);
            let evaluated: Vec<Candidate> = pool.install(|| {
                xs.par_iter()
                    .map(|x| {
                        let start = Instant::now();
                        let (cost, sim, _, status) = evaluate_vector(x.as_slice(), &geom, &setup, &penalty);
                        Candidate {
                            cost,
                            result: sim.map(|(r, _)| r),
                            status,
                            wall_time: start.elapsed().as_secs_f64(),
                        }
                    })
                    .collect()
            });
            let generation = self.state.generation + 1;
            let rows: Vec<LedgerRow> = xs
                .iter()
                .zip(&evaluated)
                .enumerate()
                .map(|(k, (x, c))| ledger_row(generation, k, "search", x.as_slice(), c))
                .collect();
            append_csv(&ledger, &rows)?;
            self.evaluations += rows.len();

            let costs: Vec<f64> = evaluated.iter().map(|c| c.cost.j).collect();
            self.state
                .tell(&self.cmaes, &xs, &costs)
                .map_err(|e| RunError::Solver {
                    error: SolverError::InvalidInput(e.to_string()),
                    history: String::new(),
                })?;
            let record = GenerationRecord::summarise(&self.state, &xs, &costs);
            append_csv(&log_path, std::slice::from_ref(&record))?;

            let mut improved = false;
            for (x, c) in xs.iter().zip(&evaluated) {
                if self.best.as_ref().map_or(true, |b| c.cost.j < b.cost.j) {
                    self.best = Some(BestRecord {
                        generation,
                        x: x.as_slice().to_vec(),
                        cost: c.cost,
                        result: c.result.clone(),
                    });
                    improved = true;
                }
                let lower = |b: &BestRecord| c.cost.dp_loss < b.cost.dp_loss;
                if c.cost.is_feasible() && self.best_feasible.as_ref().map_or(true, lower) {
                    self.best_feasible = Some(BestRecord {
                        generation,
                        x: x.as_slice().to_vec(),
                        cost: c.cost,
                        result: c.result.clone(),
                    });
                }
            }
            if improved {
                let b = self.best.as_ref().expect("just set");
                if let Ok(d) = DecisionVector::new(b.x.clone(), &geom).and_then(|v| decode(&v, &geom)) {
                    let body = write_geometry(&d.fins);
                    write_file(&self.out_dir.join(format!("elite_g{generation:04}.geo")), &body)?;
                }
            }
            log::info!(
                "generation {generation}: best J {:.6} mean J {:.6} sigma {:.4e}",
                record.best_j,
                record.mean_j,
                record.sigma
            );
            if generation % every == 0 {
                self.checkpoint()?;
            }
        };
        if termination.is_some() {
            self.checkpoint()?;
            self.finish(&geom, &setup, &penalty, &ledger)?;
        }
        Ok(OptimizeSummary {
            termination,
            generations: self.state.generation,
            evaluations: self.evaluations,
            best: self.best,
            best_feasible: self.best_feasible,
            out_dir: self.out_dir,
        })
    }

    /// Re-evaluates the elite to export its fields and writes the final
    /// artifacts.
    fn finish(
        &mut self,
        geom: &GeometryParams,
        setup: &SimSetup,
        penalty: &PenaltyConfig,
        ledger: &Path,
    ) -> Result<(), RunError> {
        let log_text = read_file(&self.out_dir.join(LOG_FILE)).unwrap_or_default();
        let records = cmaes::read_log(log_text.as_bytes()).unwrap_or_default();
        if self.svg && !records.is_empty() {
            write_file(&self.out_dir.join("convergence.svg"), convergence_svg(&records, None))?;
        }
        if let Some(f) = &self.best_feasible {
            write_file(
                &self.out_dir.join("best_feasible.json"),
                serde_json::to_string_pretty(f).expect("record serialises"),
            )?;
        }
        let Some(best) = self.best.clone() else {
            return Ok(());
        };
        let start = std::time::Instant::now();
        let (cost, sim, fins, status) = evaluate_vector(&best.x, geom, setup, penalty);
        let c = Candidate {
            cost,
            result: sim.as_ref().map(|(r, _)| r.clone()),
            status,
            wall_time: start.elapsed().as_secs_f64(),
        };
        append_csv(ledger, &[ledger_row(self.state.generation, 0, "final", &best.x, &c)])?;
        self.evaluations += 1;
        if !fins.is_empty() {
            write_file(&self.out_dir.join("best.geo"), write_geometry(&fins))?;
        }
        write_file(
            &self.out_dir.join("best.json"),
            serde_json::to_string_pretty(&best).expect("record serialises"),
        )?;
        if let Some((_, fields)) = sim {
            export_fields(&self.out_dir, &fields, self.svg)?;
        }
        Ok(())
    }
}

/// Writes `fields.csv`, `fields.vtk` and optionally the field heatmaps.
pub(crate) fn export_fields(dir: &Path, fields: &FieldSet, svg: bool) -> Result<(), RunError> {
    let mut buf = Vec::new();
    write_fields_csv(&mut buf, fields).map_err(|e| RunError::io(dir, std::io::Error::other(e.to_string())))?;
    write_file(&dir.join("fields.csv"), &buf)?;
    write_file(&dir.join("fields.vtk"), write_vtk(fields))?;
    if svg {
        let rows = super::export::read_fields_csv(buf.as_slice())
            .map_err(|e| RunError::io(dir, std::io::Error::other(e.to_string())))?;
        let (speed, t_bp) = field_svgs(&rows);
        write_file(&dir.join("speed.svg"), speed)?;
        write_file(&dir.join("T_bp.svg"), t_bp)?;
    }
    Ok(())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::config(format!("cannot start {workers} workers: {e}")))
}

/// Starts a fresh campaign in the configured output directory, replacing
/// any ledger and log left there by an earlier run.
pub fn run_optimize(config: &RunConfig, opts: &RunOptions) -> Result<OptimizeSummary, RunError> {
    let mut config = config.clone();
    if let Some(d) = &opts.out_dir {
        config.output.dir = d.clone();
    }
    let out_dir = config.output.dir.clone();
    create_dir(&out_dir)?;
    for f in [LEDGER_FILE, LOG_FILE] {
        let p = out_dir.join(f);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| RunError::io(&p, e))?;
        }
    }
    write_file(&out_dir.join("config.toml"), config.to_toml())?;
    let cmaes = config.cmaes_config();
    let state = cmaes::init(&cmaes).map_err(|e| RunError::config(e.to_string()))?;
    let campaign = Campaign {
        checkpoint: opts
            .checkpoint
            .clone()
            .unwrap_or_else(|| out_dir.join("checkpoint.json")),
        svg: opts.svg.unwrap_or(config.output.svg),
        config,
        cmaes,
        state,
        best: None,
        best_feasible: None,
        out_dir,
        evaluations: 0,
    };
    campaign.run(&thread_pool(opts.workers)?, opts.stop_after)
}

/// Continues a campaign from a checkpoint. Ledger and log rows written
/// after the checkpoint are discarded first so the output matches an
/// uninterrupted run.
pub fn run_resume(checkpoint: &Path, opts: &RunOptions) -> Result<OptimizeSummary, RunError> {
    let c = Checkpoint::load(checkpoint)?;
    let mut config = c.config;
    if let Some(d) = &opts.out_dir {
        config.output.dir = d.clone();
    }
    let out_dir = config.output.dir.clone();
    create_dir(&out_dir)?;
    let generation = c.state.generation;
    truncate_csv(&out_dir.join(LEDGER_FILE), generation, true)?;
    truncate_csv(&out_dir.join(LOG_FILE), generation, false)?;
    let evaluations = generation * c.cmaes.lambda;
    let campaign = Campaign {
        checkpoint: opts.checkpoint.clone().unwrap_or_else(|| checkpoint.to_path_buf()),
        svg: opts.svg.unwrap_or(config.output.svg),
        config,
        cmaes: c.cmaes,
        state: c.state,
        best: c.best,
        best_feasible: c.best_feasible,
        out_dir,
        evaluations,
    };
    campaign.run(&thread_pool(opts.workers)?, opts.stop_after)
}

/// Decision vector of a ledger row.
pub fn parse_x(s: &str) -> Result<Vec<f64>, RunError> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| RunError::config(format!("`{t}`: {e}")))
        })
        .collect()
}

/// Reads the evaluation ledger of an output directory.
pub fn read_ledger(dir: &Path) -> Result<Vec<LedgerRow>, RunError> {
    let path = dir.join(LEDGER_FILE);
    let text = read_file(&path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::config(format!("{}: {e}", path.display())))
}
