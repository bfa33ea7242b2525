//! (μ/μ_w, λ) covariance matrix adaptation evolution strategy with an
//! archive of the best candidate ever evaluated.
//!
//! The optimiser follows an ask/tell cycle driven by the caller:
//! [`CmaesState::sample`] draws a population, the caller evaluates it (in
//! parallel if it likes), [`rank_and_select`] orders the costs and
//! [`CmaesState::update`] adapts the distribution.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of generations over which `ftol` stagnation is measured.
pub const STAGNATION_WINDOW: usize = 20;

/// Relative floor applied to covariance eigenvalues.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CmaesError {
    #[error("invalid CMA-ES configuration: {0}")]
    Config(String),
    #[error("covariance matrix has non-finite entries at generation {generation}")]
    Numerical { generation: usize },
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Strategy parameters. Build with [`CmaesConfig::new`] or
/// [`CmaesConfig::with_population`] to get the standard defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub recomb_weights: Vec<f64>,
    pub sigma0: f64,
    pub mean0: Vec<f64>,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub max_generations: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub rng_seed: u64,
}

impl CmaesConfig {
    /// Default population size `4 + ⌊3 ln n⌋`.
    pub fn default_lambda(dim: usize) -> usize {
        4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize
    }

    /// Standard settings with the default population size.
    pub fn new(mean0: Vec<f64>, sigma0: f64, rng_seed: u64) -> Self {
        let lambda = Self::default_lambda(mean0.len());
        Self::with_population(mean0, sigma0, lambda, rng_seed)
    }

    /// Standard settings for a given λ: `μ = ⌊λ/2⌋`, log-rank weights and
    /// the usual learning rates derived from `μ_eff` and `n`.
    pub fn with_population(mean0: Vec<f64>, sigma0: f64, lambda: usize, rng_seed: u64) -> Self {
        let n = mean0.len() as f64;
        let mu = (lambda / 2).max(1);
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let recomb_weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / recomb_weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        Self {
            dim: mean0.len(),
            lambda,
            mu,
            recomb_weights,
            sigma0,
            mean0,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu: c_mu.max(0.0),
            max_generations: 1000,
            ftol: 1e-12,
            xtol: 1e-12,
            rng_seed,
        }
    }

    /// Variance-effective selection mass `1 / Σ w_i²`.
    pub fn mu_eff(&self) -> f64 {
        1.0 / self.recomb_weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), CmaesError> {
        let err = |m: String| Err(CmaesError::Config(m));
        if self.dim == 0 {
            return err("dim must be at least 1".into());
        }
        if self.mean0.len() != self.dim {
            return err(format!("mean0 has {} entries, dim is {}", self.mean0.len(), self.dim));
        }
        if self.mean0.iter().any(|v| !v.is_finite()) {
            return err("mean0 must be finite".into());
        }
        if self.lambda < 2 {
            return err(format!("lambda must be at least 2, got {}", self.lambda));
        }
        let mu_max = (self.lambda as f64 / 2.0).round() as usize;
        if self.mu < 1 || self.mu > mu_max {
            return err(format!("mu must lie in [1, {mu_max}], got {}", self.mu));
        }
        if self.recomb_weights.len() != self.mu {
            return err(format!(
                "{} recombination weights for mu = {}",
                self.recomb_weights.len(),
                self.mu
            ));
        }
        if self.recomb_weights.iter().any(|w| !(*w > 0.0)) {
            return err("recombination weights must be positive".into());
        }
        if self.recomb_weights.windows(2).any(|p| p[1] > p[0]) {
            return err("recombination weights must be non-increasing".into());
        }
        let total: f64 = self.recomb_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return err(format!("recombination weights sum to {total}, not 1"));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return err(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        for (name, v) in [("c_sigma", self.c_sigma), ("c_c", self.c_c), ("c_1", self.c_1)] {
            if !(v > 0.0 && v <= 1.0) {
                return err(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(self.c_mu >= 0.0 && self.c_mu <= 1.0) {
            return err(format!("c_mu must lie in [0, 1], got {}", self.c_mu));
        }
        if self.c_1 + self.c_mu > 1.0 {
            return err("c_1 + c_mu must not exceed 1".into());
        }
        if !(self.d_sigma > 0.0 && self.d_sigma.is_finite()) {
            return err(format!("d_sigma must be positive, got {}", self.d_sigma));
        }
        if !(self.ftol >= 0.0 && self.xtol >= 0.0) {
            return err("ftol and xtol must be non-negative".into());
        }
        Ok(())
    }
}

/// Best candidate seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub x: Vec<f64>,
    pub cost: f64,
    pub generation: usize,
}

/// Outcome of [`should_terminate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    BudgetExhausted,
    Converged,
}

/// Search distribution and bookkeeping of one optimiser run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct CmaesState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub path_sigma: DVector<f64>,
    pub path_c: DVector<f64>,
    /// Orthonormal eigenvectors of `cov`, one per column.
    pub eigen_basis: DMatrix<f64>,
    /// Eigenvalues of `cov` in the column order of `eigen_basis`.
    pub eigen_values: DVector<f64>,
    pub generation: usize,
    pub best_ever: Option<Elite>,
    /// Best-ever cost after each completed generation.
    pub best_history: Vec<f64>,
    /// Number of times eigenvalue flooring changed the covariance.
    pub repairs: usize,
    rng: ChaCha8Rng,
}

/// Start a run: identity covariance, zero paths, generation 0.
pub fn init(cfg: &CmaesConfig) -> Result<CmaesState, CmaesError> {
    cfg.validate()?;
    let n = cfg.dim;
    Ok(CmaesState {
        mean: DVector::from_column_slice(&cfg.mean0),
        sigma: cfg.sigma0,
        cov: DMatrix::identity(n, n),
        path_sigma: DVector::zeros(n),
        path_c: DVector::zeros(n),
        eigen_basis: DMatrix::identity(n, n),
        eigen_values: DVector::from_element(n, 1.0),
        generation: 0,
        best_ever: None,
        best_history: Vec::new(),
        repairs: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
    })
}

/// Indices of the best `mu` candidates in ascending cost order.
///
/// Ties keep candidate order and NaN costs rank after every number.
pub fn rank_and_select(costs: &[f64], mu: usize) -> Vec<usize> {
    let nan = costs.iter().filter(|c| c.is_nan()).count();
    if nan > 0 {
        log::warn!("{nan} NaN cost(s) ranked last");
    }
    let key = |c: f64| if c.is_nan() { f64::INFINITY } else { c };
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| {
        key(costs[a])
            .total_cmp(&key(costs[b]))
            .then(costs[a].is_nan().cmp(&costs[b].is_nan()))
            .then(a.cmp(&b))
    });
    order.truncate(mu);
    order
}

/// Budget is checked first; convergence means the longest principal axis
/// of `σ²C` is shorter than `xtol`, or the best-ever cost improved by less
/// than `ftol` over the last [`STAGNATION_WINDOW`] generations.
pub fn should_terminate(state: &CmaesState, cfg: &CmaesConfig) -> Termination {
    if state.generation >= cfg.max_generations {
        return Termination::BudgetExhausted;
    }
    if state.max_eigenvalue() * state.sigma * state.sigma < cfg.xtol * cfg.xtol {
        return Termination::Converged;
    }
    let h = &state.best_history;
    if h.len() > STAGNATION_WINDOW {
        let last = h[h.len() - 1];
        let before = h[h.len() - 1 - STAGNATION_WINDOW];
        if before - last < cfg.ftol {
            return Termination::Converged;
        }
    }
    Termination::Continue
}

impl CmaesState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen_values.max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen_values.min()
    }

    /// Draws λ candidates `m + σ B D z` with `z ~ N(0, I)`.
    pub fn sample(&mut self, cfg: &CmaesConfig) -> Vec<DVector<f64>> {
        let n = self.dim();
        let bd = self.scaled_basis();
        (0..cfg.lambda)
            .map(|_| {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)));
                &self.mean + (&bd * z) * self.sigma
            })
            .collect()
    }

    /// `B D`, the square root factor used for sampling.
    fn scaled_basis(&self) -> DMatrix<f64> {
        let mut bd = self.eigen_basis.clone();
        for (j, mut col) in bd.column_iter_mut().enumerate() {
            col *= self.eigen_values[j].sqrt();
        }
        bd
    }

    /// `C^{-1/2} = B D⁻¹ Bᵀ`.
    fn inv_sqrt_cov(&self) -> DMatrix<f64> {
        let mut bdi = self.eigen_basis.clone();
        for (j, mut col) in bdi.column_iter_mut().enumerate() {
            col /= self.eigen_values[j].sqrt();
        }
        bdi * self.eigen_basis.transpose()
    }

    /// Adapts mean, paths, covariance and step size from the selected
    /// candidates (best first) and their costs, then refreshes the archive.
    pub fn update(&mut self, cfg: &CmaesConfig, selected: &[(DVector<f64>, f64)]) -> Result<(), CmaesError> {
        if selected.len() != cfg.mu {
            return Err(CmaesError::Dimension {
                expected: cfg.mu,
                got: selected.len(),
            });
        }
        if let Some((x, _)) = selected.iter().find(|(x, _)| x.len() != self.dim()) {
            return Err(CmaesError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let n = self.dim() as f64;
        let mu_eff = cfg.mu_eff();
        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = selected.iter().map(|(x, _)| (x - &old_mean) / self.sigma).collect();
        let mut y_w = DVector::zeros(self.dim());
        for (y, w) in ys.iter().zip(&cfg.recomb_weights) {
            y_w.axpy(*w, y, 1.0);
        }
        let mean = &old_mean + &y_w * self.sigma;

        let cs = cfg.c_sigma;
        self.path_sigma =
            &self.path_sigma * (1.0 - cs) + self.inv_sqrt_cov() * &y_w * (cs * (2.0 - cs) * mu_eff).sqrt();
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let ps_norm = self.path_sigma.norm();
        let decay = 1.0 - (1.0 - cs).powf(2.0 * (self.generation + 1) as f64);
        let h_sigma = ps_norm / decay.sqrt() < (1.4 + 2.0 / (n + 1.0)) * chi_n;

        let cc = cfg.c_c;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        self.path_c = &self.path_c * (1.0 - cc) + &y_w * (hs * (cc * (2.0 - cc) * mu_eff).sqrt());

        let delta_h = (1.0 - hs) * cc * (2.0 - cc);
        let w_sum: f64 = cfg.recomb_weights.iter().sum();
        let mut cov = &self.cov * (1.0 + cfg.c_1 * delta_h - cfg.c_1 - cfg.c_mu * w_sum);
        cov.ger(cfg.c_1, &self.path_c, &self.path_c, 1.0);
        for (y, w) in ys.iter().zip(&cfg.recomb_weights) {
            cov.ger(cfg.c_mu * w, y, y, 1.0);
        }
        self.cov = (&cov + cov.transpose()) * 0.5;

        self.sigma *= ((cs / cfg.d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        self.mean = mean;
        self.generation += 1;
        self.decompose()?;

        if let Some((x, c)) = selected.first() {
            let better = c.is_finite() && self.best_ever.as_ref().map_or(true, |e| *c < e.cost);
            if better {
                self.best_ever = Some(Elite {
                    x: x.as_slice().to_vec(),
                    cost: *c,
                    generation: self.generation,
                });
            }
        }
        if let Some(e) = &self.best_ever {
            self.best_history.push(e.cost);
        }
        Ok(())
    }

    /// Recomputes the eigen-decomposition, flooring eigenvalues at
    /// [`EIGEN_FLOOR`] times the largest and rebuilding `cov` if any moved.
    fn decompose(&mut self) -> Result<(), CmaesError> {
        if self.cov.iter().any(|v| !v.is_finite()) || !self.sigma.is_finite() {
            return Err(CmaesError::Numerical {
                generation: self.generation,
            });
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max();
        if !(max > 0.0) {
            return Err(CmaesError::Numerical {
                generation: self.generation,
            });
        }
        let floor = EIGEN_FLOOR * max;
        let mut values = eig.eigenvalues.clone();
        let mut floored = false;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                floored = true;
            }
        }
        self.eigen_basis = eig.eigenvectors;
        self.eigen_values = values;
        if floored {
            self.repairs += 1;
            log::warn!(
                "generation {}: covariance eigenvalues floored at {floor:e}",
                self.generation
            );
            let b = &self.eigen_basis;
            let c = b * DMatrix::from_diagonal(&self.eigen_values) * b.transpose();
            self.cov = (&c + c.transpose()) * 0.5;
        }
        Ok(())
    }

    /// One ask/tell cycle with a serial cost function. Returns the
    /// candidates and their costs.
    pub fn step<F>(&mut self, cfg: &CmaesConfig, mut f: F) -> Result<(Vec<DVector<f64>>, Vec<f64>), CmaesError>
    where
        F: FnMut(&DVector<f64>) -> f64,
    {
        let xs = self.sample(cfg);
        let costs: Vec<f64> = xs.iter().map(&mut f).collect();
        self.tell(cfg, &xs, &costs)?;
        Ok((xs, costs))
    }

    /// Ranks an evaluated population and updates the state from it.
    pub fn tell(&mut self, cfg: &CmaesConfig, xs: &[DVector<f64>], costs: &[f64]) -> Result<(), CmaesError> {
        if xs.len() != costs.len() {
            return Err(CmaesError::Dimension {
                expected: xs.len(),
                got: costs.len(),
            });
        }
        let selected: Vec<(DVector<f64>, f64)> = rank_and_select(costs, cfg.mu)
            .into_iter()
            .map(|i| (xs[i].clone(), costs[i]))
            .collect();
        self.update(cfg, &selected)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, CmaesError> {
        serde_json::from_str(text).map_err(|e| CmaesError::Checkpoint(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct RngRecord {
    seed: String,
    stream: String,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    dim: usize,
    mean: Vec<f64>,
    sigma: f64,
    cov: Vec<f64>,
    path_sigma: Vec<f64>,
    path_c: Vec<f64>,
    eigen_basis: Vec<f64>,
    eigen_values: Vec<f64>,
    generation: usize,
    best_ever: Option<Elite>,
    best_history: Vec<f64>,
    repairs: usize,
    rng: RngRecord,
}

impl From<CmaesState> for StateRecord {
    fn from(s: CmaesState) -> Self {
        let seed: String = s.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            dim: s.mean.len(),
            mean: s.mean.as_slice().to_vec(),
            sigma: s.sigma,
            cov: s.cov.as_slice().to_vec(),
            path_sigma: s.path_sigma.as_slice().to_vec(),
            path_c: s.path_c.as_slice().to_vec(),
            eigen_basis: s.eigen_basis.as_slice().to_vec(),
            eigen_values: s.eigen_values.as_slice().to_vec(),
            generation: s.generation,
            best_ever: s.best_ever,
            best_history: s.best_history,
            repairs: s.repairs,
            rng: RngRecord {
                seed,
                stream: s.rng.get_stream().to_string(),
                word_pos: s.rng.get_word_pos().to_string(),
            },
        }
    }
}

impl TryFrom<StateRecord> for CmaesState {
    type Error = String;

    fn try_from(r: StateRecord) -> Result<Self, String> {
        let n = r.dim;
        let check = |name: &str, v: &[f64], len: usize| {
            if v.len() != len {
                Err(format!("{name} has {} entries, expected {len}", v.len()))
            } else {
                Ok(())
            }
        };
        check("mean", &r.mean, n)?;
        check("cov", &r.cov, n * n)?;
        check("path_sigma", &r.path_sigma, n)?;
        check("path_c", &r.path_c, n)?;
        check("eigen_basis", &r.eigen_basis, n * n)?;
        check("eigen_values", &r.eigen_values, n)?;
        if r.rng.seed.len() != 64 {
            return Err("rng seed must be 64 hex digits".into());
        }
        let mut seed = [0u8; 32];
        for (k, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&r.rng.seed[2 * k..2 * k + 2], 16).map_err(|e| format!("rng seed: {e}"))?;
        }
        let stream: u64 = r.rng.stream.parse().map_err(|e| format!("rng stream: {e}"))?;
        let word_pos: u128 = r.rng.word_pos.parse().map_err(|e| format!("rng word_pos: {e}"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Ok(Self {
            mean: DVector::from_vec(r.mean),
            sigma: r.sigma,
            cov: DMatrix::from_vec(n, n, r.cov),
            path_sigma: DVector::from_vec(r.path_sigma),
            path_c: DVector::from_vec(r.path_c),
            eigen_basis: DMatrix::from_vec(n, n, r.eigen_basis),
            eigen_values: DVector::from_vec(r.eigen_values),
            generation: r.generation,
            best_ever: r.best_ever,
            best_history: r.best_history,
            repairs: r.repairs,
            rng,
        })
    }
}

/// One row of the per-generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_j: f64,
    pub mean_j: f64,
    pub sigma: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub pop_variance: f64,
}

impl GenerationRecord {
    /// Summarises a population after the state has been updated with it.
    ///
    /// `mean_j` averages the finite costs; `pop_variance` is the unbiased
    /// sample variance of the candidates averaged over coordinates.
    pub fn summarise(state: &CmaesState, xs: &[DVector<f64>], costs: &[f64]) -> Self {
        let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
        let mean_j = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Self {
            generation: state.generation,
            best_j: state.best_ever.as_ref().map_or(f64::NAN, |e| e.cost),
            mean_j,
            sigma: state.sigma,
            min_eig: state.min_eigenvalue(),
            max_eig: state.max_eigenvalue(),
            pop_variance: population_variance(xs),
        }
    }
}

/// Unbiased per-coordinate sample variance averaged over coordinates.
pub fn population_variance(xs: &[DVector<f64>]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs[0].len();
    let k = xs.len() as f64;
    let mut mean = DVector::zeros(n);
    for x in xs {
        mean += x;
    }
    mean /= k;
    let ss: f64 = xs.iter().map(|x| (x - &mean).norm_squared()).sum();
    ss / ((k - 1.0) * n as f64)
}

/// Writes the per-generation CSV log.
pub fn write_log<W: Write>(out: W, rows: &[GenerationRecord], header: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-generation CSV log with header.
pub fn read_log<R: std::io::Read>(input: R) -> csv::Result<Vec<GenerationRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
