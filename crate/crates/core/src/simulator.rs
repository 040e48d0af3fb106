//! Seeded Monte Carlo engine and the three NMSE sweeps.
//!
//! Every trial draws its channel and noise from its own ChaCha stream, keyed
//! by `(seed, trial index)`, and per-trial errors are reduced in index order
//! with pairwise summation. Results are therefore bit-identical whatever the
//! rayon schedule.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{generate_realization, SystemConfig};
use crate::error::{Error, Result};
use crate::estimation::{EstimationReport, Estimator, Scheme, UserMse};
use crate::training::{es_coupled_design, BaseMatrix};

pub const DEFAULT_SWEEP_TRIALS: usize = 10_000;
pub const DEFAULT_ACCEPTANCE_TRIALS: usize = 100_000;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of the mean.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregated Monte Carlo statistics of one scheme at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialAggregate {
    pub scheme: String,
    pub trials: usize,
    pub seed: u64,
    pub mse: f64,
    pub mse_stderr: f64,
    pub mse_t: f64,
    pub mse_t_stderr: f64,
    pub mse_r: f64,
    pub mse_r_stderr: f64,
    /// Mean `‖x‖²` over trials; `mean_power_t + mean_power_r`.
    pub mean_power: f64,
    pub mean_power_t: f64,
    pub mean_power_r: f64,
    pub theory: UserMse,
}

impl TrialAggregate {
    /// `E‖x̂ - x‖² / E‖x‖²`.
    pub fn nmse(&self) -> f64 {
        self.mse / self.mean_power
    }

    pub fn nmse_stderr(&self) -> f64 {
        self.mse_stderr / self.mean_power
    }

    /// Per-user errors normalized by the total composite power.
    pub fn nmse_joint(&self) -> (f64, f64) {
        (self.mse_t / self.mean_power, self.mse_r / self.mean_power)
    }

    /// Per-user errors normalized by that user's own channel power.
    pub fn nmse_own(&self) -> (f64, f64) {
        (self.mse_t / self.mean_power_t, self.mse_r / self.mean_power_r)
    }
}

/// Runs `trials` independent channel and noise draws through `estimator`.
pub fn run_trials(estimator: &Estimator, cfg: &SystemConfig, trials: usize, seed: u64) -> Result<TrialAggregate> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    cfg.validate()?;
    if estimator.num_subsurfaces() != cfg.num_subsurfaces {
        return Err(Error::DimensionMismatch {
            expected: cfg.num_subsurfaces,
            got: estimator.num_subsurfaces(),
        });
    }
    let reports: Vec<EstimationReport> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let real = generate_realization(cfg, &mut rng)?;
            estimator.run(&real, cfg.total_power, cfg.noise_power, &mut rng)
        })
        .collect::<Result<_>>()?;

    let column = |f: fn(&EstimationReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let (mse, mse_stderr) = mean_stderr(&column(|r| r.squared_error));
    let (mse_t, mse_t_stderr) = mean_stderr(&column(|r| r.squared_error_t));
    let (mse_r, mse_r_stderr) = mean_stderr(&column(|r| r.squared_error_r));
    let (mean_power_t, _) = mean_stderr(&column(EstimationReport::truth_power_t));
    let (mean_power_r, _) = mean_stderr(&column(EstimationReport::truth_power_r));

    Ok(TrialAggregate {
        scheme: estimator.label().to_string(),
        trials,
        seed,
        mse,
        mse_stderr,
        mse_t,
        mse_t_stderr,
        mse_r,
        mse_r_stderr,
        mean_power: mean_power_t + mean_power_r,
        mean_power_t,
        mean_power_r,
        theory: estimator.theoretical_mse(cfg.total_power, cfg.noise_power)?,
    })
}

pub fn run_scheme(scheme: Scheme, cfg: &SystemConfig, trials: usize, seed: u64) -> Result<TrialAggregate> {
    let est = Estimator::for_scheme(scheme, cfg.num_subsurfaces)?;
    run_trials(&est, cfg, trials, seed)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub nmse: f64,
    pub mse: f64,
    pub theory_mse: Option<f64>,
    pub trials: usize,
    /// Standard error of `mse`.
    pub stderr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub sweep_var: String,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    fn new(sweep_var: &str, grid: &[f64], seed: u64) -> Result<Self> {
        check_grid(grid)?;
        Ok(Self {
            sweep_var: sweep_var.to_string(),
            grid: grid.to_vec(),
            seed,
            rows: Vec::new(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, value: f64, scheme: &str, nmse: f64, mse: f64, theory: Option<f64>, trials: usize, stderr: f64) {
        self.rows.push(SweepRow {
            sweep_var: self.sweep_var.clone(),
            value,
            scheme: scheme.to_string(),
            nmse,
            mse,
            theory_mse: theory,
            trials,
            stderr,
            seed: self.seed,
        });
    }

    fn push_total(&mut self, value: f64, agg: &TrialAggregate) {
        self.push(value, &agg.scheme, agg.nmse(), agg.mse, Some(agg.theory.total), agg.trials, agg.mse_stderr);
    }

    pub fn row(&self, value: f64, scheme: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && (r.value - value).abs() <= 1e-9 * value.abs().max(1.0))
    }

    /// Rows of `scheme` in grid order.
    pub fn series(&self, scheme: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
        }
        if self.rows.is_empty() {
            w.write_record(["sweep_var", "value", "scheme", "nmse", "mse", "theory_mse", "trials", "stderr", "seed"])
                .map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
        }
        w.flush().map_err(|e| Error::Domain(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Domain(e.to_string()))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("sweep grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sweep grid has non-finite values".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("sweep grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `start, start + step, ...` up to and including `stop` (within rounding).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !step.is_finite() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::Domain(format!("bad grid {start}:{step}:{stop}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let v = start + i as f64 * step;
            (v * 1e9).round() / 1e9
        })
        .collect())
}

/// ES NMSE per user versus the T-user splitting ratio, `β_r = 1 - β_t`.
///
/// Rows per grid point: `es` (both users), `es-t-joint` / `es-r-joint`
/// (per-user error over the total channel power), `es-t-own` / `es-r-own`
/// (per-user error over that user's power) and the `ts` reference.
pub fn sweep_beta(cfg: &SystemConfig, grid: &[f64], trials: usize, seed: u64) -> Result<SweepResult> {
    let mut result = SweepResult::new("beta_t", grid, seed)?;
    if grid.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
        return Err(Error::Domain("beta_t grid must lie in (0, 1)".into()));
    }
    let m = cfg.num_subsurfaces;
    let base = es_coupled_design(m, BaseMatrix::Dft)?;
    let ts = run_scheme(Scheme::Ts, cfg, trials, seed)?;
    for &bt in grid {
        let design = base.with_uniform_splitting(bt, 1.0 - bt)?;
        let agg = run_trials(&Estimator::es(design, "es")?, cfg, trials, seed)?;
        let (jt, jr) = agg.nmse_joint();
        let (ot, or) = agg.nmse_own();
        result.push_total(bt, &agg);
        result.push(bt, "es-t-joint", jt, agg.mse_t, agg.theory.t, trials, agg.mse_t_stderr);
        result.push(bt, "es-r-joint", jr, agg.mse_r, agg.theory.r, trials, agg.mse_r_stderr);
        result.push(bt, "es-t-own", ot, agg.mse_t, agg.theory.t, trials, agg.mse_t_stderr);
        result.push(bt, "es-r-own", or, agg.mse_r, agg.theory.r, trials, agg.mse_r_stderr);
        result.push_total(bt, &ts);
    }
    Ok(result)
}

/// NMSE of each scheme versus total transmit power in dBm.
pub fn sweep_power(
    cfg: &SystemConfig,
    grid_dbm: &[f64],
    schemes: &[Scheme],
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    let mut result = SweepResult::new("p_dbm", grid_dbm, seed)?;
    let estimators = schemes
        .iter()
        .map(|&s| Estimator::for_scheme(s, cfg.num_subsurfaces))
        .collect::<Result<Vec<_>>>()?;
    for &p in grid_dbm {
        let point = SystemConfig {
            total_power: dbm_to_watts(p),
            ..cfg.clone()
        };
        for est in &estimators {
            result.push_total(p, &run_trials(est, &point, trials, seed)?);
        }
    }
    Ok(result)
}

/// NMSE of each scheme versus the number of sub-surfaces. The group size
/// `M₀/M` of `cfg` is held fixed, so `M₀` scales with `M`.
pub fn sweep_subsurfaces(
    cfg: &SystemConfig,
    grid: &[usize],
    schemes: &[Scheme],
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    let values: Vec<f64> = grid.iter().map(|&m| m as f64).collect();
    let mut result = SweepResult::new("m", &values, seed)?;
    if grid.contains(&0) {
        return Err(Error::Domain("sub-surface counts must be >= 1".into()));
    }
    cfg.validate()?;
    let group = cfg.num_elements / cfg.num_subsurfaces;
    for &m in grid {
        let point = SystemConfig {
            num_subsurfaces: m,
            num_elements: group * m,
            ..cfg.clone()
        };
        for &s in schemes {
            result.push_total(m as f64, &run_scheme(s, &point, trials, seed)?);
        }
    }
    Ok(result)
}
