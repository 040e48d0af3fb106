//! `starris` command-line front end.
//!
//! Config files are flat TOML documents. Powers are given in dBm, the Rician
//! factor and reference path loss in dB, positions as `[x, y]` meter pairs.
//! Every key is optional and falls back to the built-in default scenario.
//!
//! ```toml
//! num_elements = 80
//! num_subsurfaces = 20
//! power_dbm = 30
//! noise_dbm = -110
//! rician_k_db = 10
//! ref_pathloss_db = -30
//! ref_distance = 1
//! bs_pos = [0, 0]
//! ris_pos = [50, 0]
//! t_user_pos = [54, 3]
//! r_user_pos = [46, -3]
//! alpha_user_bs = 3.5
//! alpha_user_ris = 2.8
//! alpha_bs_ris = 2.2
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::channel::{Point2, SystemConfig};
use crate::error::Error;
use crate::estimation::{theoretical_mse, Scheme};
use crate::matrixkit::{gram_orthogonality_defect, numerical_rank, trace_inverse_gram, DEFAULT_RANK_TOL};
use crate::simulator::{
    db_to_linear, dbm_to_watts, linear_grid, sweep_beta, sweep_power, sweep_subsurfaces, SweepResult,
    DEFAULT_SWEEP_TRIALS,
};
use crate::training::{
    es_coupled_design, es_ideal_design, export_es_design, export_ts_design, onoff_schedule, ts_pattern,
    two_phase_design, verify_coupled_constraint, BaseMatrix,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Tolerance on `max |cos(θ - φ)|` for the coupled design.
pub const COUPLED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub num_elements: Option<usize>,
    pub num_subsurfaces: Option<usize>,
    pub power_dbm: Option<f64>,
    pub noise_dbm: Option<f64>,
    pub rician_k_db: Option<f64>,
    pub ref_pathloss_db: Option<f64>,
    pub ref_distance: Option<f64>,
    pub bs_pos: Option<[f64; 2]>,
    pub ris_pos: Option<[f64; 2]>,
    pub t_user_pos: Option<[f64; 2]>,
    pub r_user_pos: Option<[f64; 2]>,
    pub alpha_user_bs: Option<f64>,
    pub alpha_user_ris: Option<f64>,
    pub alpha_bs_ris: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    /// Converts to linear units over the defaults and checks invariants.
    pub fn into_system_config(self) -> Result<SystemConfig, Error> {
        let d = SystemConfig::default();
        let pt = |p: Option<[f64; 2]>, def: Point2| p.map_or(def, |[x, y]| Point2::new(x, y));
        let cfg = SystemConfig {
            num_elements: self.num_elements.unwrap_or(d.num_elements),
            num_subsurfaces: self.num_subsurfaces.unwrap_or(d.num_subsurfaces),
            total_power: self.power_dbm.map_or(d.total_power, dbm_to_watts),
            noise_power: self.noise_dbm.map_or(d.noise_power, dbm_to_watts),
            rician_k: self.rician_k_db.map_or(d.rician_k, db_to_linear),
            ref_pathloss: self.ref_pathloss_db.map_or(d.ref_pathloss, db_to_linear),
            ref_distance: self.ref_distance.unwrap_or(d.ref_distance),
            bs_pos: pt(self.bs_pos, d.bs_pos),
            ris_pos: pt(self.ris_pos, d.ris_pos),
            t_user_pos: pt(self.t_user_pos, d.t_user_pos),
            r_user_pos: pt(self.r_user_pos, d.r_user_pos),
            alpha_user_bs: self.alpha_user_bs.unwrap_or(d.alpha_user_bs),
            alpha_user_ris: self.alpha_user_ris.unwrap_or(d.alpha_user_ris),
            alpha_bs_ris: self.alpha_bs_ris.unwrap_or(d.alpha_bs_ris),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loads `path`, where the literal `default` selects the built-in scenario.
pub fn load_config(path: &str) -> Result<SystemConfig, Error> {
    if path == "default" {
        return Ok(SystemConfig::default());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{path}: {e}")))?;
    ConfigFile::parse(&text)?.into_system_config()
}

#[derive(Debug, Parser)]
#[command(name = "starris", version, about = "STAR-RIS uplink channel estimation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file path, or `default` for the built-in scenario.
    #[arg(long, global = true, default_value = "default")]
    pub config: String,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_SWEEP_TRIALS)]
    pub trials: usize,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Comma-separated subset of ts,es-ideal,es-coupled,onoff,two-phase.
    #[arg(long, global = true, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub grid_start: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub grid_stop: Option<f64>,

    #[arg(long, global = true)]
    pub grid_step: Option<f64>,

    /// Noise power override in watts (0 for noiseless runs).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,

    /// Also write the designs as CSV matrices into this directory (validate only).
    #[arg(long, global = true)]
    pub export_designs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check rank, orthogonality and the coupled-phase constraint of every design.
    Validate,
    /// Print the closed-form MSE of each scheme.
    MseTable,
    /// NMSE versus the T-user splitting ratio.
    SweepBeta,
    /// NMSE versus total transmit power (dBm).
    SweepPower,
    /// NMSE versus the number of sub-surfaces.
    SweepM,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Infeasible(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Config(e.to_string()),
            Error::InfeasibleDesign(_) | Error::Singular { .. } | Error::UnsupportedOrder(_) => {
                Failure::Infeasible(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<SystemConfig, Failure> {
    let mut cfg = load_config(&cli.config)?;
    if let Some(s2) = cli.sigma2 {
        cfg.noise_power = s2;
        cfg.validate()?;
    }
    if cli.trials == 0 {
        return Err(Failure::Usage("--trials must be >= 1".into()));
    }
    Ok(cfg)
}

fn resolve_schemes(cli: &Cli) -> Result<Vec<Scheme>, Failure> {
    match &cli.schemes {
        None => Ok(Scheme::ALL.to_vec()),
        Some(list) => list
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(|e| Failure::Usage(e.to_string())))
            .collect(),
    }
}

fn grid(cli: &Cli, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, Failure> {
    linear_grid(
        cli.grid_start.unwrap_or(start),
        cli.grid_stop.unwrap_or(stop),
        cli.grid_step.unwrap_or(step),
    )
    .map_err(|e| Failure::Usage(e.to_string()))
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn emit_csv(cli: &Cli, result: &SweepResult, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_failure(path, e))?;
            result.write_csv(BufWriter::new(file))?;
            writeln!(stdout, "wrote {} rows to {}", result.rows.len(), path.display())
                .map_err(|e| Failure::Usage(e.to_string()))?;
        }
        None => result.write_csv(&mut *stdout)?,
    }
    Ok(())
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Validate => validate(cli, &cfg, stdout),
        Command::MseTable => {
            let text = mse_table(&cfg, &resolve_schemes(cli)?)?;
            match &cli.out {
                Some(path) => std::fs::write(path, &text).map_err(|e| io_failure(path, e))?,
                None => stdout.write_all(text.as_bytes()).map_err(|e| Failure::Usage(e.to_string()))?,
            }
            Ok(EXIT_OK)
        }
        Command::SweepBeta => {
            let g = grid(cli, 0.05, 0.95, 0.05)?;
            let res = sweep_beta(&cfg, &g, cli.trials, cli.seed)?;
            emit_csv(cli, &res, stdout)?;
            Ok(EXIT_OK)
        }
        Command::SweepPower => {
            let g = grid(cli, 0.0, 40.0, 5.0)?;
            let res = sweep_power(&cfg, &g, &resolve_schemes(cli)?, cli.trials, cli.seed)?;
            emit_csv(cli, &res, stdout)?;
            Ok(EXIT_OK)
        }
        Command::SweepM => {
            let g = grid(cli, 10.0, 40.0, 10.0)?;
            if g.iter().any(|m| m.fract() != 0.0 || *m < 1.0) {
                return Err(Failure::Usage("sub-surface grid must hold positive integers".into()));
            }
            let ms: Vec<usize> = g.iter().map(|&m| m as usize).collect();
            let res = sweep_subsurfaces(&cfg, &ms, &resolve_schemes(cli)?, cli.trials, cli.seed)?;
            emit_csv(cli, &res, stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Closed-form MSE per scheme for the configured `M`, `p` and `σ²`.
pub fn mse_table(cfg: &SystemConfig, schemes: &[Scheme]) -> Result<String, Error> {
    let m = cfg.num_subsurfaces;
    let (p, s2) = (cfg.total_power, cfg.noise_power);
    let mut out = format!("# M={m} p={p:e} W sigma2={s2:e} W\nscheme,formula,mse\n");
    for &s in schemes {
        let formula = match s {
            Scheme::Ts => "2σ²/p".to_string(),
            Scheme::EsIdeal => "(4M+2)/(M+1)·σ²/p".to_string(),
            Scheme::EsCoupled => "2σ²/p·Tr[(VᴴV)⁻¹]".to_string(),
            Scheme::OnOff => "(4M+2)·σ²/p".to_string(),
            Scheme::TwoPhase => "10σ²/p".to_string(),
        };
        out.push_str(&format!("{s},{formula},{:.6e}\n", theoretical_mse(s, m, p, s2)?));
    }
    let ratio = theoretical_mse(Scheme::EsIdeal, m, p, 1.0)? / theoretical_mse(Scheme::Ts, m, p, 1.0)?;
    out.push_str(&format!("# es-ideal/ts ratio = (4M+2)/(2M+2) = {ratio:.4}\n"));
    Ok(out)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn validate(cli: &Cli, cfg: &SystemConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let m = cfg.num_subsurfaces;
    let n = 2 * m + 2;
    let ideal_trace = (4 * m + 2) as f64 / n as f64;
    let mut checks = Vec::new();

    let ts = ts_pattern(m);
    let obs = ts.observation_matrix();
    let rank = numerical_rank(&obs, DEFAULT_RANK_TOL);
    let defect = gram_orthogonality_defect(&obs)?;
    let trace = trace_inverse_gram(&obs)?;
    checks.push(Check {
        name: "ts",
        passed: rank == m + 1 && defect <= 1e-12 && (trace - 1.0).abs() <= 1e-9,
        detail: format!("rank {rank}/{} defect {defect:.3e} trace {trace:.9} (ideal 1)", m + 1),
    });

    let ideal = es_ideal_design(m, BaseMatrix::Dft)?;
    let v = ideal.observation_matrix();
    let rank = numerical_rank(&v, DEFAULT_RANK_TOL);
    let defect = gram_orthogonality_defect(&v)?;
    let trace = trace_inverse_gram(&v)?;
    checks.push(Check {
        name: "es-ideal",
        passed: rank == n && defect <= 1e-12 && (trace - ideal_trace).abs() <= 1e-9,
        detail: format!("rank {rank}/{n} defect {defect:.3e} trace {trace:.9} (ideal {ideal_trace:.9})"),
    });

    match es_coupled_design(m, BaseMatrix::Dft) {
        Ok(coupled) => {
            let v = coupled.observation_matrix();
            let check = verify_coupled_constraint(&coupled, COUPLED_TOL);
            let rank = numerical_rank(&v, DEFAULT_RANK_TOL);
            let defect = gram_orthogonality_defect(&v)?;
            let trace = trace_inverse_gram(&v)?;
            checks.push(Check {
                name: "es-coupled",
                passed: check.satisfied && rank == n && (trace / ideal_trace - 1.0).abs() <= 0.01,
                detail: format!(
                    "max|cos(θ-φ)| {:.3e} <= {COUPLED_TOL:e}, rank {rank}/{n} defect {defect:.3e} trace {trace:.9} (ideal {ideal_trace:.9})",
                    check.max_deviation
                ),
            });
            if let Some(dir) = &cli.export_designs {
                std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
                export_ts_design(&ts, dir, "ts")?;
                export_es_design(&ideal, dir, "es_ideal")?;
                export_es_design(&coupled, dir, "es_coupled")?;
            }
        }
        Err(e) => checks.push(Check {
            name: "es-coupled",
            passed: false,
            detail: e.to_string(),
        }),
    }

    let onoff = onoff_schedule(m).period_matrix();
    let rank = numerical_rank(&onoff, DEFAULT_RANK_TOL);
    checks.push(Check {
        name: "onoff",
        passed: rank == m + 1,
        detail: format!("per-period rank {rank}/{}", m + 1),
    });

    let two = two_phase_design(m);
    let w = two.cascaded.cascaded_observation_matrix();
    let rank = numerical_rank(&w, DEFAULT_RANK_TOL);
    let defect = gram_orthogonality_defect(&w)?;
    checks.push(Check {
        name: "two-phase",
        passed: rank == 2 * m && defect <= 1e-12 && two.total_slots() == n,
        detail: format!("phase-2 rank {rank}/{} defect {defect:.3e} slots {}", 2 * m, two.total_slots()),
    });

    let mut all = true;
    let w = |s: &mut dyn Write, line: String| writeln!(s, "{line}").map_err(|e| Failure::Usage(e.to_string()));
    w(stdout, format!("# M={m} tau={n}"))?;
    for c in &checks {
        all &= c.passed;
        w(stdout, format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))?;
    }
    if n.is_power_of_two() {
        let note = match es_coupled_design(m, BaseMatrix::Hadamard) {
            Ok(_) => "coupled design feasible".to_string(),
            Err(e) => e.to_string(),
        };
        w(stdout, format!("INFO hadamard: {note}"))?;
    }
    Ok(if all { EXIT_OK } else { EXIT_INFEASIBLE })
}
