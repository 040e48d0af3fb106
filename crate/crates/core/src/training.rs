//! Training designs: pilots, transmission/reflection patterns and splitting
//! ratios for every estimation scheme, plus the observation matrices they
//! induce.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrixkit::{dft_matrix, hadamard_matrix, numerical_rank, ComplexMatrix, ComplexVector, DEFAULT_RANK_TOL};

const UNIT_MODULUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseMatrix {
    Dft,
    Hadamard,
}

impl BaseMatrix {
    pub fn build(self, n: usize) -> Result<ComplexMatrix> {
        match self {
            BaseMatrix::Dft => Ok(dft_matrix(n)),
            BaseMatrix::Hadamard => hadamard_matrix(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseModel {
    /// Transmission and reflection phases chosen independently.
    Ideal,
    /// Phases tied by `cos(θ - φ) = 0`.
    Coupled,
}

fn check_unit_modulus(what: &str, values: impl IntoIterator<Item = Complex64>) -> Result<()> {
    for z in values {
        if (z.norm() - 1.0).abs() > UNIT_MODULUS_TOL {
            return Err(Error::InfeasibleDesign(format!("{what} entry {z} is not unit modulus")));
        }
    }
    Ok(())
}

/// Time-switching design, shared by the T and R periods.
#[derive(Debug, Clone, PartialEq)]
pub struct TsDesign {
    pub tau_t: usize,
    pub tau_r: usize,
    pub pilots: ComplexVector,
    /// `τ × (M+1)`; row `i` is `[1, θ_i]`.
    pub pattern: ComplexMatrix,
}

impl TsDesign {
    pub fn new(pilots: ComplexVector, pattern: ComplexMatrix) -> Result<Self> {
        let tau = pattern.rows();
        if pilots.len() != tau {
            return Err(Error::DimensionMismatch {
                expected: tau,
                got: pilots.len(),
            });
        }
        check_unit_modulus("pilot", pilots.iter().copied())?;
        check_unit_modulus("pattern", pattern.as_slice().iter().copied())?;
        if (0..tau).any(|i| (pattern[(i, 0)] - Complex64::new(1.0, 0.0)).norm() > UNIT_MODULUS_TOL) {
            return Err(Error::InfeasibleDesign("first pattern column must be the direct-link ones".into()));
        }
        let m1 = pattern.cols();
        let rank = numerical_rank(&pattern, DEFAULT_RANK_TOL);
        if rank != m1 {
            return Err(Error::InfeasibleDesign(format!("pattern rank {rank} != {m1}")));
        }
        Ok(Self {
            tau_t: tau,
            tau_r: tau,
            pilots,
            pattern,
        })
    }

    pub fn num_subsurfaces(&self) -> usize {
        self.pattern.cols() - 1
    }

    /// `diag(s) Θ`.
    pub fn observation_matrix(&self) -> ComplexMatrix {
        let p = &self.pattern;
        ComplexMatrix::from_fn(p.rows(), p.cols(), |i, j| self.pilots[i] * p[(i, j)])
    }
}

/// DFT pattern of order `M+1` with all-ones pilots.
pub fn ts_pattern(m: usize) -> TsDesign {
    assert!(m >= 1, "need at least one sub-surface");
    TsDesign::new(vec![Complex64::new(1.0, 0.0); m + 1], dft_matrix(m + 1)).expect("DFT pattern is always feasible")
}

/// Energy-splitting design with both users transmitting simultaneously.
#[derive(Debug, Clone, PartialEq)]
pub struct EsDesign {
    pub tau: usize,
    pub s_t: ComplexVector,
    pub s_r: ComplexVector,
    /// `τ × M` unit-modulus transmission phases.
    pub theta_bar: ComplexMatrix,
    /// `τ × M` unit-modulus reflection phases.
    pub phi_bar: ComplexMatrix,
    /// Power splitting ratios; the observation matrix uses their square roots.
    pub beta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub base: BaseMatrix,
    pub phase_model: PhaseModel,
}

impl EsDesign {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s_t: ComplexVector,
        s_r: ComplexVector,
        theta_bar: ComplexMatrix,
        phi_bar: ComplexMatrix,
        beta_t: Vec<f64>,
        beta_r: Vec<f64>,
        base: BaseMatrix,
        phase_model: PhaseModel,
    ) -> Result<Self> {
        let tau = theta_bar.rows();
        let m = theta_bar.cols();
        for (got, expected) in [
            (s_t.len(), tau),
            (s_r.len(), tau),
            (phi_bar.rows(), tau),
            (phi_bar.cols(), m),
            (beta_t.len(), m),
            (beta_r.len(), m),
        ] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        check_unit_modulus("s_t", s_t.iter().copied())?;
        check_unit_modulus("s_r", s_r.iter().copied())?;
        check_unit_modulus("theta_bar", theta_bar.as_slice().iter().copied())?;
        check_unit_modulus("phi_bar", phi_bar.as_slice().iter().copied())?;
        validate_splitting(&beta_t, &beta_r)?;
        Ok(Self {
            tau,
            s_t,
            s_r,
            theta_bar,
            phi_bar,
            beta_t,
            beta_r,
            base,
            phase_model,
        })
    }

    pub fn num_subsurfaces(&self) -> usize {
        self.theta_bar.cols()
    }

    /// Same patterns and pilots with new splitting ratios.
    pub fn with_splitting(&self, beta_t: Vec<f64>, beta_r: Vec<f64>) -> Result<Self> {
        let m = self.num_subsurfaces();
        if beta_t.len() != m || beta_r.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: if beta_t.len() != m { beta_t.len() } else { beta_r.len() },
            });
        }
        validate_splitting(&beta_t, &beta_r)?;
        Ok(Self {
            beta_t,
            beta_r,
            ..self.clone()
        })
    }

    pub fn with_uniform_splitting(&self, beta_t: f64, beta_r: f64) -> Result<Self> {
        let m = self.num_subsurfaces();
        self.with_splitting(vec![beta_t; m], vec![beta_r; m])
    }

    /// `[diag(s_t) Θ̄ diag(√β_t), diag(s_r) Φ̄ diag(√β_r)]`, `τ × 2M`.
    pub fn cascaded_observation_matrix(&self) -> ComplexMatrix {
        let m = self.num_subsurfaces();
        ComplexMatrix::from_fn(self.tau, 2 * m, |i, j| {
            if j < m {
                self.s_t[i] * self.theta_bar[(i, j)] * self.beta_t[j].sqrt()
            } else {
                self.s_r[i] * self.phi_bar[(i, j - m)] * self.beta_r[j - m].sqrt()
            }
        })
    }

    /// `[s_t, diag(s_t) Θ̄ diag(√β_t), s_r, diag(s_r) Φ̄ diag(√β_r)]`, `τ × (2M+2)`.
    pub fn observation_matrix(&self) -> ComplexMatrix {
        let m = self.num_subsurfaces();
        let cascaded = self.cascaded_observation_matrix();
        ComplexMatrix::from_fn(self.tau, 2 * m + 2, |i, j| match j {
            0 => self.s_t[i],
            j if j <= m => cascaded[(i, j - 1)],
            j if j == m + 1 => self.s_r[i],
            j => cascaded[(i, j - 2)],
        })
    }

    /// `max |cos(θ_{m,i} - φ_{m,i})|` over all slots and sub-surfaces.
    pub fn coupled_deviation(&self) -> f64 {
        self.theta_bar
            .as_slice()
            .iter()
            .zip(self.phi_bar.as_slice())
            .map(|(t, p)| (t * p.conj()).re.abs())
            .fold(0.0, f64::max)
    }
}

fn validate_splitting(beta_t: &[f64], beta_r: &[f64]) -> Result<()> {
    for (m, (&bt, &br)) in beta_t.iter().zip(beta_r).enumerate() {
        if !(bt > 0.0 && br > 0.0) {
            return Err(Error::InfeasibleDesign(format!("splitting ratios of sub-surface {m} must be > 0")));
        }
        if bt + br > 1.0 + 1e-12 {
            return Err(Error::InfeasibleDesign(format!(
                "splitting ratios of sub-surface {m} sum to {} > 1",
                bt + br
            )));
        }
    }
    Ok(())
}

/// Splits the columns of `D_{2M+2}` between the two users: `s_t` is column
/// 0, `Θ̄` divides columns `1..=M` by `s_t`, `Φ̄` divides columns
/// `M+2..2M+2` by `s_r`.
fn es_from_base(m: usize, base: BaseMatrix, s_r: Option<ComplexVector>, phase_model: PhaseModel) -> Result<EsDesign> {
    assert!(m >= 1, "need at least one sub-surface");
    let n = 2 * m + 2;
    let d = base.build(n)?;
    let s_t = d.column(0);
    let s_r = s_r.unwrap_or_else(|| d.column(m + 1));
    let theta_bar = ComplexMatrix::from_fn(n, m, |i, k| d[(i, k + 1)] / s_t[i]);
    let phi_bar = ComplexMatrix::from_fn(n, m, |i, k| d[(i, k + m + 2)] / s_r[i]);
    EsDesign::new(s_t, s_r, theta_bar, phi_bar, vec![0.5; m], vec![0.5; m], base, phase_model)
}

/// Orthogonal design for independently controlled phases.
pub fn es_ideal_design(m: usize, base: BaseMatrix) -> Result<EsDesign> {
    es_from_base(m, base, None, PhaseModel::Ideal)
}

/// Coupled-phase patterns with `s_r = [j, -j, j, -j, ...]`, without the
/// rank check that [`es_coupled_design`] applies.
pub fn es_coupled_patterns(m: usize, base: BaseMatrix) -> Result<EsDesign> {
    let s_r = (0..2 * m + 2)
        .map(|i| Complex64::new(0.0, if i % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();
    es_from_base(m, base, Some(s_r), PhaseModel::Coupled)
}

pub fn es_coupled_design(m: usize, base: BaseMatrix) -> Result<EsDesign> {
    let design = es_coupled_patterns(m, base)?;
    let rank = numerical_rank(&design.observation_matrix(), DEFAULT_RANK_TOL);
    if rank != 2 * m + 2 {
        return Err(Error::InfeasibleDesign(format!(
            "coupled observation matrix has rank {rank} < {}",
            2 * m + 2
        )));
    }
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledCheck {
    pub satisfied: bool,
    pub max_deviation: f64,
}

pub fn verify_coupled_constraint(design: &EsDesign, tol: f64) -> CoupledCheck {
    let max_deviation = design.coupled_deviation();
    CoupledCheck {
        satisfied: max_deviation <= tol,
        max_deviation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    AllOff,
    /// Sub-surface `m` on in transmission mode.
    Transmit(usize),
    /// Sub-surface `m` on in reflection mode.
    Reflect(usize),
}

/// ON/OFF benchmark schedule: T period then R period, `M+1` slots each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnOffSchedule {
    pub num_subsurfaces: usize,
    pub slots: Vec<SlotState>,
}

impl OnOffSchedule {
    pub fn total_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn t_period(&self) -> &[SlotState] {
        &self.slots[..=self.num_subsurfaces]
    }

    pub fn r_period(&self) -> &[SlotState] {
        &self.slots[self.num_subsurfaces + 1..]
    }

    /// 0/1 observation matrix of one user period (`(M+1) × (M+1)`).
    pub fn period_matrix(&self) -> ComplexMatrix {
        let m = self.num_subsurfaces;
        ComplexMatrix::from_fn(m + 1, m + 1, |i, j| {
            if j == 0 || i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

pub fn onoff_schedule(m: usize) -> OnOffSchedule {
    assert!(m >= 1, "need at least one sub-surface");
    let slots = std::iter::once(SlotState::AllOff)
        .chain((0..m).map(SlotState::Transmit))
        .chain(std::iter::once(SlotState::AllOff))
        .chain((0..m).map(SlotState::Reflect))
        .collect();
    OnOffSchedule {
        num_subsurfaces: m,
        slots,
    }
}

/// Two-phase benchmark: direct links with the surface off, then cascaded
/// links with the direct contribution removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseDesign {
    /// Phase-1 pilots, `2 × 2` with columns `s_t`, `s_r`.
    pub direct_pilots: ComplexMatrix,
    /// Phase-2 design over `2M` slots; only its cascaded columns are estimated.
    pub cascaded: EsDesign,
}

impl TwoPhaseDesign {
    pub fn num_subsurfaces(&self) -> usize {
        self.cascaded.num_subsurfaces()
    }

    pub fn total_slots(&self) -> usize {
        self.direct_pilots.rows() + self.cascaded.tau
    }

    /// `τ₂ × 2` matrix with the phase-2 pilots, which carry the direct links.
    pub fn phase2_direct_matrix(&self) -> ComplexMatrix {
        let c = &self.cascaded;
        ComplexMatrix::from_fn(c.tau, 2, |i, j| if j == 0 { c.s_t[i] } else { c.s_r[i] })
    }
}

pub fn two_phase_design(m: usize) -> TwoPhaseDesign {
    assert!(m >= 1, "need at least one sub-surface");
    let direct_pilots = dft_matrix(2);
    let d = dft_matrix(2 * m);
    let ones = vec![Complex64::new(1.0, 0.0); 2 * m];
    let theta_bar = ComplexMatrix::from_fn(2 * m, m, |i, k| d[(i, k)]);
    let phi_bar = ComplexMatrix::from_fn(2 * m, m, |i, k| d[(i, k + m)]);
    let cascaded = EsDesign::new(
        ones.clone(),
        ones,
        theta_bar,
        phi_bar,
        vec![0.5; m],
        vec![0.5; m],
        BaseMatrix::Dft,
        PhaseModel::Ideal,
    )
    .expect("DFT phase-2 design is always feasible");
    TwoPhaseDesign {
        direct_pilots,
        cascaded,
    }
}

pub trait Observation {
    fn observation_matrix(&self) -> ComplexMatrix;
}

impl Observation for TsDesign {
    fn observation_matrix(&self) -> ComplexMatrix {
        TsDesign::observation_matrix(self)
    }
}

impl Observation for EsDesign {
    fn observation_matrix(&self) -> ComplexMatrix {
        EsDesign::observation_matrix(self)
    }
}

pub fn assemble_observation_matrix<D: Observation + ?Sized>(design: &D) -> ComplexMatrix {
    design.observation_matrix()
}

/// One CSV line per matrix row; each entry takes two fields, `re,im`.
pub fn write_matrix_csv<W: Write>(matrix: &ComplexMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let io_err = |e: csv::Error| Error::Domain(format!("csv write failed: {e}"));
    for i in 0..matrix.rows() {
        let record: Vec<String> = matrix
            .row(i)
            .iter()
            .flat_map(|z| [z.re.to_string(), z.im.to_string()])
            .collect();
        w.write_record(&record).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("csv flush failed: {e}")))?;
    Ok(())
}

fn column_matrix(v: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(v.len(), 1, |i, _| v[i])
}

fn write_named(dir: &Path, name: &str, matrix: &ComplexMatrix) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    write_matrix_csv(matrix, BufWriter::new(file))?;
    Ok(path)
}

/// Writes pilots, patterns and the observation matrix of an ES design into `dir`.
pub fn export_es_design(design: &EsDesign, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_named(dir, &format!("{prefix}_s_t.csv"), &column_matrix(&design.s_t))?,
        write_named(dir, &format!("{prefix}_s_r.csv"), &column_matrix(&design.s_r))?,
        write_named(dir, &format!("{prefix}_theta_bar.csv"), &design.theta_bar)?,
        write_named(dir, &format!("{prefix}_phi_bar.csv"), &design.phi_bar)?,
        write_named(dir, &format!("{prefix}_observation.csv"), &design.observation_matrix())?,
    ])
}

pub fn export_ts_design(design: &TsDesign, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_named(dir, &format!("{prefix}_pilots.csv"), &column_matrix(&design.pilots))?,
        write_named(dir, &format!("{prefix}_pattern.csv"), &design.pattern)?,
        write_named(dir, &format!("{prefix}_observation.csv"), &design.observation_matrix())?,
    ])
}
