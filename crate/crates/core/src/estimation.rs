//! Pilot reception and least-squares estimation for every scheme, plus the
//! closed-form MSE expressions they are checked against.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{complex_gaussian, ChannelRealization, Protocol};
use crate::error::{Error, Result};
use crate::matrixkit::{inverse_gram_diagonal, pseudo_inverse, trace_inverse_gram, ComplexMatrix, ComplexVector};
use crate::training::{
    es_coupled_design, es_ideal_design, onoff_schedule, ts_pattern, two_phase_design, BaseMatrix, EsDesign,
    OnOffSchedule, SlotState, TsDesign, TwoPhaseDesign,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Ts,
    EsIdeal,
    EsCoupled,
    OnOff,
    TwoPhase,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Ts, Scheme::EsIdeal, Scheme::EsCoupled, Scheme::OnOff, Scheme::TwoPhase];

    pub fn id(self) -> &'static str {
        match self {
            Scheme::Ts => "ts",
            Scheme::EsIdeal => "es-ideal",
            Scheme::EsCoupled => "es-coupled",
            Scheme::OnOff => "onoff",
            Scheme::TwoPhase => "two-phase",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.id() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown scheme '{s}'")))
    }
}

/// Squared errors of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub scheme: String,
    /// Composite estimate in `[h_t, q_t, h_r, q_r]` order.
    pub estimate: ComplexVector,
    pub truth: ComplexVector,
    pub squared_error: f64,
    pub squared_error_t: f64,
    pub squared_error_r: f64,
}

impl EstimationReport {
    pub fn new(scheme: &str, estimate: ComplexVector, truth: ComplexVector) -> Self {
        let half = truth.len() / 2;
        let err = |range: std::ops::Range<usize>| -> f64 {
            range.map(|i| (estimate[i] - truth[i]).norm_sqr()).sum()
        };
        let squared_error_t = err(0..half);
        let squared_error_r = err(half..truth.len());
        Self {
            scheme: scheme.to_string(),
            squared_error: squared_error_t + squared_error_r,
            squared_error_t,
            squared_error_r,
            estimate,
            truth,
        }
    }

    pub fn truth_power_t(&self) -> f64 {
        let half = self.truth.len() / 2;
        self.truth[..half].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn truth_power_r(&self) -> f64 {
        let half = self.truth.len() / 2;
        self.truth[half..].iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `amplitude · A x + n` with `n ~ CN(0, σ²)` drawn from `rng`.
pub fn receive<R: Rng + ?Sized>(
    obs: &ComplexMatrix,
    x: &[Complex64],
    amplitude: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<ComplexVector> {
    let clean = obs.mul_vec(x)?;
    let sigma = noise_power.sqrt();
    Ok(clean
        .into_iter()
        .map(|y| amplitude * y + sigma * complex_gaussian(rng))
        .collect())
}

/// Received pilots of the T and R periods.
#[derive(Debug, Clone, PartialEq)]
pub struct TsReception {
    pub y_t: ComplexVector,
    pub y_r: ComplexVector,
}

/// `y = √p Θ x_k + n` for each period; T period first.
pub fn simulate_ts_reception<R: Rng + ?Sized>(
    design: &TsDesign,
    real: &ChannelRealization,
    p: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<TsReception> {
    let obs = design.observation_matrix();
    let y_t = receive(&obs, &real.composite_vector(Protocol::TsUserT), p.sqrt(), noise_power, rng)?;
    let y_r = receive(&obs, &real.composite_vector(Protocol::TsUserR), p.sqrt(), noise_power, rng)?;
    Ok(TsReception { y_t, y_r })
}

/// `y = √(p/2) V x + n`.
pub fn simulate_es_reception<R: Rng + ?Sized>(
    design: &EsDesign,
    real: &ChannelRealization,
    p: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<ComplexVector> {
    receive(
        &design.observation_matrix(),
        &real.composite_vector(Protocol::Es),
        (p / 2.0).sqrt(),
        noise_power,
        rng,
    )
}

fn scaled_solve(pinv: &ComplexMatrix, y: &[Complex64], scale: f64) -> Result<ComplexVector> {
    Ok(pinv.mul_vec(y)?.into_iter().map(|z| z * scale).collect())
}

/// `x̂ = Θ† y / √p` per period, concatenated as `[x̂_t, x̂_r]`.
pub fn ls_estimate_ts(rx: &TsReception, design: &TsDesign, p: f64) -> Result<ComplexVector> {
    let pinv = pseudo_inverse(&design.observation_matrix())?;
    let mut x = scaled_solve(&pinv, &rx.y_t, 1.0 / p.sqrt())?;
    x.extend(scaled_solve(&pinv, &rx.y_r, 1.0 / p.sqrt())?);
    Ok(x)
}

/// `x̂ = √(2/p) V† y`.
pub fn ls_estimate_es(y: &[Complex64], design: &EsDesign, p: f64) -> Result<ComplexVector> {
    let pinv = pseudo_inverse(&design.observation_matrix())?;
    scaled_solve(&pinv, y, (2.0 / p).sqrt())
}

/// Received samples of the ON/OFF schedule, `2M+2` of them.
pub fn simulate_onoff_reception<R: Rng + ?Sized>(
    schedule: &OnOffSchedule,
    real: &ChannelRealization,
    p: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<ComplexVector> {
    let m = schedule.num_subsurfaces;
    if real.num_subsurfaces() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: real.num_subsurfaces(),
        });
    }
    let sigma = noise_power.sqrt();
    let amp = p.sqrt();
    let mut y = Vec::with_capacity(schedule.total_slots());
    for (idx, slot) in schedule.slots.iter().enumerate() {
        let direct = if idx <= m { real.h_t } else { real.h_r };
        let clean = match *slot {
            SlotState::AllOff => direct,
            SlotState::Transmit(k) => direct + real.q_t[k],
            SlotState::Reflect(k) => direct + real.q_r[k],
        };
        y.push(amp * clean + sigma * complex_gaussian(rng));
    }
    Ok(y)
}

/// Difference-form ON/OFF estimate: `ĥ = y₀/√p`, `q̂_m = y_m/√p - ĥ`.
pub fn onoff_estimate(y: &[Complex64], schedule: &OnOffSchedule, p: f64) -> Result<ComplexVector> {
    if y.len() != schedule.total_slots() {
        return Err(Error::DimensionMismatch {
            expected: schedule.total_slots(),
            got: y.len(),
        });
    }
    let amp = p.sqrt();
    let m = schedule.num_subsurfaces;
    let mut x = Vec::with_capacity(2 * m + 2);
    for period in [&y[..=m], &y[m + 1..]] {
        let h = period[0] / amp;
        x.push(h);
        x.extend(period[1..].iter().map(|yk| yk / amp - h));
    }
    Ok(x)
}

/// Phase-1 and phase-2 received vectors of the two-phase benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseReception {
    pub y_direct: ComplexVector,
    pub y_cascaded: ComplexVector,
}

/// Both users transmit at `p/2` in both phases.
pub fn simulate_two_phase_reception<R: Rng + ?Sized>(
    design: &TwoPhaseDesign,
    real: &ChannelRealization,
    p: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<TwoPhaseReception> {
    let amp = (p / 2.0).sqrt();
    let direct = [real.h_t, real.h_r];
    let y_direct = receive(&design.direct_pilots, &direct, amp, noise_power, rng)?;
    let mut x = direct.to_vec();
    x.extend_from_slice(&real.q_t);
    x.extend_from_slice(&real.q_r);
    let obs = phase2_full_matrix(design);
    let y_cascaded = receive(&obs, &x, amp, noise_power, rng)?;
    Ok(TwoPhaseReception { y_direct, y_cascaded })
}

/// `[s_t, s_r, W]`, mapping `[h_t, h_r, q_t, q_r]` to phase-2 samples.
fn phase2_full_matrix(design: &TwoPhaseDesign) -> ComplexMatrix {
    let s = design.phase2_direct_matrix();
    let w = design.cascaded.cascaded_observation_matrix();
    ComplexMatrix::from_fn(w.rows(), w.cols() + 2, |i, j| if j < 2 { s[(i, j)] } else { w[(i, j - 2)] })
}

struct TwoPhaseSolver {
    direct_pinv: ComplexMatrix,
    cascaded_pinv: ComplexMatrix,
    phase2_direct: ComplexMatrix,
}

impl TwoPhaseSolver {
    fn new(design: &TwoPhaseDesign) -> Result<Self> {
        Ok(Self {
            direct_pinv: pseudo_inverse(&design.direct_pilots)?,
            cascaded_pinv: pseudo_inverse(&design.cascaded.cascaded_observation_matrix())?,
            phase2_direct: design.phase2_direct_matrix(),
        })
    }

    fn estimate(&self, rx: &TwoPhaseReception, p: f64) -> Result<ComplexVector> {
        let amp = (p / 2.0).sqrt();
        let h = scaled_solve(&self.direct_pinv, &rx.y_direct, 1.0 / amp)?;
        let direct_part = self.phase2_direct.mul_vec(&h)?;
        if direct_part.len() != rx.y_cascaded.len() {
            return Err(Error::DimensionMismatch {
                expected: direct_part.len(),
                got: rx.y_cascaded.len(),
            });
        }
        let residual: ComplexVector = rx
            .y_cascaded
            .iter()
            .zip(&direct_part)
            .map(|(y, d)| y - amp * d)
            .collect();
        let q = scaled_solve(&self.cascaded_pinv, &residual, 1.0 / amp)?;
        let m = q.len() / 2;
        let mut x = Vec::with_capacity(2 * m + 2);
        x.push(h[0]);
        x.extend_from_slice(&q[..m]);
        x.push(h[1]);
        x.extend_from_slice(&q[m..]);
        Ok(x)
    }
}

/// Direct links by 2×2 LS, then LS on the cascaded coefficients after
/// subtracting the estimated direct contribution. Output in `[h_t, q_t, h_r, q_r]` order.
pub fn two_phase_estimate(rx: &TwoPhaseReception, design: &TwoPhaseDesign, p: f64) -> Result<ComplexVector> {
    TwoPhaseSolver::new(design)?.estimate(rx, p)
}

/// `σ²/p · Tr[(ΘᴴΘ)⁻¹]` summed over both periods.
pub fn ts_pattern_mse(design: &TsDesign, p: f64, noise_power: f64) -> Result<f64> {
    Ok(2.0 * noise_power / p * trace_inverse_gram(&design.observation_matrix())?)
}

/// `2σ²/p · Tr[(VᴴV)⁻¹]`.
pub fn es_pattern_mse(design: &EsDesign, p: f64, noise_power: f64) -> Result<f64> {
    Ok(2.0 * noise_power / p * trace_inverse_gram(&design.observation_matrix())?)
}

/// Per-user split of the ES trace form, `(T, R)`.
pub fn es_pattern_user_mse(design: &EsDesign, p: f64, noise_power: f64) -> Result<(f64, f64)> {
    let diag = inverse_gram_diagonal(&design.observation_matrix())?;
    let half = diag.len() / 2;
    let k = 2.0 * noise_power / p;
    Ok((k * diag[..half].iter().sum::<f64>(), k * diag[half..].iter().sum::<f64>()))
}

pub fn onoff_pattern_mse(schedule: &OnOffSchedule, p: f64, noise_power: f64) -> Result<f64> {
    Ok(2.0 * noise_power / p * trace_inverse_gram(&schedule.period_matrix())?)
}

/// Direct-link error, cascaded-link error and the direct error propagated
/// through the phase-2 subtraction.
pub fn two_phase_mse(design: &TwoPhaseDesign, p: f64, noise_power: f64) -> Result<f64> {
    let k = 2.0 * noise_power / p;
    let direct_pinv = pseudo_inverse(&design.direct_pilots)?;
    let w = design.cascaded.cascaded_observation_matrix();
    let leak = pseudo_inverse(&w)?
        .matmul(&design.phase2_direct_matrix())?
        .matmul(&direct_pinv)?;
    let leak_power: f64 = leak.as_slice().iter().map(|z| z.norm_sqr()).sum();
    Ok(k * (trace_inverse_gram(&design.direct_pilots)? + trace_inverse_gram(&w)? + leak_power))
}

/// Closed-form MSE for `scheme` at `M` sub-surfaces.
///
/// TS and ES-ideal use their closed forms; the others are evaluated from the
/// trace of their (default-design) observation matrices.
pub fn theoretical_mse(scheme: Scheme, m: usize, p: f64, noise_power: f64) -> Result<f64> {
    let snr_inv = noise_power / p;
    match scheme {
        Scheme::Ts => Ok(2.0 * snr_inv),
        Scheme::EsIdeal => Ok((4 * m + 2) as f64 / (m + 1) as f64 * snr_inv),
        Scheme::EsCoupled => es_pattern_mse(&es_coupled_design(m, BaseMatrix::Dft)?, p, noise_power),
        Scheme::OnOff => onoff_pattern_mse(&onoff_schedule(m), p, noise_power),
        Scheme::TwoPhase => two_phase_mse(&two_phase_design(m), p, noise_power),
    }
}

/// `(2σ²/p) [Σ_m (1/τ)(1/β_t + 1/β_r) + 2/τ]`, the orthogonal-design bound.
pub fn es_mse_lower_bound(beta_t: &[f64], beta_r: &[f64], tau: usize, p: f64, noise_power: f64) -> Result<f64> {
    if beta_t.len() != beta_r.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_t.len(),
            got: beta_r.len(),
        });
    }
    if tau < 2 * beta_t.len() + 2 {
        return Err(Error::Domain(format!(
            "tau {tau} below the minimum overhead {}",
            2 * beta_t.len() + 2
        )));
    }
    if let Some(b) = beta_t.iter().chain(beta_r).find(|&&b| !(b > 0.0 && b <= 1.0)) {
        return Err(Error::Domain(format!("splitting ratio {b} outside (0, 1]")));
    }
    let tau = tau as f64;
    let sum: f64 = beta_t.iter().zip(beta_r).map(|(bt, br)| (1.0 / bt + 1.0 / br) / tau).sum();
    Ok(2.0 * noise_power / p * (sum + 2.0 / tau))
}

/// A scheme with its design and pseudo-inverses prepared once, ready to be
/// run on many realizations.
pub enum Estimator {
    Ts {
        design: TsDesign,
        pinv: ComplexMatrix,
    },
    Es {
        label: &'static str,
        design: EsDesign,
        pinv: ComplexMatrix,
    },
    OnOff {
        schedule: OnOffSchedule,
    },
    TwoPhase {
        design: TwoPhaseDesign,
        solver: TwoPhaseSolverHandle,
    },
}

/// Opaque cached solver state for the two-phase scheme.
pub struct TwoPhaseSolverHandle(TwoPhaseSolver);

impl Estimator {
    pub fn for_scheme(scheme: Scheme, m: usize) -> Result<Self> {
        match scheme {
            Scheme::Ts => Self::ts(ts_pattern(m)),
            Scheme::EsIdeal => Self::es(es_ideal_design(m, BaseMatrix::Dft)?, Scheme::EsIdeal.id()),
            Scheme::EsCoupled => Self::es(es_coupled_design(m, BaseMatrix::Dft)?, Scheme::EsCoupled.id()),
            Scheme::OnOff => Ok(Estimator::OnOff {
                schedule: onoff_schedule(m),
            }),
            Scheme::TwoPhase => {
                let design = two_phase_design(m);
                let solver = TwoPhaseSolverHandle(TwoPhaseSolver::new(&design)?);
                Ok(Estimator::TwoPhase { design, solver })
            }
        }
    }

    pub fn ts(design: TsDesign) -> Result<Self> {
        let pinv = pseudo_inverse(&design.observation_matrix())?;
        Ok(Estimator::Ts { design, pinv })
    }

    pub fn es(design: EsDesign, label: &'static str) -> Result<Self> {
        let pinv = pseudo_inverse(&design.observation_matrix())
            .map_err(|e| Error::InfeasibleDesign(format!("{label}: {e}")))?;
        Ok(Estimator::Es { label, design, pinv })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Ts { .. } => Scheme::Ts.id(),
            Estimator::Es { label, .. } => label,
            Estimator::OnOff { .. } => Scheme::OnOff.id(),
            Estimator::TwoPhase { .. } => Scheme::TwoPhase.id(),
        }
    }

    pub fn num_subsurfaces(&self) -> usize {
        match self {
            Estimator::Ts { design, .. } => design.num_subsurfaces(),
            Estimator::Es { design, .. } => design.num_subsurfaces(),
            Estimator::OnOff { schedule } => schedule.num_subsurfaces,
            Estimator::TwoPhase { design, .. } => design.num_subsurfaces(),
        }
    }

    /// Pilot slots consumed by one estimation.
    pub fn overhead(&self) -> usize {
        match self {
            Estimator::Ts { design, .. } => design.tau_t + design.tau_r,
            Estimator::Es { design, .. } => design.tau,
            Estimator::OnOff { schedule } => schedule.total_slots(),
            Estimator::TwoPhase { design, .. } => design.total_slots(),
        }
    }

    /// Trace-form MSE of the prepared design, total and per user.
    pub fn theoretical_mse(&self, p: f64, noise_power: f64) -> Result<UserMse> {
        match self {
            Estimator::Ts { design, .. } => {
                let per = ts_pattern_mse(design, p, noise_power)? / 2.0;
                Ok(UserMse::split(per, per))
            }
            Estimator::Es { design, .. } => {
                let (t, r) = es_pattern_user_mse(design, p, noise_power)?;
                Ok(UserMse::split(t, r))
            }
            Estimator::OnOff { schedule } => {
                let per = onoff_pattern_mse(schedule, p, noise_power)? / 2.0;
                Ok(UserMse::split(per, per))
            }
            Estimator::TwoPhase { design, .. } => {
                // The propagated error lands on both users; only the total is split-free.
                let total = two_phase_mse(design, p, noise_power)?;
                Ok(UserMse {
                    total,
                    t: None,
                    r: None,
                })
            }
        }
    }

    /// Draws noise from `rng` and estimates the composite channel of `real`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        real: &ChannelRealization,
        p: f64,
        noise_power: f64,
        rng: &mut R,
    ) -> Result<EstimationReport> {
        let truth = real.composite_vector(Protocol::Es);
        let estimate = match self {
            Estimator::Ts { design, pinv } => {
                let rx = simulate_ts_reception(design, real, p, noise_power, rng)?;
                let mut x = scaled_solve(pinv, &rx.y_t, 1.0 / p.sqrt())?;
                x.extend(scaled_solve(pinv, &rx.y_r, 1.0 / p.sqrt())?);
                x
            }
            Estimator::Es { design, pinv, .. } => {
                let y = simulate_es_reception(design, real, p, noise_power, rng)?;
                scaled_solve(pinv, &y, (2.0 / p).sqrt())?
            }
            Estimator::OnOff { schedule } => {
                let y = simulate_onoff_reception(schedule, real, p, noise_power, rng)?;
                onoff_estimate(&y, schedule, p)?
            }
            Estimator::TwoPhase { design, solver } => {
                let rx = simulate_two_phase_reception(design, real, p, noise_power, rng)?;
                solver.0.estimate(&rx, p)?
            }
        };
        Ok(EstimationReport::new(self.label(), estimate, truth))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMse {
    pub total: f64,
    pub t: Option<f64>,
    pub r: Option<f64>,
}

impl UserMse {
    fn split(t: f64, r: f64) -> Self {
        Self {
            total: t + r,
            t: Some(t),
            r: Some(r),
        }
    }
}
