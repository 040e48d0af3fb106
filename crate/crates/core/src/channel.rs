//! Geometry, path loss and Rician fading for the two-user STAR-RIS uplink.
//!
//! Channels are drawn per sub-surface: `r_t`, `r_r` and `g` are `M`-vectors,
//! and the cascaded channel of user `k` is the elementwise product `g ∘ r_k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrixkit::ComplexVector;

/// Rician factors at or above this are treated as pure line of sight.
pub const LOS_ONLY_K: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Physical and protocol parameters, all in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_elements: usize,
    pub num_subsurfaces: usize,
    /// Total user transmit power per slot, watts.
    pub total_power: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
    pub rician_k: f64,
    /// Path loss at the reference distance, linear gain.
    pub ref_pathloss: f64,
    pub ref_distance: f64,
    pub bs_pos: Point2,
    pub ris_pos: Point2,
    pub t_user_pos: Point2,
    pub r_user_pos: Point2,
    pub alpha_user_bs: f64,
    pub alpha_user_ris: f64,
    pub alpha_bs_ris: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_elements: 80,
            num_subsurfaces: 20,
            total_power: 1.0,
            noise_power: 1e-14,
            rician_k: 10.0,
            ref_pathloss: 1e-3,
            ref_distance: 1.0,
            bs_pos: Point2::new(0.0, 0.0),
            ris_pos: Point2::new(50.0, 0.0),
            t_user_pos: Point2::new(54.0, 3.0),
            r_user_pos: Point2::new(46.0, -3.0),
            alpha_user_bs: 3.5,
            alpha_user_ris: 2.8,
            alpha_bs_ris: 2.2,
        }
    }
}

impl SystemConfig {
    /// Checks every invariant, naming the first one that fails.
    ///
    /// A zero noise power is accepted so that noiseless runs can be expressed.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_subsurfaces == 0 {
            return fail("num_subsurfaces must be >= 1".into());
        }
        if self.num_elements == 0 || !self.num_elements.is_multiple_of(self.num_subsurfaces) {
            return fail(format!(
                "num_subsurfaces ({}) must divide num_elements ({})",
                self.num_subsurfaces, self.num_elements
            ));
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return fail(format!("total_power must be > 0, got {}", self.total_power));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return fail(format!("noise_power must be >= 0, got {}", self.noise_power));
        }
        if self.rician_k.is_nan() || self.rician_k < 0.0 {
            return fail(format!("rician_k must be >= 0, got {}", self.rician_k));
        }
        if !(self.ref_pathloss > 0.0 && self.ref_pathloss.is_finite()) {
            return fail(format!("ref_pathloss must be > 0, got {}", self.ref_pathloss));
        }
        if !(self.ref_distance > 0.0 && self.ref_distance.is_finite()) {
            return fail(format!("ref_distance must be > 0, got {}", self.ref_distance));
        }
        for (name, a) in [
            ("alpha_user_bs", self.alpha_user_bs),
            ("alpha_user_ris", self.alpha_user_ris),
            ("alpha_bs_ris", self.alpha_bs_ris),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return fail(format!("{name} must be > 0, got {a}"));
            }
        }
        for (name, a, b) in [
            ("bs_pos/t_user_pos", self.bs_pos, self.t_user_pos),
            ("bs_pos/r_user_pos", self.bs_pos, self.r_user_pos),
            ("ris_pos/t_user_pos", self.ris_pos, self.t_user_pos),
            ("ris_pos/r_user_pos", self.ris_pos, self.r_user_pos),
            ("bs_pos/ris_pos", self.bs_pos, self.ris_pos),
        ] {
            if a.distance(&b).is_nan() || a.distance(&b) <= 0.0 {
                return fail(format!("{name} must be distinct points"));
            }
        }
        Ok(())
    }

    /// Average power gains of the five links.
    pub fn link_gains(&self) -> Result<LinkGains> {
        Ok(LinkGains {
            h_t: path_loss(self.bs_pos.distance(&self.t_user_pos), self.alpha_user_bs, self)?,
            h_r: path_loss(self.bs_pos.distance(&self.r_user_pos), self.alpha_user_bs, self)?,
            r_t: path_loss(self.ris_pos.distance(&self.t_user_pos), self.alpha_user_ris, self)?,
            r_r: path_loss(self.ris_pos.distance(&self.r_user_pos), self.alpha_user_ris, self)?,
            g: path_loss(self.bs_pos.distance(&self.ris_pos), self.alpha_bs_ris, self)?,
        })
    }

    /// `E‖x_t‖²` and `E‖x_r‖²` of the composite vectors under this config.
    pub fn expected_channel_power(&self) -> Result<(f64, f64)> {
        let l = self.link_gains()?;
        let m = self.num_subsurfaces as f64;
        Ok((l.h_t + m * l.g * l.r_t, l.h_r + m * l.g * l.r_r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGains {
    pub h_t: f64,
    pub h_r: f64,
    pub r_t: f64,
    pub r_r: f64,
    pub g: f64,
}

/// `β₀ (d / d₀)^(-α)`.
pub fn path_loss(d: f64, alpha: f64, cfg: &SystemConfig) -> Result<f64> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::Domain(format!("link distance must be > 0, got {d}")));
    }
    Ok(cfg.ref_pathloss * (d / cfg.ref_distance).powf(-alpha))
}

/// Standard circularly-symmetric complex Gaussian sample, `CN(0, 1)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician vector with uniformly random line-of-sight phase per entry.
pub fn rician_vector<R: Rng + ?Sized>(dim: usize, k: f64, gain: f64, rng: &mut R) -> ComplexVector {
    let amp = gain.sqrt();
    let (los, nlos) = if k >= LOS_ONLY_K {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    (0..dim)
        .map(|_| {
            let psi = rng.gen_range(0.0..2.0 * PI);
            let w = complex_gaussian(rng);
            if nlos == 0.0 {
                amp * los * Complex64::from_polar(1.0, psi)
            } else {
                amp * (los * Complex64::from_polar(1.0, psi) + nlos * w)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    TsUserT,
    TsUserR,
    Es,
}

/// One draw of every link plus the derived cascaded channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_t: Complex64,
    pub h_r: Complex64,
    pub r_t: ComplexVector,
    pub r_r: ComplexVector,
    pub g: ComplexVector,
    pub q_t: ComplexVector,
    pub q_r: ComplexVector,
}

impl ChannelRealization {
    pub fn from_links(
        h_t: Complex64,
        h_r: Complex64,
        r_t: ComplexVector,
        r_r: ComplexVector,
        g: ComplexVector,
    ) -> Result<Self> {
        if r_t.len() != g.len() || r_r.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: if r_t.len() != g.len() { r_t.len() } else { r_r.len() },
            });
        }
        let q_t = g.iter().zip(&r_t).map(|(a, b)| a * b).collect();
        let q_r = g.iter().zip(&r_r).map(|(a, b)| a * b).collect();
        Ok(Self {
            h_t,
            h_r,
            r_t,
            r_r,
            g,
            q_t,
            q_r,
        })
    }

    pub fn num_subsurfaces(&self) -> usize {
        self.g.len()
    }

    pub fn composite_vector(&self, protocol: Protocol) -> ComplexVector {
        fn user(h: Complex64, q: &[Complex64]) -> impl Iterator<Item = Complex64> + '_ {
            std::iter::once(h).chain(q.iter().copied())
        }
        match protocol {
            Protocol::TsUserT => user(self.h_t, &self.q_t).collect(),
            Protocol::TsUserR => user(self.h_r, &self.q_r).collect(),
            Protocol::Es => user(self.h_t, &self.q_t).chain(user(self.h_r, &self.q_r)).collect(),
        }
    }
}

pub fn composite_vector(real: &ChannelRealization, protocol: Protocol) -> ComplexVector {
    real.composite_vector(protocol)
}

/// Draws `h_t, h_r, r_t, r_r, g` in that order from `rng`.
pub fn generate_realization<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    let gains = cfg.link_gains()?;
    let m = cfg.num_subsurfaces;
    let k = cfg.rician_k;
    let h_t = rician_vector(1, k, gains.h_t, rng)[0];
    let h_r = rician_vector(1, k, gains.h_r, rng)[0];
    let r_t = rician_vector(m, k, gains.r_t, rng);
    let r_r = rician_vector(m, k, gains.r_r, rng);
    let g = rician_vector(m, k, gains.g, rng);
    ChannelRealization::from_links(h_t, h_r, r_t, r_r, g)
}
