//! Joint design of the BS precoder and the RIS phase profile.
//!
//! The area-averaged secrecy objective is approximated by
//!
//! ```text
//! R(v, φ) = log2( (1 + v^H H^H Φ^H J_RX Φ H v / (σ² S_RX))
//!               / (1 + v^H H^H Φ^H J_E  Φ H v / (σ² S_E )) )
//! ```
//!
//! and maximized by alternating between the closed-form precoder (a
//! generalized eigenvector) and a safeguarded MM ascent on the phases.

mod phases;
mod precoder;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{BsRisMatrix, RngStream};
use crate::error::{Error, Result};
use crate::spatial::CorrelationMatrix;
use crate::{CMatrix, CVector};

pub use phases::{
    mm_step, optimize_phases, optimize_phases_with, phase_quadratics, quadratic_ratio,
    surrogate_direction, PhaseUpdate,
};
pub use precoder::{
    optimize_precoder, precoder_matrices, principal_generalized_eigvec, PrecoderSolution,
};

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Everything the objective depends on besides `(v, φ)`.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub h_matrix: BsRisMatrix,
    pub j_rx: CorrelationMatrix,
    pub j_e: CorrelationMatrix,
    /// σ² in Watts.
    pub noise_power: f64,
    /// Area of the receiver region, m².
    pub s_rx: f64,
    /// Area of the eavesdropper region, m².
    pub s_e: f64,
    /// P_T in Watts.
    pub transmit_power: f64,
}

impl SystemMatrices {
    pub fn new(
        h_matrix: BsRisMatrix,
        j_rx: CorrelationMatrix,
        j_e: CorrelationMatrix,
        noise_power: f64,
        s_rx: f64,
        s_e: f64,
        transmit_power: f64,
    ) -> Result<Self> {
        let sys = Self {
            h_matrix,
            j_rx,
            j_e,
            noise_power,
            s_rx,
            s_e,
            transmit_power,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("s_rx", self.s_rx),
            ("s_e", self.s_e),
            ("transmit_power", self.transmit_power),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        let l = self.ris_elements();
        if self.j_rx.dim() != l || self.j_e.dim() != l {
            return Err(Error::Dimension(format!(
                "H has {l} rows but J matrices are {}x{} and {}x{}",
                self.j_rx.dim(),
                self.j_rx.dim(),
                self.j_e.dim(),
                self.j_e.dim()
            )));
        }
        Ok(())
    }

    pub fn ris_elements(&self) -> usize {
        self.h_matrix.ris_elements()
    }

    pub fn bs_antennas(&self) -> usize {
        self.h_matrix.bs_antennas()
    }

    /// Same system with the eavesdropper correlation removed.
    pub fn without_eavesdropper(&self) -> Self {
        Self {
            j_e: CorrelationMatrix::zeros(self.ris_elements()),
            ..self.clone()
        }
    }

    pub fn with_transmit_power(&self, transmit_power: f64) -> Self {
        Self {
            transmit_power,
            ..self.clone()
        }
    }
}

/// Transmit beamforming vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder(pub CVector);

impl Precoder {
    pub fn zeros(n: usize) -> Self {
        Self(CVector::zeros(n))
    }

    /// Scale `dir` to power `power` and rotate so its largest entry is real-positive.
    pub fn from_direction(dir: CVector, power: f64) -> Self {
        // first entry of maximal magnitude
        let pivot = dir.iter().fold(Complex64::new(0.0, 0.0), |best, z| {
            if z.norm() > best.norm() {
                *z
            } else {
                best
            }
        });
        let rot = pivot.conj() / pivot.norm();
        let scale = power.sqrt() / dir.norm();
        Self(dir * (rot * scale))
    }

    pub fn power(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Unit-modulus RIS reflection vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile(pub CVector);

impl PhaseProfile {
    pub fn ones(l: usize) -> Self {
        Self(CVector::from_element(l, Complex64::new(1.0, 0.0)))
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self(CVector::from_iterator(
            angles.len(),
            angles.iter().map(|&t| Complex64::from_polar(1.0, t)),
        ))
    }

    pub fn random<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Self {
        Self(CVector::from_fn(l, |_, _| {
            Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
        }))
    }

    pub fn angles(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    /// Largest deviation of `|φ_l|` from one.
    pub fn modulus_error(&self) -> f64 {
        self.0
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn default_epsilon() -> f64 {
    1e-5
}

fn default_max_outer() -> usize {
    200
}

fn default_max_inner() -> usize {
    100
}

/// Stopping rules and initialization for the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoConfig {
    /// Relative objective change that ends both loops.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_max_inner")]
    pub max_inner_mm: usize,
    /// `None` starts from the all-ones profile; `Some(seed)` from seeded random phases.
    #[serde(default)]
    pub init_seed: Option<u64>,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            max_outer: default_max_outer(),
            max_inner_mm: default_max_inner(),
            init_seed: None,
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("ao.epsilon", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::config("ao.max_outer", "must be at least 1"));
        }
        if self.max_inner_mm == 0 {
            return Err(Error::config("ao.max_inner_mm", "must be at least 1"));
        }
        Ok(())
    }

    pub fn initial_phases(&self, l: usize) -> PhaseProfile {
        match self.init_seed {
            None => PhaseProfile::ones(l),
            Some(seed) => PhaseProfile::random(l, &mut RngStream::new(seed)),
        }
    }
}

/// Per-iteration record of an optimization run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoTrace {
    /// Objective (bps/Hz) after each outer iteration.
    pub objective_per_iteration: Vec<f64>,
    pub precoder_power: Vec<f64>,
    pub mm_inner_iters: Vec<usize>,
    /// Generalized-eigen residual of each precoder update, the initial one included.
    pub eigen_residuals: Vec<f64>,
    pub initial_objective: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl AoTrace {
    pub fn final_objective(&self) -> f64 {
        self.objective_per_iteration
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    /// Largest drop between consecutive recorded objectives (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        std::iter::once(self.initial_objective)
            .chain(self.objective_per_iteration.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct AoOutcome {
    pub precoder: Precoder,
    pub phases: PhaseProfile,
    pub trace: AoTrace,
}

/// Approximate spatial secrecy spectral efficiency in bps/Hz.
pub fn objective_rate(v: &Precoder, phi: &PhaseProfile, sys: &SystemMatrices) -> f64 {
    let (rx, e) = snr_terms(v, phi, sys);
    ((1.0 + rx) / (1.0 + e)).log2()
}

/// Area-averaged SNR terms `(Φ H v)^H J_i (Φ H v) / (σ² S_i)` for RX and Eve.
pub fn snr_terms(v: &Precoder, phi: &PhaseProfile, sys: &SystemMatrices) -> (f64, f64) {
    let w = (&sys.h_matrix.0 * &v.0).component_mul(&phi.0);
    (
        phases::quadratic_form(sys.j_rx.matrix(), &w) / (sys.noise_power * sys.s_rx),
        phases::quadratic_form(sys.j_e.matrix(), &w) / (sys.noise_power * sys.s_e),
    )
}

/// Area-averaged receiver rate `log2(1 + SNR_RX)` ignoring the eavesdropper.
pub fn rx_objective(v: &Precoder, phi: &PhaseProfile, sys: &SystemMatrices) -> f64 {
    (1.0 + snr_terms(v, phi, sys).0).log2()
}

fn converged(prev: f64, next: f64, epsilon: f64) -> bool {
    let delta = (next - prev).abs();
    delta == 0.0 || delta < epsilon * prev.abs()
}

/// Alternate precoder and phase updates until the objective settles.
pub fn alternating_optimize(sys: &SystemMatrices, cfg: &AoConfig) -> Result<AoOutcome> {
    sys.validate()?;
    cfg.validate()?;
    let mut phi = cfg.initial_phases(sys.ris_elements());
    let first = optimize_precoder(&phi, sys)
        .map_err(|e| Error::Numerical(format!("initial precoder update: {e}")))?;
    let mut v = first.precoder;
    let mut trace = AoTrace {
        initial_objective: objective_rate(&v, &phi, sys),
        eigen_residuals: vec![first.residual],
        ..AoTrace::default()
    };
    let mut prev = trace.initial_objective;

    for outer in 1..=cfg.max_outer {
        let upd = optimize_phases(&v, sys, cfg, &phi);
        phi = upd.phases;
        let sol = optimize_precoder(&phi, sys)
            .map_err(|e| Error::Numerical(format!("outer iteration {outer}: {e}")))?;
        v = sol.precoder;
        let obj = objective_rate(&v, &phi, sys);

        trace.objective_per_iteration.push(obj);
        trace.precoder_power.push(v.power());
        trace.mm_inner_iters.push(upd.iterations);
        trace.eigen_residuals.push(sol.residual);
        trace.iterations_used = outer;
        if converged(prev, obj, cfg.epsilon) {
            trace.converged = true;
            break;
        }
        prev = obj;
    }

    Ok(AoOutcome {
        precoder: v,
        phases: phi,
        trace,
    })
}

/// Maximize the receiver's area-averaged rate only (eavesdropper ignored).
pub fn rx_only_optimize(sys: &SystemMatrices, cfg: &AoConfig) -> Result<AoOutcome> {
    alternating_optimize(&sys.without_eavesdropper(), cfg)
}

/// Isotropic random precoder at full power and i.i.d. uniform phases.
pub fn random_config(sys: &SystemMatrices, rng: &mut RngStream) -> (Precoder, PhaseProfile) {
    let g = rng.complex_normal_vector(sys.bs_antennas());
    let scale = sys.transmit_power.sqrt() / g.norm();
    let v = Precoder(g * Complex64::new(scale, 0.0));
    let phi = PhaseProfile::random(sys.ris_elements(), rng);
    (v, phi)
}
