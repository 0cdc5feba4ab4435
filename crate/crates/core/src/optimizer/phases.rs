//! Phase-profile update by minorization-maximization of the quadratic ratio
//! `φ^H Q_RX φ / φ^H Q_E φ` over the unit-modulus set.

use num_complex::Complex64;

use super::{hermitian_part, AoConfig, PhaseProfile, Precoder, SystemMatrices};
use crate::spatial::CorrelationMatrix;
use crate::{CMatrix, CVector};

fn phase_quadratic(vt: &CVector, j: &CorrelationMatrix, scale: f64) -> CMatrix {
    let l = vt.len();
    let m = j.matrix();
    let q = CMatrix::from_fn(l, l, |r, c| vt[r].conj() * m[(r, c)] * vt[c] * scale);
    hermitian_part(&(q + CMatrix::identity(l, l) * Complex64::new(1.0 / l as f64, 0.0)))
}

/// `Q_i = I_L / L + diag(Hv)^H J_i diag(Hv) / (σ² S_i)` for both receivers.
pub fn phase_quadratics(v: &Precoder, sys: &SystemMatrices) -> (CMatrix, CMatrix) {
    let vt = &sys.h_matrix.0 * &v.0;
    (
        phase_quadratic(&vt, &sys.j_rx, 1.0 / (sys.noise_power * sys.s_rx)),
        phase_quadratic(&vt, &sys.j_e, 1.0 / (sys.noise_power * sys.s_e)),
    )
}

pub(crate) fn quadratic_form(q: &CMatrix, x: &CVector) -> f64 {
    x.dotc(&(q * x)).re
}

/// `φ^H Q_RX φ / φ^H Q_E φ`.
pub fn quadratic_ratio(phi: &PhaseProfile, q_rx: &CMatrix, q_e: &CMatrix) -> f64 {
    quadratic_form(q_rx, &phi.0) / quadratic_form(q_e, &phi.0)
}

/// Direction `φ̃` whose element-wise phases maximize the minorizer at `φ_t`:
///
/// ```text
/// φ̃ = Q_RX φ_t / d  -  (n / d²) (Q_E - tr(Q_E) I) φ_t,
/// n = φ_t^H Q_RX φ_t,  d = φ_t^H Q_E φ_t
/// ```
pub fn surrogate_direction(phi_t: &PhaseProfile, q_rx: &CMatrix, q_e: &CMatrix) -> CVector {
    let a = q_rx * &phi_t.0;
    let b = q_e * &phi_t.0;
    direction_from(&phi_t.0, a, b, q_e.trace().re)
}

fn direction_from(phi: &CVector, a: CVector, b: CVector, tr: f64) -> CVector {
    let num = phi.dotc(&a).re;
    let den = phi.dotc(&b).re;
    let shifted = b - phi * Complex64::new(tr, 0.0);
    a * Complex64::new(1.0 / den, 0.0) - shifted * Complex64::new(num / (den * den), 0.0)
}

fn unit_phases(dir: &CVector, old: &CVector) -> PhaseProfile {
    PhaseProfile(CVector::from_iterator(
        dir.len(),
        dir.iter().zip(old.iter()).map(|(d, old)| {
            let m = d.norm();
            if m == 0.0 || !m.is_finite() {
                *old
            } else {
                d / m
            }
        }),
    ))
}

/// One MM update `φ_{t+1} = exp(j ∠φ̃)`. Elements where `φ̃` vanishes keep
/// their current phase.
pub fn mm_step(phi_t: &PhaseProfile, q_rx: &CMatrix, q_e: &CMatrix) -> PhaseProfile {
    unit_phases(&surrogate_direction(phi_t, q_rx, q_e), &phi_t.0)
}

#[derive(Debug, Clone)]
pub struct PhaseUpdate {
    pub phases: PhaseProfile,
    /// MM steps computed, including a final rejected one.
    pub iterations: usize,
    pub initial_ratio: f64,
    pub ratio: f64,
}

/// Safeguarded MM loop for a fixed precoder.
pub fn optimize_phases(
    v: &Precoder,
    sys: &SystemMatrices,
    cfg: &AoConfig,
    phi_init: &PhaseProfile,
) -> PhaseUpdate {
    let (q_rx, q_e) = phase_quadratics(v, sys);
    optimize_phases_with(&q_rx, &q_e, cfg, phi_init)
}

/// [`optimize_phases`] on precomputed quadratics.
pub fn optimize_phases_with(
    q_rx: &CMatrix,
    q_e: &CMatrix,
    cfg: &AoConfig,
    phi_init: &PhaseProfile,
) -> PhaseUpdate {
    let tr = q_e.trace().re;
    let mut phi = phi_init.clone();
    // Q φ products are carried over so each step costs two mat-vecs
    let mut a = q_rx * &phi.0;
    let mut b = q_e * &phi.0;
    let initial_ratio = phi.0.dotc(&a).re / phi.0.dotc(&b).re;
    let mut ratio = initial_ratio;
    let mut iterations = 0;
    while iterations < cfg.max_inner_mm {
        iterations += 1;
        let cand = unit_phases(&direction_from(&phi.0, a.clone(), b.clone(), tr), &phi.0);
        let ca = q_rx * &cand.0;
        let cb = q_e * &cand.0;
        let r = cand.0.dotc(&ca).re / cand.0.dotc(&cb).re;
        // reject anything that lowers the ratio, including rounding noise
        if !(r >= ratio) {
            break;
        }
        let rel = (r - ratio).abs() / ratio.abs();
        phi = cand;
        a = ca;
        b = cb;
        ratio = r;
        if rel < cfg.epsilon {
            break;
        }
    }
    PhaseUpdate {
        phases: phi,
        iterations,
        initial_ratio,
        ratio,
    }
}
