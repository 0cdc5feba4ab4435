//! Precoder update: principal generalized eigenvector of the pencil
//! `(P_RX, P_E)` scaled to the full power budget.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use num_complex::Complex64;

use super::{hermitian_part, PhaseProfile, Precoder, SystemMatrices};
use crate::error::{Error, Result};
use crate::spatial::CorrelationMatrix;
use crate::CMatrix;

/// `Φ H`, the BS-to-RIS-output matrix for a given phase profile.
pub(crate) fn reflected_channel(phi: &PhaseProfile, sys: &SystemMatrices) -> CMatrix {
    let mut a = sys.h_matrix.0.clone();
    for (mut row, p) in a.row_iter_mut().zip(phi.0.iter()) {
        row *= *p;
    }
    a
}

fn pencil_matrix(a: &CMatrix, j: &CorrelationMatrix, scale: f64) -> CMatrix {
    let n = a.ncols();
    let b = a.adjoint() * j.matrix() * a;
    hermitian_part(&(CMatrix::identity(n, n) + b * Complex64::new(scale, 0.0)))
}

/// `P_i = I_N + P_T/(σ² S_i) (ΦH)^H J_i (ΦH)` for both receivers.
pub fn precoder_matrices(phi: &PhaseProfile, sys: &SystemMatrices) -> (CMatrix, CMatrix) {
    let a = reflected_channel(phi, sys);
    let pt = sys.transmit_power;
    (
        pencil_matrix(&a, &sys.j_rx, pt / (sys.noise_power * sys.s_rx)),
        pencil_matrix(&a, &sys.j_e, pt / (sys.noise_power * sys.s_e)),
    )
}

#[derive(Debug, Clone)]
pub struct PrecoderSolution {
    pub precoder: Precoder,
    /// Largest generalized eigenvalue, equal to the attained SNR-ratio.
    pub eigenvalue: f64,
    /// `‖P_RX v - λ P_E v‖ / (‖P_RX‖_F ‖v‖)`.
    pub residual: f64,
}

/// Principal eigenpair of `P_E^{-1} P_RX`, computed on the equivalent
/// Hermitian matrix `L^{-1} P_RX L^{-H}` with `P_E = L L^H`.
pub fn principal_generalized_eigvec(
    p_rx: &CMatrix,
    p_e: &CMatrix,
) -> Result<(f64, nalgebra::DVector<Complex64>)> {
    let chol = Cholesky::new(p_e.clone()).ok_or_else(|| {
        Error::Numerical("Cholesky factorization of P_E failed (not positive definite)".into())
    })?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(p_rx)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let eig = SymmetricEigen::new(hermitian_part(&c));
    let (imax, lambda) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if !lambda.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite generalized eigenvalue; eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let y = eig.eigenvectors.column(imax).into_owned();
    let v = l
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok((lambda, v))
}

/// Optimal precoder for a fixed phase profile.
pub fn optimize_precoder(phi: &PhaseProfile, sys: &SystemMatrices) -> Result<PrecoderSolution> {
    let (p_rx, p_e) = precoder_matrices(phi, sys);
    let (lambda, v) = principal_generalized_eigvec(&p_rx, &p_e)?;
    let norm = v.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical(format!(
            "degenerate generalized eigenvector (norm {norm}, eigenvalue {lambda})"
        )));
    }
    let v = Precoder::from_direction(v, sys.transmit_power);
    let resid = &p_rx * &v.0 - (&p_e * &v.0) * Complex64::new(lambda, 0.0);
    let residual = resid.norm() / (p_rx.norm() * v.0.norm());
    Ok(PrecoderSolution {
        precoder: v,
        eigenvalue: lambda,
        residual,
    })
}
