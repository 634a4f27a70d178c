//! Compressible Neo-Hookean constitutive model in 2D plane strain.
//!
//! Energy density (J = det F):
//!   psi(F) = (mu/2) (tr(F^T F) - 2) - mu ln J + (lambda/2) (ln J)^2
//! with first Piola-Kirchhoff stress P = mu (F - F^-T) + lambda ln J F^-T.
//! The model reduces to linear elasticity with the same Lame parameters at
//! small strain, which the closed-form benchmark oracles rely on.

use nalgebra::{Matrix2, Matrix4, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstitutiveError {
    #[error("Young's modulus must be positive, got {0}")]
    InvalidYoung(f64),
    #[error("Poisson ratio must lie in (-1, 0.5), got {0}")]
    InvalidPoisson(f64),
    #[error("density must be positive, got {0}")]
    InvalidDensity(f64),
    #[error("deformation gradient is inverted or degenerate: det F = {0}")]
    NonPositiveJacobian(f64),
}

/// Isotropic material parameters with derived Lame constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    /// Young's modulus, Pa.
    pub young: f64,
    /// Poisson ratio.
    pub poisson: f64,
    /// Density, kg/m^3.
    pub density: f64,
    /// Shear modulus mu = E / (2 (1 + nu)), Pa.
    pub mu: f64,
    /// First Lame parameter lambda = E nu / ((1 + nu)(1 - 2 nu)), Pa.
    pub lambda: f64,
}

impl MaterialModel {
    pub fn new(young: f64, poisson: f64, density: f64) -> Result<Self, ConstitutiveError> {
        if young <= 0.0 {
            return Err(ConstitutiveError::InvalidYoung(young));
        }
        if poisson <= -1.0 || poisson >= 0.5 {
            return Err(ConstitutiveError::InvalidPoisson(poisson));
        }
        if density <= 0.0 {
            return Err(ConstitutiveError::InvalidDensity(density));
        }
        Ok(Self {
            young,
            poisson,
            density,
            mu: young / (2.0 * (1.0 + poisson)),
            lambda: young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)),
        })
    }
}

fn checked_jacobian(f: &Matrix2<f64>) -> Result<f64, ConstitutiveError> {
    let j = f.determinant();
    if j <= 0.0 {
        Err(ConstitutiveError::NonPositiveJacobian(j))
    } else {
        Ok(j)
    }
}

/// Strain energy density psi(F), Pa.
///
/// tr(F^T F) - 2 and det F - 1 are evaluated in terms of F - I so the
/// leading-order cancellation happens analytically, keeping psi accurate to
/// machine precision relative to its O(strain^2) magnitude near identity.
pub fn energy_density(f: &Matrix2<f64>, mat: &MaterialModel) -> Result<f64, ConstitutiveError> {
    let d00 = f[(0, 0)] - 1.0;
    let d11 = f[(1, 1)] - 1.0;
    let i1_minus_2 = d00 * (f[(0, 0)] + 1.0)
        + d11 * (f[(1, 1)] + 1.0)
        + f[(0, 1)] * f[(0, 1)]
        + f[(1, 0)] * f[(1, 0)];
    let j_minus_1 = d00 * d11 + d00 + d11 - f[(0, 1)] * f[(1, 0)];
    if j_minus_1 <= -1.0 {
        return Err(ConstitutiveError::NonPositiveJacobian(j_minus_1 + 1.0));
    }
    let log_j = j_minus_1.ln_1p();
    Ok(0.5 * mat.mu * i1_minus_2 - mat.mu * log_j + 0.5 * mat.lambda * log_j * log_j)
}

/// First Piola-Kirchhoff stress P = d psi / d F, Pa.
pub fn piola_stress(
    f: &Matrix2<f64>,
    mat: &MaterialModel,
) -> Result<Matrix2<f64>, ConstitutiveError> {
    let j = checked_jacobian(f)?;
    let f_inv_t = f
        .try_inverse()
        .ok_or(ConstitutiveError::NonPositiveJacobian(j))?
        .transpose();
    Ok(mat.mu * (f - f_inv_t) + mat.lambda * j.ln() * f_inv_t)
}

/// Cauchy stress sigma = (1/J) P F^T, Pa.
pub fn cauchy_stress(
    f: &Matrix2<f64>,
    mat: &MaterialModel,
) -> Result<Matrix2<f64>, ConstitutiveError> {
    let j = checked_jacobian(f)?;
    Ok(piola_stress(f, mat)? * f.transpose() / j)
}

/// Directional derivative of the Piola stress at `f` in direction `df`:
///   dP = mu dF + (mu - lambda ln J) F^-T dF^T F^-T
///        + lambda (F^-T : dF) F^-T.
pub fn tangent_apply(
    f: &Matrix2<f64>,
    mat: &MaterialModel,
    df: &Matrix2<f64>,
) -> Result<Matrix2<f64>, ConstitutiveError> {
    let j = checked_jacobian(f)?;
    let f_inv_t = f
        .try_inverse()
        .ok_or(ConstitutiveError::NonPositiveJacobian(j))?
        .transpose();
    let log_j = j.ln();
    let trace_term = f_inv_t.dot(df);
    Ok(mat.mu * df
        + (mat.mu - mat.lambda * log_j) * f_inv_t * df.transpose() * f_inv_t
        + mat.lambda * trace_term * f_inv_t)
}

#[inline]
fn flat_index(a: usize, b: usize) -> usize {
    2 * a + b
}

/// The tangent dP/dF as a symmetric 4x4 matrix acting on vectorized 2x2
/// increments, row-major component order (00, 01, 10, 11).
pub fn tangent_matrix(
    f: &Matrix2<f64>,
    mat: &MaterialModel,
) -> Result<Matrix4<f64>, ConstitutiveError> {
    let mut m = Matrix4::zeros();
    for c in 0..2 {
        for d in 0..2 {
            let mut df = Matrix2::zeros();
            df[(c, d)] = 1.0;
            let dp = tangent_apply(f, mat, &df)?;
            for a in 0..2 {
                for b in 0..2 {
                    m[(flat_index(a, b), flat_index(c, d))] = dp[(a, b)];
                }
            }
        }
    }
    // The analytic tangent is symmetric; enforce it against rounding so the
    // assembled Hessian stays symmetric bit-for-bit.
    Ok(0.5 * (m + m.transpose()))
}

/// Tangent matrix with negative eigenvalues clamped to zero, so contraction
/// with any stencil pair yields a positive semidefinite Hessian block.
pub fn tangent_matrix_psd(
    f: &Matrix2<f64>,
    mat: &MaterialModel,
) -> Result<Matrix4<f64>, ConstitutiveError> {
    let m = tangent_matrix(f, mat)?;
    let eig = m.symmetric_eigen();
    let mut rebuilt = Matrix4::zeros();
    for k in 0..4 {
        let lam = eig.eigenvalues[k].max(0.0);
        if lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            rebuilt += lam * v * v.transpose();
        }
    }
    Ok(0.5 * (rebuilt + rebuilt.transpose()))
}

/// Contracts a vectorized tangent against two stencil vectors, producing the
/// 2x2 Hessian block H[a][c] = sum_{b,d} M[(a,b),(c,d)] wj[b] wl[d].
#[inline]
pub fn contract_tangent(
    m: &Matrix4<f64>,
    wj: &Vector2<f64>,
    wl: &Vector2<f64>,
) -> Matrix2<f64> {
    let mut h = Matrix2::zeros();
    for a in 0..2 {
        for c in 0..2 {
            let mut s = 0.0;
            for b in 0..2 {
                for d in 0..2 {
                    s += m[(flat_index(a, b), flat_index(c, d))] * wj[b] * wl[d];
                }
            }
            h[(a, c)] = s;
        }
    }
    h
}
