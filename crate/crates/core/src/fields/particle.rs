//! Lagrangian particle state in structure-of-arrays layout.

use nalgebra::{Matrix2, Vector2};

use super::FieldError;

/// Per-particle state: mass, initial volume, position, velocity, deformation
/// gradient, APIC affine matrix, material index and the interface-boundary
/// marker. The particle count is fixed for the lifetime of a simulation.
#[derive(Debug, Clone, Default)]
pub struct ParticleSet {
    pub mass: Vec<f64>,
    pub volume0: Vec<f64>,
    pub position: Vec<Vector2<f64>>,
    pub velocity: Vec<Vector2<f64>>,
    pub def_grad: Vec<Matrix2<f64>>,
    pub affine: Vec<Matrix2<f64>>,
    pub material: Vec<usize>,
    pub is_boundary: Vec<bool>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn push(&mut self, mass: f64, volume0: f64, position: Vector2<f64>, material: usize) {
        self.mass.push(mass);
        self.volume0.push(volume0);
        self.position.push(position);
        self.velocity.push(Vector2::zeros());
        self.def_grad.push(Matrix2::identity());
        self.affine.push(Matrix2::zeros());
        self.material.push(material);
        self.is_boundary.push(false);
    }

    /// Checks the hard particle invariants: positive mass and volume,
    /// positive deformation-gradient determinant.
    pub fn validate(&self) -> Result<(), FieldError> {
        for p in 0..self.len() {
            if self.mass[p] <= 0.0 {
                return Err(FieldError::InvalidParticle {
                    particle: p,
                    quantity: "mass",
                    value: self.mass[p],
                });
            }
            if self.volume0[p] <= 0.0 {
                return Err(FieldError::InvalidParticle {
                    particle: p,
                    quantity: "initial volume",
                    value: self.volume0[p],
                });
            }
            let det = self.def_grad[p].determinant();
            if det <= 0.0 {
                return Err(FieldError::InvalidParticle {
                    particle: p,
                    quantity: "det(F)",
                    value: det,
                });
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Median particle mass; activity and interface thresholds scale on it.
    pub fn median_mass(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut sorted = self.mass.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[sorted.len() / 2]
    }

    pub fn total_momentum(&self) -> Vector2<f64> {
        let mut p = Vector2::zeros();
        for i in 0..self.len() {
            p += self.mass[i] * self.velocity[i];
        }
        p
    }

    /// Total angular momentum about the origin, including the affine
    /// contribution carried by B_p (the skew part of B times mass).
    pub fn total_angular_momentum(&self) -> f64 {
        let mut l = 0.0;
        for i in 0..self.len() {
            let x = self.position[i];
            let v = self.velocity[i];
            let b = self.affine[i];
            l += self.mass[i] * (x.x * v.y - x.y * v.x + b[(1, 0)] - b[(0, 1)]);
        }
        l
    }
}
