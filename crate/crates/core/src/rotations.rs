//! SO(3) rotations acting on Bloch vectors.
//!
//! Rotation axes for resonant pulses lie in the x–y plane at azimuth `phi_r`
//! measured from x̂; positive angles rotate counterclockwise (right-hand rule).
//! The first-order "small rotation" that describes a phase-modulated pulse and
//! the matrix `D` that maps special-case deflections to arbitrary geometry also
//! live here.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bloch vector ⟨σx⟩, ⟨σy⟩, ⟨σz⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const X: BlochVector = BlochVector { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: BlochVector = BlochVector { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Unit vector with polar angle `theta` measured from the x–y plane and
    /// azimuth `phi` measured from x̂.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Checks the unit-norm precondition used by the propagation routines.
    pub fn ensure_unit(&self, tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("Bloch vector"));
        }
        let norm = self.norm();
        if (norm - 1.0).abs() > tol {
            return Err(Error::NonUnitVector { norm });
        }
        Ok(())
    }
}

/// Small deflection `j = J − J°` of a Bloch vector from its ideal position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeflectionVector {
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
}

impl DeflectionVector {
    pub const ZERO: DeflectionVector = DeflectionVector { jx: 0.0, jy: 0.0, jz: 0.0 };

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.jx, self.jy, self.jz)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self { jx: v.x, jy: v.y, jz: v.z }
    }

    pub fn norm_squared(&self) -> f64 {
        self.to_vector().norm_squared()
    }
}

/// Dense 3×3 rotation matrix.
///
/// Values built by [`small_rotation`] are orthogonal only to first order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &BlochVector) -> BlochVector {
        BlochVector::from_vector(self.0 * v.to_vector())
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Largest elementwise deviation of `MᵀM` from the identity.
    pub fn orthogonality_residual(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        self.compose(&rhs)
    }
}

/// Rodrigues rotation through `angle` about `axis` (normalised here).
pub fn rotation_about(axis: Vector3<f64>, angle: f64) -> RotationMatrix {
    let n = axis.normalize();
    rodrigues_unit(n.x, n.y, n.z, angle)
}

fn rodrigues_unit(nx: f64, ny: f64, nz: f64, angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    RotationMatrix(Matrix3::new(
        c + t * nx * nx,
        t * nx * ny - s * nz,
        t * nx * nz + s * ny,
        t * nx * ny + s * nz,
        c + t * ny * ny,
        t * ny * nz - s * nx,
        t * nx * nz - s * ny,
        t * ny * nz + s * nx,
        c + t * nz * nz,
    ))
}

/// Rotation through `psi` about the in-plane axis `(cos φ_R, sin φ_R, 0)`.
///
/// A negative `psi` rotates by `|psi|` in the opposite sense.
pub fn rotate_axis_xy(phi_r: f64, psi: f64) -> RotationMatrix {
    let (sp, cp) = phi_r.sin_cos();
    rodrigues_unit(cp, sp, 0.0, psi)
}

/// Right-handed rotation about ẑ.
pub fn rotate_z(phi: f64) -> RotationMatrix {
    let (s, c) = phi.sin_cos();
    RotationMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// First-order small rotation `R_z(φ_R) r(0) R_z(−φ_R)`, where `r(0)` carries
/// the special-case deflections `j̃_y` (about ẑ) and `j̃_z` (about −ŷ).
///
/// Only terms linear in the deflections are kept, so the result is orthogonal
/// to first order only.
pub fn small_rotation(phi_r: f64, jy_tilde: f64, jz_tilde: f64) -> RotationMatrix {
    let r0 = Matrix3::new(
        1.0, -jy_tilde, -jz_tilde, //
        jy_tilde, 1.0, 0.0, //
        jz_tilde, 0.0, 1.0,
    );
    let rz = rotate_z(phi_r).0;
    let rz_inv = rotate_z(-phi_r).0;
    RotationMatrix(rz * r0 * rz_inv)
}

/// Matrix mapping special-case deflections `(0, j̃_y, j̃_z)` onto the lab-frame
/// deflection of a vector whose ideal final position is `j_f_ideal`, for a
/// pulse about axis azimuth `phi_r`. The first column is identically zero.
pub fn d_matrix(phi_r: f64, j_f_ideal: &BlochVector) -> Matrix3<f64> {
    let (s, c) = phi_r.sin_cos();
    let BlochVector { x, y, z } = *j_f_ideal;
    Matrix3::new(
        0.0,
        -y,
        -z * c, //
        0.0,
        x,
        -z * s, //
        0.0,
        0.0,
        x * c + y * s,
    )
}
