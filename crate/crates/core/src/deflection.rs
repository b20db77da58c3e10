//! Closed-form response of the Bloch vector to a coherently phase-modulated
//! resonant rotation.
//!
//! With the LO phase `φ(t) = φ_R + β sin(2π f_m t + α_m)` the transverse
//! deflection obeys the equation of a driven, undamped oscillator with natural
//! frequency `f_R`. The special case `φ_R = 0`, `J_i = x̂` is solved in closed
//! form; arbitrary geometry follows from conjugating the resulting small
//! rotation about ẑ.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Result};
use crate::rotations::{rotate_axis_xy, small_rotation, BlochVector, DeflectionVector};

/// Half-width of the window around `x = 1` inside which the closed form is
/// replaced by its Taylor expansion in `x − 1`.
pub const RESONANCE_WINDOW: f64 = 1e-4;

/// Parameters of a single coherently phase-modulated rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams {
    /// Modulation amplitude β (rad). Linear response requires |β| ≪ 1.
    pub beta: f64,
    /// Frequency ratio `f_m / f_R`.
    pub x: f64,
    /// Modulation phase α_m (rad).
    pub alpha_m: f64,
    /// Rotation angle ψ (rad).
    pub psi: f64,
    /// Mean rotation axis azimuth φ_R (rad).
    pub phi_r: f64,
}

impl ModulationParams {
    pub fn deflect(&self, j_i: &BlochVector) -> Result<(BlochVector, DeflectionVector)> {
        deflect_general(j_i, self.phi_r, self.psi, self.beta, self.x, self.alpha_m)
    }
}

/// Special-case deflection `(j̃_y, j̃_z)` for `φ_R = 0`, `J_i = x̂`.
///
/// The removable singularity at `x = 1` is handled by a second-order Taylor
/// expansion for `|x − 1| < RESONANCE_WINDOW`; at `x = 1` exactly this reduces
/// to the resonant solution, which grows linearly with ψ.
pub fn deflection_special(psi: f64, x: f64, beta: f64, alpha_m: f64) -> (f64, f64) {
    let (uy, uz) = unit_response(psi, x, alpha_m);
    (beta * uy, beta * uz)
}

/// Deflection per unit modulation amplitude (β = 1).
pub(crate) fn unit_response(psi: f64, x: f64, alpha_m: f64) -> (f64, f64) {
    let u = x - 1.0;
    if u.abs() < RESONANCE_WINDOW {
        return near_resonance(psi, u, alpha_m);
    }
    let (sa, ca) = alpha_m.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let (sd, cd) = (x * psi + alpha_m).sin_cos();
    let denom = 1.0 - x * x;
    let jy = (-x * ca * sp - sa * cp + sd) / denom;
    let jz = (x * ca * cp - sa * sp - x * cd) / denom;
    (jy, jz)
}

/// Expansion of the closed form about `x = 1`.
///
/// Both numerators vanish at `x = 1`; writing them as `N' u + N'' u²/2 +
/// N''' u³/6` and dividing by `1 − x² = −u(2 + u)` gives
/// `−½ [N' + (N'' − N')u/2 + (N'''/6 − N''/4 + N'/4) u²]`.
fn near_resonance(psi: f64, u: f64, alpha_m: f64) -> (f64, f64) {
    let (sa, ca) = alpha_m.sin_cos();
    let sp = psi.sin();
    let (s, c) = (psi + alpha_m).sin_cos();
    let p2 = psi * psi;
    let p3 = p2 * psi;

    let series =
        |d1: f64, d2: f64, d3: f64| -0.5 * (d1 + 0.5 * (d2 - d1) * u + (d3 / 6.0 - d2 / 4.0 + d1 / 4.0) * u * u);

    // Derivatives of the j̃_y numerator −x cosα sinψ − sinα cosψ + sin(xψ + α).
    let y1 = -ca * sp + psi * c;
    let y2 = -p2 * s;
    let y3 = -p3 * c;
    // Derivatives of the j̃_z numerator x cosα cosψ − sinα sinψ − x cos(xψ + α).
    let z1 = psi * s + sa * sp;
    let z2 = 2.0 * psi * s + p2 * c;
    let z3 = 3.0 * p2 * c - p3 * s;

    (series(y1, y2, y3), series(z1, z2, z3))
}

/// Deflection of an arbitrary initial vector under a phase-modulated rotation.
///
/// Returns the perturbed final vector `J_f = J_f° + j_f` and the deflection
/// `j_f = (r − I) J_f°`, with `J_f° = R(φ_R, ψ) J_i` and `r` the first-order
/// small rotation.
pub fn deflect_general(
    j_i: &BlochVector,
    phi_r: f64,
    psi: f64,
    beta: f64,
    x: f64,
    alpha_m: f64,
) -> Result<(BlochVector, DeflectionVector)> {
    if !j_i.is_finite() {
        return Err(crate::Error::NonFinite("J_i"));
    }
    ensure_finite(phi_r, "phi_R")?;
    ensure_finite(psi, "psi")?;
    ensure_finite(beta, "beta")?;
    ensure_finite(x, "x")?;
    ensure_finite(alpha_m, "alpha_m")?;

    let ideal = rotate_axis_xy(phi_r, psi).apply(j_i).to_vector();
    let (jy, jz) = deflection_special(psi, x, beta, alpha_m);
    let r = small_rotation(phi_r, jy, jz);
    let jf = r.apply_vector(&ideal) - ideal;
    Ok((BlochVector::from_vector(ideal + jf), DeflectionVector::from_vector(jf)))
}
