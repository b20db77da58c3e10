//! Covariance transfer matrices and covariance noise matrices for a single
//! resonant rotation.
//!
//! `T̃(ψ, x)` maps SSB phase noise at `x = f_m / f_R` onto the second moments of
//! the special-case deflection (`φ_R = 0`, `J_i = x̂`). Integrating it against a
//! spectrum gives `Ṽ(ψ)`; both transform to arbitrary axis azimuth and final
//! vector through `D · M̃ · Dᵀ`.

use nalgebra::{Matrix3, Vector3};
use serde::{Serialize, Serializer};

use crate::deflection::{unit_response, RESONANCE_WINDOW};
use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::rotations::{d_matrix, BlochVector, RotationMatrix};
use crate::spectra::{PhaseNoiseSpectrum, PowerLawTerm, Table};

/// Symmetric 3×3 second-moment matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(Matrix3<f64>);

impl CovarianceMatrix {
    pub fn zeros() -> Self {
        Self(Matrix3::zeros())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Special-case form with zero first row and column.
    pub fn from_yz_block(yy: f64, zz: f64, yz: f64) -> Self {
        Self(Matrix3::new(0.0, 0.0, 0.0, 0.0, yy, yz, 0.0, yz, zz))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0 * factor)
    }

    pub fn to_array(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
    }

    /// `R · M · Rᵀ`.
    pub fn conjugate(&self, r: &RotationMatrix) -> Self {
        Self(r.matrix() * self.0 * r.matrix().transpose())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.abs().max()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0 - self.0.transpose()).abs().max() <= tol
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.0 + self.0.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    /// Eigenvalues ≥ −`rel_tol`·trace.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        self.min_eigenvalue() >= -rel_tol * self.trace().abs()
    }

    fn has_zero_first_row_col(&self) -> bool {
        let tol = 1e-12 * self.max_abs().max(f64::MIN_POSITIVE);
        (0..3).all(|k| self.0[(0, k)].abs() <= tol && self.0[(k, 0)].abs() <= tol)
    }
}

impl std::ops::Add for CovarianceMatrix {
    type Output = CovarianceMatrix;

    fn add(self, rhs: CovarianceMatrix) -> CovarianceMatrix {
        CovarianceMatrix(self.0 + rhs.0)
    }
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

/// Covariance transfer matrix `T̃(ψ, x)` for the special case.
///
/// Closed form away from `x = 1`; inside the resonance window the matrix is
/// rebuilt from the deflection series, `T̃ = 2(u uᵀ + v vᵀ)` with `u`, `v` the
/// unit-β responses at α_m = 0 and π/2.
pub fn transfer_tilde(psi: f64, x: f64) -> CovarianceMatrix {
    if (x - 1.0).abs() < RESONANCE_WINDOW {
        return transfer_tilde_by_phase_average(psi, x);
    }
    let (sp, cp) = psi.sin_cos();
    let (sxp, cxp) = (x * psi).sin_cos();
    let d = 1.0 - x * x;
    let dc = cp - cxp;
    let yy = 2.0 / (d * d) * (dc * dc + (x * sp - sxp).powi(2));
    let zz = 2.0 / (d * d) * (x * x * dc * dc + (sp - x * sxp).powi(2));
    let yz = 2.0 / d * dc * sp;
    CovarianceMatrix::from_yz_block(yy, zz, yz)
}

/// `4⟨j̃ j̃ᵀ⟩/⟨β²⟩` averaged over a uniform modulation phase, built from the
/// deflection solution. The deflection is linear in `(cos α_m, sin α_m)`, so the
/// average over α_m is `½(u uᵀ + v vᵀ)` with `u`, `v` the responses at 0 and π/2.
pub fn transfer_tilde_by_phase_average(psi: f64, x: f64) -> CovarianceMatrix {
    let u = unit_response(psi, x, 0.0);
    let v = unit_response(psi, x, std::f64::consts::FRAC_PI_2);
    CovarianceMatrix::from_yz_block(
        2.0 * (u.0 * u.0 + v.0 * v.0),
        2.0 * (u.1 * u.1 + v.1 * v.1),
        2.0 * (u.0 * u.1 + v.0 * v.1),
    )
}

/// `D(φ_R, J_f°) · M̃ · D(φ_R, J_f°)ᵀ`.
pub fn transform_covariance(
    m_tilde: &CovarianceMatrix,
    phi_r: f64,
    j_f_ideal: &BlochVector,
) -> Result<CovarianceMatrix> {
    if !m_tilde.has_zero_first_row_col() {
        return Err(Error::InvalidInput("special-case matrix must have zero first row and column".into()));
    }
    Ok(transform_unchecked(m_tilde, phi_r, j_f_ideal))
}

pub(crate) fn transform_unchecked(m_tilde: &CovarianceMatrix, phi_r: f64, j_f_ideal: &BlochVector) -> CovarianceMatrix {
    let d = d_matrix(phi_r, j_f_ideal);
    CovarianceMatrix(d * m_tilde.0 * d.transpose())
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Noise-equivalent-bandwidth matrix: `Ṽ = 𝓛° · NEB` for white noise.
pub fn neb_matrix(psi: f64, f_r: f64) -> CovarianceMatrix {
    let scale = std::f64::consts::PI * f_r * sgn(psi);
    let half_sin2 = 0.5 * (2.0 * psi).sin();
    let sin_sq = psi.sin().powi(2);
    CovarianceMatrix::from_yz_block(scale * (psi - half_sin2), scale * (psi + half_sin2), -scale * sin_sq)
}

/// Coefficients `(yy, zz, yz)` of the oscillation-averaged large-`x`
/// asymptote `T̃ ≈ a / x²`.
pub fn tail_coefficients(psi: f64) -> [f64; 3] {
    let (s, c) = psi.sin_cos();
    [2.0 * s * s, 2.0 * (1.0 + c * c), -2.0 * s * c]
}

/// Envelope constant: every entry satisfies `|T̃| ≤ TAIL_ENVELOPE / x²` for `x ≥ 10`.
const TAIL_ENVELOPE: f64 = 11.0;

/// Machine-readable warnings attached to noise-matrix results.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A tabulated spectrum was integrated only over its support.
    TableTruncated {
        f_min: f64,
        f_max: f64,
    },
    /// A tabulated spectrum was evaluated outside its support.
    TableExtrapolated,
    /// No tone sits at the Rabi frequency; the large-ψ form is zero.
    NoToneAtRabi,
    /// A tone sits exactly at the Rabi frequency; its exact resonant
    /// contribution is returned instead of the density form.
    ToneAtRabi,
    QuadratureNotConverged {
        error: f64,
    },
}

/// Options for [`noise_matrix_tilde`].
#[derive(Debug, Clone, Copy)]
pub struct NoiseOptions {
    /// Upper truncation of the numeric integral in units of `f_R`.
    pub x_max: f64,
    pub rel_tol: f64,
    /// Lower integration cutoff in Hz.
    pub f_low: Option<f64>,
    /// Extend tabulated spectra flat beyond their support.
    pub extrapolate_table: bool,
    /// Integrate white components numerically instead of using the closed form.
    pub force_numeric: bool,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self { x_max: 200.0, rel_tol: 1e-10, f_low: None, extrapolate_table: false, force_numeric: false }
    }
}

/// Covariance noise matrix with its truncation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseMatrix {
    pub matrix: CovarianceMatrix,
    /// Averaged `a/x²` estimate of the part beyond `x_max`, already included
    /// in `matrix`.
    pub tail_estimate: CovarianceMatrix,
    /// Bound on the magnitude of every entry of the truncated tail.
    pub tail_bound: f64,
    /// Estimated absolute quadrature error.
    pub quadrature_error: f64,
    pub warnings: Vec<Warning>,
}

impl NoiseMatrix {
    fn exact(matrix: CovarianceMatrix) -> Self {
        Self {
            matrix,
            tail_estimate: CovarianceMatrix::zeros(),
            tail_bound: 0.0,
            quadrature_error: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// `Ṽ(ψ) = ∫₀^∞ T̃(ψ, f_m) 𝓛(f_m) df_m` for the special case.
///
/// White spectra use the closed-form NEB matrix and tones the discrete sum
/// `Σ ⟨β²⟩/4 · T̃(ψ, f₀/f_R)`. Power-law and tabulated spectra are integrated
/// numerically in `x = f_m/f_R` up to `x_max`, with the averaged `1/x²` tail
/// added and bounded.
pub fn noise_matrix_tilde(spec: &PhaseNoiseSpectrum, psi: f64, f_r: f64, opts: &NoiseOptions) -> Result<NoiseMatrix> {
    ensure_finite(psi, "psi")?;
    ensure_finite(f_r, "f_R")?;
    if f_r <= 0.0 {
        return Err(Error::InvalidInput(format!("Rabi frequency {f_r} must be > 0")));
    }
    if psi < 0.0 {
        return Err(Error::InvalidInput(format!("rotation angle {psi} must be ≥ 0")));
    }
    if !(opts.x_max.is_finite() && opts.x_max >= 10.0) {
        return Err(Error::InvalidInput("x_max must be ≥ 10".into()));
    }
    if let Some(f_low) = opts.f_low {
        if !(f_low.is_finite() && f_low > 0.0 && f_low < opts.x_max * f_r) {
            return Err(Error::InvalidInput(format!("invalid low-frequency cutoff {f_low}")));
        }
    }
    if psi == 0.0 {
        return Ok(NoiseMatrix::exact(CovarianceMatrix::zeros()));
    }

    match spec {
        PhaseNoiseSpectrum::White { l0 } => {
            if opts.force_numeric || opts.f_low.is_some() {
                let terms = [PowerLawTerm { exponent: 0, coefficient: *l0 }];
                power_law_numeric(&terms, psi, f_r, opts)
            } else {
                Ok(NoiseMatrix::exact(neb_matrix(psi, f_r).scaled(*l0)))
            }
        }
        PhaseNoiseSpectrum::Tones { tones } => {
            let m = tones.iter().fold(CovarianceMatrix::zeros(), |acc, t| {
                acc + transfer_tilde(psi, t.f0 / f_r).scaled(t.beta_sq / 4.0)
            });
            Ok(NoiseMatrix::exact(m))
        }
        PhaseNoiseSpectrum::PowerLaw { terms } => {
            let closed_white = !opts.force_numeric && opts.f_low.is_none();
            let white: f64 = terms.iter().filter(|t| t.exponent == 0 && closed_white).map(|t| t.coefficient).sum();
            let rest: Vec<PowerLawTerm> =
                terms.iter().copied().filter(|t| !(t.exponent == 0 && closed_white) && t.coefficient != 0.0).collect();
            let mut out = if rest.is_empty() {
                NoiseMatrix::exact(CovarianceMatrix::zeros())
            } else {
                power_law_numeric(&rest, psi, f_r, opts)?
            };
            out.matrix = out.matrix + neb_matrix(psi, f_r).scaled(white);
            Ok(out)
        }
        PhaseNoiseSpectrum::Tabulated(table) => tabulated_numeric(table, psi, f_r, opts),
    }
}

/// Partition of `[lo, hi]` fine enough to resolve the `2π/ψ` oscillation of T̃.
fn breakpoints(lo: f64, hi: f64, psi: f64, extra: &[f64]) -> Vec<f64> {
    let width = (std::f64::consts::PI / (2.0 * psi.max(1.0))).min(0.5);
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    pts.extend(extra.iter().copied().filter(|&p| p > lo && p < hi));
    pts.push(1.0_f64.clamp(lo, hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn integrate_transfer<F: Fn(f64) -> f64>(
    density: F,
    psi: f64,
    f_r: f64,
    lo: f64,
    hi: f64,
    extra: &[f64],
    rel_tol: f64,
) -> ([f64; 3], f64, bool) {
    let opts = QuadOptions { rel_tol, ..Default::default() };
    let r = integrate(
        |x| {
            let t = transfer_tilde(psi, x);
            let w = density(x * f_r) * f_r;
            [t.get(1, 1) * w, t.get(2, 2) * w, t.get(1, 2) * w]
        },
        &breakpoints(lo, hi, psi, extra),
        &opts,
    );
    (r.value, r.error, r.converged)
}

fn power_law_numeric(terms: &[PowerLawTerm], psi: f64, f_r: f64, opts: &NoiseOptions) -> Result<NoiseMatrix> {
    for t in terms {
        if t.exponent <= -1 {
            return Err(Error::DivergentHighFrequency { exponent: t.exponent });
        }
    }
    let x_lo = match opts.f_low {
        Some(f_low) => f_low / f_r,
        None => {
            let t0 = transfer_tilde(psi, 0.0);
            let dc_response = t0.max_abs() > 1e-12;
            if let Some(t) = terms.iter().find(|t| t.exponent >= 3 || (t.exponent >= 1 && dc_response)) {
                return Err(Error::DivergentLowFrequency { exponent: t.exponent });
            }
            0.0
        }
    };
    let density = |f: f64| terms.iter().map(|t| t.coefficient * f.powi(-t.exponent)).sum::<f64>();
    let (value, error, converged) = integrate_transfer(density, psi, f_r, x_lo, opts.x_max, &[], opts.rel_tol);

    // ∫_X^∞ 𝓛(x f_R) f_R / x² dx for each term.
    let x = opts.x_max;
    let weight: f64 = terms
        .iter()
        .map(|t| {
            let k = t.exponent as f64;
            t.coefficient * f_r * f_r.powf(-k) * x.powf(-k - 1.0) / (k + 1.0)
        })
        .sum();
    Ok(finish(value, error, converged, weight, Vec::new(), psi))
}

fn finish(
    value: [f64; 3],
    error: f64,
    converged: bool,
    tail_weight: f64,
    mut warnings: Vec<Warning>,
    psi: f64,
) -> NoiseMatrix {
    let a = tail_coefficients(psi);
    let tail = CovarianceMatrix::from_yz_block(a[0] * tail_weight, a[1] * tail_weight, a[2] * tail_weight);
    if !converged {
        warnings.push(Warning::QuadratureNotConverged { error });
    }
    NoiseMatrix {
        matrix: CovarianceMatrix::from_yz_block(value[0], value[1], value[2]) + tail,
        tail_estimate: tail,
        tail_bound: TAIL_ENVELOPE * tail_weight,
        quadrature_error: error,
        warnings,
    }
}

fn tabulated_numeric(table: &Table, psi: f64, f_r: f64, opts: &NoiseOptions) -> Result<NoiseMatrix> {
    let pts = table.points();
    let knots: Vec<f64> = pts.iter().map(|p| p.0 / f_r).collect();
    let spec = PhaseNoiseSpectrum::Tabulated(table.clone());
    let density = |f: f64| spec.ssb_value(f).map(|d| d.value).unwrap_or(0.0);
    let (f_min, f_max) = (table.f_min(), table.f_max());
    let l_last = pts[pts.len() - 1].1;

    let mut lo = f_min / f_r;
    if let Some(f_low) = opts.f_low {
        lo = if opts.extrapolate_table { f_low / f_r } else { lo.max(f_low / f_r) };
    } else if opts.extrapolate_table {
        lo = 0.0;
    }
    let table_hi = f_max / f_r;
    let hi = if opts.extrapolate_table { table_hi.max(opts.x_max) } else { table_hi };
    if hi <= lo {
        return Ok(NoiseMatrix::exact(CovarianceMatrix::zeros()));
    }
    let (value, error, converged) = integrate_transfer(density, psi, f_r, lo, hi, &knots, opts.rel_tol);

    let mut warnings = Vec::new();
    let weight = if opts.extrapolate_table {
        warnings.push(Warning::TableExtrapolated);
        l_last * f_r / hi
    } else {
        warnings.push(Warning::TableTruncated { f_min, f_max });
        0.0
    };
    let mut out = finish(value, error, converged, weight, warnings, psi);
    if !opts.extrapolate_table {
        // Report what a flat continuation beyond the table could add.
        out.tail_bound = TAIL_ENVELOPE * l_last * f_r / table_hi.max(10.0);
    }
    Ok(out)
}

/// Large-|ψ| approximation `π f_R |ψ| 𝓛(f_R) · diag(0, 1, 1)`.
pub fn noise_matrix_large_psi(
    spec: &PhaseNoiseSpectrum,
    psi: f64,
    f_r: f64,
) -> Result<(CovarianceMatrix, Vec<Warning>)> {
    ensure_finite(psi, "psi")?;
    if !(f_r.is_finite() && f_r > 0.0) {
        return Err(Error::InvalidInput(format!("Rabi frequency {f_r} must be > 0")));
    }
    let mut warnings = Vec::new();
    let density = match spec {
        PhaseNoiseSpectrum::Tones { tones } => {
            let at_rabi: Vec<_> = tones.iter().filter(|t| (t.f0 / f_r - 1.0).abs() < 1e-12).collect();
            if at_rabi.is_empty() {
                return Ok((CovarianceMatrix::zeros(), vec![Warning::NoToneAtRabi]));
            }
            let m = at_rabi
                .iter()
                .fold(CovarianceMatrix::zeros(), |acc, t| acc + transfer_tilde(psi.abs(), 1.0).scaled(t.beta_sq / 4.0));
            return Ok((m, vec![Warning::ToneAtRabi]));
        }
        other => {
            let d = other.ssb_value(f_r)?;
            if d.extrapolated {
                warnings.push(Warning::TableExtrapolated);
            }
            d.value
        }
    };
    let w = std::f64::consts::PI * f_r * psi.abs() * density;
    Ok((CovarianceMatrix::from_yz_block(w, w, 0.0), warnings))
}

/// Variance of the deflection projected on the unit vector `n`: `nᵀ V n`.
pub fn project_variance(v: &CovarianceMatrix, n: &Vector3<f64>) -> Result<f64> {
    let norm = n.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitVector { norm });
    }
    Ok((n.transpose() * v.0 * n)[(0, 0)])
}
