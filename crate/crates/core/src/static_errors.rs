//! Static amplitude and detuning errors propagated through pulse sequences,
//! and numerical estimation of their cancellation order.

use nalgebra::Vector3;
use serde::{Serialize, Serializer};

use crate::error::{ensure_finite, Error, Result};
use crate::rotations::{rotate_axis_xy, rotation_about, BlochVector, DeflectionVector, RotationMatrix};
use crate::sequences::{PulseSequence, UNIT_TOLERANCE};

/// Fractional amplitude error `ε` and detuning `δ = (f_LO − f_a)/f_R`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StaticError {
    pub epsilon: f64,
    pub delta: f64,
}

impl StaticError {
    pub fn amplitude(epsilon: f64) -> Self {
        Self { epsilon, delta: 0.0 }
    }

    pub fn detuning(delta: f64) -> Self {
        Self { epsilon: 0.0, delta }
    }

    /// Whether both errors are inside the small-error regime (`|ε|, |δ| < 1`).
    pub fn is_perturbative(&self) -> bool {
        self.epsilon.abs() < 1.0 && self.delta.abs() < 1.0
    }
}

/// How the rotation angle responds to detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// Angle `ψ(1+ε)` about the tilted axis.
    #[default]
    Nominal,
    /// Angle `ψ(1+ε)√(1+δ²)`, the generalized Rabi angle at fixed pulse duration.
    GeneralizedRabi,
}

/// Rotation about `(cos φ_R, sin φ_R, δ)/√(1+δ²)` with the angle set by `convention`.
pub fn rotation_with_errors_in(phi_r: f64, psi: f64, err: StaticError, convention: AngleConvention) -> RotationMatrix {
    let angle = psi * (1.0 + err.epsilon);
    if err.delta == 0.0 {
        return rotate_axis_xy(phi_r, angle);
    }
    let stretch = match convention {
        AngleConvention::Nominal => 1.0,
        AngleConvention::GeneralizedRabi => (1.0 + err.delta * err.delta).sqrt(),
    };
    let axis = Vector3::new(phi_r.cos(), phi_r.sin(), err.delta).normalize();
    rotation_about(axis, angle * stretch)
}

pub fn rotation_with_errors(phi_r: f64, psi: f64, err: StaticError) -> RotationMatrix {
    rotation_with_errors_in(phi_r, psi, err, AngleConvention::Nominal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticMetrics {
    /// Actual minus ideal final Bloch vector.
    pub j_st: DeflectionVector,
    /// `j_z²`.
    pub w_zz: f64,
    /// `Tr(j jᵀ)/4`.
    pub infidelity: f64,
}

pub fn static_error_metrics(seq: &PulseSequence, j_i: &BlochVector, err: StaticError) -> Result<StaticMetrics> {
    static_error_metrics_in(seq, j_i, err, AngleConvention::Nominal)
}

pub fn static_error_metrics_in(
    seq: &PulseSequence,
    j_i: &BlochVector,
    err: StaticError,
    convention: AngleConvention,
) -> Result<StaticMetrics> {
    j_i.ensure_unit(UNIT_TOLERANCE)?;
    ensure_finite(err.epsilon, "epsilon")?;
    ensure_finite(err.delta, "delta")?;
    let actual = seq
        .steps()
        .iter()
        .fold(RotationMatrix::identity(), |acc, s| rotation_with_errors_in(s.phi, s.psi, err, convention) * acc);
    let j = actual.apply_vector(&j_i.to_vector()) - seq.ideal_rotation().apply_vector(&j_i.to_vector());
    Ok(StaticMetrics { j_st: DeflectionVector::from_vector(j), w_zz: j.z * j.z, infidelity: j.norm_squared() / 4.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Amplitude,
    Detuning,
}

impl std::str::FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amplitude" | "epsilon" => Ok(ErrorKind::Amplitude),
            "detuning" | "delta" => Ok(ErrorKind::Detuning),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    WZz,
    Infidelity,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "w_zz" | "wzz" => Ok(Metric::WZz),
            "infidelity" | "1-f" => Ok(Metric::Infidelity),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl Metric {
    fn of(self, m: &StaticMetrics) -> f64 {
        match self {
            Metric::WZz => m.w_zz,
            Metric::Infidelity => m.infidelity,
        }
    }
}

/// Geometric sweep `start · ratio^k`, `k = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sweep {
    pub start: f64,
    pub ratio: f64,
    pub points: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { start: 1e-3, ratio: 2.0, points: 7 }
    }
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.start * self.ratio.powi(k as i32)).collect()
    }
}

/// Metrics below this everywhere on the sweep count as exact cancellation.
pub const EXACT_FLOOR: f64 = 1e-28;
/// Largest |slope − order| accepted as an unambiguous fit.
pub const AMBIGUITY_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Finite(u32),
    /// The metric does not scale with the error at any order.
    ExactCancellation,
}

impl Order {
    /// Comparison value with exact cancellation as +∞.
    pub fn as_f64(self) -> f64 {
        match self {
            Order::Finite(n) => n as f64,
            Order::ExactCancellation => f64::INFINITY,
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Finite(n) => serializer.serialize_u32(*n),
            Order::ExactCancellation => serializer.serialize_str("exact_cancellation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub order: Order,
    /// Fitted log-log slope (`NaN` for exact cancellation).
    pub slope: f64,
    /// `|slope − order|`.
    pub residual: f64,
    /// RMS deviation of the log-log points from the fitted line.
    pub rms: f64,
    pub ambiguous: bool,
    /// `(error, metric)` pairs.
    pub sweep: Vec<(f64, f64)>,
}

/// Least-squares log-log slope of `metric` against the swept error, rounded
/// to the nearest even integer.
pub fn cancellation_order(
    seq: &PulseSequence,
    j_i: &BlochVector,
    which: ErrorKind,
    metric: Metric,
    sweep: &Sweep,
) -> Result<OrderEstimate> {
    if !(sweep.start > 0.0 && sweep.ratio > 1.0 && sweep.points >= 2) {
        return Err(Error::InvalidInput("sweep needs start > 0, ratio > 1 and ≥ 2 points".into()));
    }
    let mut data = Vec::with_capacity(sweep.points);
    for e in sweep.values() {
        let err = match which {
            ErrorKind::Amplitude => StaticError::amplitude(e),
            ErrorKind::Detuning => StaticError::detuning(e),
        };
        data.push((e, metric.of(&static_error_metrics(seq, j_i, err)?)));
    }
    Ok(fit_order(data))
}

fn fit_order(data: Vec<(f64, f64)>) -> OrderEstimate {
    if data.iter().all(|&(_, m)| m < EXACT_FLOOR) {
        return OrderEstimate {
            order: Order::ExactCancellation,
            slope: f64::NAN,
            residual: 0.0,
            rms: 0.0,
            ambiguous: false,
            sweep: data,
        };
    }
    let pts: Vec<(f64, f64)> = data.iter().filter(|p| p.1 > 0.0).map(|&(e, m)| (e.ln(), m.ln())).collect();
    if pts.len() < 2 {
        return OrderEstimate {
            order: Order::Finite(0),
            slope: f64::NAN,
            residual: f64::INFINITY,
            rms: f64::INFINITY,
            ambiguous: true,
            sweep: data,
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    let order = (2.0 * (slope / 2.0).round()).max(0.0);
    let residual = (slope - order).abs();
    OrderEstimate {
        order: Order::Finite(order as u32),
        slope,
        residual,
        rms,
        ambiguous: residual > AMBIGUITY_THRESHOLD || pts.len() < data.len(),
        sweep: data,
    }
}

/// Leading odd coefficient `c₃` of `j_z(ε) = c₃ε³ + c₅ε⁵ + …`, by Richardson
/// extrapolation from `ε` and `2ε`.
pub fn amplitude_cubic_coefficient(seq: &PulseSequence, j_i: &BlochVector, epsilon: f64) -> Result<f64> {
    let a = static_error_metrics(seq, j_i, StaticError::amplitude(epsilon))?.j_st.jz;
    let b = static_error_metrics(seq, j_i, StaticError::amplitude(2.0 * epsilon))?.j_st.jz;
    Ok((32.0 * a - b) / (24.0 * epsilon.powi(3)))
}

/// Azimuth `φ_i ∈ [lo, hi]` (with `θ_i = 0`) where the cubic amplitude
/// coefficient of `j_z` vanishes. The bracket must contain a sign change.
pub fn amplitude_sweet_spot(seq: &PulseSequence, lo: f64, hi: f64) -> Result<f64> {
    let c3 = |phi: f64| amplitude_cubic_coefficient(seq, &BlochVector::from_angles(0.0, phi), 1e-2);
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (c3(a)?, c3(b)?);
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidInput(format!("no sign change of the cubic coefficient on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = c3(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
