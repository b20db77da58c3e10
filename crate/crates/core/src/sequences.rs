//! Pulse sequences, white-noise covariance propagation and closed-form
//! results for the standard composite π-pulses and spin echo trains.
//!
//! Steps are stored in execution order. Each pulse adds
//! `V_k = D(φ_k, J_k°) · 𝓛°·NEB(ψ_k) · Dᵀ` and carries the accumulated
//! covariance along with its rotation: `W_k = R_k W_{k−1} R_kᵀ + V_k`.
//! Free-evolution delays contribute no noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{neb_matrix, transform_unchecked, CovarianceMatrix};
use crate::error::{ensure_finite, Error, Result};
use crate::rotations::{rotate_axis_xy, BlochVector, RotationMatrix};

/// Tolerance on ‖J_i‖ − 1 for initial Bloch vectors.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Axis azimuth of the BB1 correction pulses, `arccos(−1/4)`.
pub fn bb1_phase() -> f64 {
    (-0.25f64).acos()
}

/// One resonant pulse, optionally preceded by free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationStep {
    #[serde(rename = "phi_rad")]
    pub phi: f64,
    #[serde(rename = "psi_rad")]
    pub psi: f64,
    #[serde(rename = "delay_s", default)]
    pub delay_before: f64,
}

impl RotationStep {
    pub fn pulse(phi: f64, psi: f64) -> Self {
        Self { phi, psi, delay_before: 0.0 }
    }

    pub fn rotation(&self) -> RotationMatrix {
        rotate_axis_xy(self.phi, self.psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSequence {
    steps: Vec<RotationStep>,
    f_r: f64,
    trailing_delay: f64,
}

impl PulseSequence {
    pub fn new(steps: Vec<RotationStep>, f_r: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("a sequence needs at least one step".into()));
        }
        if !(f_r.is_finite() && f_r > 0.0) {
            return Err(Error::InvalidInput(format!("Rabi frequency {f_r} must be > 0")));
        }
        for s in &steps {
            ensure_finite(s.phi, "phi")?;
            ensure_finite(s.psi, "psi")?;
            ensure_finite(s.delay_before, "delay")?;
            if s.psi < 0.0 {
                return Err(Error::InvalidInput(format!("rotation angle {} must be ≥ 0", s.psi)));
            }
            if s.delay_before < 0.0 {
                return Err(Error::InvalidInput(format!("delay {} must be ≥ 0", s.delay_before)));
            }
        }
        let total: f64 = steps.iter().map(|s| s.psi).sum();
        ensure_finite(total, "total rotation angle")?;
        Ok(Self { steps, f_r, trailing_delay: 0.0 })
    }

    /// Free evolution after the last pulse.
    pub fn with_trailing_delay(mut self, delay: f64) -> Result<Self> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::InvalidInput(format!("delay {delay} must be ≥ 0")));
        }
        self.trailing_delay = delay;
        Ok(self)
    }

    pub fn steps(&self) -> &[RotationStep] {
        &self.steps
    }

    pub fn f_r(&self) -> f64 {
        self.f_r
    }

    pub fn trailing_delay(&self) -> f64 {
        self.trailing_delay
    }

    /// Ψ = Σψ_k.
    pub fn total_angle(&self) -> f64 {
        self.steps.iter().map(|s| s.psi).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.delay_before + s.psi / (2.0 * PI * self.f_r)).sum::<f64>() + self.trailing_delay
    }

    /// Product of the ideal rotations, last step leftmost.
    pub fn ideal_rotation(&self) -> RotationMatrix {
        self.steps.iter().fold(RotationMatrix::identity(), |acc, s| s.rotation() * acc)
    }

    /// Same sequence with every axis shifted by `chi`.
    pub fn rotated_axes(&self, chi: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.steps {
            s.phi += chi;
        }
        out
    }
}

/// The four composite π-pulse families with closed-form noise results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeKind {
    SinglePi,
    CorpsePi,
    ScrofulousPi,
    Bb1Pi,
}

impl CompositeKind {
    pub const ALL: [CompositeKind; 4] =
        [CompositeKind::SinglePi, CompositeKind::CorpsePi, CompositeKind::ScrofulousPi, CompositeKind::Bb1Pi];

    pub fn name(self) -> &'static str {
        match self {
            CompositeKind::SinglePi => "single_pi",
            CompositeKind::CorpsePi => "corpse_pi",
            CompositeKind::ScrofulousPi => "scrofulous_pi",
            CompositeKind::Bb1Pi => "bb1_pi",
        }
    }

    /// Steps in execution order.
    pub fn steps(self) -> Vec<RotationStep> {
        let p = RotationStep::pulse;
        match self {
            CompositeKind::SinglePi => vec![p(0.0, PI)],
            CompositeKind::CorpsePi => vec![p(0.0, 7.0 * PI / 3.0), p(PI, 5.0 * PI / 3.0), p(0.0, PI / 3.0)],
            CompositeKind::ScrofulousPi => vec![p(PI / 3.0, PI), p(5.0 * PI / 3.0, PI), p(PI / 3.0, PI)],
            CompositeKind::Bb1Pi => {
                let b = bb1_phase();
                vec![p(b, PI), p(3.0 * b, 2.0 * PI), p(b, PI), p(0.0, PI)]
            }
        }
    }
}

impl fmt::Display for CompositeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompositeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single_pi" | "single" => Ok(CompositeKind::SinglePi),
            "corpse_pi" | "corpse" => Ok(CompositeKind::CorpsePi),
            "scrofulous_pi" | "scrofulous" => Ok(CompositeKind::ScrofulousPi),
            "bb1_pi" | "bb1" => Ok(CompositeKind::Bb1Pi),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinEchoVariant {
    /// Every π-pulse about +x̂.
    FixedAxis,
    /// Alternating +x̂, −x̂, +x̂, …
    Alternating,
}

impl FromStr for SpinEchoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed_axis" | "fixed" | "a" => Ok(SpinEchoVariant::FixedAxis),
            "alternating" | "b" => Ok(SpinEchoVariant::Alternating),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceKind {
    Composite(CompositeKind),
    SpinEcho { n: usize, tau: f64, variant: SpinEchoVariant },
}

impl From<CompositeKind> for SequenceKind {
    fn from(k: CompositeKind) -> Self {
        SequenceKind::Composite(k)
    }
}

/// `[τ − R(φ₁, π) − 2τ − ⋯ − R(φ_N, π) − τ]` or one of the composite pulses.
pub fn build_sequence(kind: &SequenceKind, f_r: f64) -> Result<PulseSequence> {
    match *kind {
        SequenceKind::Composite(k) => PulseSequence::new(k.steps(), f_r),
        SequenceKind::SpinEcho { n, tau, variant } => {
            if n == 0 {
                return Err(Error::InvalidInput("spin echo needs N ≥ 1".into()));
            }
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidInput(format!("spin echo delay {tau} must be ≥ 0")));
            }
            let steps = (0..n)
                .map(|k| {
                    let phi = match variant {
                        SpinEchoVariant::Alternating if k % 2 == 1 => PI,
                        _ => 0.0,
                    };
                    RotationStep { phi, psi: PI, delay_before: if k == 0 { tau } else { 2.0 * tau } }
                })
                .collect();
            PulseSequence::new(steps, f_r)?.with_trailing_delay(tau)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationResult {
    /// `J_k°` after each step.
    pub ideal: Vec<BlochVector>,
    /// Cumulative `W_k` after each step.
    pub noise: Vec<CovarianceMatrix>,
    /// `Tr(W_N)/4`.
    pub infidelity: f64,
}

impl PropagationResult {
    pub fn final_noise(&self) -> &CovarianceMatrix {
        self.noise.last().expect("sequences are non-empty")
    }

    pub fn final_vector(&self) -> &BlochVector {
        self.ideal.last().expect("sequences are non-empty")
    }
}

fn check_l0(l0: f64) -> Result<()> {
    if !(l0.is_finite() && l0 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level {l0} must be finite and ≥ 0")));
    }
    Ok(())
}

/// Propagates white phase noise of level `l0` (rad²/Hz) through `seq`.
pub fn propagate_noise(j_i: &BlochVector, seq: &PulseSequence, l0: f64) -> Result<PropagationResult> {
    j_i.ensure_unit(UNIT_TOLERANCE)?;
    check_l0(l0)?;
    let mut ideal = Vec::with_capacity(seq.steps.len());
    let mut noise = Vec::with_capacity(seq.steps.len());
    let mut j = *j_i;
    let mut w = CovarianceMatrix::zeros();
    for step in &seq.steps {
        let r = step.rotation();
        j = r.apply(&j);
        let v = transform_unchecked(&neb_matrix(step.psi, seq.f_r).scaled(l0), step.phi, &j);
        w = w.conjugate(&r) + v;
        ideal.push(j);
        noise.push(w);
    }
    Ok(PropagationResult { ideal, noise, infidelity: w.trace() / 4.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityMetrics {
    pub infidelity: f64,
    /// State-averaged infidelity `Ψ π f_R 𝓛° / 3`.
    pub average_infidelity: f64,
}

pub fn fidelity_metrics(result: &PropagationResult, seq: &PulseSequence, l0: f64) -> FidelityMetrics {
    FidelityMetrics {
        infidelity: result.final_noise().trace() / 4.0,
        average_infidelity: seq.total_angle() * PI * seq.f_r * l0 / 3.0,
    }
}

/// Closed-form `W` and `1 − F` for `J_i` at polar angle `theta_i` (from the
/// x–y plane) and azimuth `phi_i`.
pub fn closed_form_noise(
    kind: &SequenceKind,
    theta_i: f64,
    phi_i: f64,
    f_r: f64,
    l0: f64,
) -> Result<(CovarianceMatrix, f64)> {
    ensure_finite(theta_i, "theta_i")?;
    ensure_finite(phi_i, "phi_i")?;
    check_l0(l0)?;
    if !(f_r.is_finite() && f_r > 0.0) {
        return Err(Error::InvalidInput(format!("Rabi frequency {f_r} must be > 0")));
    }
    let u = PI * f_r * l0;
    let (st, ct) = theta_i.sin_cos();
    let (sp, cp) = phi_i.sin_cos();
    let (ct2, st2, cp2, sp2) = (ct * ct, st * st, cp * cp, sp * sp);
    let s2t = (2.0 * theta_i).sin();
    let s2p = (2.0 * phi_i).sin();
    let c2p = (2.0 * phi_i).cos();
    let c2t = (2.0 * theta_i).cos();
    let sym = |xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64| {
        CovarianceMatrix::from_matrix(nalgebra::Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz))
    };

    let (w, infid) = match *kind {
        SequenceKind::Composite(CompositeKind::SinglePi) => {
            let a = PI * u;
            (
                sym(a * (1.0 - ct2 * cp2), a * ct2 * cp2, a * ct2 * cp2, 0.5 * a * ct2 * s2p, 0.5 * a * s2t * cp, 0.0),
                0.25 * a * (1.0 + ct2 * cp2),
            )
        }
        SequenceKind::Composite(CompositeKind::CorpsePi) => {
            let r3 = 3f64.sqrt();
            let (m, p) = (13.0 * PI - 3.0 * r3, 13.0 * PI + 3.0 * r3);
            (
                sym(
                    u / 3.0 * (m * ct2 * sp2 + p * st2),
                    u / 3.0 * m * ct2 * cp2,
                    u / 3.0 * p * ct2 * cp2,
                    u / 6.0 * m * ct2 * s2p,
                    u / 6.0 * p * s2t * cp,
                    0.0,
                ),
                u / 12.0 * (13.0 * PI - 3.0 * r3 * c2t + p * ct2 * cp2),
            )
        }
        SequenceKind::Composite(CompositeKind::ScrofulousPi) => {
            let a = 1.5 * PI * u;
            (
                sym(
                    a * (2.0 * ct2 * sp2 + st2),
                    a * (2.0 * ct2 * cp2 + st2),
                    a * ct2,
                    a * ct2 * s2p,
                    0.5 * a * s2t * cp,
                    -0.5 * a * s2t * sp,
                ),
                0.125 * a * (5.0 + c2t),
            )
        }
        SequenceKind::Composite(CompositeKind::Bb1Pi) => {
            let a = 1.25 * PI * u;
            (
                sym(
                    a * (4.0 * ct2 * sp2 + st2),
                    a * (4.0 * ct2 * cp2 + 3.0 * st2),
                    a * ct2 * (2.0 - c2p),
                    2.0 * a * ct2 * s2p,
                    0.5 * a * s2t * cp,
                    -1.5 * a * s2t * sp,
                ),
                0.25 * a * (4.0 + 2.0 * ct2 - ct2 * c2p),
            )
        }
        SequenceKind::SpinEcho { n, .. } => {
            if n == 0 {
                return Err(Error::InvalidInput("spin echo needs N ≥ 1".into()));
            }
            let j = BlochVector::from_angles(theta_i, phi_i);
            let s = if n % 2 == 1 { 1.0 } else { -1.0 };
            let a = n as f64 * PI * u;
            let jx2 = j.x * j.x;
            let w = sym(a * (1.0 - jx2), a * jx2, a * jx2, a * s * j.x * j.y, a * s * j.x * j.z, 0.0);
            let t = w.trace() / 4.0;
            (w, t)
        }
    };
    Ok((w, infid))
}

/// On-disk sequence description: explicit steps or a named builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub f_r_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<RotationStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trailing_delay_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<BuilderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderSpec {
    pub kind: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub tau_s: Option<f64>,
    #[serde(default)]
    pub variant: Option<SpinEchoVariant>,
}

impl BuilderSpec {
    pub fn to_kind(&self) -> Result<SequenceKind> {
        if self.kind.trim().eq_ignore_ascii_case("spin_echo") {
            let n = self.n.ok_or_else(|| Error::InvalidInput("spin_echo builder needs `n`".into()))?;
            Ok(SequenceKind::SpinEcho {
                n,
                tau: self.tau_s.unwrap_or(0.0),
                variant: self.variant.unwrap_or(SpinEchoVariant::Alternating),
            })
        } else {
            Ok(SequenceKind::Composite(self.kind.parse()?))
        }
    }
}

impl SequenceFile {
    pub fn to_sequence(&self) -> Result<PulseSequence> {
        match (&self.steps, &self.builder) {
            (Some(steps), None) => PulseSequence::new(steps.clone(), self.f_r_hz)?
                .with_trailing_delay(self.trailing_delay_s.unwrap_or(0.0)),
            (None, Some(b)) => {
                let seq = build_sequence(&b.to_kind()?, self.f_r_hz)?;
                match self.trailing_delay_s {
                    Some(d) => seq.with_trailing_delay(d),
                    None => Ok(seq),
                }
            }
            _ => Err(Error::Parse("sequence file needs exactly one of `steps` or `builder`".into())),
        }
    }
}

/// Parses the JSON sequence format.
pub fn parse_sequence_file(text: &str) -> Result<PulseSequence> {
    let file: SequenceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_sequence()
}
