//! Single-sideband phase-noise spectra `𝓛(f_m)` and unit conversions.
//!
//! All densities are in rad²/Hz (one half of the phase PSD `S_φ`). dBc/Hz
//! values only appear at ingestion, see [`dbc_to_linear`] and
//! [`read_datasheet`].

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// One `𝓛_k / f^k` term of a power-law spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawTerm {
    pub exponent: i32,
    /// Coefficient in rad²·Hz^(k−1).
    pub coefficient: f64,
}

/// A discrete modulation tone at `f0` with mean-square amplitude ⟨β²⟩.
///
/// Carries the density `⟨β²⟩/4 · δ(f − f0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub f0: f64,
    pub beta_sq: f64,
}

/// Datasheet-style table of `(f_m, 𝓛)` points, interpolated log-log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    points: Vec<(f64, f64)>,
}

impl Table {
    /// Frequencies must be strictly increasing and positive; densities positive.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("table needs at least one point".into()));
        }
        for (i, &(f, l)) in points.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidInput(format!("table frequency {f} must be positive")));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidInput(format!("table density {l} must be positive")));
            }
            if i > 0 && f <= points[i - 1].0 {
                return Err(Error::InvalidInput("table frequencies must be strictly increasing".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn f_min(&self) -> f64 {
        self.points[0].0
    }

    pub fn f_max(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    fn value(&self, f: f64) -> Density {
        let pts = &self.points;
        if f < self.f_min() {
            return Density { value: pts[0].1, extrapolated: true };
        }
        if f > self.f_max() {
            return Density { value: pts[pts.len() - 1].1, extrapolated: true };
        }
        let i = pts.partition_point(|&(fk, _)| fk <= f);
        if i == 0 || i == pts.len() {
            // f equals a knot (first or last).
            let k = if i == 0 { 0 } else { pts.len() - 1 };
            return Density { value: pts[k].1, extrapolated: false };
        }
        let (fa, la) = pts[i - 1];
        let (fb, lb) = pts[i];
        if f == fa {
            return Density { value: la, extrapolated: false };
        }
        let t = (f / fa).ln() / (fb / fa).ln();
        let value = (la.ln() + t * (lb / la).ln()).exp();
        Density { value, extrapolated: false }
    }

    /// `∫ 𝓛 df` over `[a, b]` inside a single segment, exact for the log-log
    /// interpolant (a power law within the segment).
    fn segment_integral(a: f64, la: f64, b: f64, lb: f64, lo: f64, hi: f64) -> f64 {
        let slope = (lb / la).ln() / (b / a).ln();
        power_integral(la * a.powf(-slope), slope, lo, hi)
    }

    /// `∫ 𝓛 df` over `[lo, hi]`, flat outside the table.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let pts = &self.points;
        let mut total = 0.0;
        let (f0, l0) = pts[0];
        let (fn_, ln_) = pts[pts.len() - 1];
        if lo < f0 {
            total += l0 * (hi.min(f0) - lo);
        }
        if hi > fn_ {
            total += ln_ * (hi - lo.max(fn_));
        }
        for w in pts.windows(2) {
            let (a, la) = w[0];
            let (b, lb) = w[1];
            let s = lo.max(a);
            let e = hi.min(b);
            if e > s {
                total += Self::segment_integral(a, la, b, lb, s, e);
            }
        }
        total
    }
}

/// `∫_lo^hi c f^p df`.
fn power_integral(c: f64, p: f64, lo: f64, hi: f64) -> f64 {
    if (p + 1.0).abs() < 1e-12 {
        c * (hi / lo).ln()
    } else {
        c * (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / (p + 1.0)
    }
}

/// Single-sideband phase-noise spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhaseNoiseSpectrum {
    White { l0: f64 },
    PowerLaw { terms: Vec<PowerLawTerm> },
    Tones { tones: Vec<Tone> },
    Tabulated(Table),
}

/// Point density with a flag set when a table was extrapolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    pub extrapolated: bool,
}

impl PhaseNoiseSpectrum {
    pub fn white(l0: f64) -> Result<Self> {
        if !(l0.is_finite() && l0 >= 0.0) {
            return Err(Error::InvalidInput(format!("white level {l0} must be ≥ 0")));
        }
        Ok(Self::White { l0 })
    }

    pub fn power_law(terms: Vec<PowerLawTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.coefficient.is_finite() && t.coefficient >= 0.0) {
                return Err(Error::InvalidInput("power-law coefficients must be ≥ 0".into()));
            }
        }
        Ok(Self::PowerLaw { terms })
    }

    pub fn tones(tones: Vec<Tone>) -> Result<Self> {
        for t in &tones {
            if !(t.f0.is_finite() && t.f0 > 0.0 && t.beta_sq.is_finite() && t.beta_sq >= 0.0) {
                return Err(Error::InvalidInput("tones need f0 > 0 and ⟨β²⟩ ≥ 0".into()));
            }
        }
        Ok(Self::Tones { tones })
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        Table::new(points).map(Self::Tabulated)
    }

    pub fn is_white(&self) -> bool {
        matches!(self, Self::White { .. })
    }

    /// `𝓛(f_m)` in rad²/Hz.
    pub fn ssb_value(&self, f_m: f64) -> Result<Density> {
        ensure_finite(f_m, "f_m")?;
        if f_m <= 0.0 {
            return Err(Error::InvalidInput(format!("offset frequency {f_m} must be > 0")));
        }
        let exact = |value| Ok(Density { value, extrapolated: false });
        match self {
            Self::White { l0 } => exact(*l0),
            Self::PowerLaw { terms } => exact(terms.iter().map(|t| t.coefficient * f_m.powi(-t.exponent)).sum()),
            Self::Tones { .. } => Err(Error::NoDensity),
            Self::Tabulated(table) => Ok(table.value(f_m)),
        }
    }

    /// Mean-square phase fluctuation `2 ∫ 𝓛 df` over `[f_l, f_h]`.
    ///
    /// Tones contribute ⟨β²⟩/2 each when `f_l ≤ f0 < f_h`. Tables are
    /// extrapolated flat, as in [`Self::ssb_value`].
    pub fn integrated_phase_variance(&self, f_l: f64, f_h: f64) -> Result<f64> {
        if !(f_l.is_finite() && f_h.is_finite() && f_l > 0.0 && f_l < f_h) {
            return Err(Error::InvalidBand { low: f_l, high: f_h });
        }
        let one_sided = match self {
            Self::White { l0 } => l0 * (f_h - f_l),
            Self::PowerLaw { terms } => {
                terms.iter().map(|t| power_integral(t.coefficient, -(t.exponent as f64), f_l, f_h)).sum()
            }
            Self::Tones { tones } => {
                return Ok(tones.iter().filter(|t| t.f0 >= f_l && t.f0 < f_h).map(|t| t.beta_sq / 2.0).sum())
            }
            Self::Tabulated(table) => table.integral(f_l, f_h),
        };
        Ok(2.0 * one_sided)
    }
}

/// dBc/Hz → rad²/Hz.
pub fn dbc_to_linear(l_dbc: f64) -> Result<f64> {
    ensure_finite(l_dbc, "dBc/Hz value")?;
    Ok(10f64.powf(l_dbc / 10.0))
}

/// rad²/Hz → dBc/Hz.
pub fn linear_to_dbc(l: f64) -> Result<f64> {
    ensure_finite(l, "density")?;
    if l <= 0.0 {
        return Err(Error::InvalidInput(format!("density {l} must be > 0 to express in dBc/Hz")));
    }
    Ok(10.0 * l.log10())
}

/// Detuning modulation of mean-square amplitude ⟨Δ²⟩ at `f0` expressed as an
/// equivalent phase-modulation tone, `⟨β²⟩ = ⟨Δ²⟩ / f0²`.
pub fn detuning_tone_to_phase_tone(f0: f64, delta_sq: f64) -> Result<Tone> {
    ensure_finite(f0, "f0")?;
    ensure_finite(delta_sq, "delta_sq")?;
    if f0 <= 0.0 {
        return Err(Error::InvalidInput(format!("tone frequency {f0} must be > 0")));
    }
    if delta_sq < 0.0 {
        return Err(Error::InvalidInput("⟨Δ²⟩ must be ≥ 0".into()));
    }
    Ok(Tone { f0, beta_sq: delta_sq / (f0 * f0) })
}

/// Reads a datasheet CSV with header `f_hz,l_dbc_hz` and `#` comment lines.
///
/// Returns the raw `(f_hz, dBc/Hz)` rows.
pub fn read_datasheet<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let expected = ["f_hz", "l_dbc_hz"];
    if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse(format!(
            "expected header `f_hz,l_dbc_hz`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Parse(format!("row {}: missing column", line + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))
        };
        let f = parse(0)?;
        let l = parse(1)?;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Parse(format!("row {}: frequency must be positive", line + 1)));
        }
        if !l.is_finite() {
            return Err(Error::Parse(format!("row {}: level must be finite", line + 1)));
        }
        rows.push((f, l));
    }
    Ok(rows)
}

/// Builds a tabulated spectrum from datasheet rows in dBc/Hz.
pub fn table_from_dbc(rows: &[(f64, f64)]) -> Result<PhaseNoiseSpectrum> {
    let points = rows.iter().map(|&(f, l)| dbc_to_linear(l).map(|v| (f, v))).collect::<Result<Vec<_>>>()?;
    PhaseNoiseSpectrum::tabulated(points)
}
