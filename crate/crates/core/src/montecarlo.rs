//! Monte Carlo oracle: stepwise propagation of the rotating-frame Bloch
//! equations under random phase modulation of the drive.
//!
//! Each step freezes the drive phase at its midpoint value and applies the
//! exact rotation for that step, so trajectories stay on the sphere. Sample
//! `i` draws from its own ChaCha stream `(seed, i)`; per-sample results are
//! collected by index and reduced in a fixed pairwise order, which makes the
//! estimates independent of the number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::rotations::{rotate_axis_xy, BlochVector};
use crate::sequences::{PulseSequence, UNIT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub steps_per_rabi_cycle: usize,
    pub seed: u64,
    /// Propagate every draw with both signs of the noise and keep the odd
    /// part of the deflection, cancelling all even-order terms.
    pub antithetic: bool,
    /// Standard deviation of the tone amplitude β in rad.
    pub sigma_beta: f64,
    /// Re-run every draw at half amplitude to measure the departure from
    /// linear response.
    pub linearity_check: bool,
    /// Thread count; `None` uses the global pool.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            steps_per_rabi_cycle: 64,
            seed: 0,
            antithetic: true,
            sigma_beta: 1e-3,
            linearity_check: true,
            workers: None,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_rabi_cycle < 16 {
            return Err(Error::InvalidInput(format!(
                "steps_per_rabi_cycle = {} is below the accuracy floor of 16",
                self.steps_per_rabi_cycle
            )));
        }
        if self.n_samples < 100 {
            return Err(Error::InvalidInput(format!("n_samples = {} must be ≥ 100", self.n_samples)));
        }
        if !(self.sigma_beta.is_finite() && self.sigma_beta > 0.0) {
            return Err(Error::InvalidInput("sigma_beta must be > 0".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidInput("workers must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Sample mean of a 3×3 second-moment matrix with entrywise uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: CovarianceMatrix,
    pub standard_error: [[f64; 3]; 3],
    /// `|mean(full amplitude) − mean(half amplitude, rescaled)|` on common
    /// random numbers; zero when the linearity check is off.
    pub nonlinearity: [[f64; 3]; 3],
    pub n_samples: usize,
}

/// Per-draw random stream.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn steps_for(psi: f64, steps_per_rabi_cycle: usize) -> usize {
    ((psi.abs() * steps_per_rabi_cycle as f64 / (2.0 * PI)).ceil() as usize).max(1)
}

/// Bloch vector after each step of a pulse about azimuth
/// `φ_R + β sin(x·ψ' + α_m)`, where ψ' is the accumulated rotation angle.
pub fn tone_trajectory(
    j_i: &BlochVector,
    phi_r: f64,
    psi: f64,
    x: f64,
    beta: f64,
    alpha_m: f64,
    steps_per_rabi_cycle: usize,
) -> Vec<(f64, BlochVector)> {
    let k = steps_for(psi, steps_per_rabi_cycle);
    let dpsi = psi / k as f64;
    let mut j = *j_i;
    (0..k)
        .map(|n| {
            let mid = (n as f64 + 0.5) * dpsi;
            j = rotate_axis_xy(phi_r + beta * (x * mid + alpha_m).sin(), dpsi).apply(&j);
            ((n + 1) as f64 * dpsi, j)
        })
        .collect()
}

/// Final vector of [`tone_trajectory`].
pub fn propagate_tone(
    j_i: &BlochVector,
    phi_r: f64,
    psi: f64,
    x: f64,
    beta: f64,
    alpha_m: f64,
    steps_per_rabi_cycle: usize,
) -> BlochVector {
    let k = steps_for(psi, steps_per_rabi_cycle);
    let dpsi = psi / k as f64;
    (0..k).fold(*j_i, |j, n| {
        let mid = (n as f64 + 0.5) * dpsi;
        rotate_axis_xy(phi_r + beta * (x * mid + alpha_m).sin(), dpsi).apply(&j)
    })
}

type Moments = [f64; 18];

fn outer_into(out: &mut [f64], v: [f64; 3], scale: f64) {
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = scale * v[r] * v[c];
        }
    }
}

fn sub(a: BlochVector, b: BlochVector) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, a.z - b.z]
}

fn odd_part(plus: [f64; 3], minus: [f64; 3]) -> [f64; 3] {
    [0.5 * (plus[0] - minus[0]), 0.5 * (plus[1] - minus[1]), 0.5 * (plus[2] - minus[2])]
}

fn pairwise_sum(items: &[Moments]) -> Moments {
    match items.len() {
        0 => [0.0; 18],
        1 => items[0],
        n => {
            let (a, b) = items.split_at(n / 2);
            let (sa, sb) = (pairwise_sum(a), pairwise_sum(b));
            let mut out = [0.0; 18];
            for k in 0..18 {
                out[k] = sa[k] + sb[k];
            }
            out
        }
    }
}

fn run_samples<F>(cfg: &McConfig, per_sample: F) -> Result<Vec<Moments>>
where
    F: Fn(u64) -> Moments + Sync,
{
    let work = || (0..cfg.n_samples as u64).into_par_iter().map(&per_sample).collect::<Vec<_>>();
    match cfg.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

fn summarize(samples: &[Moments]) -> McEstimate {
    let n = samples.len() as f64;
    let sum = pairwise_sum(samples);
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let deviations: Vec<Moments> = samples
        .iter()
        .map(|s| {
            let mut d = [0.0; 18];
            for k in 0..9 {
                d[k] = (s[k] - mean[k]).powi(2);
            }
            d
        })
        .collect();
    let ss = pairwise_sum(&deviations);
    let mut m = nalgebra::Matrix3::zeros();
    let mut se = [[0.0; 3]; 3];
    let mut nl = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let k = 3 * r + c;
            m[(r, c)] = mean[k];
            se[r][c] = (ss[k] / (n - 1.0) / n).sqrt();
            nl[r][c] = (mean[k] - mean[9 + k]).abs();
        }
    }
    McEstimate {
        mean: CovarianceMatrix::from_matrix(m),
        standard_error: se,
        nonlinearity: nl,
        n_samples: samples.len(),
    }
}

/// Estimate of `T̃(ψ, x) = 4⟨j jᵀ⟩/⟨β²⟩` for `J_i = x̂`, `φ_R = 0`, with
/// `α_m ~ U[0, 2π)` and `β ~ N(0, σ_β²)`.
pub fn mc_tone_transfer(psi: f64, x: f64, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !(psi.is_finite() && psi > 0.0) {
        return Err(Error::InvalidInput(format!("rotation angle {psi} must be > 0")));
    }
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::InvalidInput(format!("frequency ratio {x} must be ≥ 0")));
    }
    let spc = cfg.steps_per_rabi_cycle;
    let ideal = propagate_tone(&BlochVector::X, 0.0, psi, x, 0.0, 0.0, spc);
    let sigma = cfg.sigma_beta;
    let deflection = |beta: f64, alpha: f64| {
        let plus = sub(propagate_tone(&BlochVector::X, 0.0, psi, x, beta, alpha, spc), ideal);
        if cfg.antithetic {
            let minus = sub(propagate_tone(&BlochVector::X, 0.0, psi, x, -beta, alpha, spc), ideal);
            odd_part(plus, minus)
        } else {
            plus
        }
    };
    let samples = run_samples(cfg, |i| {
        let mut rng = sample_rng(cfg.seed, i);
        let alpha = 2.0 * PI * rng.random::<f64>();
        let beta = sigma * rng.sample::<f64, _>(StandardNormal);
        let mut out = [0.0; 18];
        let scale = 4.0 / (sigma * sigma);
        outer_into(&mut out[..9], deflection(beta, alpha), scale);
        if cfg.linearity_check {
            outer_into(&mut out[9..], deflection(0.5 * beta, alpha), 4.0 * scale);
        } else {
            out.copy_within(0..9, 9);
        }
        out
    })?;
    Ok(summarize(&samples))
}

/// Per-step phase-noise standard deviations and step layout of a sequence.
struct WhiteLayout {
    /// `(axis, Δψ, σ_φ, step count)` for each pulse.
    pulses: Vec<(f64, f64, f64, usize)>,
    total_steps: usize,
}

fn white_layout(seq: &PulseSequence, l0: f64, spc: usize) -> WhiteLayout {
    let nominal = 2.0 * PI / spc as f64;
    let mut total_steps = 0;
    let pulses = seq
        .steps()
        .iter()
        .map(|s| {
            let k = if s.psi == 0.0 { 0 } else { ((s.psi / nominal).round() as usize).max(1) };
            let dpsi = if k == 0 { 0.0 } else { s.psi / k as f64 };
            let dt = dpsi / (2.0 * PI * seq.f_r());
            let sd = if k == 0 { 0.0 } else { (l0 / dt).sqrt() };
            total_steps += k;
            (s.phi, dpsi, sd, k)
        })
        .collect();
    WhiteLayout { pulses, total_steps }
}

fn propagate_white(
    j_i: &BlochVector,
    layout: &WhiteLayout,
    normals: &[f64],
    scale: f64,
    mut visit: impl FnMut(&BlochVector),
) -> BlochVector {
    let mut j = *j_i;
    let mut idx = 0;
    for &(phi, dpsi, sd, k) in &layout.pulses {
        for _ in 0..k {
            let noise = if scale == 0.0 { 0.0 } else { scale * sd * normals[idx] };
            j = rotate_axis_xy(phi + noise, dpsi).apply(&j);
            idx += 1;
            visit(&j);
        }
    }
    j
}

fn draw_normals(seed: u64, index: u64, n: usize) -> Vec<f64> {
    let mut rng = sample_rng(seed, index);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Bloch vector after every integration step of draw `index`.
pub fn white_noise_trajectory(
    seq: &PulseSequence,
    j_i: &BlochVector,
    l0: f64,
    cfg: &McConfig,
    index: u64,
) -> Result<Vec<BlochVector>> {
    cfg.validate()?;
    j_i.ensure_unit(UNIT_TOLERANCE)?;
    let layout = white_layout(seq, l0, cfg.steps_per_rabi_cycle);
    let normals = draw_normals(cfg.seed, index, layout.total_steps);
    let mut out = Vec::with_capacity(layout.total_steps);
    propagate_white(j_i, &layout, &normals, 1.0, |j| out.push(*j));
    Ok(out)
}

/// Estimate of `W = ⟨j jᵀ⟩` for white phase noise of level `l0` (rad²/Hz):
/// every integration step of length Δt draws an independent phase with
/// variance `𝓛°/Δt`. Delays are free evolution and leave the vector unchanged.
pub fn mc_white_noise(seq: &PulseSequence, j_i: &BlochVector, l0: f64, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    j_i.ensure_unit(UNIT_TOLERANCE)?;
    if !(l0.is_finite() && l0 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level {l0} must be finite and ≥ 0")));
    }
    let layout = white_layout(seq, l0, cfg.steps_per_rabi_cycle);
    let ideal = propagate_white(j_i, &layout, &[], 0.0, |_| {});
    let deflection = |normals: &[f64], scale: f64| {
        let plus = sub(propagate_white(j_i, &layout, normals, scale, |_| {}), ideal);
        if cfg.antithetic {
            odd_part(plus, sub(propagate_white(j_i, &layout, normals, -scale, |_| {}), ideal))
        } else {
            plus
        }
    };
    let samples = run_samples(cfg, |i| {
        let mut out = [0.0; 18];
        if l0 == 0.0 {
            return out;
        }
        let normals = draw_normals(cfg.seed, i, layout.total_steps);
        outer_into(&mut out[..9], deflection(&normals, 1.0), 1.0);
        if cfg.linearity_check {
            outer_into(&mut out[9..], deflection(&normals, 0.5), 4.0);
        } else {
            out.copy_within(0..9, 9);
        }
        out
    })?;
    Ok(summarize(&samples))
}

/// One matrix entry of an analytic-versus-Monte-Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryComparison {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub mc_mean: f64,
    pub standard_error: f64,
    pub nonlinearity: f64,
    /// Difference over the sampling error alone.
    pub z_statistical: f64,
    /// Difference over `√(SE² + nonlinearity²)`.
    pub z: f64,
    /// Standard error exceeds half of the analytic value.
    pub underpowered: bool,
}

fn ratio(diff: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        diff / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Compares the six independent entries (`row ≤ col`).
pub fn compare(analytic: &CovarianceMatrix, est: &McEstimate) -> Vec<EntryComparison> {
    let mut out = Vec::with_capacity(6);
    for r in 0..3 {
        for c in r..3 {
            let a = analytic.get(r, c);
            let m = est.mean.get(r, c);
            let se = est.standard_error[r][c];
            let nl = est.nonlinearity[r][c];
            let d = m - a;
            out.push(EntryComparison {
                row: r,
                col: c,
                analytic: a,
                mc_mean: m,
                standard_error: se,
                nonlinearity: nl,
                z_statistical: ratio(d, se),
                z: ratio(d, se.hypot(nl)),
                underpowered: a != 0.0 && se > 0.5 * a.abs(),
            });
        }
    }
    out
}
