//! Subcommand implementations.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use blochnoise::covariance::{noise_matrix_tilde, transfer_tilde, transform_covariance, NoiseOptions, Warning};
use blochnoise::montecarlo::{compare, mc_tone_transfer, mc_white_noise, EntryComparison, McConfig, McEstimate};
use blochnoise::sequences::{
    build_sequence, fidelity_metrics, parse_sequence_file, propagate_noise, CompositeKind, PulseSequence, SequenceKind,
    SpinEchoVariant,
};
use blochnoise::spectra::{dbc_to_linear, read_datasheet, table_from_dbc};
use blochnoise::static_errors::{amplitude_sweet_spot, cancellation_order, ErrorKind, Metric, Order, Sweep};
use blochnoise::{BlochVector, CovarianceMatrix};
use serde::Serialize;
use serde_json::json;

use crate::output::{write_csv, write_json, RunManifest};
use crate::{CompositeMapArgs, McVerifyArgs, SequenceArgs, SpectrumConvertArgs, StaticOrderArgs, Target, TransferArgs};

/// z-scores beyond this make `mc-verify` exit nonzero.
const FAIL_Z: f64 = 4.0;
/// Per-entry pass threshold reported by `mc-verify`.
const PASS_Z: f64 = 3.0;

fn parse_vector(text: &str) -> Result<BlochVector> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad component `{p}` in `{text}`")))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(BlochVector::new(*x, *y, *z)),
        _ => bail!("expected three comma-separated components, got `{text}`"),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

fn params<T: Serialize>(args: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(args)?)
}

pub fn transfer(a: &TransferArgs, recorded: &[String]) -> Result<ExitCode> {
    if !(a.psi.is_finite() && a.x_min.is_finite() && a.x_max.is_finite()) {
        bail!("arguments must be finite");
    }
    if !(a.x_min > 0.0 && a.x_min < a.x_max) {
        bail!("need 0 < x-min < x-max (got {} and {})", a.x_min, a.x_max);
    }
    if a.points < 2 {
        bail!("need at least 2 points");
    }
    let rows: Vec<Vec<f64>> = linspace(a.x_min, a.x_max, a.points)
        .map(|x| {
            let t = transfer_tilde(a.psi, x);
            vec![x, t.get(1, 1), t.get(2, 2), t.get(1, 2)]
        })
        .collect();
    let meta = vec![
        format!("{} transfer {}", crate::output::TOOL, crate::output::VERSION),
        format!("psi_rad={}", a.psi),
        "x = f_m / f_R; entries are 4<j j^T>/<beta^2> for phi_R = 0 and J_f = x".into(),
    ];
    write_csv(&a.out, &meta, &["x", "t_yy", "t_zz", "t_yz"], &rows)?;
    RunManifest::new("transfer", recorded, params(a)?).emit(Some(&a.out))?;
    Ok(ExitCode::SUCCESS)
}

pub fn composite_map(a: &CompositeMapArgs, recorded: &[String]) -> Result<ExitCode> {
    let kind: CompositeKind = a.kind.parse()?;
    if a.grid < 2 {
        bail!("grid needs at least 2 points per axis");
    }
    let (f_r, l0, units) = match (a.f_r, a.l0_dbc) {
        (Some(f_r), Some(dbc)) => (f_r, dbc_to_linear(dbc)?, "rad^2"),
        (None, None) => (1.0, 1.0, "normalized to f_R*L0"),
        _ => bail!("--f-r and --l0-dbc must be given together"),
    };
    let seq = build_sequence(&kind.into(), f_r)?;
    let mut rows = Vec::with_capacity(a.grid * a.grid);
    for theta in linspace(0.0, PI / 2.0, a.grid) {
        for phi in linspace(0.0, PI, a.grid) {
            let r = propagate_noise(&BlochVector::from_angles(theta, phi), &seq, l0)?;
            rows.push(vec![theta, phi, r.final_noise().get(2, 2), r.infidelity]);
        }
    }
    let meta = vec![
        format!("{} composite-map {}", crate::output::TOOL, crate::output::VERSION),
        format!("kind={kind}"),
        format!("units={units}"),
        "theta_i measured from the x-y plane, phi_i from x".into(),
    ];
    write_csv(&a.out, &meta, &["theta_i", "phi_i", "w_zz", "infidelity"], &rows)?;
    RunManifest::new("composite-map", recorded, params(a)?).emit(Some(&a.out))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct StepReport {
    index: usize,
    phi_rad: f64,
    psi_rad: f64,
    delay_s: f64,
    ideal: [f64; 3],
    w: CovarianceMatrix,
}

#[derive(Serialize)]
struct Projections {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize)]
struct FinalReport {
    ideal: [f64; 3],
    w: CovarianceMatrix,
    projections: Projections,
    infidelity: f64,
    average_infidelity: Option<f64>,
}

#[derive(Serialize)]
struct SequenceReport {
    f_r_hz: f64,
    total_angle_rad: f64,
    j_i: [f64; 3],
    noise_model: serde_json::Value,
    steps: Vec<StepReport>,
    #[serde(rename = "final")]
    final_: FinalReport,
    warnings: Vec<Warning>,
}

fn projections(w: &CovarianceMatrix) -> Projections {
    Projections { x: w.get(0, 0), y: w.get(1, 1), z: w.get(2, 2) }
}

fn load_sequence(path: &Path, f_r: Option<f64>) -> Result<PulseSequence> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let seq = parse_sequence_file(&text).with_context(|| format!("parsing {}", path.display()))?;
    match f_r {
        Some(f) => Ok(PulseSequence::new(seq.steps().to_vec(), f)?.with_trailing_delay(seq.trailing_delay())?),
        None => Ok(seq),
    }
}

pub fn sequence(a: &SequenceArgs, recorded: &[String]) -> Result<ExitCode> {
    let seq = load_sequence(&a.file, a.f_r)?;
    let j_i = parse_vector(&a.ji)?;
    let mut manifest = RunManifest::new("sequence", recorded, params(a)?);
    manifest.add_input(&a.file)?;

    let white = match (a.l0, a.l0_dbc) {
        (Some(l0), _) => Some(l0),
        (None, Some(dbc)) => Some(dbc_to_linear(dbc)?),
        (None, None) => None,
    };
    let report = if let Some(l0) = white {
        let r = propagate_noise(&j_i, &seq, l0)?;
        let m = fidelity_metrics(&r, &seq, l0);
        let steps = seq
            .steps()
            .iter()
            .zip(r.ideal.iter().zip(&r.noise))
            .enumerate()
            .map(|(k, (s, (j, w)))| StepReport {
                index: k,
                phi_rad: s.phi,
                psi_rad: s.psi,
                delay_s: s.delay_before,
                ideal: j.to_array(),
                w: *w,
            })
            .collect();
        let w = *r.final_noise();
        SequenceReport {
            f_r_hz: seq.f_r(),
            total_angle_rad: seq.total_angle(),
            j_i: j_i.to_array(),
            noise_model: json!({"kind": "white", "l0_rad2_hz": l0}),
            steps,
            final_: FinalReport {
                ideal: r.final_vector().to_array(),
                w,
                projections: projections(&w),
                infidelity: m.infidelity,
                average_infidelity: Some(m.average_infidelity),
            },
            warnings: Vec::new(),
        }
    } else {
        let path = a.spectrum.as_ref().ok_or_else(|| anyhow!("no noise source given"))?;
        if seq.steps().len() != 1 {
            bail!(
                "multi-pulse propagation assumes white phase noise (independent noise in each pulse); \
                 give --l0 or --l0-dbc, or use a single-pulse sequence with --spectrum"
            );
        }
        j_i.ensure_unit(blochnoise::sequences::UNIT_TOLERANCE)?;
        manifest.add_input(path)?;
        let rows = read_datasheet(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        let spectrum = table_from_dbc(&rows)?;
        let step = seq.steps()[0];
        let opts = NoiseOptions { extrapolate_table: a.extrapolate, ..Default::default() };
        let nm = noise_matrix_tilde(&spectrum, step.psi, seq.f_r(), &opts)?;
        let j_f = step.rotation().apply(&j_i);
        let w = transform_covariance(&nm.matrix, step.phi, &j_f)?;
        SequenceReport {
            f_r_hz: seq.f_r(),
            total_angle_rad: seq.total_angle(),
            j_i: j_i.to_array(),
            noise_model: json!({
                "kind": "tabulated",
                "points": rows.len(),
                "tail_bound": nm.tail_bound,
                "quadrature_error": nm.quadrature_error,
            }),
            steps: vec![StepReport {
                index: 0,
                phi_rad: step.phi,
                psi_rad: step.psi,
                delay_s: step.delay_before,
                ideal: j_f.to_array(),
                w,
            }],
            final_: FinalReport {
                ideal: j_f.to_array(),
                w,
                projections: projections(&w),
                infidelity: w.trace() / 4.0,
                average_infidelity: None,
            },
            warnings: nm.warnings,
        }
    };
    write_json(a.out.as_deref(), &report)?;
    manifest.emit(a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TraceCheck {
    analytic: f64,
    mc: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct McReport {
    target: Target,
    parameters: serde_json::Value,
    config: McConfig,
    entries: Vec<EntryComparison>,
    trace: TraceCheck,
    max_abs_z: f64,
    max_abs_z_statistical: f64,
    underpowered: Vec<[usize; 2]>,
    pass: bool,
}

fn white_kind(a: &McVerifyArgs) -> Result<SequenceKind> {
    if a.kind.trim().eq_ignore_ascii_case("spin_echo") {
        let variant: SpinEchoVariant = a.variant.parse()?;
        Ok(SequenceKind::SpinEcho { n: a.n, tau: a.tau, variant })
    } else {
        Ok(SequenceKind::Composite(a.kind.parse()?))
    }
}

pub fn mc_verify(a: &McVerifyArgs, recorded: &[String]) -> Result<ExitCode> {
    let cfg = McConfig {
        n_samples: a.samples,
        steps_per_rabi_cycle: a.steps_per_cycle,
        seed: a.seed,
        antithetic: !a.no_antithetic,
        sigma_beta: a.sigma_beta,
        linearity_check: true,
        workers: a.workers,
    };
    let (analytic, est, parameters): (CovarianceMatrix, McEstimate, _) = match a.target {
        Target::Tone => {
            let psi = a.psi.ok_or_else(|| anyhow!("--psi is required for the tone target"))?;
            let x = a.x.ok_or_else(|| anyhow!("--x is required for the tone target"))?;
            let est = mc_tone_transfer(psi, x, &cfg)?;
            (transfer_tilde(psi, x), est, json!({"psi_rad": psi, "x": x}))
        }
        Target::White => {
            let kind = white_kind(a)?;
            let seq = build_sequence(&kind, a.f_r)?;
            let j_i = parse_vector(&a.ji)?;
            let analytic = *propagate_noise(&j_i, &seq, a.l0)?.final_noise();
            let est = mc_white_noise(&seq, &j_i, a.l0, &cfg)?;
            let p = json!({
                "kind": a.kind, "n": a.n, "tau_s": a.tau, "variant": a.variant,
                "j_i": j_i.to_array(), "f_r_hz": a.f_r, "l0_rad2_hz": a.l0,
            });
            (analytic, est, p)
        }
    };
    let entries = compare(&analytic, &est);
    let max_abs = |f: fn(&EntryComparison) -> f64| entries.iter().map(|e| f(e).abs()).fold(0.0, f64::max);
    let max_abs_z = max_abs(|e| e.z);
    let trace_a = analytic.trace();
    let trace_m = est.mean.trace();
    let report = McReport {
        target: a.target,
        parameters,
        config: cfg,
        underpowered: entries.iter().filter(|e| e.underpowered).map(|e| [e.row, e.col]).collect(),
        max_abs_z_statistical: max_abs(|e| e.z_statistical),
        trace: TraceCheck {
            analytic: trace_a,
            mc: trace_m,
            relative_error: if trace_a != 0.0 { (trace_m - trace_a) / trace_a } else { trace_m },
        },
        pass: max_abs_z <= PASS_Z,
        max_abs_z,
        entries,
    };
    write_json(a.out.as_deref(), &report)?;
    let mut manifest = RunManifest::new("mc-verify", recorded, params(a)?);
    manifest.seed = Some(a.seed);
    manifest.emit(a.out.as_deref())?;
    Ok(if max_abs_z > FAIL_Z { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct SweepPoint {
    error: f64,
    metric: f64,
}

#[derive(Serialize)]
struct OrderReport {
    kind: CompositeKind,
    theta_i: f64,
    phi_i: f64,
    phi_i_requested: f64,
    which: ErrorKind,
    metric: Metric,
    order: Order,
    slope: Option<f64>,
    residual: f64,
    rms: f64,
    ambiguous: bool,
    sweep: Vec<SweepPoint>,
}

pub fn static_order(a: &StaticOrderArgs, recorded: &[String]) -> Result<ExitCode> {
    let kind: CompositeKind = a.kind.parse()?;
    let which: ErrorKind = a.which.parse()?;
    let metric: Metric = a.metric.parse()?;
    let seq = build_sequence(&kind.into(), 1.0)?;
    let phi_i = if a.refine {
        if a.theta_i != 0.0 {
            bail!("--refine searches the equator and needs --theta-i 0");
        }
        amplitude_sweet_spot(&seq, a.phi_i - 0.05 * PI, a.phi_i + 0.05 * PI)?
    } else {
        a.phi_i
    };
    let sweep = Sweep { start: a.start, ratio: a.ratio, points: a.points };
    let est = cancellation_order(&seq, &BlochVector::from_angles(a.theta_i, phi_i), which, metric, &sweep)?;
    if est.ambiguous {
        eprintln!("warning: ambiguous fit (|slope − order| = {:.3})", est.residual);
    }
    let report = OrderReport {
        kind,
        theta_i: a.theta_i,
        phi_i,
        phi_i_requested: a.phi_i,
        which,
        metric,
        order: est.order,
        slope: est.slope.is_finite().then_some(est.slope),
        residual: est.residual,
        rms: est.rms,
        ambiguous: est.ambiguous,
        sweep: est.sweep.iter().map(|&(error, metric)| SweepPoint { error, metric }).collect(),
    };
    write_json(a.out.as_deref(), &report)?;
    RunManifest::new("static-order", recorded, params(a)?).emit(a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

pub fn spectrum_convert(a: &SpectrumConvertArgs, recorded: &[String]) -> Result<ExitCode> {
    let file = fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let rows = read_datasheet(file)?;
    let out: Vec<Vec<f64>> = rows.iter().map(|&(f, l)| Ok(vec![f, dbc_to_linear(l)?])).collect::<Result<_>>()?;
    let meta = vec![
        format!("{} spectrum-convert {}", crate::output::TOOL, crate::output::VERSION),
        "SSB phase noise L(f) in rad^2/Hz".into(),
    ];
    write_csv(&a.out, &meta, &["f_hz", "l_rad2_hz"], &out)?;
    let mut manifest = RunManifest::new("spectrum-convert", recorded, params(a)?);
    manifest.add_input(&a.input)?;
    manifest.emit(Some(&a.out))?;
    Ok(ExitCode::SUCCESS)
}
