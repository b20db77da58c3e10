//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use blochnoise::covariance::{neb_matrix, noise_matrix_tilde, transfer_tilde, transform_covariance, NoiseOptions};
use blochnoise::deflection::deflection_special;
use blochnoise::montecarlo::{compare, mc_tone_transfer, mc_white_noise, sample_rng, tone_trajectory, McConfig};
use blochnoise::sequences::{
    build_sequence, closed_form_noise, propagate_noise, CompositeKind, SequenceKind, SpinEchoVariant,
};
use blochnoise::static_errors::{amplitude_sweet_spot, cancellation_order, ErrorKind, Metric, Order, Sweep};
use blochnoise::{BlochVector, PhaseNoiseSpectrum};
use rand::Rng;
use rand_distr::StandardNormal;

const GRID_REL_TOL: f64 = 1e-9;
const GRID_TIME_LIMIT: Duration = Duration::from_secs(1);
const NEB_REL_TOL: f64 = 1e-4;
const TONE_SAMPLES: usize = 10_000;
const TONE_Z_MAX: f64 = 3.0;
const TONE_TIME_LIMIT: Duration = Duration::from_secs(120);
const WHITE_SAMPLES: usize = 100_000;
const WHITE_TRACE_TOL: f64 = 0.05;
const SPHERE_SAMPLES: usize = 10_000;
const SPHERE_Z_MAX: f64 = 3.0;
const COS2_TOL: f64 = 1e-12;
const ORDER_RESIDUAL_MAX: f64 = 0.2;
const RESONANT_TOL: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

fn c1_closed_forms() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for kind in CompositeKind::ALL {
        let seq = build_sequence(&kind.into(), 1.0).unwrap();
        for a in 0..19 {
            for b in 0..19 {
                let theta = -PI / 2.0 + PI * a as f64 / 18.0;
                let phi = 2.0 * PI * b as f64 / 18.0;
                let r = propagate_noise(&BlochVector::from_angles(theta, phi), &seq, 1.0).unwrap();
                let (w, _) = closed_form_noise(&kind.into(), theta, phi, 1.0, 1.0).unwrap();
                // Relative to the largest entry so that structural zeros compare sensibly.
                let scale = w.max_abs().max(f64::MIN_POSITIVE);
                worst = worst.max((r.final_noise().matrix() - w.matrix()).abs().max() / scale);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= GRID_REL_TOL && elapsed < GRID_TIME_LIMIT,
        format!("max rel err {worst:.2e} (tol {GRID_REL_TOL:e}), {:.3} s", elapsed.as_secs_f64()),
    )
}

fn c2_neb_quadrature() -> Outcome {
    let spec = PhaseNoiseSpectrum::white(1.0).unwrap();
    let opts = NoiseOptions { force_numeric: true, ..Default::default() };
    let mut worst: f64 = 0.0;
    for psi in [PI / 2.0, PI, 2.0 * PI, 4.0 * PI] {
        let nm = noise_matrix_tilde(&spec, psi, 1.0, &opts).unwrap();
        let exact = neb_matrix(psi, 1.0);
        for (r, c) in [(1, 1), (2, 2), (1, 2)] {
            worst = worst.max(rel_err(nm.matrix.get(r, c), exact.get(r, c), exact.max_abs()));
        }
    }
    outcome(worst <= NEB_REL_TOL, format!("max rel err {worst:.2e} (tol {NEB_REL_TOL:e})"))
}

fn c3_tone_mc() -> Outcome {
    let start = Instant::now();
    let cfg = McConfig { n_samples: TONE_SAMPLES, seed: 2024, ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut nulls = Vec::new();
    for psi in [PI, 2.0 * PI, 4.0 * PI] {
        for x in [0.5, 1.0, 1.125, 2.0, 3.0] {
            let t = transfer_tilde(psi, x);
            let est = mc_tone_transfer(psi, x, &cfg).unwrap();
            for c in compare(&t, &est) {
                worst = worst.max(c.z.abs());
            }
            if (psi, x) == (PI, 3.0) || (psi, x) == (2.0 * PI, 2.0) {
                nulls.push(t.get(2, 2).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    let nulls_ok = nulls.len() == 2 && nulls.iter().all(|v| *v < 1e-12);
    let nulls = format!("{:.1e}, {:.1e}", nulls[0], nulls[1]);
    outcome(
        worst <= TONE_Z_MAX && nulls_ok && elapsed < TONE_TIME_LIMIT,
        format!("max |z| {worst:.2} (limit {TONE_Z_MAX}), nulls [{nulls}], {:.1} s", elapsed.as_secs_f64()),
    )
}

fn c4_white_mc() -> Outcome {
    let (f_r, l0) = (40.4e3, 1e-12);
    let seq = build_sequence(&CompositeKind::SinglePi.into(), f_r).unwrap();
    let cfg = McConfig { n_samples: WHITE_SAMPLES, seed: 7, ..Default::default() };
    let est = mc_white_noise(&seq, &BlochVector::X, l0, &cfg).unwrap();
    let expected = 2.0 * PI * PI * f_r * l0;
    let trace_err = (est.mean.trace() / expected - 1.0).abs();

    let echo_cfg = McConfig { n_samples: 20_000, seed: 8, ..Default::default() };
    let traces: Vec<(f64, f64)> = [1, 2, 4]
        .into_iter()
        .map(|n| {
            let kind = SequenceKind::SpinEcho { n, tau: 1e-4, variant: SpinEchoVariant::Alternating };
            let seq = build_sequence(&kind, f_r).unwrap();
            let est = mc_white_noise(&seq, &BlochVector::X, l0, &echo_cfg).unwrap();
            let se = (0..3).map(|k| est.standard_error[k][k].powi(2)).sum::<f64>().sqrt();
            (est.mean.trace() / n as f64, se / n as f64)
        })
        .collect();
    let (t1, s1) = traces[0];
    let echo_ok = traces[1..].iter().all(|(t, s)| (t - t1).abs() <= 3.0 * (s * s + s1 * s1).sqrt());
    let per_pulse: Vec<String> = traces.iter().map(|(t, _)| format!("{:.3}", t / expected)).collect();
    outcome(
        trace_err < WHITE_TRACE_TOL && echo_ok,
        format!(
            "single π trace err {:.2}% (tol {}%), echo trace/N/(2π²f_R𝓛) = [{}]",
            100.0 * trace_err,
            100.0 * WHITE_TRACE_TOL,
            per_pulse.join(", ")
        ),
    )
}

fn c5_sphere_average() -> Outcome {
    let factors = [
        (CompositeKind::CorpsePi, 13.0 / 9.0),
        (CompositeKind::ScrofulousPi, 1.0),
        (CompositeKind::Bb1Pi, 5.0 / 3.0),
        (CompositeKind::SinglePi, 1.0 / 3.0),
    ];
    let mut worst: f64 = 0.0;
    for (k, (kind, factor)) in factors.into_iter().enumerate() {
        let seq = build_sequence(&kind.into(), 1.0).unwrap();
        let mut rng = sample_rng(99, k as u64);
        let vals: Vec<f64> = (0..SPHERE_SAMPLES)
            .map(|_| {
                let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                propagate_noise(&BlochVector::new(v[0] / n, v[1] / n, v[2] / n), &seq, 1.0).unwrap().infidelity
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        worst = worst.max((mean - factor * PI * PI).abs() / se);
    }
    outcome(worst <= SPHERE_Z_MAX, format!("max |z| {worst:.2} (limit {SPHERE_Z_MAX})"))
}

fn c6_cos_squared() -> Outcome {
    let t = transfer_tilde(PI, 1.125);
    let mut worst: f64 = 0.0;
    for k in 0..360 {
        let phi = 2.0 * PI * k as f64 / 360.0;
        let v = transform_covariance(&t, phi, &BlochVector::X).unwrap();
        worst = worst.max(rel_err(v.get(2, 2), t.get(2, 2) * phi.cos().powi(2), t.get(2, 2)));
    }
    let at_quarter = transform_covariance(&t, PI / 2.0, &BlochVector::X).unwrap().get(2, 2).abs() / t.get(2, 2);
    outcome(
        worst <= COS2_TOL && at_quarter <= COS2_TOL,
        format!("max rel dev {worst:.1e}, V_zz(π/2)/Ṽ_zz {at_quarter:.1e} (tol {COS2_TOL:e})"),
    )
}

fn c7_static_orders() -> Outcome {
    let sweep = Sweep::default();
    let corpse = build_sequence(&CompositeKind::CorpsePi.into(), 1.0).unwrap();
    let bb1 = build_sequence(&CompositeKind::Bb1Pi.into(), 1.0).unwrap();
    let single = build_sequence(&CompositeKind::SinglePi.into(), 1.0).unwrap();
    let sweet = amplitude_sweet_spot(&bb1, 0.74 * PI, 0.84 * PI).unwrap();
    let cases = [
        ("CORPSE δ φ=0", &corpse, 0.0, ErrorKind::Detuning, Order::Finite(6)),
        ("CORPSE δ φ=π/2", &corpse, PI / 2.0, ErrorKind::Detuning, Order::Finite(4)),
        ("BB1 ε φ≈0.79π", &bb1, sweet, ErrorKind::Amplitude, Order::Finite(10)),
        ("BB1 δ φ=π/2", &bb1, PI / 2.0, ErrorKind::Detuning, Order::ExactCancellation),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, seq, phi, which, want) in cases {
        let est = cancellation_order(seq, &BlochVector::from_angles(0.0, phi), which, Metric::WZz, &sweep).unwrap();
        let fit_ok = matches!(est.order, Order::ExactCancellation) || est.residual < ORDER_RESIDUAL_MAX;
        pass &= est.order == want && fit_ok;
        let got = match est.order {
            Order::Finite(p) => format!("{p} (res {:.3})", est.residual),
            Order::ExactCancellation => "exact".into(),
        };
        parts.push(format!("{label}: {got}"));
    }
    let anchor = propagate_noise(&BlochVector::X, &single, 1.0).unwrap().final_noise().get(2, 2);
    let anchor_ok = rel_err(anchor, PI * PI, PI * PI) < 1e-12;
    pass &= anchor_ok;
    parts.push(format!("single π W̃_zz(0,0)/π² = {:.12}", anchor / (PI * PI)));
    outcome(pass, format!("root φ={:.4}π; {}", sweet / PI, parts.join("; ")))
}

fn c8_resonant_growth() -> Outcome {
    let beta = 1e-4;
    let mut worst: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for alpha in [0.0, 0.9, PI / 2.0, 2.5] {
        for (psi, j) in tone_trajectory(&BlochVector::X, 0.0, 20.0 * PI, 1.0, beta, alpha, 256) {
            if psi < 4.0 * PI {
                continue;
            }
            let numeric = j.y.hypot(j.z);
            let (jy, jz) = deflection_special(psi, 1.0, beta, alpha);
            let closed = jy.hypot(jz);
            worst = worst.max((closed / (beta * psi / 2.0) - 1.0).abs());
            cross = cross.max((numeric - closed).abs() / closed);
        }
    }
    outcome(
        worst < RESONANT_TOL && cross < RESONANT_TOL,
        format!(
            "max envelope dev {:.2}% (tol {}%), numeric vs closed {:.2e}",
            100.0 * worst,
            100.0 * RESONANT_TOL,
            cross
        ),
    )
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec!["--target", "tone", "--psi", "3.141592653589793", "--x", "1.125", "--samples", "4000", "--seed", "17"],
        vec!["--target", "white", "--kind", "bb1", "--ji", "0,1,0", "--samples", "4000", "--seed", "17"],
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let outputs: Vec<(Vec<u8>, String)> = ["1", "8"]
            .iter()
            .map(|w| {
                let out = dir.path().join(format!("r{k}_{w}.json"));
                let status = Command::new(env!("CARGO_BIN_EXE_blochnoise"))
                    .arg("mc-verify")
                    .args(args)
                    .args(["--workers", w, "--out"])
                    .arg(&out)
                    .status()
                    .unwrap();
                assert!(status.code().is_some_and(|c| c <= 1), "mc-verify failed: {status}");
                let report = std::fs::read(&out).unwrap();
                // The manifest names its own output file; everything else must match.
                let manifest = std::fs::read_to_string(blochnoise_manifest(&out)).unwrap();
                let manifest = manifest.replace(&out.display().to_string(), "OUT");
                (report, manifest)
            })
            .collect();
        let same = outputs[0] == outputs[1];
        pass &= same;
        detail.push(format!("{}: {}", args[1], if same { "identical" } else { "differs" }));
    }
    outcome(pass, detail.join(", "))
}

fn blochnoise_manifest(out: &std::path::Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    name.into()
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("closed-form sequence noise on 19×19 grid", c1_closed_forms),
        ("white-noise quadrature vs NEB matrix", c2_neb_quadrature),
        ("tone Monte Carlo oracle", c3_tone_mc),
        ("white-noise Monte Carlo oracle", c4_white_mc),
        ("sphere-averaged infidelity", c5_sphere_average),
        ("cos²φ_R law", c6_cos_squared),
        ("static cancellation orders", c7_static_orders),
        ("resonant growth", c8_resonant_growth),
        ("mc-verify determinism across workers", c9_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {}: {} [{}] {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
