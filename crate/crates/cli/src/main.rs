use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod output;

#[derive(Parser)]
#[command(name = "blochnoise", version, about = "Phase-noise to Bloch-vector noise calculations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance transfer matrix T̃(ψ, x) over a linear grid of x = f_m/f_R.
    Transfer(TransferArgs),
    /// W_zz and infidelity of a composite π-pulse over initial-state angles.
    CompositeMap(CompositeMapArgs),
    /// Noise propagation through a sequence file.
    Sequence(SequenceArgs),
    /// Compare analytic results with the Monte Carlo oracle.
    McVerify(McVerifyArgs),
    /// Cancellation order of a static error for a composite pulse.
    StaticOrder(StaticOrderArgs),
    /// Convert a dBc/Hz datasheet CSV to rad²/Hz.
    SpectrumConvert(SpectrumConvertArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Serialize)]
pub struct TransferArgs {
    /// Rotation angle ψ in rad.
    #[arg(long, allow_negative_numbers = true)]
    pub psi: f64,
    #[arg(long)]
    pub x_min: f64,
    #[arg(long)]
    pub x_max: f64,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct CompositeMapArgs {
    /// single_pi, corpse_pi, scrofulous_pi or bb1_pi.
    #[arg(long)]
    pub kind: String,
    /// Points per axis.
    #[arg(long, default_value_t = 91)]
    pub grid: usize,
    /// Rabi frequency in Hz; with --l0-dbc gives absolute units.
    #[arg(long)]
    pub f_r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub l0_dbc: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
#[command(group(ArgGroup::new("noise").required(true).args(["l0_dbc", "l0", "spectrum"])))]
pub struct SequenceArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// White noise level in dBc/Hz.
    #[arg(long, allow_negative_numbers = true)]
    pub l0_dbc: Option<f64>,
    /// White noise level in rad²/Hz.
    #[arg(long)]
    pub l0: Option<f64>,
    /// Datasheet CSV (`f_hz,l_dbc_hz`); single-pulse sequences only.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Overrides the Rabi frequency in the sequence file.
    #[arg(long)]
    pub f_r: Option<f64>,
    /// Initial Bloch vector `x,y,z`.
    #[arg(long, default_value = "1,0,0", allow_hyphen_values = true)]
    pub ji: String,
    /// Extend a tabulated spectrum flat beyond its support.
    #[arg(long)]
    pub extrapolate: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tone,
    White,
}

#[derive(Args, Serialize)]
pub struct McVerifyArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    /// Tone: rotation angle ψ in rad.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Tone: modulation frequency over Rabi frequency.
    #[arg(long)]
    pub x: Option<f64>,
    /// White: sequence kind (composite name or spin_echo).
    #[arg(long, default_value = "single_pi")]
    pub kind: String,
    /// White: spin echo pulse count.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// White: spin echo half spacing in s.
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// White: spin echo variant, fixed_axis or alternating.
    #[arg(long, default_value = "alternating")]
    pub variant: String,
    /// White: initial Bloch vector `x,y,z`.
    #[arg(long, default_value = "1,0,0", allow_hyphen_values = true)]
    pub ji: String,
    /// White: Rabi frequency in Hz.
    #[arg(long, default_value_t = 40.4e3)]
    pub f_r: f64,
    /// White: noise level in rad²/Hz.
    #[arg(long, default_value_t = 1e-12)]
    pub l0: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub steps_per_cycle: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma_beta: f64,
    #[arg(long)]
    pub no_antithetic: bool,
    /// Worker threads; does not affect results.
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct StaticOrderArgs {
    #[arg(long)]
    pub kind: String,
    /// Azimuth of J_i in rad.
    #[arg(long, allow_negative_numbers = true)]
    pub phi_i: f64,
    /// Polar angle of J_i above the x–y plane in rad.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta_i: f64,
    /// amplitude or detuning.
    #[arg(long)]
    pub which: String,
    /// w_zz or infidelity.
    #[arg(long, default_value = "w_zz")]
    pub metric: String,
    #[arg(long, default_value_t = 1e-3)]
    pub start: f64,
    #[arg(long, default_value_t = 2.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 7)]
    pub points: usize,
    /// Move φ_i to the nearby azimuth where the cubic amplitude term vanishes
    /// (searched within ±0.05π; requires θ_i = 0).
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SpectrumConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Drops `--workers` so that manifests do not depend on the thread count.
fn recorded_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--workers" {
            skip = true;
        } else if !a.starts_with("--workers=") {
            out.push(a.clone());
        }
    }
    out
}

fn replace_out(args: &[String], out: &std::path::Path) -> Result<Vec<String>> {
    let mut result = Vec::with_capacity(args.len() + 2);
    let mut found = false;
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--out" {
            iter.next();
            found = true;
        } else if a.starts_with("--out=") {
            found = true;
        } else {
            result.push(a.clone());
            continue;
        }
        result.push("--out".into());
        result.push(out.display().to_string());
    }
    if !found {
        result.push("--out".into());
        result.push(out.display().to_string());
    }
    Ok(result)
}

fn run(args: Vec<String>) -> Result<ExitCode> {
    let cli = Cli::try_parse_from(std::iter::once("blochnoise".to_string()).chain(args.iter().cloned()))
        .unwrap_or_else(|e| e.exit());
    let recorded = recorded_args(&args);
    match cli.command {
        Command::Transfer(a) => commands::transfer(&a, &recorded),
        Command::CompositeMap(a) => commands::composite_map(&a, &recorded),
        Command::Sequence(a) => commands::sequence(&a, &recorded),
        Command::McVerify(a) => commands::mc_verify(&a, &recorded),
        Command::StaticOrder(a) => commands::static_order(&a, &recorded),
        Command::SpectrumConvert(a) => commands::spectrum_convert(&a, &recorded),
        Command::Replay(a) => {
            let manifest = output::read_manifest(&a.manifest)?;
            if manifest.tool != output::TOOL {
                bail!("manifest was written by `{}`, not {}", manifest.tool, output::TOOL);
            }
            if manifest.args.first().map(String::as_str) == Some("replay") {
                bail!("refusing to replay a replay manifest");
            }
            let args = match &a.out {
                Some(out) => replace_out(&manifest.args, out)?,
                None => manifest.args.clone(),
            };
            run(args)
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn workers_are_not_recorded() {
        let a = s(&["mc-verify", "--workers", "8", "--seed", "1", "--workers=2"]);
        assert_eq!(recorded_args(&a), s(&["mc-verify", "--seed", "1"]));
    }

    #[test]
    fn out_is_replaced() {
        let a = s(&["transfer", "--out", "a.csv", "--psi", "1"]);
        let r = replace_out(&a, std::path::Path::new("b.csv")).unwrap();
        assert_eq!(r, s(&["transfer", "--out", "b.csv", "--psi", "1"]));
        let r = replace_out(&s(&["static-order"]), std::path::Path::new("c.json")).unwrap();
        assert_eq!(r, s(&["static-order", "--out", "c.json"]));
    }
}
