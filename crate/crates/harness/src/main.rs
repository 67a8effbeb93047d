use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use maxcon::reformulate::CorrespondenceSet;
use maxcon::{exact_max_consensus, Profile};
use maxcon_harness::config::{preset, ExperimentConfig};
use maxcon_harness::experiment::{run_method, Method};
use maxcon_harness::report::RunRecord;
use maxcon_harness::{io as dio, load_problem, synth, synth_correspondences};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "maxcon", version, about = "Maximum consensus robust fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a synthetic dataset.
    Synth(SynthArgs),
    /// Fit one method to one dataset.
    Fit(FitArgs),
    /// Run a full experiment from a preset or config file.
    Bench(BenchArgs),
    /// Exact maximum consensus for a small regression dataset.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Options shared by the commands that run solvers.
#[derive(Args)]
struct Common {
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(p) = self.profile {
            o.push(format!("profile={p}"));
        }
        let pairs = [
            ("epsilon", self.epsilon),
            ("alpha0", self.alpha0),
            ("kappa", self.kappa),
            ("rho0", self.rho0),
            ("sigma", self.sigma),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                o.push(format!("{k}={v}"));
            }
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        o
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_profile, default_value = "linear")]
    profile: Profile,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 0.4)]
    outlier_fraction: f64,
    /// Put every outlier on the same side of the hyperplane.
    #[arg(long)]
    unbalanced: bool,
    /// Inlier noise (regression units for `linear`, pixels otherwise).
    #[arg(long)]
    sigma_in: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// RS, LORS, LORS1, L1, LINF, LSQ, EP-<init> or AM-<init>.
    #[arg(long)]
    method: String,
    /// Initializer for EP or AM: RS, LSQ or LINF.
    #[arg(long)]
    init: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Shipped preset name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides.
    #[arg(long = "set")]
    set: Vec<String>,
    /// Comma-separated method list replacing the configured one.
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: maxcon::Error| e.to_string())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn synth_cmd(a: SynthArgs) -> Result<bool> {
    let mut out = output(a.out.as_deref())?;
    let sigma = a
        .sigma_in
        .unwrap_or(if a.profile == Profile::Linear { 0.1 } else { 0.5 });
    match a.profile {
        Profile::Linear => {
            let s = synth::synth_linear(&synth::SynthConfig {
                n: a.n,
                d: a.d,
                sigma_in: sigma,
                outlier_fraction: a.outlier_fraction,
                balanced: !a.unbalanced,
                seed: a.seed,
                ..synth::SynthConfig::default()
            })?;
            dio::write_regression(&mut out, &s.data)?;
        }
        p => match synth_correspondences(p, a.n, a.outlier_fraction, sigma, a.seed)? {
            CorrespondenceSet::Matches(m) => dio::write_matches(&mut out, &m)?,
            CorrespondenceSet::Track(t) => dio::write_track(&mut out, &t)?,
        },
    }
    out.flush()?;
    Ok(true)
}

#[derive(Serialize)]
struct FitOutput {
    method: String,
    seed: u64,
    theta: Vec<f64>,
    consensus: usize,
    num_data: usize,
    iterations: usize,
    time_s: f64,
    converged: bool,
    tainted: bool,
}

fn fit_cmd(a: FitArgs) -> Result<bool> {
    let method: Method = match &a.init {
        Some(init) => format!("{}-{init}", a.method).parse()?,
        None => a.method.parse()?,
    };
    let mut overrides = a.common.overrides();
    overrides.push(format!("input={}", a.input.display()));
    let cfg = ExperimentConfig::parse("", &overrides)?;
    let problem = load_problem(&cfg)?;
    let fit = run_method(&problem, method, cfg.seed, &cfg.plan().params)?;
    let mut out = output(a.common.out.as_deref())?;
    match a.common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let o = FitOutput {
                method: method.to_string(),
                seed: cfg.seed,
                theta: fit.theta.as_slice().to_vec(),
                consensus: fit.consensus,
                num_data: problem.num_data(),
                iterations: fit.iterations,
                time_s: fit.wall_time,
                converged: fit.converged,
                tainted: fit.tainted,
            };
            serde_json::to_writer_pretty(&mut out, &o)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.serialize(RunRecord {
                method: method.to_string(),
                run: 0,
                seed: cfg.seed,
                consensus: fit.consensus,
                time_s: fit.wall_time,
                converged: fit.converged,
                tainted: fit.tainted,
            })?;
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(fit.converged)
}

fn bench_cmd(a: BenchArgs) -> Result<bool> {
    let text = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name)?.to_string(),
        (None, Some(path)) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, None) => bail!("bench needs --preset or --config"),
    };
    let mut overrides = a.set.clone();
    overrides.extend(a.common.overrides());
    if let Some(m) = &a.method {
        overrides.push(format!("methods={m}"));
    }
    let cfg = ExperimentConfig::parse(&text, &overrides)?;
    let report = maxcon_harness::bench(&cfg)?;
    match &a.common.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let base = dir.join(&cfg.name);
            if !matches!(a.common.format, Some(Format::Csv)) {
                let path = base.with_extension("json");
                fs::write(&path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
            }
            if !matches!(a.common.format, Some(Format::Json)) {
                let path = base.with_extension("csv");
                report.write_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
            }
        }
        None => match a.common.format.unwrap_or(Format::Json) {
            Format::Json => print!("{}", report.to_json()?),
            Format::Csv => report.write_csv(io::stdout().lock())?,
        },
    }
    for m in &report.methods {
        eprintln!(
            "{:<8} consensus {:>8.1}  time {:>8.3} s",
            m.method, m.mean_consensus, m.mean_time_s
        );
    }
    Ok(report.all_converged())
}

fn oracle_cmd(a: OracleArgs) -> Result<bool> {
    let data = dio::load_regression(&a.input)?;
    let problem = maxcon_harness::problem::Problem::regression(data, a.epsilon)?;
    let r = exact_max_consensus(&problem.cs, problem.model_dim())?;
    let mut out = output(a.out.as_deref())?;
    match a.format.unwrap_or(Format::Json) {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &r)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "consensus,candidates,fallback_only")?;
            writeln!(out, "{},{},{}", r.best_consensus, r.candidates_evaluated, r.fallback_only)?;
        }
    }
    out.flush()?;
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: at least one run did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
