//! Methods, seeded runs and the experiment loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use maxcon::baselines::least_squares_fit;
use maxcon::{
    am_solve, consensus, ep_solve, l1_fit, linf_outlier_removal, lo_ransac, ransac, AmConfig, EpConfig, FitResult,
    RansacConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::problem::Problem;
use crate::report::{ExperimentReport, Metadata, MethodSummary, RunRecord};

/// Initializer of a refinement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Init {
    Rs,
    Lsq,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Rs,
    Lors,
    Lors1,
    L1,
    Linf,
    Lsq,
    Ep(Init),
    Am(Init),
}

impl Init {
    fn name(self) -> &'static str {
        match self {
            Init::Rs => "RS",
            Init::Lsq => "LSQ",
            Init::Linf => "LINF",
        }
    }
}

impl FromStr for Init {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "RS" => Init::Rs,
            "LSQ" => Init::Lsq,
            "LINF" => Init::Linf,
            other => bail!("unknown initializer `{other}` (expected RS, LSQ or LINF)"),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rs => f.write_str("RS"),
            Method::Lors => f.write_str("LORS"),
            Method::Lors1 => f.write_str("LORS1"),
            Method::L1 => f.write_str("L1"),
            Method::Linf => f.write_str("LINF"),
            Method::Lsq => f.write_str("LSQ"),
            Method::Ep(i) => write!(f, "EP-{}", i.name()),
            Method::Am(i) => write!(f, "AM-{}", i.name()),
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        if let Some((head, init)) = up.split_once('-') {
            let init: Init = init.parse()?;
            return match head {
                "EP" => Ok(Method::Ep(init)),
                "AM" => Ok(Method::Am(init)),
                _ => bail!("unknown method `{s}`"),
            };
        }
        Ok(match up.as_str() {
            "RS" => Method::Rs,
            "LORS" => Method::Lors,
            "LORS1" => Method::Lors1,
            "L1" => Method::L1,
            "LINF" => Method::Linf,
            "LSQ" => Method::Lsq,
            _ => bail!("unknown method `{s}`"),
        })
    }
}

impl Method {
    /// Whether the method depends on the seed and is therefore repeated.
    pub fn randomized(self) -> bool {
        matches!(
            self,
            Method::Rs | Method::Lors | Method::Lors1 | Method::Ep(Init::Rs) | Method::Am(Init::Rs)
        )
    }

    fn needs_least_squares(self) -> bool {
        matches!(self, Method::Lsq | Method::Ep(Init::Lsq) | Method::Am(Init::Lsq))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    /// The seed field is replaced per run.
    pub ransac: RansacConfig,
    pub ep: EpConfig,
    pub am: AmConfig,
}

fn initial(problem: &Problem, init: Init, cfg: &RansacConfig) -> Result<FitResult> {
    Ok(match init {
        Init::Rs => ransac(&problem.source(), &problem.cs, cfg)?,
        Init::Lsq => least_squares_fit(&problem.rows, &problem.cs)?,
        Init::Linf => linf_outlier_removal(&problem.cs)?,
    })
}

/// Runs one method. The reported time covers the initializer, and the
/// consensus is recomputed from the returned model.
pub fn run_method(problem: &Problem, method: Method, seed: u64, params: &MethodParams) -> Result<FitResult> {
    if method.needs_least_squares() && !problem.least_squares {
        bail!("{method} is not available for the {} profile", problem.profile);
    }
    let cfg = RansacConfig {
        seed,
        ..params.ransac.clone()
    };
    let start = Instant::now();
    let mut fit = match method {
        Method::Rs => ransac(&problem.source(), &problem.cs, &cfg)?,
        Method::Lors => lo_ransac(&problem.source(), &problem.cs, &cfg, false)?,
        Method::Lors1 => lo_ransac(&problem.source(), &problem.cs, &cfg, true)?,
        Method::L1 => l1_fit(&problem.cs)?,
        Method::Linf => linf_outlier_removal(&problem.cs)?,
        Method::Lsq => least_squares_fit(&problem.rows, &problem.cs)?,
        Method::Ep(init) => {
            let theta0 = initial(problem, init, &cfg)?.theta;
            ep_solve(&theta0, &problem.cs, &params.ep)?
        }
        Method::Am(init) => {
            let theta0 = initial(problem, init, &cfg)?.theta;
            am_solve(&theta0, &problem.cs, &params.am)?
        }
    };
    fit.wall_time = start.elapsed().as_secs_f64();
    let c = consensus(&fit.theta, &problem.cs, 0.0)?;
    fit.consensus = c.count;
    fit.inlier_mask = c.mask;
    Ok(fit)
}

/// Per-run seeds derived from the master seed. Run `k` of every randomized
/// method uses the same seed, so refinements start from the same RANSAC
/// hypothesis as the plain RANSAC row.
pub fn run_seeds(master: u64, runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..runs).map(|_| rng.random()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub methods: Vec<Method>,
    /// Repetitions of each randomized method.
    pub runs: usize,
    pub master_seed: u64,
    pub params: MethodParams,
}

/// Runs every (method, run) pair in parallel and merges the records in
/// (method, run) order.
pub fn run_experiment(problem: &Problem, plan: &RunPlan, metadata: Metadata) -> Result<ExperimentReport> {
    let seeds = run_seeds(plan.master_seed, plan.runs.max(1));
    let jobs: Vec<(usize, Method, usize)> = plan
        .methods
        .iter()
        .enumerate()
        .flat_map(|(k, &m)| {
            let runs = if m.randomized() { plan.runs.max(1) } else { 1 };
            (0..runs).map(move |r| (k, m, r))
        })
        .collect();
    let mut records: Vec<(usize, RunRecord)> = jobs
        .par_iter()
        .map(|&(k, method, run)| {
            let seed = seeds[run];
            let fit = run_method(problem, method, seed, &plan.params).with_context(|| format!("{method}, run {run}"))?;
            Ok((
                k,
                RunRecord {
                    method: method.to_string(),
                    run,
                    seed,
                    consensus: fit.consensus,
                    time_s: fit.wall_time,
                    converged: fit.converged,
                    tainted: fit.tainted,
                },
            ))
        })
        .collect::<Result<_>>()?;
    records.sort_by_key(|(k, r)| (*k, r.run));
    let mut methods: Vec<MethodSummary> = Vec::new();
    for (k, record) in records {
        if methods.len() <= k {
            methods.push(MethodSummary::new(record.method.clone()));
        }
        methods[k].runs.push(record);
    }
    for m in &mut methods {
        m.finish();
    }
    Ok(ExperimentReport { metadata, methods })
}
