//! Experiment harness for the maxcon toolkit: synthetic data, file input,
//! presets, seeded runs and reports.

pub mod config;
pub mod experiment;
pub mod io;
pub mod problem;
pub mod report;
pub mod synth;

use anyhow::Result;
use maxcon::reformulate::CorrespondenceSet;
use maxcon::Profile;

use config::ExperimentConfig;
use io::CorrespondenceFormat;
use problem::Problem;
use report::{ExperimentReport, Metadata};

pub fn correspondence_format(profile: Profile) -> CorrespondenceFormat {
    match profile {
        Profile::Triangulation => CorrespondenceFormat::Track,
        _ => CorrespondenceFormat::Matches,
    }
}

/// Synthetic correspondences for a non-linear profile.
pub fn synth_correspondences(profile: Profile, n: usize, outlier_fraction: f64, sigma: f64, seed: u64) -> Result<CorrespondenceSet> {
    Ok(match profile {
        Profile::Linear => anyhow::bail!("the linear profile has no correspondences"),
        Profile::Fundamental => CorrespondenceSet::Matches(synth::synth_two_view(n, outlier_fraction, sigma, seed)?.matches),
        Profile::HomographyAlgebraic | Profile::HomographyGeometric => {
            CorrespondenceSet::Matches(synth::synth_homography(n, outlier_fraction, sigma, seed)?.matches)
        }
        Profile::Affinity => CorrespondenceSet::Matches(synth::synth_affinity(n, outlier_fraction, sigma, seed)?.matches),
        Profile::Triangulation => CorrespondenceSet::Track(synth::synth_track(n, outlier_fraction, sigma, seed)?.observations),
    })
}

/// The problem described by a config: its input file, or synthetic data
/// seeded by the master seed.
pub fn load_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    match (&cfg.input, cfg.profile) {
        (Some(path), Profile::Linear) => Problem::regression(io::load_regression(path)?, cfg.epsilon),
        (Some(path), p) => {
            let set = io::load_correspondences(path, correspondence_format(p))?;
            Problem::from_correspondences(&set, p, cfg.epsilon)
        }
        (None, Profile::Linear) => {
            let s = synth::synth_linear(&synth::SynthConfig {
                n: cfg.n,
                d: cfg.d,
                sigma_in: cfg.sigma_in,
                outlier_fraction: cfg.outlier_fraction,
                balanced: cfg.balanced,
                seed: cfg.seed,
                epsilon: cfg.epsilon,
                intercept: true,
            })?;
            Problem::regression(s.data, cfg.epsilon)
        }
        (None, p) => {
            let set = synth_correspondences(p, cfg.n, cfg.outlier_fraction, cfg.sigma_in, cfg.seed)?;
            Problem::from_correspondences(&set, p, cfg.epsilon)
        }
    }
}

/// Runs a full experiment.
pub fn bench(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let problem = load_problem(cfg)?;
    let metadata = Metadata {
        name: cfg.name.clone(),
        profile: cfg.profile.to_string(),
        num_data: problem.num_data(),
        model_dim: problem.model_dim(),
        epsilon: cfg.epsilon,
        master_seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.echo(),
    };
    let run = || experiment::run_experiment(&problem, &cfg.plan(), metadata.clone());
    if cfg.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?.install(run)
    }
}
