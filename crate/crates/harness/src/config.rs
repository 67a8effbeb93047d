//! Experiment configuration: flat `key = value` files, one shipped preset per
//! experiment, plus `key=value` overrides from the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use maxcon::{AmConfig, EpConfig, Profile, RansacConfig};

use crate::experiment::{parse_methods, Method, MethodParams, RunPlan};

pub const PRESETS: [(&str, &str); 7] = [
    ("linear-balanced", include_str!("../presets/linear-balanced.conf")),
    ("linear-unbalanced", include_str!("../presets/linear-unbalanced.conf")),
    ("fundamental", include_str!("../presets/fundamental.conf")),
    ("homography-algebraic", include_str!("../presets/homography-algebraic.conf")),
    ("homography-geometric", include_str!("../presets/homography-geometric.conf")),
    ("affinity", include_str!("../presets/affinity.conf")),
    ("triangulation", include_str!("../presets/triangulation.conf")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            anyhow!("unknown preset `{name}` (known: {})", known.join(", "))
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub profile: Profile,
    /// Correspondence or regression file; synthetic data when absent.
    pub input: Option<PathBuf>,
    /// Data count (views for triangulation).
    pub n: usize,
    pub d: usize,
    pub outlier_fraction: f64,
    pub balanced: bool,
    /// Inlier noise: regression units for `linear`, pixels otherwise.
    pub sigma_in: f64,
    pub epsilon: f64,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub seed: u64,
    pub threads: usize,
    pub ransac: RansacConfig,
    pub ep: EpConfig,
    pub am: AmConfig,
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self {
            name: profile.name().to_string(),
            profile,
            input: None,
            n: 500,
            d: 8,
            outlier_fraction: 0.4,
            balanced: true,
            sigma_in: if profile == Profile::Linear { 0.1 } else { 0.5 },
            epsilon: profile.default_epsilon(),
            methods: Vec::new(),
            runs: 10,
            seed: 0,
            threads: 0,
            ransac: RansacConfig::default(),
            ep: EpConfig::for_profile(profile),
            am: AmConfig::for_profile(profile),
        }
    }

    /// Parses a config text and then applies `overrides` (`key=value`).
    /// The profile is resolved first since it supplies the defaults.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", k + 1))?;
            entries.push((key.trim().to_string(), value.trim().to_string(), format!("line {}", k + 1)));
        }
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{o}`: expected `key=value`"))?;
            entries.push((key.trim().to_string(), value.trim().to_string(), format!("override `{o}`")));
        }
        let profile = match entries.iter().rev().find(|(k, _, _)| k == "profile") {
            Some((_, v, at)) => v.parse::<Profile>().with_context(|| at.clone())?,
            None => Profile::Linear,
        };
        let mut cfg = Self::for_profile(profile);
        for (key, value, at) in &entries {
            cfg.set(key, value).with_context(|| at.clone())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| anyhow!("{key}: cannot parse `{v}`"))
        }
        match key {
            "name" => self.name = value.to_string(),
            "profile" => self.profile = value.parse()?,
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "n" => self.n = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "outlier_fraction" => self.outlier_fraction = num(key, value)?,
            "balanced" => self.balanced = num(key, value)?,
            "sigma_in" => self.sigma_in = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "methods" => self.methods = parse_methods(value)?,
            "runs" => self.runs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "confidence" => self.ransac.confidence = num(key, value)?,
            "max_iters" => self.ransac.max_iters = num(key, value)?,
            "lo_inner_iters" => self.ransac.lo_inner_iters = num(key, value)?,
            "lo_subset_factor" => self.ransac.lo_subset_factor = num(key, value)?,
            "lo_trigger_fraction" => self.ransac.lo_trigger_fraction = num(key, value)?,
            "alpha0" => self.ep.alpha0 = num(key, value)?,
            "kappa" => self.ep.kappa = num(key, value)?,
            "ep_max_outer" => self.ep.max_outer = num(key, value)?,
            "ep_max_inner" => self.ep.max_inner = num(key, value)?,
            "rho0" => self.am.rho0 = num(key, value)?,
            "sigma" => self.am.sigma = num(key, value)?,
            "rho_max" => self.am.rho_max = num(key, value)?,
            "am_max_iter" => self.am.max_iter = num(key, value)?,
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            bail!("n and d must be positive");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            bail!("outlier_fraction must lie in [0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be positive");
        }
        if !(self.sigma_in > 0.0) {
            bail!("sigma_in must be positive");
        }
        if self.runs == 0 {
            bail!("runs must be positive");
        }
        self.ransac.validate()?;
        self.ep.validate()?;
        self.am.validate()?;
        Ok(())
    }

    pub fn plan(&self) -> RunPlan {
        RunPlan {
            methods: self.methods.clone(),
            runs: self.runs,
            master_seed: self.seed,
            params: MethodParams {
                ransac: self.ransac.clone(),
                ep: self.ep.clone(),
                am: self.am.clone(),
            },
        }
    }

    /// The resolved configuration as written into report metadata.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let methods: Vec<String> = self.methods.iter().map(|m| m.to_string()).collect();
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("name", self.name.clone());
        put("profile", self.profile.to_string());
        put(
            "input",
            self.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("n", self.n.to_string());
        put("d", self.d.to_string());
        put("outlier_fraction", self.outlier_fraction.to_string());
        put("balanced", self.balanced.to_string());
        put("sigma_in", self.sigma_in.to_string());
        put("epsilon", self.epsilon.to_string());
        put("methods", methods.join(","));
        put("runs", self.runs.to_string());
        put("seed", self.seed.to_string());
        put("confidence", self.ransac.confidence.to_string());
        put("max_iters", self.ransac.max_iters.to_string());
        put("lo_inner_iters", self.ransac.lo_inner_iters.to_string());
        put("lo_subset_factor", self.ransac.lo_subset_factor.to_string());
        put("lo_trigger_fraction", self.ransac.lo_trigger_fraction.to_string());
        put("alpha0", self.ep.alpha0.to_string());
        put("kappa", self.ep.kappa.to_string());
        put("ep_max_outer", self.ep.max_outer.to_string());
        put("ep_max_inner", self.ep.max_inner.to_string());
        put("rho0", self.am.rho0.to_string());
        put("sigma", self.am.sigma.to_string());
        put("rho_max", self.am.rho_max.to_string());
        put("am_max_iter", self.am.max_iter.to_string());
        m
    }
}
