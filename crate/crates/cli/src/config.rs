//! Experiment configuration: defaults, then a `key = value` file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use holdback::{InitSpec, ModelParams, Policy, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Run,
    Sweep,
    Survival,
    ZrCurve,
    Fluid,
    Snapshot,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Run => "run",
            Kind::Sweep => "sweep",
            Kind::Survival => "survival",
            Kind::ZrCurve => "zr-curve",
            Kind::Fluid => "fluid",
            Kind::Snapshot => "snapshot",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Some(match s {
            "run" => Kind::Run,
            "sweep" => Kind::Sweep,
            "survival" => Kind::Survival,
            "zr-curve" | "zr_curve" => Kind::ZrCurve,
            "fluid" => Kind::Fluid,
            "snapshot" => Kind::Snapshot,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Named sets of holdback probabilities for density sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// p = 1/4, 1/2, 3/4.
    Quarters,
    /// p = 0.1, 0.5, 0.9.
    Spread,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Quarters => "quarters",
            Preset::Spread => "spread",
        }
    }

    pub fn p_values(self) -> &'static [f64] {
        match self {
            Preset::Quarters => &[0.25, 0.5, 0.75],
            Preset::Spread => &[0.1, 0.5, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n: usize,
    pub rho: f64,
    pub p: f64,
    pub pi: f64,
    pub lambda: f64,
    pub perturb_prob: Option<f64>,
    pub allow_return: bool,
    pub variant: Variant,
    pub policy: Policy,
    pub init: String,
    /// Total horizon in slots, burn-in included.
    pub slots: u64,
    pub burn_in: u64,
    pub sample_every: u64,
    pub trials: u64,
    pub seed: u64,
    pub replicates: u64,
    pub grid: Vec<f64>,
    pub preset: Option<Preset>,
    pub horizon_factor: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Fluid output as `(t, x, density)` breakpoints instead of edges.
    pub profile: bool,
    pub include_perturb_flux: bool,
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "kind",
    "n",
    "rho",
    "p",
    "pi",
    "lambda",
    "perturb_prob",
    "allow_return",
    "variant",
    "policy",
    "init",
    "slots",
    "burn_in",
    "sample_every",
    "trials",
    "seed",
    "replicates",
    "grid",
    "preset",
    "horizon_factor",
    "t_end",
    "dt",
    "profile",
    "include_perturb_flux",
    "threads",
    "out",
    "format",
];

/// Raw settings keyed by canonical (underscore) names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return err(format!("unknown key '{key}'"));
        }
        self.0.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Later settings win.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Settings, ConfigError> {
        let mut out = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected key = value", lineno + 1));
            };
            out.set(k, v)
                .map_err(|e| ConfigError(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Settings, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Settings::parse(&text)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn parse_switch(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => err(format!("{key}: expected on or off, got '{v}'")),
    }
}

fn parse_grid(v: &str) -> Result<Vec<f64>, ConfigError> {
    // `start:stop:step` or a comma list.
    if let [a, b, s] = v.split(':').collect::<Vec<_>>()[..] {
        let (a, b, s): (f64, f64, f64) = (
            parse_num("grid", a)?,
            parse_num("grid", b)?,
            parse_num("grid", s)?,
        );
        if !(s > 0.0) || b < a {
            return err("grid: need start <= stop and step > 0");
        }
        let count = ((b - a) / s + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| a + s * i as f64).collect());
    }
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("grid", s))
        .collect()
}

pub fn parse_init(name: &str) -> Result<InitSpec, ConfigError> {
    Ok(match name {
        "uniform_random" => InitSpec::UniformRandom,
        "single_cluster" => InitSpec::SingleCluster,
        "equally_spaced" => InitSpec::EquallySpaced,
        "random_ideal" => InitSpec::RandomIdeal,
        "mes" => InitSpec::Mes,
        other => return err(format!("init: unknown initial condition '{other}'")),
    })
}

/// Default burn-in: `max(10 n, 1e5)` slots.
pub fn default_burn_in(n: usize) -> u64 {
    (10 * n as u64).max(100_000)
}

impl ExperimentConfig {
    pub fn resolve(kind: Kind, s: &Settings) -> Result<ExperimentConfig, ConfigError> {
        if let Some(k) = s.get("kind") {
            match Kind::parse(k) {
                Some(k) if k == kind => {}
                Some(k) => {
                    return err(format!(
                        "config file is for '{}' but '{}' was requested",
                        k.name(),
                        kind.name()
                    ))
                }
                None => return err(format!("kind: unknown experiment '{k}'")),
            }
        }
        let n: usize = parse_num("n", s.get_or("n", "1000"))?;
        let burn_in = match s.get("burn_in") {
            Some(v) => parse_num("burn_in", v)?,
            None => default_burn_in(n),
        };
        let slots = match s.get("slots") {
            Some(v) => parse_num("slots", v)?,
            None => burn_in + 1_000_000,
        };
        let variant: Variant = s
            .get_or("variant", "tasep_h")
            .parse()
            .map_err(|e: holdback::Error| ConfigError(e.to_string()))?;
        let policy: Policy = s
            .get_or("policy", "none")
            .parse()
            .map_err(|e: holdback::Error| ConfigError(e.to_string()))?;
        let default_init = match kind {
            Kind::Fluid => "single_cluster",
            _ => "uniform_random",
        };
        let preset = match s.get("preset") {
            None | Some("") | Some("none") => None,
            Some("quarters") => Some(Preset::Quarters),
            Some("spread") => Some(Preset::Spread),
            Some(other) => return err(format!("preset: unknown preset '{other}'")),
        };
        let format = match s.get_or("format", "csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return err(format!("format: expected csv or json, got '{other}'")),
        };
        let cfg = ExperimentConfig {
            kind,
            n,
            rho: parse_num("rho", s.get_or("rho", "0.25"))?,
            p: parse_num("p", s.get_or("p", "0.5"))?,
            pi: parse_num(
                "pi",
                s.get_or(
                    "pi",
                    if variant == Variant::ZeroRange || kind == Kind::ZrCurve {
                        "0.9"
                    } else {
                        "1"
                    },
                ),
            )?,
            lambda: parse_num("lambda", s.get_or("lambda", "1"))?,
            perturb_prob: match s.get("perturb_prob") {
                None | Some("") | Some("none") => None,
                Some(v) => Some(parse_num("perturb_prob", v)?),
            },
            allow_return: parse_switch("allow_return", s.get_or("allow_return", "on"))?,
            variant,
            policy,
            init: s.get_or("init", default_init).to_string(),
            slots,
            burn_in,
            sample_every: parse_num("sample_every", s.get_or("sample_every", "100"))?,
            trials: parse_num("trials", s.get_or("trials", "10000"))?,
            seed: parse_num("seed", s.get_or("seed", "1"))?,
            replicates: parse_num("replicates", s.get_or("replicates", "1"))?,
            grid: match s.get("grid") {
                Some(v) => parse_grid(v)?,
                None if kind == Kind::ZrCurve => parse_grid("0.05:0.95:0.05")?,
                None => Vec::new(),
            },
            preset,
            horizon_factor: parse_num("horizon_factor", s.get_or("horizon_factor", "1"))?,
            t_end: parse_num("t_end", s.get_or("t_end", "2"))?,
            dt: parse_num("dt", s.get_or("dt", "0.01"))?,
            profile: parse_switch("profile", s.get_or("profile", "off"))?,
            include_perturb_flux: parse_switch(
                "include_perturb_flux",
                s.get_or("include_perturb_flux", "off"),
            )?,
            threads: parse_num("threads", s.get_or("threads", "0"))?,
            out: s
                .get("out")
                .filter(|v| !v.is_empty() && *v != "-")
                .map(PathBuf::from),
            format,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        parse_init(&self.init)?;
        if matches!(self.kind, Kind::Run | Kind::Sweep) && self.slots <= self.burn_in {
            return err(format!(
                "slots = {} must exceed burn_in = {}",
                self.slots, self.burn_in
            ));
        }
        if self.sample_every == 0 {
            return err("sample_every must be positive");
        }
        if self.replicates == 0 {
            return err("replicates must be positive");
        }
        if matches!(self.kind, Kind::Sweep | Kind::ZrCurve) {
            if self.grid.is_empty() {
                return err("grid must not be empty");
            }
            let dense_ok = self.variant == Variant::Csma && self.kind == Kind::Sweep;
            for &g in &self.grid {
                let ok = if dense_ok {
                    g > 0.0
                } else {
                    g > 0.0 && g < 1.0
                };
                if !ok {
                    return err(format!("grid value {g} outside (0, 1)"));
                }
            }
        }
        if self.kind == Kind::Survival && self.trials == 0 {
            return err("trials must be positive");
        }
        if self.kind == Kind::Fluid && !(self.t_end >= 0.0 && self.dt > 0.0) {
            return err("fluid needs t_end >= 0 and dt > 0");
        }
        let check = |rho: f64, p: f64| {
            self.model_params(rho, p, self.seed)
                .map(|_| ())
                .map_err(|e| ConfigError(e.to_string()))
        };
        match self.kind {
            Kind::Sweep => {
                for &p in &self.sweep_p_values() {
                    for &rho in &self.grid {
                        check(rho, p)?;
                    }
                }
            }
            Kind::ZrCurve => {
                if !(self.pi > 0.0 && self.pi < 1.0 && self.p > 0.0 && self.p < 1.0) {
                    return err("zr-curve needs pi and p in (0, 1)");
                }
            }
            Kind::Fluid => {}
            _ => check(self.rho, self.p)?,
        }
        Ok(())
    }

    pub fn init_spec(&self) -> InitSpec {
        parse_init(&self.init).expect("validated")
    }

    pub fn model_params(&self, rho: f64, p: f64, seed: u64) -> holdback::Result<ModelParams> {
        ModelParams::builder(self.n, rho, p)
            .pi(self.pi)
            .lambda(self.lambda)
            .perturb_prob(self.perturb_prob)
            .allow_return(self.allow_return)
            .variant(self.variant)
            .policy(self.policy)
            .seed(seed)
            .build()
    }

    /// Holdback probabilities a sweep covers: the preset's, or `p`.
    pub fn sweep_p_values(&self) -> Vec<f64> {
        match self.preset {
            Some(pr) => pr.p_values().to_vec(),
            None => vec![self.p],
        }
    }

    /// Resolved configuration as `key = value` pairs, in [`KEYS`] order.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let switch = |b: bool| if b { "on" } else { "off" }.to_string();
        vec![
            ("kind", self.kind.name().to_string()),
            ("n", self.n.to_string()),
            ("rho", self.rho.to_string()),
            ("p", self.p.to_string()),
            ("pi", self.pi.to_string()),
            ("lambda", self.lambda.to_string()),
            (
                "perturb_prob",
                self.perturb_prob.map(|q| q.to_string()).unwrap_or_default(),
            ),
            ("allow_return", switch(self.allow_return)),
            ("variant", self.variant.name().to_string()),
            ("policy", self.policy.name().to_string()),
            ("init", self.init.clone()),
            ("slots", self.slots.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("sample_every", self.sample_every.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("replicates", self.replicates.to_string()),
            (
                "grid",
                self.grid
                    .iter()
                    .map(|g| g.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "preset",
                self.preset
                    .map(|p| p.name().to_string())
                    .unwrap_or_default(),
            ),
            ("horizon_factor", self.horizon_factor.to_string()),
            ("t_end", self.t_end.to_string()),
            ("dt", self.dt.to_string()),
            ("profile", switch(self.profile)),
            ("include_perturb_flux", switch(self.include_perturb_flux)),
        ]
    }

    /// The resolved configuration in config-file syntax.
    pub fn to_config_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
