//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment. Model keys use the conventional
//! symbols (`B_i`, `q_o`, `h`, `r`, `N`, ...). Every key has a default, so an
//! empty file is a complete configuration. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::equilibrium::{linspace, Scenario, SweepMode, SweepParameter};
use crate::error::{Error, Result};
use crate::model::{BenefitCurve, InteractionParams, RiskModel};
use crate::simulation::{EnvironmentSchedule, GroupMode, InitialCondition, MutationKernel, PayoffMode, SimConfig};

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    // interaction game
    ("B_i", "0.5"),
    ("B_o", "1.0"),
    ("q_i", "1.0"),
    ("q_o", "0.6"),
    ("n", "5"),
    // benefit curve
    ("curve", "sigmoid_linear"),
    ("h", "2"),
    ("r", "0.01"),
    ("beta", "0"),
    // population and copying process
    ("model", "fixed"),
    ("N", "1000"),
    ("sigma", "10"),
    ("mu", "0.0001"),
    ("mutation_kernel", "global"),
    ("delta", "0.01"),
    ("payoff_mode", "realized"),
    ("group_mode", "fixed_split"),
    ("init", "random"),
    ("p0", "0"),
    // environment schedule
    ("schedule", "sinusoid"),
    ("theta", "0"),
    ("amplitude", "1"),
    ("period", "100N"),
    ("phase", "0"),
    ("total_events", "100N"),
    ("checkpoints", "200"),
    ("ensemble", "1000"),
    ("seed", "0"),
    // analysis grids
    ("theta_min", "-1"),
    ("theta_max", "1"),
    ("theta_points", "201"),
    ("p_min", "0"),
    ("p_max", "1"),
    ("p_points", "201"),
    ("sweep", "none"),
    ("sweep_min", "0.5"),
    ("sweep_max", "1.0"),
    ("sweep_points", "101"),
    ("sweep_mode", "optimal"),
];

fn is_known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key)
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line: None,
        key: key.to_string(),
        message: message.into(),
    }
}

/// A fully resolved parameter set: defaults overlaid with file entries and
/// command-line overrides, kept as text so it can be written out and read
/// back verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedConfig {
    values: BTreeMap<String, String>,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ResolvedConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(line_no),
                key: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|e| match e {
                Error::Config { key, message, .. } => Error::Config {
                    line: Some(line_no),
                    key,
                    message,
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(config_error(key, "unknown key"));
        }
        if value.is_empty() {
            return Err(config_error(key, "missing value"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Checks that every typed view of the configuration can be built.
    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        self.sim_config()?;
        self.initial_condition()?;
        self.theta_grid()?;
        self.p_grid()?;
        self.sweep_spec()?;
        self.f64("theta")?;
        Ok(())
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.get(key);
        let v: f64 = raw
            .parse()
            .map_err(|_| config_error(key, format!("cannot parse `{raw}` as a number")))?;
        if !v.is_finite() {
            return Err(config_error(key, "must be finite"));
        }
        Ok(v)
    }

    fn unit(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(config_error(key, format!("value {v} out of range [0, 1]")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v <= 0.0 {
            return Err(config_error(key, format!("value {v} must be > 0")));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v < 0.0 {
            return Err(config_error(key, format!("value {v} must be >= 0")));
        }
        Ok(v)
    }

    fn u64(&self, key: &str) -> Result<u64> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| config_error(key, format!("cannot parse `{raw}` as a non-negative integer")))
    }

    fn count(&self, key: &str, min: u64) -> Result<u64> {
        let v = self.u64(key)?;
        if v < min {
            return Err(config_error(key, format!("value {v} must be >= {min}")));
        }
        Ok(v)
    }

    /// Event counts accept a plain integer or a multiple of the population size (`100N`).
    fn events(&self, key: &str) -> Result<f64> {
        let raw = self.get(key);
        let v = if let Some(mult) = raw.strip_suffix('N') {
            let mult: f64 = mult
                .trim()
                .parse()
                .map_err(|_| config_error(key, format!("cannot parse `{raw}` as a multiple of N")))?;
            mult * self.count("N", 2)? as f64
        } else {
            self.f64(key)?
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(config_error(key, format!("value {v} must be > 0")));
        }
        Ok(v)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T> {
        let raw = self.get(key);
        options
            .iter()
            .find(|(name, _)| *name == raw)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                config_error(
                    key,
                    format!("unknown value `{raw}` (expected one of {})", names.join(", ")),
                )
            })
    }

    pub fn model(&self) -> Result<RiskModel> {
        self.choice("model", &[("fixed", RiskModel::Fixed), ("social", RiskModel::Social)])
    }

    pub fn params(&self) -> Result<InteractionParams> {
        let n = self.count("n", 1)?;
        let n = u32::try_from(n).map_err(|_| config_error("n", "too large"))?;
        Ok(InteractionParams {
            b_in: self.positive("B_i")?,
            b_out: self.positive("B_o")?,
            q_in: self.unit("q_i")?,
            q_out: self.unit("q_o")?,
            n,
        })
    }

    pub fn curve(&self) -> Result<BenefitCurve> {
        #[derive(Clone, Copy)]
        enum Kind {
            Sigmoid,
            Power,
            Linear,
        }
        let kind = self.choice(
            "curve",
            &[
                ("sigmoid_linear", Kind::Sigmoid),
                ("power", Kind::Power),
                ("linear", Kind::Linear),
            ],
        )?;
        Ok(match kind {
            Kind::Sigmoid => BenefitCurve::SigmoidLinear {
                steepness: self.positive("h")?,
                slope: self.non_negative("r")?,
            },
            Kind::Power => BenefitCurve::power(self.f64("beta")?),
            Kind::Linear => BenefitCurve::Linear,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.model()?, self.curve()?, self.params()?)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let population_size = self.count("N", 2)? as usize;
        let kernel = self.choice("mutation_kernel", &[("global", 0u8), ("local", 1u8)])?;
        let mutation_kernel = if kernel == 0 {
            MutationKernel::GlobalUniform
        } else {
            let delta = self.positive("delta")?;
            if delta > 1.0 {
                return Err(config_error("delta", format!("value {delta} out of range (0, 1]")));
            }
            MutationKernel::LocalStep { delta }
        };
        let schedule = match self.choice("schedule", &[("sinusoid", 0u8), ("constant", 1u8)])? {
            0 => EnvironmentSchedule::Sinusoid {
                amplitude: self.f64("amplitude")?,
                period: self.events("period")?,
                phase: self.f64("phase")?,
            },
            _ => EnvironmentSchedule::Constant {
                theta: self.f64("theta")?,
            },
        };
        let total_events = self.events("total_events")?;
        if total_events.fract() != 0.0 {
            return Err(config_error("total_events", "must be a whole number of events"));
        }
        let checkpoints = self.count("checkpoints", 1)?;
        if checkpoints as f64 > total_events {
            return Err(config_error("checkpoints", "must not exceed total_events"));
        }
        let cfg = SimConfig {
            population_size,
            selection_strength: self.non_negative("sigma")?,
            mutation_rate: self.unit("mu")?,
            mutation_kernel,
            model: self.model()?,
            payoff_mode: self.choice(
                "payoff_mode",
                &[("realized", PayoffMode::Realized), ("expected", PayoffMode::Expected)],
            )?,
            group_mode: self.choice(
                "group_mode",
                &[
                    ("fixed_split", GroupMode::FixedSplit),
                    ("reshuffle", GroupMode::Reshuffle),
                ],
            )?,
            schedule,
            total_events: total_events as u64,
            checkpoints: checkpoints as usize,
            ensemble_size: self.count("ensemble", 1)? as usize,
            seed: self.u64("seed")?,
        };
        cfg.validate().map_err(|e| config_error("simulation", e.to_string()))?;
        Ok(cfg)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        match self.choice("init", &[("random", 0u8), ("uniform", 1u8)])? {
            0 => Ok(InitialCondition::RandomUniform),
            _ => Ok(InitialCondition::UniformAt { p: self.unit("p0")? }),
        }
    }

    fn grid(&self, lo_key: &str, hi_key: &str, count_key: &str) -> Result<Vec<f64>> {
        let lo = self.f64(lo_key)?;
        let hi = self.f64(hi_key)?;
        let count = self.count(count_key, 1)? as usize;
        if lo > hi {
            return Err(config_error(lo_key, format!("empty range: {lo} > {hi}")));
        }
        if count > 1 && lo == hi {
            return Err(config_error(count_key, "a zero-width range holds exactly one point"));
        }
        Ok(linspace(lo, hi, count))
    }

    pub fn theta_grid(&self) -> Result<Vec<f64>> {
        self.grid("theta_min", "theta_max", "theta_points")
    }

    pub fn p_grid(&self) -> Result<Vec<f64>> {
        let g = self.grid("p_min", "p_max", "p_points")?;
        if g.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(config_error("p_min", "strategy grid must lie within [0, 1]"));
        }
        Ok(g)
    }

    pub fn resolution(&self) -> Result<usize> {
        Ok(self.count("p_points", 2)? as usize)
    }

    /// Swept parameter, its grid, and the reported quantity. `sweep = none`
    /// evaluates the single configured `q_o`.
    pub fn sweep_spec(&self) -> Result<(SweepParameter, Vec<f64>, SweepMode)> {
        let mode = self.choice(
            "sweep_mode",
            &[("optimal", SweepMode::Optimal), ("stable_set", SweepMode::StableSet)],
        )?;
        if self.get("sweep") == "none" {
            return Ok((SweepParameter::QOut, vec![self.unit("q_o")?], mode));
        }
        let param: SweepParameter = self
            .get("sweep")
            .parse()
            .map_err(|_| config_error("sweep", format!("unknown sweep parameter `{}`", self.get("sweep"))))?;
        Ok((param, self.grid("sweep_min", "sweep_max", "sweep_points")?, mode))
    }

    pub fn theta(&self) -> Result<f64> {
        self.f64("theta")
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    /// Config-file text reproducing this parameter set.
    pub fn to_config_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Reads and resolves a configuration file.
pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config `{}`: {e}", path.display())))?;
    ResolvedConfig::parse(&text)
}
