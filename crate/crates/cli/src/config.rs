//! Experiment configuration: a TOML file plus dotted `--set` overrides.
//!
//! Every section is strict (`deny_unknown_fields`) and a command accepts
//! exactly the sections it reads, so a config cannot silently carry settings
//! that were never used.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use fedsep_core::sim::HyperParams;
use fedsep_core::{AvailabilityProfile, ChainConfig, Error, ExactOptions, Result, SyntheticSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PiVsR,
    ToyBias,
    SynthDebias,
    Mixing,
    EstimatorRate,
    Evolution,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::PiVsR,
        Command::ToyBias,
        Command::SynthDebias,
        Command::Mixing,
        Command::EstimatorRate,
        Command::Evolution,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::PiVsR => "pi-vs-r",
            Command::ToyBias => "toy-bias",
            Command::SynthDebias => "synth-debias",
            Command::Mixing => "mixing",
            Command::EstimatorRate => "estimator-rate",
            Command::Evolution => "evolution",
        }
    }

    /// (required, optional) sections.
    fn sections(&self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Command::PiVsR => (&["chain", "profile", "exact", "mc"], &[]),
            Command::ToyBias => (&["profile", "hyper", "toy"], &[]),
            Command::SynthDebias => (&["synthetic", "grouping", "profile", "hyper", "synth"], &[]),
            Command::Mixing => (&["chain", "profile", "exact", "mixing"], &[]),
            Command::EstimatorRate => (&["chain", "profile", "exact", "estimator"], &["mc"]),
            Command::Evolution => (&["chain", "profile", "exact", "evolution"], &["mc"]),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown experiment {s:?}")))
    }
}

/// Chain parameters with a grid of separations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub n_clients: usize,
    pub batch_size: usize,
    pub r_values: Vec<usize>,
}

impl ChainSection {
    /// One validated [`ChainConfig`] per requested separation.
    pub fn configs(&self) -> Result<Vec<ChainConfig>> {
        if self.r_values.is_empty() {
            return Err(Error::Validation("chain.r_values is empty".into()));
        }
        self.r_values
            .iter()
            .map(|&r| ChainConfig::new(self.n_clients, self.batch_size, r))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Uniform,
    /// `p_i` proportional to `i^-exponent`, `i = 1..n`.
    PowerLaw {
        exponent: f64,
    },
    /// Weights `1 - U[0,1)` from a dedicated seed.
    Random {
        seed: u64,
    },
    Explicit {
        weights: Vec<f64>,
    },
}

impl ProfileSpec {
    pub fn build(&self, n: usize) -> Result<AvailabilityProfile> {
        match self {
            ProfileSpec::Uniform => AvailabilityProfile::uniform(n),
            ProfileSpec::PowerLaw { exponent } => AvailabilityProfile::power_law(n, *exponent),
            ProfileSpec::Random { seed } => AvailabilityProfile::random(n, &mut fedsep_core::rng::from_seed(*seed)),
            ProfileSpec::Explicit { weights } => {
                if weights.len() != n {
                    return Err(Error::Validation(format!(
                        "profile has {} weights, expected {n}",
                        weights.len()
                    )));
                }
                AvailabilityProfile::from_weights(weights)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSection {
    /// Largest augmented state space solved exactly; larger requests use Monte Carlo.
    pub max_states: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl ExactSection {
    pub fn options(&self) -> ExactOptions {
        ExactOptions {
            max_states: self.max_states as u128,
            tol: self.tol,
            max_iters: self.max_iters,
            ..ExactOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub horizon: usize,
    pub replicas: usize,
    pub burn_in: usize,
    /// Also run Monte Carlo where the exact chain is available.
    pub cross_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub seeds: usize,
    pub min_separation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingSection {
    /// Clients are split into this many contiguous, equal-sized groups.
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub seeds: usize,
    /// Groups sampled per round.
    pub batch_size: usize,
    pub r_values: Vec<usize>,
    /// Terminal loss is averaged over this many final evaluations.
    pub terminal_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub horizon: usize,
    pub seeds: usize,
    /// Rounds whose mean error is reported in the checkpoint table.
    pub checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub horizon: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<HyperParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionSection>,
}

impl ExperimentConfig {
    /// Parses TOML text and applies `key.path=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Validation(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name, present: bool| {
            if present {
                v.push(name)
            }
        };
        add("chain", self.chain.is_some());
        add("profile", self.profile.is_some());
        add("exact", self.exact.is_some());
        add("mc", self.mc.is_some());
        add("hyper", self.hyper.is_some());
        add("toy", self.toy.is_some());
        add("synthetic", self.synthetic.is_some());
        add("grouping", self.grouping.is_some());
        add("synth", self.synth.is_some());
        add("mixing", self.mixing.is_some());
        add("estimator", self.estimator.is_some());
        add("evolution", self.evolution.is_some());
        v
    }

    /// Checks that the config fits `command` and fills in the seed
    /// (the `--seed` flag wins over the file).
    pub fn resolve(mut self, command: Command, seed: Option<u64>) -> Result<Self> {
        if let Some(e) = self.experiment {
            if e != command {
                return Err(Error::Validation(format!(
                    "config is for experiment {e}, but command is {command}"
                )));
            }
        }
        self.experiment = Some(command);
        self.seed = seed.or(self.seed);
        if self.seed.is_none() {
            return Err(Error::Validation("no seed given (use --seed or `seed = ...`)".into()));
        }
        let (required, optional) = command.sections();
        let present = self.present();
        for r in required {
            if !present.contains(r) {
                return Err(Error::Validation(format!("{command} needs a [{r}] section")));
            }
        }
        for p in &present {
            if !required.contains(p) && !optional.contains(p) {
                return Err(Error::Validation(format!("section [{p}] is not used by {command}")));
            }
        }
        self.validate_values(command)?;
        Ok(self)
    }

    fn validate_values(&self, command: Command) -> Result<()> {
        if let Some(c) = &self.chain {
            c.configs()?;
        }
        if let Some(h) = &self.hyper {
            h.validate()?;
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if let Some(m) = &self.mc {
            if m.replicas == 0 || m.horizon <= m.burn_in {
                return Err(Error::Validation("mc needs replicas >= 1 and horizon > burn_in".into()));
            }
        }
        if let Some(e) = &self.exact {
            if e.tol.is_nan() || e.tol <= 0.0 || e.max_iters == 0 {
                return Err(Error::Validation(
                    "exact.tol and exact.max_iters must be positive".into(),
                ));
            }
        }
        match command {
            Command::ToyBias => {
                let t = self.toy.as_ref().expect("checked");
                if t.seeds == 0 {
                    return Err(Error::Validation("toy.seeds must be at least 1".into()));
                }
                ChainConfig::new(3, 1, t.min_separation)?;
            }
            Command::SynthDebias => {
                let s = self.synth.as_ref().expect("checked");
                let g = self.grouping.as_ref().expect("checked");
                let n = self.synthetic.as_ref().expect("checked").n_clients;
                if g.n_groups == 0 || !n.is_multiple_of(g.n_groups) {
                    return Err(Error::Validation(format!(
                        "{n} clients cannot be split into {} equal groups",
                        g.n_groups
                    )));
                }
                if s.seeds == 0 || s.terminal_window == 0 || s.r_values.is_empty() {
                    return Err(Error::Validation(
                        "synth.seeds, synth.terminal_window and synth.r_values must be non-empty".into(),
                    ));
                }
                for &r in &s.r_values {
                    ChainConfig::new(g.n_groups, s.batch_size, r)?;
                }
            }
            Command::EstimatorRate => {
                let e = self.estimator.as_ref().expect("checked");
                if e.seeds == 0 || e.horizon == 0 {
                    return Err(Error::Validation(
                        "estimator.seeds and estimator.horizon must be positive".into(),
                    ));
                }
                if let Some(&c) = e.checkpoints.iter().find(|&&c| c >= e.horizon) {
                    return Err(Error::Validation(format!(
                        "checkpoint {c} is beyond the horizon {}",
                        e.horizon
                    )));
                }
            }
            Command::Evolution => {
                if self.evolution.as_ref().expect("checked").replicas == 0 {
                    return Err(Error::Validation("evolution.replicas must be positive".into()));
                }
            }
            Command::PiVsR | Command::Mixing => {}
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }
}

/// Sets `a.b.c = value` in `table`; `value` is read as a TOML value and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Validation(format!("bad override key {key:?}")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Validation(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
