//! Flat `key = value` experiment files.

use std::fmt::Write as _;
use std::path::Path;

use firmsim::commit::ExecMode;
use firmsim::policy::PolicyRegime;
use firmsim::resources::Discipline;
use firmsim::workload::{ArrivalProcess, SourceMode};
use firmsim::{SimConfig, SimDuration, SimError};

use crate::HarnessError;

/// Every recognised key, in the order `render` writes them.
pub const KEYS: &[&str] = &[
    "NumSites",
    "Dbsize",
    "FilesPerSite",
    "Replication",
    "ArrivalRate",
    "Slackfactor",
    "DistDegree",
    "CohortSize",
    "WriteProb",
    "PageCPU",
    "PageDisk",
    "MsgCpu",
    "TerminalThink",
    "ArrivalProcess",
    "SourceMode",
    "NumTerminals",
    "IncludeCommitCost",
    "Discipline",
    "ExecMode",
    "PolicyRegime",
    "ScanPeriod",
    "DonationFraction",
    "GrantMargin",
    "MaxGrantsPerTxn",
    "AgentThreshold",
    "AgentDeltaSF",
    "AgentBudget",
    "VoluntaryAbortProb",
    "Seed",
    "SimDuration",
    "Replications",
    "WarmupFraction",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub replications: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { sim: SimConfig::default(), replications: 1 }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SimError> {
    value.parse().map_err(|_| SimError::config(key, format!("cannot parse `{value}`")))
}

/// `250ms`, `1.5s`, `800us`. A unit is required.
pub fn parse_duration(key: &str, value: &str) -> Result<SimDuration, SimError> {
    let (digits, scale) = if let Some(v) = value.strip_suffix("us") {
        (v, 1.0)
    } else if let Some(v) = value.strip_suffix("ms") {
        (v, 1e3)
    } else if let Some(v) = value.strip_suffix('s') {
        (v, 1e6)
    } else {
        return Err(SimError::config(key, format!("`{value}` needs a unit (us, ms or s)")));
    };
    let x: f64 = num(key, digits.trim())?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(SimError::config(key, "must be a non-negative duration"));
    }
    Ok(SimDuration::from_micros((x * scale).round() as u64))
}

fn fmt_duration(d: SimDuration) -> String {
    let us = d.as_micros();
    if us % 1_000_000 == 0 {
        format!("{}s", us / 1_000_000)
    } else if us % 1000 == 0 {
        format!("{}ms", us / 1000)
    } else {
        format!("{us}us")
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, SimError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(SimError::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T, SimError> {
    options.iter().find(|(name, _)| name.eq_ignore_ascii_case(value)).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        SimError::config(key, format!("`{value}` is not one of {}", names.join("|")))
    })
}

const PROCESSES: &[(&str, ArrivalProcess)] =
    &[("Exponential", ArrivalProcess::Exponential), ("PoissonBatch", ArrivalProcess::PoissonBatch)];
const MODES: &[(&str, SourceMode)] = &[("Open", SourceMode::Open), ("Closed", SourceMode::Closed)];
const DISCIPLINES: &[(&str, Discipline)] = &[("FCFS", Discipline::Fcfs), ("EDF", Discipline::Edf)];
const EXEC_MODES: &[(&str, ExecMode)] = &[("Parallel", ExecMode::Parallel), ("Sequential", ExecMode::Sequential)];
const REGIMES: &[(&str, PolicyRegime)] = &[
    ("Static", PolicyRegime::Static),
    ("DynamicRedistribution", PolicyRegime::DynamicRedistribution),
    ("IntelligentAgent", PolicyRegime::IntelligentAgent),
];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|(_, x)| *x == v).map(|(n, _)| *n).expect("listed")
}

impl ExperimentConfig {
    /// Assigns one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        let value = value.trim();
        let s = &mut self.sim;
        let w = &mut s.workload;
        let p = &mut s.policy;
        match key {
            "NumSites" => s.num_sites = num(key, value)?,
            "Dbsize" => s.dbsize = num(key, value)?,
            "FilesPerSite" => s.files_per_site = num(key, value)?,
            "Replication" => s.replication = num(key, value)?,
            "ArrivalRate" => w.arrival_rate = num(key, value)?,
            "Slackfactor" => w.slack_factor = num(key, value)?,
            "DistDegree" => w.dist_degree = num(key, value)?,
            "CohortSize" => w.cohort_size = num(key, value)?,
            "WriteProb" => w.write_prob = num(key, value)?,
            "PageCPU" => s.timing.page_cpu = parse_duration(key, value)?,
            "PageDisk" => s.timing.page_disk = parse_duration(key, value)?,
            "MsgCpu" => s.timing.msg_cpu = parse_duration(key, value)?,
            "TerminalThink" => w.terminal_think_max = parse_duration(key, value)?,
            "ArrivalProcess" => w.arrival_process = choice(key, value, PROCESSES)?,
            "SourceMode" => w.mode = choice(key, value, MODES)?,
            "NumTerminals" => w.num_terminals = num(key, value)?,
            "IncludeCommitCost" => s.include_commit_cost = parse_bool(key, value)?,
            "Discipline" => s.discipline = choice(key, value, DISCIPLINES)?,
            "ExecMode" => s.exec_mode = choice(key, value, EXEC_MODES)?,
            "PolicyRegime" => p.regime = choice(key, value, REGIMES)?,
            "ScanPeriod" => p.scan_period = parse_duration(key, value)?,
            "DonationFraction" => p.donation_fraction = num(key, value)?,
            "GrantMargin" => p.grant_margin = parse_duration(key, value)?,
            "MaxGrantsPerTxn" => p.max_grants_per_txn = num(key, value)?,
            "AgentThreshold" => p.agent_threshold = num(key, value)?,
            "AgentDeltaSF" => p.agent_delta_sf = num(key, value)?,
            "AgentBudget" => p.agent_budget = num(key, value)?,
            "VoluntaryAbortProb" => s.voluntary_abort_prob = num(key, value)?,
            "Seed" => s.seed = num(key, value)?,
            "SimDuration" => s.sim_duration = parse_duration(key, value)?,
            "Replications" => self.replications = num(key, value)?,
            "WarmupFraction" => s.warmup_fraction = num(key, value)?,
            _ => return Err(SimError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.sim;
        let w = &s.workload;
        let p = &s.policy;
        Some(match key {
            "NumSites" => s.num_sites.to_string(),
            "Dbsize" => s.dbsize.to_string(),
            "FilesPerSite" => s.files_per_site.to_string(),
            "Replication" => s.replication.to_string(),
            "ArrivalRate" => w.arrival_rate.to_string(),
            "Slackfactor" => w.slack_factor.to_string(),
            "DistDegree" => w.dist_degree.to_string(),
            "CohortSize" => w.cohort_size.to_string(),
            "WriteProb" => w.write_prob.to_string(),
            "PageCPU" => fmt_duration(s.timing.page_cpu),
            "PageDisk" => fmt_duration(s.timing.page_disk),
            "MsgCpu" => fmt_duration(s.timing.msg_cpu),
            "TerminalThink" => fmt_duration(w.terminal_think_max),
            "ArrivalProcess" => name_of(PROCESSES, w.arrival_process).into(),
            "SourceMode" => name_of(MODES, w.mode).into(),
            "NumTerminals" => w.num_terminals.to_string(),
            "IncludeCommitCost" => s.include_commit_cost.to_string(),
            "Discipline" => name_of(DISCIPLINES, s.discipline).into(),
            "ExecMode" => name_of(EXEC_MODES, s.exec_mode).into(),
            "PolicyRegime" => name_of(REGIMES, p.regime).into(),
            "ScanPeriod" => fmt_duration(p.scan_period),
            "DonationFraction" => p.donation_fraction.to_string(),
            "GrantMargin" => fmt_duration(p.grant_margin),
            "MaxGrantsPerTxn" => p.max_grants_per_txn.to_string(),
            "AgentThreshold" => p.agent_threshold.to_string(),
            "AgentDeltaSF" => p.agent_delta_sf.to_string(),
            "AgentBudget" => p.agent_budget.to_string(),
            "VoluntaryAbortProb" => s.voluntary_abort_prob.to_string(),
            "Seed" => s.seed.to_string(),
            "SimDuration" => fmt_duration(s.sim_duration),
            "Replications" => self.replications.to_string(),
            "WarmupFraction" => s.warmup_fraction.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.replications == 0 {
            return Err(SimError::config("Replications", "must be at least 1"));
        }
        self.sim.validate()
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::config(line, format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self::parse(&text)?)
    }

    /// Every key with its current value; `parse(render())` round-trips.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }
}
