//! Single runs, replicated runs and full-factorial sweeps.

use rayon::prelude::*;

use firmsim::{simulate, RunStats, SimError};

use crate::config::ExperimentConfig;

/// One setting of an axis: a label token for output plus the keys it assigns.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub label: String,
    pub assignments: Vec<(String, String)>,
}

impl Level {
    pub fn single(key: &str, value: &str) -> Self {
        Level { label: format!("{key}={value}"), assignments: vec![(key.into(), value.into())] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Axis {
    pub fn new(key: &str, values: &[&str]) -> Self {
        Axis { name: key.into(), levels: values.iter().map(|v| Level::single(key, v)).collect() }
    }

    /// Parses a `KEY=v1,v2,...` command-line argument.
    pub fn parse(arg: &str) -> Result<Self, SimError> {
        let (key, values) =
            arg.split_once('=').ok_or_else(|| SimError::config(arg, "expected KEY=v1,v2,..."))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(SimError::config(key, "no values to sweep"));
        }
        Ok(Axis::new(key.trim(), &values))
    }
}

/// Axes crossed as a full factorial; the last axis varies fastest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        SweepSpec { axes }
    }

    /// Every combination, as (label, configured experiment).
    pub fn expand(&self, base: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>, SimError> {
        let mut points = vec![(Vec::<String>::new(), base.clone())];
        for axis in &self.axes {
            if axis.levels.is_empty() {
                return Err(SimError::config(&axis.name, "no values to sweep"));
            }
            let mut next = Vec::with_capacity(points.len() * axis.levels.len());
            for (labels, cfg) in &points {
                for level in &axis.levels {
                    let mut c = cfg.clone();
                    for (k, v) in &level.assignments {
                        c.set(k, v)?;
                    }
                    let mut l = labels.clone();
                    l.push(level.label.clone());
                    next.push((l, c));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(labels, cfg)| {
                cfg.validate()?;
                Ok((labels.join(";"), cfg))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetailRow {
    pub param_values: String,
    pub seed: u64,
    pub stats: RunStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub param_values: String,
    pub seed_count: u64,
    pub stats: RunStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub preset: String,
    pub detail: Vec<DetailRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn aggregate_for(&self, param_values: &str) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.param_values == param_values)
    }

    /// Detail rows of one combination, in seed order.
    pub fn details_for<'a>(&'a self, param_values: &'a str) -> impl Iterator<Item = &'a DetailRow> + 'a {
        self.detail.iter().filter(move |d| d.param_values == param_values)
    }
}

/// One deterministic simulation of `cfg` at its own seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunStats, SimError> {
    cfg.validate()?;
    let out = simulate(&cfg.sim)?;
    out.stats.check_conservation()?;
    Ok(out.stats)
}

/// Runs every combination for `replications` paired seeds
/// (`Seed`, `Seed + 1`, ...). Replications run in parallel.
pub fn sweep(
    preset: &str,
    base: &ExperimentConfig,
    spec: &SweepSpec,
    replications: u32,
) -> Result<SweepResult, SimError> {
    if replications == 0 {
        return Err(SimError::config("Replications", "must be at least 1"));
    }
    let points = spec.expand(base)?;
    let jobs: Vec<(usize, u64, ExperimentConfig)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, (_, cfg))| {
            (0..replications as u64).map(move |r| {
                let mut c = cfg.clone();
                c.sim.seed = cfg.sim.seed + r;
                (i, c.sim.seed, c)
            })
        })
        .collect();
    let runs: Vec<Result<RunStats, SimError>> = jobs.par_iter().map(|(_, _, cfg)| run_experiment(cfg)).collect();

    let mut detail = Vec::with_capacity(jobs.len());
    for ((i, seed, _), stats) in jobs.iter().zip(runs) {
        detail.push(DetailRow { param_values: points[*i].0.clone(), seed: *seed, stats: stats? });
    }
    let mut aggregate = Vec::with_capacity(points.len());
    for (label, cfg) in &points {
        let mut merged = RunStats::new(cfg.sim.fingerprint(), cfg.sim.num_sites);
        let mut n = 0;
        for d in detail.iter().filter(|d| &d.param_values == label) {
            merged = merged.merge(&d.stats)?;
            n += 1;
        }
        aggregate.push(AggregateRow { param_values: label.clone(), seed_count: n, stats: merged });
    }
    Ok(SweepResult { preset: preset.into(), detail, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmsim::SimDuration;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.sim.sim_duration = SimDuration::from_secs(5);
        c.sim.num_sites = 4;
        c
    }

    #[test]
    fn three_rates_one_rep_shape() {
        let spec = SweepSpec::new(vec![Axis::parse("ArrivalRate=6,7,8").unwrap()]);
        let res = sweep("custom", &quick(), &spec, 1).unwrap();
        assert_eq!(res.detail.len(), 3);
        assert_eq!(res.aggregate.len(), 3);
        assert_eq!(res.aggregate[0].param_values, "ArrivalRate=6");
        assert_eq!(res.detail[2].param_values, "ArrivalRate=8");
    }

    #[test]
    fn factorial_order_and_paired_seeds() {
        let spec = SweepSpec::new(vec![Axis::new("ExecMode", &["Parallel", "Sequential"]), Axis::new("Slackfactor", &["2", "4"])]);
        let res = sweep("custom", &quick(), &spec, 3).unwrap();
        assert_eq!(res.aggregate.len(), 4);
        assert_eq!(res.detail.len(), 12);
        assert_eq!(res.aggregate[1].param_values, "ExecMode=Parallel;Slackfactor=4");
        for a in &res.aggregate {
            let seeds: Vec<u64> = res.details_for(&a.param_values).map(|d| d.seed).collect();
            assert_eq!(seeds, vec![42, 43, 44]);
            assert_eq!(a.seed_count, 3);
            let sum: u64 = res.details_for(&a.param_values).map(|d| d.stats.generated).sum();
            assert_eq!(a.stats.generated, sum);
        }
        // Same seed, different execution mode: identical workload.
        let g = |label: &str| res.details_for(label).map(|d| d.stats.generated).collect::<Vec<_>>();
        assert_eq!(g("ExecMode=Parallel;Slackfactor=4"), g("ExecMode=Sequential;Slackfactor=4"));
    }

    #[test]
    fn unknown_sweep_key_fails_validation() {
        let spec = SweepSpec::new(vec![Axis::new("Bogus", &["1"])]);
        assert!(sweep("custom", &quick(), &spec, 1).unwrap_err().is_config());
        assert!(Axis::parse("ArrivalRate").is_err());
        assert!(Axis::parse("ArrivalRate=").is_err());
    }

    #[test]
    fn run_is_repeatable() {
        assert_eq!(run_experiment(&quick()).unwrap(), run_experiment(&quick()).unwrap());
    }
}
