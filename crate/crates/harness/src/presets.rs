//! Named experiment presets.

use firmsim::SimDuration;

use crate::config::ExperimentConfig;
use crate::sweep::{Axis, Level, SweepSpec};

pub const PRESET_NAMES: [&str; 7] = ["base", "fig1", "fig2", "fig3", "fig4", "fig5", "dist-compare"];

/// Aggregate (system-wide) arrival rates compared in `fig1`.
pub const FIG1_AGGREGATE_RATES: [u32; 6] = [4, 8, 12, 16, 20, 24];

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub base: ExperimentConfig,
    pub spec: SweepSpec,
    /// Numeric parameter for the x axis of plots, if any.
    pub plot_x: Option<&'static str>,
}

impl Preset {
    pub fn replications(&self) -> u32 {
        self.base.replications
    }
}

/// Default model: 8 sites, 6 transactions/s/site, EDF, parallel cohorts, static slack.
pub fn base_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.sim.sim_duration = SimDuration::from_secs(100);
    c.sim.seed = 42;
    c.replications = 1;
    c
}

fn experiment_config() -> ExperimentConfig {
    let mut c = base_config();
    c.sim.sim_duration = SimDuration::from_secs(200);
    c.replications = 20;
    c
}

/// One level of the `fig1` system axis at a given aggregate rate.
pub fn fig1_level(centralized: bool, aggregate_rate: u32) -> Level {
    let (system, sites) = if centralized { ("Centralized", 1) } else { ("Distributed", 8) };
    let per_site = aggregate_rate as f64 / sites as f64;
    Level {
        label: format!("System={system};AggregateRate={aggregate_rate}"),
        assignments: vec![("NumSites".into(), sites.to_string()), ("ArrivalRate".into(), per_site.to_string())],
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let p = match name {
        "base" => Preset {
            name: "base",
            about: "single run of the base model",
            base: base_config(),
            spec: SweepSpec::default(),
            plot_x: None,
        },
        "fig1" => Preset {
            name: "fig1",
            about: "one site against eight sites at equal system-wide arrival rate",
            base: experiment_config(),
            spec: SweepSpec::new(vec![Axis {
                name: "System".into(),
                levels: [true, false]
                    .into_iter()
                    .flat_map(|c| FIG1_AGGREGATE_RATES.iter().map(move |&r| fig1_level(c, r)))
                    .collect(),
            }]),
            plot_x: Some("AggregateRate"),
        },
        "fig2" => Preset {
            name: "fig2",
            about: "parallel against sequential cohort execution",
            base: experiment_config(),
            spec: SweepSpec::new(vec![
                Axis::new("ExecMode", &["Parallel", "Sequential"]),
                Axis::new("ArrivalRate", &["1", "1.5", "2", "2.5", "3"]),
            ]),
            plot_x: Some("ArrivalRate"),
        },
        "fig3" => Preset {
            name: "fig3",
            about: "slack factor against throughput at moderate and overloaded rates",
            base: experiment_config(),
            spec: SweepSpec::new(vec![
                Axis::new("ArrivalRate", &["2", "6", "12"]),
                Axis::new("Slackfactor", &["1", "2", "4", "8"]),
            ]),
            plot_x: Some("Slackfactor"),
        },
        "fig4" => Preset {
            name: "fig4",
            about: "intelligent agent against static deadlines",
            base: experiment_config(),
            spec: SweepSpec::new(vec![Axis::new("PolicyRegime", &["Static", "IntelligentAgent"])]),
            plot_x: None,
        },
        "fig5" => Preset {
            name: "fig5",
            about: "dynamic slack redistribution against static deadlines",
            base: experiment_config(),
            spec: SweepSpec::new(vec![Axis::new("PolicyRegime", &["Static", "DynamicRedistribution"])]),
            plot_x: None,
        },
        "dist-compare" => Preset {
            name: "dist-compare",
            about: "exponential against batched Poisson arrivals at 6/s",
            base: experiment_config(),
            spec: SweepSpec::new(vec![Axis::new("ArrivalProcess", &["Exponential", "PoissonBatch"])]),
            plot_x: None,
        },
        _ => return None,
    };
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_preset_exists_and_expands() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            let points = p.spec.expand(&p.base).unwrap();
            assert!(!points.is_empty());
        }
        assert!(preset("fig6").is_none());
    }

    #[test]
    fn base_matches_table_values() {
        let b = preset("base").unwrap().base;
        assert_eq!(b.sim.num_sites, 8);
        assert_eq!(b.sim.workload.arrival_rate, 6.0);
        assert_eq!(b.sim.workload.cohort_size, 6);
        assert_eq!(b.sim.sim_duration, SimDuration::from_secs(100));
        assert_eq!(b.sim.seed, 42);
    }

    #[test]
    fn fig4_has_forty_runs() {
        let p = preset("fig4").unwrap();
        assert_eq!(p.spec.expand(&p.base).unwrap().len() * p.replications() as usize, 40);
    }

    #[test]
    fn fig1_keeps_system_rate_equal() {
        let p = preset("fig1").unwrap();
        for (label, cfg) in p.spec.expand(&p.base).unwrap() {
            let total = cfg.sim.workload.arrival_rate * cfg.sim.num_sites as f64;
            let agg: f64 = label.rsplit('=').next().unwrap().parse().unwrap();
            assert_eq!(total, agg, "{label}");
        }
    }
}
