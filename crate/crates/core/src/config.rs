//! Full parameter set of one simulation run.

use crate::commit::ExecMode;
use crate::engine::{SimDuration, SimTime};
use crate::error::SimError;
use crate::policy::SlackPolicyConfig;
use crate::resources::Discipline;
use crate::workload::{Timing, WorkloadConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub num_sites: u32,
    pub dbsize: u32,
    pub files_per_site: u32,
    pub replication: u32,
    pub workload: WorkloadConfig,
    pub timing: Timing,
    pub include_commit_cost: bool,
    pub discipline: Discipline,
    pub exec_mode: ExecMode,
    pub policy: SlackPolicyConfig,
    /// Chance that a cohort votes NO; exercises the veto path.
    pub voluntary_abort_prob: f64,
    pub seed: u64,
    pub sim_duration: SimDuration,
    /// Leading share of the run whose arrivals are not measured.
    pub warmup_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_sites: 8,
            dbsize: 2400,
            files_per_site: 4,
            replication: 1,
            workload: WorkloadConfig::default(),
            timing: Timing::default(),
            include_commit_cost: true,
            discipline: Discipline::Edf,
            exec_mode: ExecMode::Parallel,
            policy: SlackPolicyConfig::default(),
            voluntary_abort_prob: 0.0,
            seed: 42,
            sim_duration: SimDuration::from_secs(200),
            warmup_fraction: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_sites == 0 {
            return Err(SimError::config("NumSites", "must be at least 1"));
        }
        if self.files_per_site == 0 {
            return Err(SimError::config("FilesPerSite", "must be at least 1"));
        }
        if self.dbsize < self.num_sites * self.files_per_site {
            return Err(SimError::config("Dbsize", "must cover at least one page per file"));
        }
        if self.replication == 0 || (self.num_sites > 1 && self.replication > self.num_sites) {
            return Err(SimError::config("Replication", format!("must be in [1, {}]", self.num_sites)));
        }
        if self.workload.dist_degree > self.num_sites * self.files_per_site {
            return Err(SimError::config("DistDegree", "exceeds the number of files"));
        }
        self.workload.validate()?;
        self.policy.validate()?;
        if self.timing.page_cpu.is_zero() {
            return Err(SimError::config("PageCPU", "must be positive"));
        }
        if self.timing.page_disk.is_zero() {
            return Err(SimError::config("PageDisk", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.voluntary_abort_prob) {
            return Err(SimError::config("VoluntaryAbortProb", "must be in [0, 1]"));
        }
        if self.sim_duration.is_zero() {
            return Err(SimError::config("SimDuration", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::config("WarmupFraction", "must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::ZERO + self.sim_duration
    }

    pub fn warmup_end(&self) -> SimTime {
        SimTime::ZERO + self.sim_duration.mul_f64(self.warmup_fraction)
    }

    /// Stable hash of every parameter except the seed.
    pub fn fingerprint(&self) -> u64 {
        let mut other = self.clone();
        other.seed = 0;
        fnv1a(format!("{other:?}").as_bytes())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn fingerprint_ignores_seed_only() {
        let a = SimConfig::default();
        let b = SimConfig { seed: 7, ..a.clone() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = SimConfig { num_sites: 4, ..a.clone() };
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn bad_values_name_their_key() {
        let mut c = SimConfig::default();
        c.workload.write_prob = 2.0;
        match c.validate().unwrap_err() {
            SimError::Config { key, .. } => assert_eq!(key, "WriteProb"),
            e => panic!("{e}"),
        }
        let c = SimConfig { replication: 9, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
