//! Statistics sink and the miss-percentage metric.

use crate::engine::SimDuration;
use crate::error::SimError;
use crate::topology::SiteId;

/// Upper edge (inclusive) of the normal-load band, in percent.
pub const NORMAL_LOAD_MAX_PERCENT: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadClass {
    Normal,
    Heavy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MissPercent {
    pub percent: f64,
    pub class: LoadClass,
}

impl MissPercent {
    pub fn from_counts(missed: u64, finished: u64) -> Option<MissPercent> {
        if finished == 0 {
            return None;
        }
        let percent = 100.0 * missed as f64 / finished as f64;
        let class = if percent <= NORMAL_LOAD_MAX_PERCENT { LoadClass::Normal } else { LoadClass::Heavy };
        Some(MissPercent { percent, class })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteStats {
    pub generated: u64,
    pub committed_in_time: u64,
    pub missed: u64,
}

/// Outcome counters of one run (or a merge of runs with the same config).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunStats {
    pub fingerprint: u64,
    pub runs: u64,
    pub generated: u64,
    pub committed_in_time: u64,
    pub missed: u64,
    pub in_flight: u64,
    pub response_sum_us: u128,
    pub response_sumsq_us: u128,
    /// Response times of in-time commits, ascending.
    pub response_samples_us: Vec<u64>,
    pub per_site: Vec<SiteStats>,
    pub grants_issued: u64,
    pub wasted_service_us: u64,
    /// Length of the measured window.
    pub sim_duration_us: u64,
    pub messages: u64,
    pub forced_writes: u64,
}

impl RunStats {
    pub fn new(fingerprint: u64, num_sites: u32) -> Self {
        RunStats {
            fingerprint,
            runs: 0,
            generated: 0,
            committed_in_time: 0,
            missed: 0,
            in_flight: 0,
            response_sum_us: 0,
            response_sumsq_us: 0,
            response_samples_us: Vec::new(),
            per_site: vec![SiteStats::default(); num_sites as usize],
            grants_issued: 0,
            wasted_service_us: 0,
            sim_duration_us: 0,
            messages: 0,
            forced_writes: 0,
        }
    }

    pub fn record_generated(&mut self, site: SiteId) {
        self.generated += 1;
        self.in_flight += 1;
        self.per_site[site.index()].generated += 1;
    }

    pub fn record_commit(&mut self, site: SiteId, response: SimDuration) {
        let us = response.as_micros();
        self.committed_in_time += 1;
        self.in_flight -= 1;
        self.per_site[site.index()].committed_in_time += 1;
        self.response_sum_us += us as u128;
        self.response_sumsq_us += (us as u128) * (us as u128);
        let pos = self.response_samples_us.partition_point(|&x| x <= us);
        self.response_samples_us.insert(pos, us);
    }

    pub fn record_miss(&mut self, site: SiteId) {
        self.missed += 1;
        self.in_flight -= 1;
        self.per_site[site.index()].missed += 1;
    }

    pub fn finished(&self) -> u64 {
        self.committed_in_time + self.missed
    }

    /// Missed share of finished transactions; `None` when nothing finished.
    pub fn miss_percent(&self) -> Option<MissPercent> {
        MissPercent::from_counts(self.missed, self.finished())
    }

    /// In-time commits per second of measured time.
    pub fn throughput(&self) -> f64 {
        if self.sim_duration_us == 0 {
            return 0.0;
        }
        self.committed_in_time as f64 / (self.sim_duration_us as f64 / 1e6)
    }

    pub fn mean_response_ms(&self) -> Option<f64> {
        (self.committed_in_time > 0).then(|| self.response_sum_us as f64 / self.committed_in_time as f64 / 1e3)
    }

    pub fn response_variance_ms2(&self) -> Option<f64> {
        let n = self.committed_in_time as f64;
        (self.committed_in_time > 1).then(|| {
            let mean = self.response_sum_us as f64 / n;
            let var = (self.response_sumsq_us as f64 - n * mean * mean) / (n - 1.0);
            var / 1e6
        })
    }

    /// Nearest-rank 95th percentile of in-time response times.
    pub fn p95_response_ms(&self) -> Option<f64> {
        let n = self.response_samples_us.len();
        if n == 0 {
            return None;
        }
        let rank = ((0.95 * n as f64).ceil() as usize).max(1);
        Some(self.response_samples_us[rank - 1] as f64 / 1e3)
    }

    pub fn check_conservation(&self) -> Result<(), SimError> {
        if self.generated != self.committed_in_time + self.missed + self.in_flight {
            return Err(SimError::Invariant(format!(
                "conservation: generated {} != committed {} + missed {} + in-flight {}",
                self.generated, self.committed_in_time, self.missed, self.in_flight
            )));
        }
        let site_sum: u64 = self.per_site.iter().map(|s| s.generated).sum();
        if site_sum != self.generated {
            return Err(SimError::Invariant("per-site generated counts do not add up".into()));
        }
        Ok(())
    }

    /// Counter-wise sum of two runs of the same configuration.
    pub fn merge(&self, other: &RunStats) -> Result<RunStats, SimError> {
        if self.fingerprint != other.fingerprint || self.per_site.len() != other.per_site.len() {
            return Err(SimError::InvalidArgument(format!(
                "cannot merge stats of configs {:016x} and {:016x}",
                self.fingerprint, other.fingerprint
            )));
        }
        let mut samples = Vec::with_capacity(self.response_samples_us.len() + other.response_samples_us.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.response_samples_us, &other.response_samples_us);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] <= b[j]) {
                samples.push(a[i]);
                i += 1;
            } else {
                samples.push(b[j]);
                j += 1;
            }
        }
        Ok(RunStats {
            fingerprint: self.fingerprint,
            runs: self.runs + other.runs,
            generated: self.generated + other.generated,
            committed_in_time: self.committed_in_time + other.committed_in_time,
            missed: self.missed + other.missed,
            in_flight: self.in_flight + other.in_flight,
            response_sum_us: self.response_sum_us + other.response_sum_us,
            response_sumsq_us: self.response_sumsq_us + other.response_sumsq_us,
            response_samples_us: samples,
            per_site: self
                .per_site
                .iter()
                .zip(&other.per_site)
                .map(|(x, y)| SiteStats {
                    generated: x.generated + y.generated,
                    committed_in_time: x.committed_in_time + y.committed_in_time,
                    missed: x.missed + y.missed,
                })
                .collect(),
            grants_issued: self.grants_issued + other.grants_issued,
            wasted_service_us: self.wasted_service_us + other.wasted_service_us,
            sim_duration_us: self.sim_duration_us + other.sim_duration_us,
            messages: self.messages + other.messages,
            forced_writes: self.forced_writes + other.forced_writes,
        })
    }
}
