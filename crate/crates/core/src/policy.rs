//! Firm-deadline enforcement and slack management.
//!
//! Slack is the deadline minus the current time minus the work still needed
//! to reach the commit point. Three regimes:
//!
//! * `Static` never moves a deadline.
//! * `DynamicRedistribution` pools a fraction of the positive slack seen in a
//!   scan and spends it extending the deadlines of transactions with negative
//!   slack, cheapest rescue first. Donors keep their deadlines; the pool is
//!   accounting only.
//! * `IntelligentAgent` watches for transactions that are narrowly predicted
//!   to fail and recomputes their deadline with a boosted slack factor,
//!   within a global budget.

use crate::engine::{SimDuration, SimTime};
use crate::error::SimError;
use crate::workload::{Timing, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PolicyRegime {
    #[default]
    Static,
    DynamicRedistribution,
    IntelligentAgent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackPolicyConfig {
    pub regime: PolicyRegime,
    pub scan_period: SimDuration,
    /// Share of positive slack pooled per scan.
    pub donation_fraction: f64,
    /// Added on top of a deficit when granting.
    pub grant_margin: SimDuration,
    pub max_grants_per_txn: u32,
    /// Rescue window as a fraction of resource time.
    pub agent_threshold: f64,
    pub agent_delta_sf: f64,
    /// Fraction of generated transactions the agent may extend.
    pub agent_budget: f64,
}

impl Default for SlackPolicyConfig {
    fn default() -> Self {
        SlackPolicyConfig {
            regime: PolicyRegime::Static,
            scan_period: SimDuration::from_millis(50),
            donation_fraction: 0.5,
            grant_margin: SimDuration::from_millis(10),
            max_grants_per_txn: 1,
            agent_threshold: 0.25,
            agent_delta_sf: 1.0,
            agent_budget: 0.10,
        }
    }
}

impl SlackPolicyConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (key, v) in [
            ("DonationFraction", self.donation_fraction),
            ("AgentThreshold", self.agent_threshold),
            ("AgentBudget", self.agent_budget),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::config(key, "must be in [0, 1]"));
            }
        }
        if self.scan_period.is_zero() {
            return Err(SimError::config("ScanPeriod", "must be positive"));
        }
        if !(self.agent_delta_sf >= 0.0 && self.agent_delta_sf.is_finite()) {
            return Err(SimError::config("AgentDeltaSF", "must be non-negative"));
        }
        Ok(())
    }
}

/// What the policy sees of one active transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlackCandidate {
    pub id: TxnId,
    pub arrival: SimTime,
    pub resource_time: SimDuration,
    pub deadline: SimTime,
    /// Signed slack in microseconds.
    pub slack: i64,
    pub grants: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grant {
    pub txn: TxnId,
    pub new_deadline: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanAudit {
    pub at: SimTime,
    pub pool: u64,
    pub granted: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SlackLedger {
    pub scans: Vec<ScanAudit>,
    pub redistribution_grants: u64,
    pub agent_grants: u64,
    pub positive_seen: u64,
    pub negative_seen: u64,
}

impl SlackLedger {
    pub fn total_grants(&self) -> u64 {
        self.redistribution_grants + self.agent_grants
    }

    /// Every scan granted no more than its pool.
    pub fn conserves_pool(&self) -> bool {
        self.scans.iter().all(|s| s.granted <= s.pool)
    }
}

/// Work left before the commit point: unfinished pages plus the forced
/// writes still on the critical path (outstanding prepared records and the
/// master's commit record).
pub fn remaining_work(pages_left: u64, forced_writes_left: u64, timing: &Timing) -> SimDuration {
    timing.per_page().times(pages_left) + timing.page_disk.times(forced_writes_left)
}

pub fn compute_slack(deadline: SimTime, now: SimTime, remaining: SimDuration) -> i64 {
    deadline.signed_since(now) - remaining.as_micros() as i64
}

fn deficit(c: &SlackCandidate) -> u64 {
    c.slack.unsigned_abs()
}

/// One redistribution scan. Returns the deadline extensions granted.
pub fn redistribute_slack(
    active: &[SlackCandidate],
    cfg: &SlackPolicyConfig,
    ledger: &mut SlackLedger,
    now: SimTime,
) -> Vec<Grant> {
    let surplus: u64 = active.iter().filter(|c| c.slack > 0).map(|c| c.slack as u64).sum();
    let pool_start = (surplus as f64 * cfg.donation_fraction).floor() as u64;
    let mut pool = pool_start;

    let mut needy: Vec<&SlackCandidate> = active.iter().filter(|c| c.slack < 0).collect();
    ledger.positive_seen += active.iter().filter(|c| c.slack > 0).count() as u64;
    ledger.negative_seen += needy.len() as u64;
    needy.sort_by_key(|c| (deficit(c), c.id));

    let mut grants = Vec::new();
    for c in needy {
        if c.grants >= cfg.max_grants_per_txn {
            continue;
        }
        let extension = deficit(c) + cfg.grant_margin.as_micros();
        if pool >= extension {
            pool -= extension;
            grants.push(Grant {
                txn: c.id,
                new_deadline: c.deadline + SimDuration::from_micros(extension),
            });
        }
    }
    ledger.redistribution_grants += grants.len() as u64;
    ledger.scans.push(ScanAudit {
        at: now,
        pool: pool_start,
        granted: pool_start - pool,
    });
    grants
}

/// One agent scan. `generated` is the number of transactions generated so
/// far, which sizes the grant budget.
pub fn agent_scan(
    active: &[SlackCandidate],
    cfg: &SlackPolicyConfig,
    slack_factor: f64,
    ledger: &mut SlackLedger,
    generated: u64,
) -> Vec<Grant> {
    let budget = (cfg.agent_budget * generated as f64).floor() as u64;
    let mut at_risk: Vec<&SlackCandidate> = active
        .iter()
        .filter(|c| {
            let window = c.resource_time.mul_f64(cfg.agent_threshold).as_micros() as i64;
            c.slack < 0 && c.slack >= -window && c.grants < cfg.max_grants_per_txn
        })
        .collect();
    at_risk.sort_by_key(|c| (deficit(c), c.id));

    let mut grants = Vec::new();
    for c in at_risk {
        if ledger.agent_grants >= budget {
            break;
        }
        let boosted = c.arrival + c.resource_time.mul_f64(slack_factor + cfg.agent_delta_sf);
        if boosted > c.deadline {
            ledger.agent_grants += 1;
            grants.push(Grant { txn: c.id, new_deadline: boosted });
        }
    }
    grants
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeadlineVerdict {
    Keep,
    Kill,
}

/// Decision at deadline expiry: a transaction survives only if its master's
/// commit record was forced at or before the deadline.
pub fn enforce_deadline(commit_forced_at: Option<SimTime>, deadline: SimTime) -> DeadlineVerdict {
    match commit_forced_at {
        Some(t) if t <= deadline => DeadlineVerdict::Keep,
        _ => DeadlineVerdict::Kill,
    }
}
