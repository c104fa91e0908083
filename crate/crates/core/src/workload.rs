//! Transaction source: arrivals, master/cohort structure, resource-time
//! estimate and deadline assignment.

use crate::commit::commit_cost;
use crate::engine::{RngStream, SimDuration, SimTime};
use crate::error::SimError;
use crate::topology::{cohort_sites, select_execution_sites, FileMap, PageId, SiteId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalProcess {
    /// Exponential inter-arrival gaps.
    Exponential,
    /// A Poisson-sized batch arriving together at every whole second.
    PoissonBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceMode {
    Open,
    /// Fixed terminal population with think time between submissions.
    Closed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    /// Transactions per second per site.
    pub arrival_rate: f64,
    pub slack_factor: f64,
    /// Files accessed per transaction.
    pub dist_degree: u32,
    /// Mean pages per cohort.
    pub cohort_size: u32,
    pub write_prob: f64,
    pub terminal_think_max: SimDuration,
    pub arrival_process: ArrivalProcess,
    pub mode: SourceMode,
    /// Terminals per site in closed mode.
    pub num_terminals: u32,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            arrival_rate: 6.0,
            slack_factor: 4.0,
            dist_degree: 3,
            cohort_size: 6,
            write_prob: 0.5,
            terminal_think_max: SimDuration::from_millis(500),
            arrival_process: ArrivalProcess::Exponential,
            mode: SourceMode::Open,
            num_terminals: 4,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(SimError::config("ArrivalRate", "must be positive"));
        }
        if !(self.slack_factor > 0.0 && self.slack_factor.is_finite()) {
            return Err(SimError::config("Slackfactor", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.write_prob) {
            return Err(SimError::config("WriteProb", "must be in [0, 1]"));
        }
        if self.dist_degree == 0 {
            return Err(SimError::config("DistDegree", "must be at least 1"));
        }
        if self.cohort_size == 0 {
            return Err(SimError::config("CohortSize", "must be at least 1"));
        }
        if self.mode == SourceMode::Closed && self.num_terminals == 0 {
            return Err(SimError::config("NumTerminals", "closed mode needs at least one terminal"));
        }
        Ok(())
    }

    pub fn mean_interarrival(&self) -> SimDuration {
        SimDuration::from_micros((1e6 / self.arrival_rate).round() as u64)
    }
}

/// Per-page service demands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timing {
    pub page_cpu: SimDuration,
    pub page_disk: SimDuration,
    pub msg_cpu: SimDuration,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            page_cpu: SimDuration::from_millis(10),
            page_disk: SimDuration::from_millis(20),
            msg_cpu: SimDuration::from_millis(1),
        }
    }
}

impl Timing {
    pub fn per_page(&self) -> SimDuration {
        self.page_cpu + self.page_disk
    }
}

/// Lazily produces one site's open-mode arrival instants up to a horizon.
#[derive(Clone, Debug)]
pub struct ArrivalGenerator {
    process: ArrivalProcess,
    mean_gap: SimDuration,
    rate: f64,
    horizon: SimTime,
    last: SimTime,
    next_tick: u64,
    pending_in_batch: u64,
    started: bool,
}

impl ArrivalGenerator {
    pub fn new(cfg: &WorkloadConfig, horizon: SimTime) -> Self {
        ArrivalGenerator {
            process: cfg.arrival_process,
            mean_gap: cfg.mean_interarrival(),
            rate: cfg.arrival_rate,
            horizon,
            last: SimTime::ZERO,
            next_tick: 0,
            pending_in_batch: 0,
            started: false,
        }
    }

    /// Next arrival strictly before the horizon, or `None` when exhausted.
    pub fn next_arrival(&mut self, rng: &mut RngStream) -> Result<Option<SimTime>, SimError> {
        match self.process {
            ArrivalProcess::Exponential => {
                let at = self.last + rng.draw_exponential(self.mean_gap)?;
                self.last = at;
                Ok((at < self.horizon).then_some(at))
            }
            ArrivalProcess::PoissonBatch => {
                while self.pending_in_batch == 0 {
                    if self.started {
                        self.next_tick += 1;
                    }
                    self.started = true;
                    if SimTime::from_secs(self.next_tick) >= self.horizon {
                        return Ok(None);
                    }
                    self.pending_in_batch = rng.draw_poisson(self.rate)?;
                }
                self.pending_in_batch -= 1;
                Ok(Some(SimTime::from_secs(self.next_tick)))
            }
        }
    }
}

/// All arrival instants of one site before `horizon`.
pub fn generate_arrivals(
    cfg: &WorkloadConfig,
    horizon: SimTime,
    rng: &mut RngStream,
) -> Result<Vec<SimTime>, SimError> {
    let mut gen = ArrivalGenerator::new(cfg, horizon);
    let mut out = Vec::new();
    while let Some(t) = gen.next_arrival(rng)? {
        out.push(t);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PageAccess {
    pub page: PageId,
    pub is_write: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CohortSpec {
    pub site: SiteId,
    pub pages: Vec<PageAccess>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnState {
    Generated,
    Executing,
    Committing,
    Committed,
    Missed,
}

impl TxnState {
    pub fn can_move_to(self, next: TxnState) -> bool {
        use TxnState::*;
        matches!(
            (self, next),
            (Generated, Executing)
                | (Executing, Committing)
                | (Executing, Missed)
                | (Committing, Committed)
                | (Committing, Missed)
        )
    }

    pub fn is_finished(self) -> bool {
        matches!(self, TxnState::Committed | TxnState::Missed)
    }
}

pub type TxnId = u64;

#[derive(Clone, Debug)]
pub struct Transaction {
    pub id: TxnId,
    pub origin: SiteId,
    pub arrival_time: SimTime,
    pub resource_time: SimDuration,
    pub deadline: SimTime,
    pub base_deadline: SimTime,
    /// Cohorts in ascending site order.
    pub cohorts: Vec<CohortSpec>,
    pub state: TxnState,
    pub grants: u32,
}

impl Transaction {
    pub fn transition(&mut self, next: TxnState) -> Result<(), SimError> {
        if !self.state.can_move_to(next) {
            return Err(SimError::Invariant(format!(
                "txn {} cannot move {:?} -> {:?}",
                self.id, self.state, next
            )));
        }
        self.state = next;
        Ok(())
    }

    pub fn total_pages(&self) -> u64 {
        self.cohorts.iter().map(|c| c.pages.len() as u64).sum()
    }

    /// True when the only cohort runs at the origin site.
    pub fn is_local(&self) -> bool {
        self.cohorts.len() == 1 && self.cohorts[0].site == self.origin
    }

    /// Extends the deadline; deadlines never move earlier.
    pub fn extend_deadline(&mut self, new_deadline: SimTime) -> bool {
        if new_deadline > self.deadline {
            self.deadline = new_deadline;
            self.grants += 1;
            true
        } else {
            false
        }
    }
}

/// Random draws needed to build a transaction, each from its own stream.
pub struct BuildStreams<'a> {
    pub placement: &'a mut RngStream,
    pub pages: &'a mut RngStream,
    pub writes: &'a mut RngStream,
}

/// Builds a generated transaction with its cohorts, resource time and deadline.
pub fn build_transaction(
    id: TxnId,
    cfg: &WorkloadConfig,
    timing: &Timing,
    include_commit_cost: bool,
    origin: SiteId,
    at: SimTime,
    map: &FileMap,
    rng: BuildStreams<'_>,
) -> Result<Transaction, SimError> {
    let k = cfg.dist_degree as usize;
    if k > map.num_files() {
        return Err(SimError::config(
            "DistDegree",
            format!("{k} files requested but the database has {}", map.num_files()),
        ));
    }
    let files = rng.placement.sample_distinct(map.num_files(), k)?;
    let chosen = select_execution_sites(origin, &files, map, rng.placement)?;
    let mut sites = cohort_sites(&chosen);
    sites.sort();

    let mut cohorts = Vec::with_capacity(sites.len());
    for site in sites {
        let count = cohort_page_count(cfg.cohort_size, rng.pages)?;
        let resident = map.resident_page_count(site);
        let count = count.min(resident as usize);
        let picks = rng.pages.sample_distinct(resident as usize, count)?;
        let pages = picks
            .into_iter()
            .map(|n| PageAccess {
                page: map.resident_page(site, n as u32).expect("index below resident count"),
                is_write: rng.writes.draw_bernoulli(cfg.write_prob),
            })
            .collect();
        cohorts.push(CohortSpec { site, pages });
    }

    let mut txn = Transaction {
        id,
        origin,
        arrival_time: at,
        resource_time: SimDuration::ZERO,
        deadline: at,
        base_deadline: at,
        cohorts,
        state: TxnState::Generated,
        grants: 0,
    };
    txn.resource_time = estimate_resource_time(&txn, timing, include_commit_cost);
    txn.deadline = assign_deadline(at, cfg.slack_factor, txn.resource_time)?;
    txn.base_deadline = txn.deadline;
    Ok(txn)
}

/// Pages per cohort: uniform real in [0.5, 1.5] x cohort_size, rounded, at least 1.
pub fn cohort_page_count(cohort_size: u32, rng: &mut RngStream) -> Result<usize, SimError> {
    let c = cohort_size as f64;
    let x = rng.draw_uniform_real(0.5 * c, 1.5 * c)?;
    Ok((x.round() as usize).max(1))
}

/// Total service demand: per-page CPU and disk, plus the forced log writes on
/// the commit path when `include_commit_cost` is set.
pub fn estimate_resource_time(txn: &Transaction, timing: &Timing, include_commit_cost: bool) -> SimDuration {
    let data = timing.per_page().times(txn.total_pages());
    if include_commit_cost {
        let cost = commit_cost(txn.cohorts.len(), txn.is_local());
        data + timing.page_disk.times(cost.forced_writes as u64)
    } else {
        data
    }
}

/// `arrival + slack_factor * resource_time`, rounded to the tick.
pub fn assign_deadline(at: SimTime, slack_factor: f64, resource_time: SimDuration) -> Result<SimTime, SimError> {
    if !(slack_factor > 0.0) {
        return Err(SimError::InvalidArgument("slack factor must be positive".into()));
    }
    if resource_time.is_zero() {
        return Err(SimError::InvalidArgument("resource time must be positive".into()));
    }
    Ok(at + resource_time.mul_f64(slack_factor))
}

/// Closed mode: next submission after a terminal's transaction leaves the system.
pub fn terminal_resubmit(cfg: &WorkloadConfig, completion: SimTime, rng: &mut RngStream) -> Result<SimTime, SimError> {
    if cfg.mode != SourceMode::Closed {
        return Err(SimError::InvalidArgument("terminal resubmission in open mode".into()));
    }
    let think = rng.draw_uniform_int(0, cfg.terminal_think_max.as_micros())?;
    Ok(completion + SimDuration::from_micros(think))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RngStreams, StreamPurpose};
    use crate::topology::place_files;

    fn streams(seed: u64) -> RngStreams {
        RngStreams::new(seed)
    }

    fn build(cfg: &WorkloadConfig, map: &FileMap, seed: u64, id: TxnId) -> Transaction {
        let s = streams(seed);
        let mut p = s.stream(StreamPurpose::Placement, id as u32);
        let mut g = s.stream(StreamPurpose::PageSelection, id as u32);
        let mut w = s.stream(StreamPurpose::WriteCoin, id as u32);
        build_transaction(
            id,
            cfg,
            &Timing::default(),
            true,
            SiteId((id % map.num_sites() as u64) as u32),
            SimTime::ZERO,
            map,
            BuildStreams { placement: &mut p, pages: &mut g, writes: &mut w },
        )
        .unwrap()
    }

    fn table_two_map() -> FileMap {
        place_files(2400, 8, 4, 1, &mut streams(0).stream(StreamPurpose::FileLayout, 0)).unwrap()
    }

    fn txn_with(cohorts: Vec<(u32, usize)>, origin: u32) -> Transaction {
        Transaction {
            id: 0,
            origin: SiteId(origin),
            arrival_time: SimTime::ZERO,
            resource_time: SimDuration::ZERO,
            deadline: SimTime::ZERO,
            base_deadline: SimTime::ZERO,
            cohorts: cohorts
                .into_iter()
                .map(|(site, n)| CohortSpec {
                    site: SiteId(site),
                    pages: (0..n as u32).map(|page| PageAccess { page, is_write: false }).collect(),
                })
                .collect(),
            state: TxnState::Generated,
            grants: 0,
        }
    }

    #[test]
    fn exponential_count_over_100s_near_600() {
        let cfg = WorkloadConfig::default();
        let mut total = 0;
        for seed in 0..20 {
            let mut r = streams(seed).stream(StreamPurpose::Arrivals, 0);
            total += generate_arrivals(&cfg, SimTime::from_secs(100), &mut r).unwrap().len();
        }
        let mean = total as f64 / 20.0;
        assert!((mean - 600.0).abs() / 600.0 < 0.05, "{mean}");
    }

    #[test]
    fn batch_mean_size_matches_rate() {
        let cfg = WorkloadConfig { arrival_process: ArrivalProcess::PoissonBatch, ..Default::default() };
        let mut r = streams(3).stream(StreamPurpose::Arrivals, 0);
        let arrivals = generate_arrivals(&cfg, SimTime::from_secs(2000), &mut r).unwrap();
        assert!(arrivals.iter().all(|t| t.as_micros() % 1_000_000 == 0));
        let mean = arrivals.len() as f64 / 2000.0;
        assert!((mean - 6.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn zero_horizon_is_empty() {
        for process in [ArrivalProcess::Exponential, ArrivalProcess::PoissonBatch] {
            let cfg = WorkloadConfig { arrival_process: process, ..Default::default() };
            let mut r = streams(1).stream(StreamPurpose::Arrivals, 0);
            assert!(generate_arrivals(&cfg, SimTime::ZERO, &mut r).unwrap().is_empty());
        }
    }

    #[test]
    fn cohort_page_counts_within_half_to_one_and_a_half() {
        let map = table_two_map();
        let cfg = WorkloadConfig::default();
        for id in 0..2000 {
            let t = build(&cfg, &map, 17, id);
            for c in &t.cohorts {
                assert!((3..=9).contains(&c.pages.len()), "{}", c.pages.len());
            }
        }
    }

    #[test]
    fn write_fraction_tracks_write_prob() {
        let map = table_two_map();
        let cfg = WorkloadConfig::default();
        let (mut writes, mut pages) = (0usize, 0usize);
        let mut id = 0;
        while pages < 10_000 {
            let t = build(&cfg, &map, 23, id);
            for c in &t.cohorts {
                pages += c.pages.len();
                writes += c.pages.iter().filter(|p| p.is_write).count();
            }
            id += 1;
        }
        let frac = writes as f64 / pages as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn write_prob_zero_means_read_only() {
        let map = table_two_map();
        let cfg = WorkloadConfig { write_prob: 0.0, ..Default::default() };
        for id in 0..200 {
            let t = build(&cfg, &map, 2, id);
            assert!(t.cohorts.iter().flat_map(|c| &c.pages).all(|p| !p.is_write));
        }
    }

    #[test]
    fn pages_resident_and_distinct() {
        let map = table_two_map();
        let cfg = WorkloadConfig::default();
        for id in 0..500 {
            let t = build(&cfg, &map, 8, id);
            assert!(!t.cohorts.is_empty() && t.cohorts.len() <= 3);
            for c in &t.cohorts {
                let mut ids: Vec<_> = c.pages.iter().map(|p| p.page).collect();
                assert!(ids.iter().all(|&p| map.holds(c.site, p)));
                ids.sort();
                ids.dedup();
                assert_eq!(ids.len(), c.pages.len());
            }
            assert!(t.cohorts.windows(2).all(|w| w[0].site < w[1].site));
        }
    }

    #[test]
    fn dist_degree_beyond_files_rejected() {
        let map = place_files(100, 1, 2, 1, &mut streams(0).stream(StreamPurpose::FileLayout, 0)).unwrap();
        let cfg = WorkloadConfig::default();
        let s = streams(0);
        let (mut p, mut g, mut w) = (
            s.stream(StreamPurpose::Placement, 0),
            s.stream(StreamPurpose::PageSelection, 0),
            s.stream(StreamPurpose::WriteCoin, 0),
        );
        let err = build_transaction(
            0,
            &cfg,
            &Timing::default(),
            true,
            SiteId(0),
            SimTime::ZERO,
            &map,
            BuildStreams { placement: &mut p, pages: &mut g, writes: &mut w },
        )
        .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn resource_time_arithmetic() {
        let timing = Timing::default();
        let t = txn_with(vec![(0, 6), (1, 6), (2, 6)], 0);
        assert_eq!(estimate_resource_time(&t, &timing, false), SimDuration::from_millis(540));
        assert_eq!(estimate_resource_time(&t, &timing, true), SimDuration::from_millis(680));
        let single = txn_with(vec![(3, 1)], 0);
        assert_eq!(estimate_resource_time(&single, &timing, false), SimDuration::from_millis(30));
    }

    #[test]
    fn deadline_examples() {
        let dt = assign_deadline(SimTime::from_secs(10), 4.0, SimDuration::from_millis(180)).unwrap();
        assert_eq!(dt, SimTime::from_millis(10_720));
        let dt = assign_deadline(SimTime::ZERO, 4.0, SimDuration::from_millis(680)).unwrap();
        assert_eq!(dt, SimTime::from_millis(2_720));
        assert!(assign_deadline(SimTime::ZERO, 0.0, SimDuration::from_millis(680)).is_err());
    }

    #[test]
    fn generated_deadlines_follow_slack_formula() {
        let map = table_two_map();
        let cfg = WorkloadConfig::default();
        for id in 0..1000 {
            let t = build(&cfg, &map, 4, id);
            let expected = t.resource_time.mul_f64(4.0);
            assert_eq!(t.deadline - t.arrival_time, expected);
            assert_eq!(t.deadline, t.base_deadline);
        }
    }

    #[test]
    fn terminal_think_bounds_and_mean() {
        let cfg = WorkloadConfig { mode: SourceMode::Closed, ..Default::default() };
        let mut r = streams(6).stream(StreamPurpose::ThinkTime, 0);
        let now = SimTime::from_secs(1);
        let n = 10_000;
        let mut total = 0u64;
        for _ in 0..n {
            let next = terminal_resubmit(&cfg, now, &mut r).unwrap();
            let d = (next - now).as_micros();
            assert!(d <= 500_000);
            total += d;
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 250_000.0).abs() / 250_000.0 < 0.02, "{mean}");

        let zero = WorkloadConfig { terminal_think_max: SimDuration::ZERO, ..cfg.clone() };
        assert_eq!(terminal_resubmit(&zero, now, &mut r).unwrap(), now);

        let open = WorkloadConfig::default();
        assert!(terminal_resubmit(&open, now, &mut r).is_err());
    }

    #[test]
    fn lifecycle_transitions() {
        let mut t = txn_with(vec![(0, 1)], 0);
        assert!(t.transition(TxnState::Committed).is_err());
        t.transition(TxnState::Executing).unwrap();
        t.transition(TxnState::Committing).unwrap();
        t.transition(TxnState::Committed).unwrap();
        assert!(t.transition(TxnState::Missed).is_err());
    }

    #[test]
    fn deadline_extension_is_monotone() {
        let mut t = txn_with(vec![(0, 1)], 0);
        t.deadline = SimTime::from_secs(2);
        assert!(!t.extend_deadline(SimTime::from_secs(1)));
        assert!(t.extend_deadline(SimTime::from_secs(3)));
        assert_eq!(t.grants, 1);
    }

    #[test]
    fn batch_process_is_burstier_at_subsecond_scale() {
        let horizon = SimTime::from_secs(200);
        let window = 100_000u64;
        let variance = |arrivals: &[SimTime]| {
            let bins = (horizon.as_micros() / window) as usize;
            let mut counts = vec![0f64; bins];
            for t in arrivals {
                counts[(t.as_micros() / window) as usize] += 1.0;
            }
            let mean = counts.iter().sum::<f64>() / bins as f64;
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / bins as f64
        };
        for seed in 0..10 {
            let exp = WorkloadConfig::default();
            let batch = WorkloadConfig { arrival_process: ArrivalProcess::PoissonBatch, ..Default::default() };
            let a = generate_arrivals(&exp, horizon, &mut streams(seed).stream(StreamPurpose::Arrivals, 0)).unwrap();
            let b = generate_arrivals(&batch, horizon, &mut streams(seed).stream(StreamPurpose::Arrivals, 0)).unwrap();
            assert!(variance(&b) >= variance(&a));
        }
    }
}
