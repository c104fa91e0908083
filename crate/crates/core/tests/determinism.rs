use firmsim::commit::ExecMode;
use firmsim::policy::PolicyRegime;
use firmsim::resources::Discipline;
use firmsim::sim::TxnRecord;
use firmsim::{simulate, SimConfig, SimDuration, SimTime};

fn short(seed: u64) -> SimConfig {
    let mut c = SimConfig { seed, ..Default::default() };
    c.sim_duration = SimDuration::from_secs(20);
    c.workload.arrival_rate = 2.5;
    c
}

fn workload_view(records: &[TxnRecord]) -> Vec<(SimTime, u64)> {
    records.iter().map(|r| (r.arrival, r.workload_digest)).collect()
}

#[test]
fn reruns_are_identical() {
    let a = simulate(&short(5)).unwrap();
    let b = simulate(&short(5)).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.records, b.records);
    let c = simulate(&short(6)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn non_workload_parameters_keep_the_workload_paired() {
    let base = simulate(&short(9)).unwrap();
    let variants = [
        SimConfig { exec_mode: ExecMode::Sequential, ..short(9) },
        SimConfig { discipline: Discipline::Fcfs, ..short(9) },
        {
            let mut c = short(9);
            c.policy.regime = PolicyRegime::IntelligentAgent;
            c
        },
        {
            let mut c = short(9);
            c.workload.slack_factor = 8.0;
            c
        },
    ];
    for v in variants {
        let out = simulate(&v).unwrap();
        assert_eq!(workload_view(&out.records), workload_view(&base.records), "{:?}", v.exec_mode);
    }
}

#[test]
fn static_matches_redistribution_with_empty_pool() {
    let stat = simulate(&short(3)).unwrap();
    let mut cfg = short(3);
    cfg.policy.regime = PolicyRegime::DynamicRedistribution;
    cfg.policy.donation_fraction = 0.0;
    let dynamic = simulate(&cfg).unwrap();
    assert!(!dynamic.ledger.scans.is_empty());
    assert_eq!(dynamic.ledger.total_grants(), 0);
    assert_eq!(stat.records, dynamic.records);
    assert_eq!(stat.stats.committed_in_time, dynamic.stats.committed_in_time);
    assert_eq!(stat.stats.response_samples_us, dynamic.stats.response_samples_us);
    assert!(stat.ledger.scans.is_empty());
}

#[test]
fn deadlines_follow_the_slack_formula_exactly() {
    let mut cfg = SimConfig { seed: 11, ..Default::default() };
    cfg.sim_duration = SimDuration::from_secs(220);
    let out = simulate(&cfg).unwrap();
    assert!(out.records.len() >= 10_000);
    for r in &out.records {
        let span = (r.base_deadline - r.arrival).as_micros() as i64;
        assert!((span - 4 * r.resource_time.as_micros() as i64).abs() <= 1, "txn {}", r.id);
        assert!(r.deadline >= r.base_deadline);
    }
}

#[test]
fn centralized_run_sends_no_messages() {
    let mut cfg = short(1);
    cfg.num_sites = 1;
    let out = simulate(&cfg).unwrap();
    assert!(out.stats.committed_in_time > 0);
    assert_eq!(out.stats.messages, 0);
}

#[test]
fn grants_respect_caps_and_pool() {
    for regime in [PolicyRegime::DynamicRedistribution, PolicyRegime::IntelligentAgent] {
        let mut cfg = short(21);
        cfg.workload.arrival_rate = 3.0;
        cfg.policy.regime = regime;
        let out = simulate(&cfg).unwrap();
        assert!(out.ledger.total_grants() > 0, "{regime:?}");
        assert!(out.ledger.conserves_pool());
        assert!(out.records.iter().all(|r| r.grants <= cfg.policy.max_grants_per_txn));
        let budget = (cfg.policy.agent_budget * out.records.len() as f64).floor() as u64;
        assert!(out.ledger.agent_grants <= budget);
    }
}
