use firmsim::audit::audit;
use firmsim::commit::ExecMode;
use firmsim::policy::PolicyRegime;
use firmsim::resources::Discipline;
use firmsim::sim::{Simulation, TxnStatus};
use firmsim::workload::{ArrivalProcess, SourceMode};
use firmsim::{SimConfig, SimDuration};

fn randomized(i: u64) -> SimConfig {
    let mut c = SimConfig { seed: 1000 + i, ..Default::default() };
    c.sim_duration = SimDuration::from_secs(5);
    c.warmup_fraction = 0.0;
    c.workload.arrival_rate = [1.0, 2.5, 4.0, 6.0][(i % 4) as usize];
    c.exec_mode = if i % 2 == 0 { ExecMode::Parallel } else { ExecMode::Sequential };
    c.voluntary_abort_prob = if i % 3 == 0 { 0.0 } else { 0.1 };
    c.discipline = if i % 5 == 0 { Discipline::Fcfs } else { Discipline::Edf };
    c.policy.regime = [PolicyRegime::Static, PolicyRegime::DynamicRedistribution, PolicyRegime::IntelligentAgent]
        [(i % 3) as usize];
    c.replication = if i % 7 == 0 { 2 } else { 1 };
    c.workload.slack_factor = [1.0, 2.0, 4.0][(i % 3) as usize];
    if i % 11 == 0 {
        c.workload.arrival_process = ArrivalProcess::PoissonBatch;
    }
    if i % 13 == 0 {
        c.workload.mode = SourceMode::Closed;
    }
    c
}

#[test]
fn two_hundred_randomized_runs_stay_atomic() {
    let (mut kills, mut vetoes, mut prepared) = (0, 0, 0);
    for i in 0..200 {
        let mut sim = Simulation::new(randomized(i)).unwrap();
        sim.enable_trace();
        let out = sim.run().unwrap();
        let summary = audit(&out.records, out.trace.as_ref().unwrap()).unwrap_or_else(|e| panic!("run {i}: {e}"));
        vetoes += summary.vetoed;
        prepared += summary.prepared_cohorts;
        kills += out.records.iter().filter(|r| r.status == TxnStatus::Missed).count();
        out.stats.check_conservation().unwrap();
    }
    assert!(kills > vetoes, "deadline kills were exercised");
    assert!(vetoes > 0);
    assert!(prepared > 0);
}
