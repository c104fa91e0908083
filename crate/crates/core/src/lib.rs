//! Discrete-event simulator of a firm-deadline distributed real-time
//! transaction system: master/cohort transactions on per-site CPU and disk,
//! two-phase commit, and deadline slack policies.

pub mod audit;
pub mod commit;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod resources;
pub mod sim;
pub mod topology;
pub mod workload;

pub use config::SimConfig;
pub use engine::{SimDuration, SimTime};
pub use error::SimError;
pub use metrics::{LoadClass, MissPercent, RunStats};
pub use sim::{simulate, SimOutput, Simulation};
