//! Seeded simulator of intermittent connectivity driving real SDK instances
//! against a running ingestion service.
//!
//! Time is simulated: SDK clocks, flush schedules, round-trip times and
//! backoff all advance on the scenario timeline, so a run is a pure function
//! of the scenario and the server's initial state.

mod report;
mod run;
mod scenario;
mod transport;
mod workload;

pub use report::ScenarioReport;
pub use run::{fetch_server_ids, run_scenario, simulate, SimError, SIM_EPOCH_MS};
pub use scenario::{LinkState, Scenario, ScenarioError, Segment, Workload};
pub use transport::SimTransport;
pub use workload::{plan_events, PlannedEvent};
