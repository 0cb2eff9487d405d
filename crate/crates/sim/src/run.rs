use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use fieldledger_core::{Catalog, ConnectivityInfo, NetworkType};
use fieldledger_sdk::{HttpTransport, Sdk, SdkConfig, SdkError};

use crate::report::ScenarioReport;
use crate::scenario::{LinkState, Scenario, ScenarioError, Segment};
use crate::transport::SimTransport;
use crate::workload::{plan_events, PlannedEvent};

/// Wall-clock instant that simulated time zero maps to (2022-03-01T00:00:00Z).
pub const SIM_EPOCH_MS: i64 = 1_646_092_800_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("server unreachable: {0}")]
    ServerUnreachable(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sdk(#[from] SdkError),
    #[error("simulation i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct IdOnly {
    event_id: String,
}

#[derive(Deserialize)]
struct Page {
    events: Vec<IdOnly>,
    next_cursor: Option<String>,
}

/// Every event id stored by the server, in query order.
pub fn fetch_server_ids(server: &str) -> Result<Vec<String>, SimError> {
    let agent: ureq::Agent = ureq::Agent::config_builder().build().into();
    let base = format!("{}/v1/events?limit=1000", server.trim_end_matches('/'));
    let mut ids = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let url = match &cursor {
            Some(c) => format!("{base}&cursor={c}"),
            None => base.clone(),
        };
        let page: Page = agent
            .get(&url)
            .call()
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| SimError::ServerUnreachable(e.to_string()))?;
        ids.extend(page.events.into_iter().map(|e| e.event_id));
        match page.next_cursor {
            Some(c) => cursor = Some(c),
            None => return Ok(ids),
        }
    }
}

fn connectivity(segment: &Segment) -> ConnectivityInfo {
    match segment.state {
        LinkState::Offline => ConnectivityInfo::offline(),
        LinkState::Online if segment.bandwidth_kbps >= 1000.0 => ConnectivityInfo::online(NetworkType::Wifi, None),
        LinkState::Online => ConnectivityInfo::online(NetworkType::Cellular, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Log(usize),
    Flush(usize),
}

/// Generates the scenario's workload and runs it against `server`.
pub fn run_scenario(scenario: &Scenario, server: &str) -> Result<ScenarioReport, SimError> {
    scenario.validate()?;
    simulate(scenario, &plan_events(scenario), server)
}

/// Replays `plan` through one SDK instance per user over the scenario's
/// link conditions, then reconciles with the server's stored events.
pub fn simulate(scenario: &Scenario, plan: &[PlannedEvent], server: &str) -> Result<ScenarioReport, SimError> {
    scenario.validate()?;
    fetch_server_ids(server)?;

    let catalog = Catalog::builtin().expect("builtin catalog is valid");
    let workdir = tempfile::tempdir()?;
    let users: Vec<String> = plan
        .iter()
        .map(|e| e.user_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_idx: BTreeMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut sdks = Vec::with_capacity(users.len());
    for (i, user) in users.iter().enumerate() {
        let mut config = SdkConfig::new(format!("sim-{}", scenario.name), format!("{user}-device"));
        config.seed = Some(scenario.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
        config.fsync = false;
        sdks.push(Sdk::open(config, catalog.clone(), workdir.path().join(format!("{i}.flq")))?);
    }

    let duration_ms = (scenario.duration_s * 1000.0) as u64;
    let flush_every_ms = ((scenario.workload.flush_every_s * 1000.0) as u64).max(1);
    let mut phase_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0xf1u64);
    let mut actions: Vec<(u64, Action)> = plan
        .iter()
        .enumerate()
        .filter(|(_, e)| e.t_ms < duration_ms)
        .map(|(i, e)| (e.t_ms, Action::Log(i)))
        .collect();
    for u in 0..users.len() {
        let mut t = phase_rng.random_range(0..flush_every_ms);
        while t < duration_ms {
            actions.push((t, Action::Flush(u)));
            t += flush_every_ms;
        }
    }
    actions.sort();

    let loss_rng = RefCell::new(ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x1055));
    let http = HttpTransport::new(server);
    let mut report = ScenarioReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ..Default::default()
    };
    let mut generated_ids = BTreeSet::new();
    let mut depth: u64 = 0;

    for (t_ms, action) in actions {
        let segment = scenario.connectivity_at(t_ms as f64 / 1000.0)?;
        let now = SIM_EPOCH_MS + t_ms as i64;
        match action {
            Action::Log(i) => {
                let e = &plan[i];
                let sdk = &sdks[user_idx[e.user_id.as_str()]];
                let env = sdk.log_event(e.kind, e.payload.clone(), &e.user_id, now, connectivity(segment))?;
                generated_ids.insert(env.event_id);
                report.generated += 1;
                depth += 1;
                report.max_queue_depth = report.max_queue_depth.max(depth);
            }
            Action::Flush(u) => {
                let transport = SimTransport::new(&http, &loss_rng, segment.clone());
                let before = sdks[u].queue_len() as u64;
                let r = sdks[u].flush(&transport, now)?;
                depth = depth - before + r.retained as u64;
                report.flushes += 1;
                report.duplicates_detected_serverside += r.duplicates as u64;
                report.rejected += r.rejected as u64;
                if r.requests > 0 {
                    report.flush_latencies_ms.push(r.request_latencies_ms.iter().sum());
                }
                let (sent, lost) = transport.counters();
                report.requests_sent += sent;
                report.requests_lost += lost;
            }
        }
    }
    report.final_retained = sdks.iter().map(|s| s.queue_len() as u64).sum();

    let server_ids = fetch_server_ids(server)?;
    let unique: BTreeSet<&String> = server_ids.iter().collect();
    report.stored_duplicates = (server_ids.len() - unique.len()) as u64;
    report.delivered_unique = unique.iter().filter(|id| generated_ids.contains(**id)).count() as u64;
    report.phantom_events = unique.len() as u64 - report.delivered_unique;
    Ok(report)
}
