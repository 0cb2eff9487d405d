//! Stage validation rules.
//!
//! | rule | severity | stage(s)                 | condition                                              |
//! |------|----------|--------------------------|--------------------------------------------------------|
//! | R1   | error    | metrics, traits, interactions | empty subject / user / content identifiers        |
//! | R2   | warn     | metrics                  | input adjusted_ts outside [2015-01-01, run start + 24 h] |
//! | R3   | error    | metrics, kpis, traits    | duplicate output keys                                  |
//! | R4   | error    | kpis                     | total_events differs from the summed user event_count  |
//! | R5   | error    | interactions             | interaction event_id not among input events            |
//! | R6   | error    | interactions             | more interactions than input events                    |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use fieldledger_core::StoredEvent;

use crate::model::{InteractionRow, KpiRow, MetricRow, SubjectKind, TraitRow};
use crate::run::Stage;

const MAX_SAMPLES: usize = 10;
/// 2015-01-01T00:00:00Z
const EARLIEST_PLAUSIBLE_MS: i64 = 1_420_070_400_000;
const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: RuleId,
    pub severity: Severity,
    pub count: u64,
    /// Up to ten offending keys.
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckVerdict {
    Pass,
    PassWithWarnings,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub stage: Stage,
    pub findings: Vec<Finding>,
    pub verdict: CheckVerdict,
}

impl CheckReport {
    fn new(stage: Stage, findings: Vec<Finding>) -> Self {
        let verdict = if findings.iter().any(|f| f.severity == Severity::Error) {
            CheckVerdict::Fail
        } else if findings.is_empty() {
            CheckVerdict::Pass
        } else {
            CheckVerdict::PassWithWarnings
        };
        Self {
            stage,
            findings,
            verdict,
        }
    }

    pub fn is_fail(&self) -> bool {
        self.verdict == CheckVerdict::Fail
    }

    pub fn finding(&self, rule: RuleId) -> Option<&Finding> {
        self.findings.iter().find(|f| f.rule == rule)
    }

    pub fn warnings(&self) -> u64 {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warn)
            .map(|f| f.count)
            .sum()
    }
}

/// Everything materialized so far in a run; later stages see earlier outputs.
#[derive(Debug, Clone, Copy)]
pub struct StageState<'a> {
    /// Non-excluded input events.
    pub events: &'a [StoredEvent],
    pub metrics: &'a [MetricRow],
    pub kpis: &'a [KpiRow],
    pub traits: &'a [TraitRow],
    pub interactions: &'a [InteractionRow],
    /// Wall-clock start of the run, epoch ms.
    pub run_started_ms: i64,
}

struct Collector {
    findings: Vec<Finding>,
}

impl Collector {
    fn add<I: IntoIterator<Item = String>>(&mut self, rule: RuleId, severity: Severity, offenders: I) {
        let mut count = 0u64;
        let mut samples = Vec::new();
        for o in offenders {
            count += 1;
            if samples.len() < MAX_SAMPLES {
                samples.push(o);
            }
        }
        if count > 0 {
            self.findings.push(Finding {
                rule,
                severity,
                count,
                samples,
            });
        }
    }
}

fn duplicates<K: Ord + Clone>(keys: impl Iterator<Item = K>) -> Vec<K> {
    let mut seen = BTreeSet::new();
    keys.filter(|k| !seen.insert(k.clone())).collect()
}

pub fn run_checks(stage: Stage, state: &StageState<'_>) -> CheckReport {
    let mut c = Collector { findings: Vec::new() };
    match stage {
        Stage::Metrics => {
            c.add(
                RuleId::R1,
                Severity::Error,
                state
                    .metrics
                    .iter()
                    .filter(|m| m.subject_id.trim().is_empty())
                    .map(|m| format!("{:?}/{}/{}", m.subject_kind, m.date, m.metric)),
            );
            let upper = state.run_started_ms + DAY_MS;
            c.add(
                RuleId::R2,
                Severity::Warn,
                state
                    .events
                    .iter()
                    .filter(|e| !(EARLIEST_PLAUSIBLE_MS..=upper).contains(&e.adjusted_ms()))
                    .map(|e| e.envelope.event_id.clone()),
            );
            c.add(
                RuleId::R3,
                Severity::Error,
                duplicates(state.metrics.iter().map(|m| {
                    (m.subject_kind, m.subject_id.clone(), m.date.clone(), m.metric.clone())
                }))
                .into_iter()
                .map(|(k, id, d, m)| format!("{k:?}/{id}/{d}/{m}")),
            );
        }
        Stage::Kpis => {
            c.add(
                RuleId::R3,
                Severity::Error,
                duplicates(state.kpis.iter().map(|k| (k.date.clone(), k.kpi.clone())))
                    .into_iter()
                    .map(|(d, k)| format!("{d}/{k}")),
            );
            let mut expected: BTreeMap<&str, f64> = BTreeMap::new();
            for m in state.metrics {
                if m.subject_kind == SubjectKind::User && m.metric == "event_count" {
                    *expected.entry(m.date.as_str()).or_default() += m.value;
                }
            }
            c.add(
                RuleId::R4,
                Severity::Error,
                state
                    .kpis
                    .iter()
                    .filter(|k| k.kpi == "total_events")
                    .filter(|k| k.value != expected.get(k.date.as_str()).copied().unwrap_or(0.0))
                    .map(|k| k.date.clone()),
            );
        }
        Stage::Traits => {
            c.add(
                RuleId::R1,
                Severity::Error,
                state
                    .traits
                    .iter()
                    .filter(|t| t.subject_id.trim().is_empty())
                    .map(|t| format!("{:?}/{}", t.subject_kind, t.trait_name)),
            );
            c.add(
                RuleId::R3,
                Severity::Error,
                duplicates(state.traits.iter().map(|t| {
                    (t.subject_kind, t.subject_id.clone(), t.trait_name.clone())
                }))
                .into_iter()
                .map(|(k, id, t)| format!("{k:?}/{id}/{t}")),
            );
        }
        Stage::Interactions => {
            c.add(
                RuleId::R1,
                Severity::Error,
                state
                    .interactions
                    .iter()
                    .filter(|i| i.user_id.trim().is_empty() || i.content_id.trim().is_empty())
                    .map(|i| i.event_id.clone()),
            );
            let inputs: BTreeSet<&str> =
                state.events.iter().map(|e| e.envelope.event_id.as_str()).collect();
            c.add(
                RuleId::R5,
                Severity::Error,
                state
                    .interactions
                    .iter()
                    .filter(|i| !inputs.contains(i.event_id.as_str()))
                    .map(|i| i.event_id.clone()),
            );
            if state.interactions.len() > state.events.len() {
                c.add(
                    RuleId::R6,
                    Severity::Error,
                    [format!(
                        "{} interactions > {} events",
                        state.interactions.len(),
                        state.events.len()
                    )],
                );
            }
        }
    }
    CheckReport::new(stage, c.findings)
}
