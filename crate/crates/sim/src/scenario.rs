use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Offline,
    Online,
}

/// Link conditions from `start_s` until the next segment starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub state: LinkState,
    #[serde(default)]
    pub bandwidth_kbps: f64,
    #[serde(default)]
    pub rtt_ms: u64,
    #[serde(default)]
    pub request_loss_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub n_users: usize,
    pub events_per_user: usize,
    /// Relative weights per event kind. Kinds not listed are never drawn.
    pub kind_mix: BTreeMap<String, f64>,
    pub flush_every_s: f64,
    /// Events are logged in `[0, generate_until_s)`. Defaults to the whole
    /// duration; a smaller value leaves a tail for draining queues.
    #[serde(default)]
    pub generate_until_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub segments: Vec<Segment>,
    pub workload: Workload,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScenarioError {
    #[error("t = {t_s} s is outside [0, {duration_s})")]
    OutOfRange { t_s: f64, duration_s: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(Self::from_json(&std::fs::read_to_string(path)?)?)
    }

    // the negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        let Some(first) = self.segments.first() else {
            return bad("no segments".into());
        };
        if first.start_s != 0.0 {
            return bad("first segment must start at 0".into());
        }
        for w in self.segments.windows(2) {
            if !(w[0].start_s < w[1].start_s) {
                return bad(format!("segment starts must increase ({} then {})", w[0].start_s, w[1].start_s));
            }
        }
        for s in &self.segments {
            if s.start_s >= self.duration_s {
                return bad(format!("segment at {} starts after the end", s.start_s));
            }
            if !(0.0..=1.0).contains(&s.request_loss_prob) {
                return bad(format!("request_loss_prob {} outside [0, 1]", s.request_loss_prob));
            }
            if s.state == LinkState::Online && !(s.bandwidth_kbps > 0.0) {
                return bad(format!("online segment at {} needs positive bandwidth", s.start_s));
            }
        }
        let w = &self.workload;
        if w.n_users == 0 || !(w.flush_every_s > 0.0) {
            return bad("workload needs users and a positive flush interval".into());
        }
        if w.kind_mix.is_empty() || w.kind_mix.values().any(|v| !(*v >= 0.0)) || w.kind_mix.values().sum::<f64>() <= 0.0 {
            return bad("kind_mix needs non-negative weights with a positive sum".into());
        }
        for k in w.kind_mix.keys() {
            if k.parse::<fieldledger_core::EventKind>().is_err() {
                return bad(format!("unknown kind {k:?} in kind_mix"));
            }
        }
        if let Some(g) = w.generate_until_s {
            if !(g > 0.0 && g <= self.duration_s) {
                return bad("generate_until_s must be in (0, duration_s]".into());
            }
        }
        Ok(())
    }

    /// The segment covering `t_s`. Segments are half-open `[start, next)`.
    pub fn connectivity_at(&self, t_s: f64) -> Result<&Segment, ScenarioError> {
        if !(0.0..self.duration_s).contains(&t_s) {
            return Err(ScenarioError::OutOfRange {
                t_s,
                duration_s: self.duration_s,
            });
        }
        let idx = self.segments.partition_point(|s| s.start_s <= t_s);
        Ok(&self.segments[idx - 1])
    }

    pub fn generate_until_s(&self) -> f64 {
        self.workload.generate_until_s.unwrap_or(self.duration_s)
    }

    /// Share of the timeline spent offline.
    pub fn offline_fraction(&self) -> f64 {
        let mut offline = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map_or(self.duration_s, |n| n.start_s);
            if s.state == LinkState::Offline {
                offline += end - s.start_s;
            }
        }
        offline / self.duration_s
    }
}
