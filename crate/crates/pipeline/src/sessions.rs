pub const DEFAULT_GAP_MINUTES: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    pub start: i64,
    pub end: i64,
    pub event_count: u64,
}

impl Session {
    pub fn duration_ms(&self) -> i64 {
        self.end - self.start
    }
}

/// Groups one user's sorted event instants (epoch ms) into sessions. A new
/// session starts when the gap to the previous event exceeds `gap_minutes`.
pub fn sessionize(sorted_ts: &[i64], gap_minutes: i64) -> Vec<Session> {
    let gap_ms = gap_minutes * 60_000;
    let mut sessions: Vec<Session> = Vec::new();
    for &ts in sorted_ts {
        match sessions.last_mut() {
            Some(s) if ts - s.end <= gap_ms => {
                s.end = ts;
                s.event_count += 1;
            }
            _ => sessions.push(Session {
                start: ts,
                end: ts,
                event_count: 1,
            }),
        }
    }
    sessions
}
