//! Behavioral pipelines: raw events to user/content metrics, KPIs, traits
//! and interactions.
//!
//! Every stage is a pure function of its inputs, followed by a set of
//! validation checks over the materialized stage output. Outputs are
//! committed to the versioned store only when no check fails, and every run
//! is recorded in the experiment tracker pinned to its exact input versions.

mod checks;
mod interactions;
mod kpis;
mod metrics;
mod model;
mod run;
mod sessions;
mod traits;

pub use checks::{run_checks, CheckReport, CheckVerdict, Finding, RuleId, Severity, StageState};
pub use interactions::extract_interactions;
pub use kpis::aggregate_kpis;
pub use metrics::{compute_metrics, content_ref, exclude_flagged};
pub use model::{
    date_of, InteractionRow, InteractionType, KpiRow, MetricRow, SubjectKind, TraitRow,
    CONTENT_METRICS, KPIS, USER_METRICS,
};
pub use run::{
    read_run_output, run_pipeline, NoHook, PipelineError, PipelineOptions, PipelineRun, Stage,
    StageHook, StageOutputs, OUTPUT_TABLES,
};
pub use sessions::{sessionize, Session, DEFAULT_GAP_MINUTES};
pub use traits::derive_traits;
