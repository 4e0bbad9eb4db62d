//! Command-line plumbing: configuration, scenarios, sequence I/O, the
//! tracking loop, metrics and the variant ablation.

pub mod ablation;
pub mod config;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod tracker;

pub use ablation::{run_ablation, AblationRow, AblationRun, AblationTable};
pub use config::{RunConfig, Variant, CONFIG_KEYS, L_MIN_FRACTION};
pub use io::{load_sequence, write_scenario_dir};
pub use metrics::{compute_metrics, metrics_from_boxes, Metrics};
pub use scenario::{builtin_suite, generate_scenario, ScenarioKind, ScenarioParams};
pub use tracker::{
    make_backend, run_sequence, run_sequence_observed, run_sequence_with, FrameDiagnostics, FrameOutput, FrameRecord, Sequence, TrackResult,
    Tracker,
};
