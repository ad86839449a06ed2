//! Game driver: Reality strategies, transcripts, the lower-bound
//! adversary, regret audits and the statistical experiments.

mod adversary;
mod audit;
mod experiment;
mod reality;
mod transcript;

pub use adversary::{adversary_thm4, adversary_with, AdversaryRun, LowerBoundCheck, SpacedAdversary};
pub use audit::{
    audit, standard_battery, BatteryEntry, CertificateRow, RegretReport, RegretRow, BATTERY_LAMBDAS, BATTERY_MAX_CENTERS,
    BATTERY_NORMS, BATTERY_RANDOM, RIDGE_TOLERANCE,
};
pub use experiment::{cor2_experiment, kernel_menu, random_suite, run_suite, RiskSummary, SuiteGame, RISK_SAMPLES};
pub use reality::{
    ingest_csv, ingest_reader, object_dimension, opposing_label, play, rng_for, run_game, smooth_target, streams, synth_iid,
    LabelFlips, Reality, Sequence, Synth,
};
pub use transcript::{Fingerprint, GameTranscript, Round};
