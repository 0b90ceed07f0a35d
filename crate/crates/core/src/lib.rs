//! Hash-based MAC address anonymization.
//!
//! Addresses are hashed with a keyed, memory-hard KDF and the digest is
//! truncated to a few bits, so that many devices share each bucket. The
//! [`analytics`] module picks a width for a dataset size and tolerable
//! collision rate; [`simulator`] checks those predictions empirically.

pub mod analytics;
pub mod anonymizer;
pub mod cli;
pub mod error;
pub mod mac;
pub mod pipeline;
pub mod simulator;

pub use analytics::{collision_rate, expected_collisions, min_bits_for_rate, PlanResult};
pub use anonymizer::{
    anonymize, rotate_salt, truncate_digest, AnonymizationPolicy, Anonymizer, BucketDigest,
    KdfParams, Salt,
};
pub use error::{Error, Result};
pub use mac::{format_mac, parse_mac, sample_unique_macs, MacAddress, MacRange};
pub use simulator::{run_experiment, run_trial, ExperimentReport, HashMode, TrialConfig};
