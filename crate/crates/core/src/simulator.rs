//! Monte Carlo measurement of bucket collisions.
//!
//! A trial samples `m` unique addresses, draws a fresh secret, hashes every
//! address into `2^b` buckets and counts collisions two ways:
//!
//! * colliding: addresses whose bucket holds two or more addresses. Its
//!   expectation is `m * collision_rate(m, 2^b)`.
//! * duplicates: `m` minus the number of occupied buckets, i.e. how many
//!   addresses land on an already-used bucket when inserted one by one.
//!
//! Each round has its own ChaCha stream derived from the base seed, so results
//! do not depend on scheduling or on the number of worker threads.

use std::fmt::Write as _;
use std::hash::Hasher;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use siphasher::sip::SipHasher13;

use crate::analytics::percent_1dp;
use crate::anonymizer::{
    truncate_digest, AnonymizationPolicy, Anonymizer, KdfGate, KdfParams, Salt, MAX_DIGEST_BITS,
};
use crate::error::{Error, Result};
use crate::mac::{sample_unique_macs_with, MacAddress, MacRange};

/// Bytes of the per-trial secret in KDF mode: 68 random bits, top nibble zero.
const TRIAL_SALT_BYTES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashMode {
    /// Argon2 through the anonymizer; realistic but slow.
    Kdf,
    /// Keyed SipHash-1-3; same bucket statistics at a fraction of the cost.
    #[default]
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub m: u64,
    pub digest_bits: u32,
    pub rounds: u32,
    pub base_seed: u64,
    pub hash_mode: HashMode,
    pub mac_range: MacRange,
    pub kdf: KdfParams,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Caps concurrent KDF evaluations in KDF mode.
    pub memory_budget_kib: Option<u64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            m: 1_000,
            digest_bits: 17,
            rounds: 100,
            base_seed: 0,
            hash_mode: HashMode::Fast,
            mac_range: MacRange::default(),
            kdf: KdfParams::default(),
            workers: None,
            memory_budget_kib: None,
        }
    }
}

impl TrialConfig {
    pub fn new(m: u64, digest_bits: u32, rounds: u32, base_seed: u64) -> Self {
        TrialConfig {
            m,
            digest_bits,
            rounds,
            base_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.mac_range.size() {
            return Err(Error::Capacity {
                requested: self.m,
                available: self.mac_range.size(),
            });
        }
        if self.m == 0 || self.rounds == 0 {
            return Err(Error::validation("count and rounds must be at least 1"));
        }
        if self.digest_bits == 0 || self.digest_bits > MAX_DIGEST_BITS {
            return Err(Error::validation(format!(
                "digest bits must lie in [1, {MAX_DIGEST_BITS}]"
            )));
        }
        if self.hash_mode == HashMode::Kdf {
            self.kdf.validate()?;
        }
        Ok(())
    }

    fn round_rng(&self, round: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(round);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    /// Addresses in buckets with at least two occupants.
    pub colliding: u64,
    /// `m` minus occupied buckets.
    pub duplicates: u64,
}

/// Counts both collision metrics over a set of bucket values.
pub fn count_collisions(mut buckets: Vec<u64>) -> TrialOutcome {
    buckets.sort_unstable();
    let m = buckets.len() as u64;
    let mut colliding = 0;
    let mut distinct = 0;
    for run in buckets.chunk_by(|a, b| a == b) {
        distinct += 1;
        if run.len() > 1 {
            colliding += run.len() as u64;
        }
    }
    TrialOutcome {
        colliding,
        duplicates: m - distinct,
    }
}

fn fast_buckets<R: Rng>(rng: &mut R, macs: &[MacAddress], bits: u32) -> Vec<u64> {
    let (k0, k1) = (rng.gen::<u64>(), rng.gen::<u64>());
    macs.iter()
        .map(|mac| {
            let mut h = SipHasher13::new_with_keys(k0, k1);
            h.write(&mac.to_bytes());
            // Infallible: 8 bytes always hold `bits <= 64`.
            truncate_digest(&h.finish().to_be_bytes(), bits).unwrap_or_default()
        })
        .collect()
}

fn kdf_buckets<R: Rng>(
    rng: &mut R,
    macs: &[MacAddress],
    config: &TrialConfig,
    gate: Option<&Arc<KdfGate>>,
) -> Result<Vec<u64>> {
    let mut secret = vec![0u8; TRIAL_SALT_BYTES];
    rng.fill(&mut secret[..]);
    secret[0] &= 0x0f;
    let policy = AnonymizationPolicy::new(
        config.kdf,
        Salt::experimental(secret)?,
        config.digest_bits,
        None,
    )?;
    let mut anonymizer = Anonymizer::new(policy)?;
    if let Some(gate) = gate {
        anonymizer = anonymizer.with_gate(Arc::clone(gate));
    }
    macs.iter()
        .map(|&mac| anonymizer.anonymize(mac).map(|d| d.value()))
        .collect()
}

/// Runs round `round` of `config`.
pub fn run_trial(config: &TrialConfig, round: u64) -> Result<TrialOutcome> {
    run_trial_gated(config, round, None)
}

fn run_trial_gated(
    config: &TrialConfig,
    round: u64,
    gate: Option<&Arc<KdfGate>>,
) -> Result<TrialOutcome> {
    let mut rng = config.round_rng(round);
    let macs = sample_unique_macs_with(&mut rng, config.m, config.mac_range)?;
    let buckets = match config.hash_mode {
        HashMode::Fast => fast_buckets(&mut rng, &macs, config.digest_bits),
        HashMode::Kdf => kdf_buckets(&mut rng, &macs, config, gate)?,
    };
    Ok(count_collisions(buckets))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: TrialConfig,
    pub per_round_colliding: Vec<u64>,
    pub per_round_duplicates: Vec<u64>,
    pub median_rate: f64,
    pub mean_rate: f64,
    pub duplicate_median_rate: f64,
}

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}

impl ExperimentReport {
    fn from_outcomes(config: TrialConfig, outcomes: Vec<TrialOutcome>) -> Self {
        let m = config.m as f64;
        let colliding: Vec<u64> = outcomes.iter().map(|o| o.colliding).collect();
        let duplicates: Vec<u64> = outcomes.iter().map(|o| o.duplicates).collect();
        let mean_rate = colliding.iter().sum::<u64>() as f64 / colliding.len() as f64 / m;
        ExperimentReport {
            median_rate: median(&colliding) / m,
            duplicate_median_rate: median(&duplicates) / m,
            mean_rate,
            per_round_colliding: colliding,
            per_round_duplicates: duplicates,
            config,
        }
    }

    pub fn rounds(&self) -> usize {
        self.per_round_colliding.len()
    }

    /// Standard error of `mean_rate` from the sample variance across rounds.
    pub fn mean_rate_std_error(&self) -> f64 {
        let m = self.config.m as f64;
        let k = self.rounds() as f64;
        if k < 2.0 {
            return f64::NAN;
        }
        let var = self
            .per_round_colliding
            .iter()
            .map(|&c| (c as f64 / m - self.mean_rate).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        (var / k).sqrt()
    }

    pub fn duplicate_mean_rate(&self) -> f64 {
        self.per_round_duplicates.iter().sum::<u64>() as f64
            / self.rounds() as f64
            / self.config.m as f64
    }

    fn json_record(&self, per_round: bool) -> serde_json::Value {
        let mut v = json!({
            "n_bits": self.config.digest_bits,
            "m": self.config.m,
            "rounds": self.rounds(),
            "median_pct": percent_1dp(self.median_rate),
            "mean_pct": percent_1dp(self.mean_rate),
            "duplicate_median_pct": percent_1dp(self.duplicate_median_rate),
        });
        if per_round {
            v["per_round_colliding"] = json!(self.per_round_colliding);
            v["per_round_duplicates"] = json!(self.per_round_duplicates);
        }
        v
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{:.1},{:.1},{:.1}",
            self.config.digest_bits,
            self.config.m,
            percent_1dp(self.median_rate),
            percent_1dp(self.mean_rate),
            percent_1dp(self.duplicate_median_rate)
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "m = {}, n = 2^{}, rounds = {}, hash = {:?}\n\
             median colliding rate: {:.1}%\n\
             mean colliding rate:   {:.3}% (std. error {:.3}%)\n\
             median duplicate rate: {:.1}%\n",
            self.config.m,
            self.config.digest_bits,
            self.rounds(),
            self.config.hash_mode,
            percent_1dp(self.median_rate),
            self.mean_rate * 100.0,
            self.mean_rate_std_error() * 100.0,
            percent_1dp(self.duplicate_median_rate),
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn to_jsonl(&self, per_round: bool) -> String {
        format!("{}\n", self.json_record(per_round))
    }
}

const CSV_HEADER: &str = "n_bits,m,median_pct,mean_pct,duplicate_median_pct";

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every round of `config` and aggregates them in round order.
pub fn run_experiment(config: &TrialConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let gate = match (config.hash_mode, config.memory_budget_kib) {
        (HashMode::Kdf, Some(budget)) => Some(Arc::new(KdfGate::for_memory_budget(
            budget,
            config.kdf.memory_cost,
        ))),
        _ => None,
    };
    let outcomes = with_pool(config.workers, || {
        (0..config.rounds as u64)
            .into_par_iter()
            .map(|round| run_trial_gated(config, round, gate.as_ref()))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ExperimentReport::from_outcomes(config.clone(), outcomes))
}

/// Median colliding percentages as originally published, rows `n = 2^13`
/// through `2^21`, columns `m` = 100, 1,000, 10,000, 100,000.
pub const PUBLISHED_MEDIAN_PCT: [[f64; 4]; 9] = [
    [1.0, 11.1, 62.6, 95.9],
    [0.0, 5.7, 42.2, 91.8],
    [0.0, 3.0, 25.2, 83.7],
    [0.0, 1.4, 13.8, 68.7],
    [0.0, 0.7, 7.1, 48.7],
    [0.0, 0.4, 3.7, 30.0],
    [0.0, 0.2, 1.9, 16.9],
    [0.0, 0.1, 1.0, 9.0],
    [0.0, 0.0, 0.5, 4.6],
];

pub const TABLE3_BITS: std::ops::RangeInclusive<u32> = 13..=21;
pub const TABLE3_COUNTS: [u64; 4] = [100, 1_000, 10_000, 100_000];

/// Published median percentage for `(bits, m)`, if that cell exists.
pub fn published_median_pct(bits: u32, m: u64) -> Option<f64> {
    let row = bits.checked_sub(*TABLE3_BITS.start())? as usize;
    let col = TABLE3_COUNTS.iter().position(|&c| c == m)?;
    PUBLISHED_MEDIAN_PCT.get(row).map(|r| r[col])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table3Options {
    pub rounds: u32,
    pub hash_mode: HashMode,
    pub base_seed: u64,
    pub counts: Vec<u64>,
    pub bits: std::ops::RangeInclusive<u32>,
    pub kdf: KdfParams,
    pub workers: Option<usize>,
    pub memory_budget_kib: Option<u64>,
}

impl Default for Table3Options {
    fn default() -> Self {
        Table3Options {
            rounds: 100,
            hash_mode: HashMode::Fast,
            base_seed: 0,
            counts: TABLE3_COUNTS.to_vec(),
            bits: TABLE3_BITS,
            kdf: KdfParams::default(),
            workers: None,
            memory_budget_kib: None,
        }
    }
}

/// SplitMix64 finalizer; spreads per-cell seeds apart.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3 {
    /// Row-major over bits, then counts.
    pub cells: Vec<ExperimentReport>,
}

/// Median collision percentages over a grid of digest widths and counts.
pub fn generate_table3(options: &Table3Options) -> Result<Table3> {
    let mut cells = Vec::new();
    for bits in options.bits.clone() {
        for &m in &options.counts {
            let config = TrialConfig {
                m,
                digest_bits: bits,
                rounds: options.rounds,
                base_seed: mix64(options.base_seed ^ ((bits as u64) << 40) ^ m),
                hash_mode: options.hash_mode,
                mac_range: MacRange::default(),
                kdf: options.kdf,
                workers: options.workers,
                memory_budget_kib: options.memory_budget_kib,
            };
            cells.push(run_experiment(&config)?);
        }
    }
    Ok(Table3 { cells })
}

impl Table3 {
    pub fn cell(&self, bits: u32, m: u64) -> Option<&ExperimentReport> {
        self.cells
            .iter()
            .find(|c| c.config.digest_bits == bits && c.config.m == m)
    }

    pub fn to_text(&self) -> String {
        let mut counts: Vec<u64> = self.cells.iter().map(|c| c.config.m).collect();
        counts.sort_unstable();
        counts.dedup();
        let mut bits: Vec<u32> = self.cells.iter().map(|c| c.config.digest_bits).collect();
        bits.sort_unstable();
        bits.dedup();

        let mut out = String::from("Median % of colliding addresses (1 d.p.)\n");
        let _ = write!(out, "{:>9} |", "n");
        for m in &counts {
            let _ = write!(out, " {:>11}", format!("m={m}"));
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(11 + 12 * counts.len()));
        for b in bits {
            let _ = write!(out, "{:>9} |", format!("2^{b}"));
            for &m in &counts {
                match self.cell(b, m) {
                    Some(c) => {
                        let _ = write!(out, " {:>10.1}%", percent_1dp(c.median_rate));
                    }
                    None => {
                        let _ = write!(out, " {:>11}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for c in &self.cells {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self, per_round: bool) -> String {
        self.cells
            .iter()
            .map(|c| format!("{}\n", c.json_record(per_round)))
            .collect()
    }
}
