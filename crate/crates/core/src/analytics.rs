//! Collision arithmetic for truncated digests.
//!
//! Two questions are answered here. The classic birthday bound asks how many
//! bits keep the chance of *any* collision under `p`. The overall-rate model
//! asks how many bits keep the *fraction* of colliding messages under `p`,
//! using `p = 1 - (1 - 1/n)^(m - 1)` for `m` messages over `n` buckets.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};

/// Number of bits in the OUI (and in the NIC suffix).
const HALF_BITS: u32 = 24;

/// Probability that one given message shares its bucket with at least one of
/// the other `m - 1` messages, for `n` equiprobable buckets.
pub fn collision_rate(m: u64, n: u64) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::domain("collision_rate needs m >= 1 and n >= 1"));
    }
    Ok(rate(m, n as f64))
}

/// `n` may be any real >= 1 (used with `2^bits` up to `2^64`).
fn rate(m: u64, n: f64) -> f64 {
    if m == 1 {
        return 0.0;
    }
    if n == 1.0 {
        return 1.0;
    }
    // (1 - 1/n)^(m-1) = exp((m-1) * ln(1 - 1/n)); 1 - 1/n rounds to 1 near 2^53.
    -((m - 1) as f64 * (-1.0 / n).ln_1p()).exp_m1()
}

fn rate_for_bits(m: u64, bits: u32) -> f64 {
    rate(m, 2f64.powi(bits as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionPrediction {
    pub m: u64,
    pub n: u64,
    /// Per-message collision probability.
    pub p: f64,
    /// Expected number of colliding messages, `p * m`.
    pub expected: f64,
}

pub fn expected_collisions(m: u64, n: u64) -> Result<CollisionPrediction> {
    let p = collision_rate(m, n)?;
    Ok(CollisionPrediction {
        m,
        n,
        p,
        expected: p * m as f64,
    })
}

/// Smallest `m` for which `collision_rate(m, n)` exceeds `max_rate`.
///
/// Starts from the closed-form inverse and walks to the exact boundary, so the
/// answer is exact with respect to [`collision_rate`].
pub fn min_count_exceeding(n: u64, max_rate: f64) -> Result<u64> {
    if n < 2 || !(0.0..1.0).contains(&max_rate) {
        return Err(Error::domain("need n >= 2 and 0 <= rate < 1"));
    }
    let estimate = 1.0 + (-max_rate).ln_1p() / (-1.0 / n as f64).ln_1p();
    let mut m = (estimate.floor() as u64).max(1);
    while m > 1 && rate(m, n as f64) > max_rate {
        m -= 1;
    }
    while rate(m, n as f64) <= max_rate {
        m += 1;
    }
    Ok(m)
}

/// Which notion of "collision probability" a bit-width was chosen for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Semantics {
    /// Fraction of messages that share a bucket.
    OverallRate,
    /// Probability that any two messages share a bucket (birthday bound).
    AtLeastOne,
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semantics::OverallRate => "overall-rate",
            Semantics::AtLeastOne => "at-least-one",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanResult {
    pub bits: u32,
    /// `2^bits`.
    pub n: u128,
    pub predicted_rate: f64,
    pub semantics: Semantics,
}

impl PlanResult {
    fn new(bits: u32, predicted_rate: f64, semantics: Semantics) -> Self {
        PlanResult {
            bits,
            n: 1u128 << bits,
            predicted_rate,
            semantics,
        }
    }
}

/// Largest digest width the planners will consider.
pub const MAX_PLAN_BITS: u32 = 64;

/// Smallest `b` such that `collision_rate(m, 2^b) <= max_rate`, by upward scan.
pub fn min_bits_for_rate(m: u64, max_rate: f64) -> Result<PlanResult> {
    if m < 2 {
        return Err(Error::domain("planning needs at least 2 messages"));
    }
    if !(max_rate > 0.0 && max_rate < 1.0) {
        return Err(Error::domain("max rate must lie in (0, 1)"));
    }
    (1..=MAX_PLAN_BITS)
        .map(|bits| (bits, rate_for_bits(m, bits)))
        .find(|&(_, p)| p <= max_rate)
        .map(|(bits, p)| PlanResult::new(bits, p, Semantics::OverallRate))
        .ok_or_else(|| {
            Error::domain(format!(
                "no digest of at most {MAX_PLAN_BITS} bits keeps {m} messages under rate {max_rate}"
            ))
        })
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability {p} is outside (0, 1)")))
    }
}

/// `-ln(1 - p)`, i.e. `ln(1/(1-p))`.
fn neg_log_complement(p: f64) -> f64 {
    -(-p).ln_1p()
}

/// Birthday approximation: messages needed for an at-least-one collision with
/// probability `p` among `n` digests, `sqrt(2n ln(1/(1-p)))`.
pub fn birthday_m(n: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if n.is_nan() || n < 1.0 {
        return Err(Error::domain("n must be at least 1"));
    }
    Ok((2.0 * n * neg_log_complement(p)).sqrt())
}

/// Inverse of [`birthday_m`]: digests needed so `m` messages collide with
/// probability about `p`, `(m^2 / 2) / ln(1/(1-p))`.
pub fn birthday_n(m: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if m.is_nan() || m < 1.0 {
        return Err(Error::domain("m must be at least 1"));
    }
    Ok(m * m / 2.0 / neg_log_complement(p))
}

/// `ceil(log2(birthday_n(m, p)))`, at least 1.
///
/// The reported rate is the birthday approximation of the at-least-one
/// probability at the chosen width, `1 - exp(-m^2 / 2n)`.
pub fn approx_bits_at_least_one(m: u64, p: f64) -> Result<PlanResult> {
    let n = birthday_n(m as f64, p)?;
    let bits = (n.log2().ceil().max(1.0)) as u32;
    if bits > MAX_PLAN_BITS {
        return Err(Error::domain(format!(
            "{m} messages need more than {MAX_PLAN_BITS} bits"
        )));
    }
    let width = 2f64.powi(bits as i32);
    let predicted = -(-(m as f64) * (m as f64) / (2.0 * width)).exp_m1();
    Ok(PlanResult::new(bits, predicted, Semantics::AtLeastOne))
}

/// Bits needed to enumerate every address when only `allocated_fraction` of
/// the 2^24 vendor prefixes are in use: `ceil(log2(2^24 * 2^24 * fraction))`.
pub fn allocated_space_bits(allocated_fraction: f64) -> Result<u32> {
    if !(allocated_fraction > 0.0 && allocated_fraction <= 1.0) {
        return Err(Error::domain("allocated fraction must lie in (0, 1]"));
    }
    let bits = (2 * HALF_BITS) as f64 + allocated_fraction.log2();
    Ok(bits.ceil().max(0.0) as u32)
}

/// Bits needed to enumerate every address under `num_prefixes` vendor
/// prefixes: `ceil(log2(2^24 * num_prefixes))`.
pub fn coverage_bits(num_prefixes: u64) -> Result<u32> {
    if num_prefixes == 0 || num_prefixes > 1 << HALF_BITS {
        return Err(Error::domain("prefix count must lie in [1, 2^24]"));
    }
    Ok(HALF_BITS + num_prefixes.next_power_of_two().trailing_zeros())
}

/// Rounds a fraction to a percentage with one decimal place.
pub fn percent_1dp(rate: f64) -> f64 {
    (rate * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    /// Birthday approximation, at-least-one semantics.
    BirthdayBound,
    /// Exact per-message rate, overall-rate semantics.
    CollisionRate,
}

impl TableKind {
    pub fn from_number(which: u8) -> Option<Self> {
        match which {
            1 => Some(TableKind::BirthdayBound),
            2 => Some(TableKind::CollisionRate),
            _ => None,
        }
    }

    pub fn probabilities(self) -> [f64; 4] {
        match self {
            TableKind::BirthdayBound => [0.05, 0.25, 0.5, 0.75],
            TableKind::CollisionRate => [0.01, 0.05, 0.5, 0.75],
        }
    }

    /// Bit counts as originally published, row-major over
    /// [`TABLE_COUNTS`] x [`TableKind::probabilities`].
    pub fn published(self) -> [[u32; 4]; 5] {
        match self {
            TableKind::BirthdayBound => [
                [17, 15, 13, 12],
                [24, 21, 20, 19],
                [30, 28, 27, 26],
                [37, 35, 33, 32],
                [44, 41, 40, 39],
            ],
            TableKind::CollisionRate => [
                [14, 9, 8, 7],
                [17, 15, 11, 10],
                [20, 18, 14, 13],
                [24, 21, 33, 18],
                [27, 25, 21, 20],
            ],
        }
    }

    fn title(self) -> &'static str {
        match self {
            TableKind::BirthdayBound => {
                "Approximate bits for <= p probability of at least one collision among m inputs"
            }
            TableKind::CollisionRate => "Minimum bits for <= p rate of collisions among m inputs",
        }
    }
}

pub const TABLE_COUNTS: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub m: u64,
    pub p: f64,
    pub bits: u32,
    pub published: u32,
}

impl TableCell {
    pub fn matches_published(&self) -> bool {
        self.bits == self.published
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitsTable {
    pub kind: TableKind,
    /// Row-major: one row per entry of [`TABLE_COUNTS`].
    pub rows: Vec<Vec<TableCell>>,
}

/// Regenerates the bit-width grid for `kind`.
pub fn generate_table(kind: TableKind) -> BitsTable {
    let published = kind.published();
    let rows = TABLE_COUNTS
        .iter()
        .zip(published)
        .map(|(&m, pub_row)| {
            kind.probabilities()
                .iter()
                .zip(pub_row)
                .map(|(&p, published)| {
                    let plan = match kind {
                        TableKind::BirthdayBound => approx_bits_at_least_one(m, p),
                        TableKind::CollisionRate => min_bits_for_rate(m, p),
                    }
                    .expect("table grid lies inside the planner domain");
                    TableCell {
                        m,
                        p,
                        bits: plan.bits,
                        published,
                    }
                })
                .collect()
        })
        .collect();
    BitsTable { kind, rows }
}

impl BitsTable {
    pub fn cells(&self) -> impl Iterator<Item = &TableCell> {
        self.rows.iter().flatten()
    }

    pub fn discrepancies(&self) -> Vec<&TableCell> {
        self.cells().filter(|c| !c.matches_published()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,p,bits\n");
        for c in self.cells() {
            let _ = writeln!(out, "{},{},{}", c.m, c.p, c.bits);
        }
        out
    }

    /// Aligned text grid. Cells that differ from the published grid are
    /// starred and explained below it.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.kind.title());
        let _ = write!(out, "{:>12} |", "m");
        for p in self.kind.probabilities() {
            let _ = write!(out, " {:>10}", format!("p<={p}"));
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(14 + 11 * 4));
        for row in &self.rows {
            let _ = write!(out, "{:>12} |", row[0].m);
            for c in row {
                let mark = if c.matches_published() { ' ' } else { '*' };
                let _ = write!(out, " {:>9}{mark}", format!("{} bits", c.bits));
            }
            out.push('\n');
        }
        let notes = self.discrepancies();
        if !notes.is_empty() {
            out.push('\n');
            for c in notes {
                let _ = writeln!(
                    out,
                    "* m={}, p<={}: computed {} bits; published grid shows {} bits",
                    c.m, c.p, c.bits, c.published
                );
            }
        }
        out
    }
}
