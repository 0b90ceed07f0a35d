//! Keyed, memory-hard hashing of MAC addresses into truncated buckets.
//!
//! Every address is hashed with Argon2 (the data-dependent `d` variant by
//! default) over its six big-endian octets, using the deployment secret,
//! optionally followed by extra per-deployment entropy, as the Argon2 salt.
//! The most significant `digest_bits` of the output name the bucket. Short
//! buckets are deliberate: many addresses share each one.

mod gate;
mod salt;

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use argon2::{Algorithm, Argon2, Block, Params, Version};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::MacAddress;

pub use gate::{KdfGate, Permit};
pub use salt::{Salt, MIN_EXPERIMENTAL_SALT_LEN, MIN_SALT_LEN};

/// Widest bucket identifier; keeps a bucket in one machine word.
pub const MAX_DIGEST_BITS: u32 = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KdfAlgorithm {
    /// Data-dependent addressing; strongest against GPU cracking.
    #[default]
    Argon2d,
    Argon2i,
    Argon2id,
}

impl From<KdfAlgorithm> for Algorithm {
    fn from(a: KdfAlgorithm) -> Self {
        match a {
            KdfAlgorithm::Argon2d => Algorithm::Argon2d,
            KdfAlgorithm::Argon2i => Algorithm::Argon2i,
            KdfAlgorithm::Argon2id => Algorithm::Argon2id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdfParams {
    pub algorithm: KdfAlgorithm,
    /// KiB.
    pub memory_cost: u32,
    pub time_cost: u32,
    pub parallelism: u32,
    /// Bytes of KDF output before truncation.
    pub output_length: usize,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams {
            algorithm: KdfAlgorithm::Argon2d,
            memory_cost: 64 * 1024,
            time_cost: 3,
            parallelism: 1,
            output_length: 32,
        }
    }
}

impl KdfParams {
    /// Defaults with a different work factor.
    pub fn with_cost(memory_cost: u32, time_cost: u32) -> Self {
        KdfParams {
            memory_cost,
            time_cost,
            ..Self::default()
        }
    }

    /// Cheapest valid setting. For tests and statistics only.
    pub fn minimal() -> Self {
        Self::with_cost(8, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_length < 8 {
            return Err(Error::validation("KDF output must be at least 8 bytes"));
        }
        self.argon2_params().map(|_| ())
    }

    fn argon2_params(&self) -> Result<Params> {
        Params::new(
            self.memory_cost,
            self.time_cost,
            self.parallelism,
            Some(self.output_length),
        )
        .map_err(|e| Error::validation(format!("KDF parameters rejected: {e}")))
    }
}

/// Everything that determines the address-to-bucket mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymizationPolicy {
    kdf: KdfParams,
    salt: Salt,
    digest_bits: u32,
    extra_entropy: Option<Vec<u8>>,
}

impl AnonymizationPolicy {
    pub fn new(
        kdf: KdfParams,
        salt: Salt,
        digest_bits: u32,
        extra_entropy: Option<Vec<u8>>,
    ) -> Result<Self> {
        kdf.validate()?;
        let max_bits = MAX_DIGEST_BITS.min(8 * kdf.output_length as u32);
        if digest_bits == 0 || digest_bits > max_bits {
            return Err(Error::validation(format!(
                "digest bits must lie in [1, {max_bits}], got {digest_bits}"
            )));
        }
        Ok(AnonymizationPolicy {
            kdf,
            salt,
            digest_bits,
            extra_entropy,
        })
    }

    pub fn kdf(&self) -> &KdfParams {
        &self.kdf
    }

    pub fn salt(&self) -> &Salt {
        &self.salt
    }

    pub fn digest_bits(&self) -> u32 {
        self.digest_bits
    }

    pub fn extra_entropy(&self) -> Option<&[u8]> {
        self.extra_entropy.as_deref()
    }

    /// The bytes handed to the KDF as its salt: secret followed by any extra
    /// entropy.
    pub fn kdf_salt(&self) -> Vec<u8> {
        let mut out = self.salt.secret().to_vec();
        if let Some(extra) = &self.extra_entropy {
            out.extend_from_slice(extra);
        }
        out
    }
}

/// A truncated digest: the anonymous identifier of an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BucketDigest {
    value: u64,
    bits: u32,
}

impl BucketDigest {
    pub fn new(value: u64, bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_DIGEST_BITS || (bits < 64 && value >> bits != 0) {
            return Err(Error::domain(format!(
                "{value:#x} does not fit in {bits} bits"
            )));
        }
        Ok(BucketDigest { value, bits })
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Lowercase hex, zero-padded to `ceil(bits / 4)` digits.
    pub fn to_hex(&self) -> String {
        format!(
            "{:0width$x}",
            self.value,
            width = self.bits.div_ceil(4) as usize
        )
    }
}

impl fmt::Display for BucketDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// The most significant `bits` bits of `digest`, read big-endian.
pub fn truncate_digest(digest: &[u8], bits: u32) -> Result<u64> {
    if bits == 0 || bits > MAX_DIGEST_BITS || bits as usize > 8 * digest.len() {
        return Err(Error::domain(format!(
            "cannot take {bits} bits from a {}-byte digest",
            digest.len()
        )));
    }
    let mut word = [0u8; 8];
    let take = digest.len().min(8);
    word[..take].copy_from_slice(&digest[..take]);
    Ok(u64::from_be_bytes(word) >> (64 - bits))
}

thread_local! {
    // Reused KDF working memory; one buffer per thread.
    static SCRATCH: RefCell<Vec<Block>> = const { RefCell::new(Vec::new()) };
}

/// A policy bound to a ready KDF context, optionally sharing a [`KdfGate`].
pub struct Anonymizer {
    policy: AnonymizationPolicy,
    argon: Argon2<'static>,
    kdf_salt: Vec<u8>,
    gate: Option<Arc<KdfGate>>,
}

impl Anonymizer {
    pub fn new(policy: AnonymizationPolicy) -> Result<Self> {
        let params = policy.kdf.argon2_params()?;
        let argon = Argon2::new(policy.kdf.algorithm.into(), Version::V0x13, params);
        let kdf_salt = policy.kdf_salt();
        Ok(Anonymizer {
            policy,
            argon,
            kdf_salt,
            gate: None,
        })
    }

    pub fn with_gate(mut self, gate: Arc<KdfGate>) -> Self {
        self.gate = Some(gate);
        self
    }

    pub fn policy(&self) -> &AnonymizationPolicy {
        &self.policy
    }

    /// Full KDF output for `mac`, before truncation.
    pub fn digest(&self, mac: MacAddress) -> Result<Vec<u8>> {
        let _permit = self.gate.as_ref().map(|g| g.acquire());
        let blocks = self.argon.params().block_count();
        let mut out = vec![0u8; self.policy.kdf.output_length];
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let have = scratch.len();
            if have < blocks {
                scratch.try_reserve_exact(blocks - have).map_err(|e| {
                    Error::Resource(format!("cannot allocate {} KiB of KDF memory: {e}", blocks))
                })?;
                scratch.resize(blocks, Block::default());
            }
            self.argon
                .hash_password_into_with_memory(
                    &mac.to_bytes(),
                    &self.kdf_salt,
                    &mut out,
                    &mut scratch[..blocks],
                )
                .map_err(|e| Error::Resource(format!("KDF failed: {e}")))
        })?;
        Ok(out)
    }

    pub fn anonymize(&self, mac: MacAddress) -> Result<BucketDigest> {
        let digest = self.digest(mac)?;
        let bits = self.policy.digest_bits;
        Ok(BucketDigest {
            value: truncate_digest(&digest, bits)?,
            bits,
        })
    }
}

impl fmt::Debug for Anonymizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Anonymizer")
            .field("policy", &self.policy)
            .field("gate", &self.gate)
            .finish_non_exhaustive()
    }
}

/// One-shot form of [`Anonymizer::anonymize`].
pub fn anonymize(mac: MacAddress, policy: &AnonymizationPolicy) -> Result<BucketDigest> {
    Anonymizer::new(policy.clone())?.anonymize(mac)
}

/// Copy of `policy` with a fresh random secret of the same length. The old
/// policy stays valid for comparing historical records.
pub fn rotate_salt<R: RngCore + ?Sized>(
    policy: &AnonymizationPolicy,
    entropy: &mut R,
) -> Result<AnonymizationPolicy> {
    let mut salt = Salt::generate(entropy, policy.salt.len())?;
    if let Some(period) = policy.salt.rotation_period() {
        salt = salt.with_rotation_period(period);
    }
    Ok(AnonymizationPolicy {
        salt,
        ..policy.clone()
    })
}
