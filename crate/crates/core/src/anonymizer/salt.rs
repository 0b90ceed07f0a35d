use std::fmt;
use std::time::{Duration, SystemTime};

use rand::RngCore;

use crate::error::{Error, Result};

/// Shortest secret accepted for deployments.
pub const MIN_SALT_LEN: usize = 16;

/// Shortest secret accepted at all; the KDF itself rejects anything shorter.
pub const MIN_EXPERIMENTAL_SALT_LEN: usize = 8;

/// Static secret mixed into every hash. Acts as a key rather than a
/// per-record salt: the same secret must be used for records that need to be
/// linked.
#[derive(Clone)]
pub struct Salt {
    secret: Vec<u8>,
    created_at: SystemTime,
    rotation_period: Option<Duration>,
}

impl Salt {
    pub fn new(secret: Vec<u8>) -> Result<Self> {
        Self::with_min_len(secret, MIN_SALT_LEN)
    }

    /// Accepts secrets down to 8 bytes, e.g. to reproduce 68-bit salt runs.
    pub fn experimental(secret: Vec<u8>) -> Result<Self> {
        Self::with_min_len(secret, MIN_EXPERIMENTAL_SALT_LEN)
    }

    fn with_min_len(secret: Vec<u8>, min: usize) -> Result<Self> {
        if secret.len() < min {
            return Err(Error::validation(format!(
                "salt is {} bytes, need at least {min}",
                secret.len()
            )));
        }
        Ok(Salt {
            secret,
            created_at: SystemTime::now(),
            rotation_period: None,
        })
    }

    pub fn from_hex(text: &str, allow_short: bool) -> Result<Self> {
        let bytes = hex::decode(text.trim())
            .map_err(|e| Error::validation(format!("salt is not valid hex: {e}")))?;
        if allow_short {
            Self::experimental(bytes)
        } else {
            Self::new(bytes)
        }
    }

    /// Fresh random secret of `len` bytes.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Result<Self> {
        let mut secret = vec![0u8; len];
        rng.try_fill_bytes(&mut secret)
            .map_err(|e| Error::Resource(format!("entropy source failed: {e}")))?;
        Self::with_min_len(secret, MIN_EXPERIMENTAL_SALT_LEN)
    }

    pub fn with_rotation_period(mut self, period: Duration) -> Self {
        self.rotation_period = Some(period);
        self
    }

    pub fn secret(&self) -> &[u8] {
        &self.secret
    }

    pub fn len(&self) -> usize {
        self.secret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secret.is_empty()
    }

    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }

    pub fn rotation_period(&self) -> Option<Duration> {
        self.rotation_period
    }

    /// True once `rotation_period` has elapsed since creation.
    pub fn is_due_for_rotation(&self, now: SystemTime) -> bool {
        match (self.rotation_period, now.duration_since(self.created_at)) {
            (Some(period), Ok(age)) => age >= period,
            _ => false,
        }
    }
}

// Only the secret determines the mapping.
impl PartialEq for Salt {
    fn eq(&self, other: &Self) -> bool {
        self.secret == other.secret
    }
}

impl Eq for Salt {}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Salt")
            .field("secret", &format_args!("<{} bytes>", self.secret.len()))
            .field("created_at", &self.created_at)
            .field("rotation_period", &self.rotation_period)
            .finish()
    }
}
