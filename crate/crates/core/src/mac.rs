//! 48-bit MAC addresses: parsing, formatting, OUI/NIC decomposition and
//! seeded sampling of unique addresses from a contiguous range.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAC_MASK: u64 = (1 << 48) - 1;
const HALF_MASK: u64 = (1 << 24) - 1;

/// A MAC address held in canonical form as the low 48 bits of a `u64`.
///
/// The top 24 bits are the Organizationally Unique Identifier (vendor
/// prefix) and the bottom 24 bits identify the interface within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddress(u64);

impl MacAddress {
    pub const MAX: MacAddress = MacAddress(MAC_MASK);

    /// Returns `None` if `value` does not fit in 48 bits.
    pub const fn new(value: u64) -> Option<Self> {
        if value > MAC_MASK {
            None
        } else {
            Some(MacAddress(value))
        }
    }

    pub const fn from_parts(oui: u32, nic: u32) -> Self {
        MacAddress(((oui as u64 & HALF_MASK) << 24) | (nic as u64 & HALF_MASK))
    }

    pub const fn from_bytes(bytes: [u8; 6]) -> Self {
        let mut value = 0u64;
        let mut i = 0;
        while i < 6 {
            value = (value << 8) | bytes[i] as u64;
            i += 1;
        }
        MacAddress(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Big-endian octets, most significant first.
    pub const fn to_bytes(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }

    /// The 24 most significant bits.
    pub const fn oui(self) -> u32 {
        (self.0 >> 24) as u32
    }

    /// The 24 least significant bits.
    pub const fn nic(self) -> u32 {
        (self.0 & HALF_MASK) as u32
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_mac(s)
    }
}

impl TryFrom<String> for MacAddress {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_mac(&s)
    }
}

impl From<MacAddress> for String {
    fn from(mac: MacAddress) -> String {
        mac.to_string()
    }
}

impl From<[u8; 6]> for MacAddress {
    fn from(bytes: [u8; 6]) -> Self {
        MacAddress::from_bytes(bytes)
    }
}

/// Parses `aa:bb:cc:dd:ee:ff`, `aa-bb-cc-dd-ee-ff`, `aabb.ccdd.eeff` or a bare
/// run of 12 hex digits. Case-insensitive; separators may not be mixed.
pub fn parse_mac(text: &str) -> Result<MacAddress> {
    let err = |reason| Error::Parse {
        input: text.to_owned(),
        reason,
    };

    let (groups, width): (Vec<&str>, usize) = if text.contains(':') || text.contains('-') {
        if text.contains(':') && text.contains('-') || text.contains('.') {
            return Err(err("mixed separators"));
        }
        let sep = if text.contains(':') { ':' } else { '-' };
        (text.split(sep).collect(), 2)
    } else if text.contains('.') {
        (text.split('.').collect(), 4)
    } else {
        (vec![text], 12)
    };

    if groups.len() * width != 12 {
        return Err(err("expected 12 hex digits in 6, 3 or 1 groups"));
    }

    let mut value = 0u64;
    for group in groups {
        if group.len() != width {
            return Err(err("inconsistent group width"));
        }
        for c in group.chars() {
            let digit = c.to_digit(16).ok_or_else(|| err("non-hex digit"))?;
            value = (value << 4) | digit as u64;
        }
    }
    Ok(MacAddress(value))
}

/// Canonical lowercase colon-separated rendering.
pub fn format_mac(mac: MacAddress) -> String {
    mac.to_string()
}

/// Inclusive range of MAC addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacRange {
    start: MacAddress,
    end: MacAddress,
}

impl MacRange {
    /// `00:16:3e:00:00:00` through `00:16:3e:7f:ff:ff`, the block handed out to
    /// Xen/KVM guests by the common RedHat generation script. 2^23 addresses.
    pub const VIRTUAL_MACHINE: MacRange = MacRange {
        start: MacAddress(0x0016_3e00_0000),
        end: MacAddress(0x0016_3e7f_ffff),
    };

    pub fn new(start: MacAddress, end: MacAddress) -> Result<Self> {
        if start > end {
            return Err(Error::validation(format!(
                "range start {start} is after end {end}"
            )));
        }
        Ok(MacRange { start, end })
    }

    pub fn start(&self) -> MacAddress {
        self.start
    }

    pub fn end(&self) -> MacAddress {
        self.end
    }

    pub fn size(&self) -> u64 {
        self.end.0 - self.start.0 + 1
    }

    pub fn contains(&self, mac: MacAddress) -> bool {
        self.start <= mac && mac <= self.end
    }
}

impl Default for MacRange {
    fn default() -> Self {
        MacRange::VIRTUAL_MACHINE
    }
}

/// Draws `count` distinct addresses uniformly without replacement from
/// `range`, deterministically for a given `seed`.
pub fn sample_unique_macs(count: u64, range: MacRange, seed: u64) -> Result<Vec<MacAddress>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_unique_macs_with(&mut rng, count, range)
}

/// As [`sample_unique_macs`], drawing from a caller-supplied generator.
pub fn sample_unique_macs_with<R: Rng + ?Sized>(
    rng: &mut R,
    count: u64,
    range: MacRange,
) -> Result<Vec<MacAddress>> {
    let size = range.size();
    if count > size {
        return Err(Error::Capacity {
            requested: count,
            available: size,
        });
    }
    let offsets = index::sample(rng, size as usize, count as usize);
    Ok(offsets
        .into_iter()
        .map(|off| MacAddress(range.start.0 + off as u64))
        .collect())
}
