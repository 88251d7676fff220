//! 256-bit machine words, 160-bit addresses and keccak-256.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tiny_keccak::{Hasher, Keccak};

use crate::error::HexError;

/// A raw EVM word, stored big-endian.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub [u8; 32]);

/// A 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Word {
    pub const ZERO: Word = Word([0u8; 32]);

    pub fn from_u64(v: u64) -> Self {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&v.to_be_bytes());
        Word(out)
    }

    pub fn from_u128(v: u128) -> Self {
        let mut out = [0u8; 32];
        out[16..].copy_from_slice(&v.to_be_bytes());
        Word(out)
    }

    /// The value as a u128, when its high half is zero.
    pub fn to_u128(&self) -> Option<u128> {
        if self.0[..16].iter().any(|b| *b != 0) {
            return None;
        }
        Some(u128::from_be_bytes(
            self.0[16..].try_into().expect("16 bytes"),
        ))
    }

    /// Fails when `v` does not fit in 256 bits.
    pub fn from_biguint(v: &BigUint) -> Option<Self> {
        let bytes = v.to_bytes_be();
        if bytes.len() > 32 {
            return None;
        }
        let mut out = [0u8; 32];
        out[32 - bytes.len()..].copy_from_slice(&bytes);
        Some(Word(out))
    }

    /// Reduces `v` modulo 2^256 (two's complement for negatives).
    pub fn from_bigint_wrapping(v: &BigInt) -> Self {
        let modulus = BigInt::from(1u8) << 256;
        let mut r: BigInt = v % &modulus;
        if r.sign() == Sign::Minus {
            r += &modulus;
        }
        Word::from_biguint(&r.to_biguint().expect("non-negative")).expect("reduced")
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.0)
    }

    pub fn to_bigint(&self) -> BigInt {
        BigInt::from_bytes_be(Sign::Plus, &self.0)
    }

    /// Interprets the word as a two's complement signed integer.
    pub fn to_signed_bigint(&self) -> BigInt {
        BigInt::from_signed_bytes_be(&self.0)
    }

    pub fn from_address(a: Address) -> Self {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&a.0);
        Word(out)
    }

    /// Low 160 bits.
    pub fn to_address(&self) -> Address {
        let mut out = [0u8; 20];
        out.copy_from_slice(&self.0[12..]);
        Address(out)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    /// `self + n` modulo 2^256.
    pub fn wrapping_add(&self, n: u64) -> Self {
        let mut out = self.0;
        let mut carry = n as u128;
        for byte in out.iter_mut().rev() {
            if carry == 0 {
                break;
            }
            let s = *byte as u128 + (carry & 0xff);
            *byte = s as u8;
            carry = (carry >> 8) + (s >> 8);
        }
        Word(out)
    }

    /// `self - base` when `base <= self` and the difference fits in a u64.
    pub fn offset_from(&self, base: &Word) -> Option<u64> {
        if self < base {
            return None;
        }
        let diff = self.to_biguint() - base.to_biguint();
        u64::try_from(diff).ok()
    }

    /// Canonical rendering: `0x` followed by 64 lowercase hex digits.
    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }

    /// Shortest hex rendering, `0x0` for zero.
    pub fn to_compact_hex(&self) -> String {
        let s = hex::encode(self.0);
        let trimmed = s.trim_start_matches('0');
        if trimmed.is_empty() {
            "0x0".to_string()
        } else {
            format!("0x{trimmed}")
        }
    }
}

fn parse_fixed_hex<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| HexError::MissingPrefix(s.to_string()))?;
    if body.is_empty() || body.len() > 2 * N {
        return Err(HexError::Length {
            input: s.to_string(),
            max_bytes: N,
        });
    }
    let padded = format!("{:0>width$}", body, width = 2 * N);
    let mut out = [0u8; N];
    hex::decode_to_slice(&padded, &mut out).map_err(|_| HexError::Digits(s.to_string()))?;
    Ok(out)
}

impl FromStr for Word {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed_hex::<32>(s).map(Word)
    }
}

impl FromStr for Address {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed_hex::<20>(s).map(Address)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({})", self.to_compact_hex())
    }
}

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }

    /// Deterministic address derived from a label, for fixtures and simulation.
    pub fn from_label(label: &str) -> Self {
        keccak256(label.as_bytes()).to_address()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl From<Address> for Word {
    fn from(a: Address) -> Self {
        Word::from_address(a)
    }
}

macro_rules! hex_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(Word);
hex_serde!(Address);

/// Byte strings serialized as `0x`-prefixed hex.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(&self.0))
    }
}

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({})", self.to_hex())
    }
}

impl FromStr for Bytes {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix("0x")
            .ok_or_else(|| HexError::MissingPrefix(s.to_string()))?;
        hex::decode(body)
            .map(Bytes)
            .map_err(|_| HexError::Digits(s.to_string()))
    }
}

hex_serde!(Bytes);

/// A 4-byte function selector.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Selector({})", self.to_hex())
    }
}

impl FromStr for Selector {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix("0x")
            .ok_or_else(|| HexError::MissingPrefix(s.to_string()))?;
        if body.len() != 8 {
            return Err(HexError::Length {
                input: s.to_string(),
                max_bytes: 4,
            });
        }
        let mut out = [0u8; 4];
        hex::decode_to_slice(body, &mut out).map_err(|_| HexError::Digits(s.to_string()))?;
        Ok(Selector(out))
    }
}

hex_serde!(Selector);

pub fn keccak256(data: &[u8]) -> Word {
    let mut k = Keccak::v256();
    k.update(data);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    Word(out)
}

/// Storage slot of `mapping[key]` for a mapping rooted at `base_slot`:
/// `keccak256(key ‖ base_slot)`, both as 32-byte words.
pub fn mapping_slot(key: &Word, base_slot: &Word) -> Word {
    let mut k = Keccak::v256();
    k.update(&key.0);
    k.update(&base_slot.0);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    Word(out)
}

/// First data slot of a dynamic array whose length lives at `base_slot`.
pub fn array_data_slot(base_slot: &Word) -> Word {
    keccak256(&base_slot.0)
}
