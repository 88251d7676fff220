use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::word::{Address, Bytes, Word};

/// A decoded Solidity value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum TypedValue {
    Address(Address),
    Unsigned {
        bits: u16,
        word: Word,
    },
    /// Two's complement, sign-extended to 256 bits.
    Signed {
        bits: u16,
        word: Word,
    },
    Bool(bool),
    /// `bytesN`, left-aligned, exactly N bytes.
    FixedBytes(Bytes),
    /// Dynamic `bytes` or `string`.
    Bytes(Bytes),
    Array(Vec<TypedValue>),
    Struct(Vec<(String, TypedValue)>),
}

/// Comparability class of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NumClass {
    Amount,
    Address,
    Bool,
    Bytes,
    Block,
    Timestamp,
}

impl NumClass {
    pub fn ordered(self) -> bool {
        matches!(
            self,
            NumClass::Amount | NumClass::Block | NumClass::Timestamp
        )
    }
}

impl TypedValue {
    pub fn uint(v: u64) -> Self {
        TypedValue::Unsigned {
            bits: 256,
            word: Word::from_u64(v),
        }
    }

    pub fn uint_word(word: Word) -> Self {
        TypedValue::Unsigned { bits: 256, word }
    }

    /// Exact integer view of a scalar; `None` for dynamic bytes, arrays and structs.
    pub fn as_integer(&self) -> Option<BigInt> {
        match self {
            TypedValue::Address(a) => Some(Word::from_address(*a).to_bigint()),
            TypedValue::Unsigned { word, .. } => Some(word.to_bigint()),
            TypedValue::Signed { word, .. } => Some(word.to_signed_bigint()),
            TypedValue::Bool(b) => Some(BigInt::from(*b as u8)),
            TypedValue::FixedBytes(b) => Some(BigInt::from_bytes_be(num_bigint::Sign::Plus, &b.0)),
            _ => None,
        }
    }

    pub fn class(&self) -> Option<NumClass> {
        match self {
            TypedValue::Address(_) => Some(NumClass::Address),
            TypedValue::Unsigned { .. } | TypedValue::Signed { .. } => Some(NumClass::Amount),
            TypedValue::Bool(_) => Some(NumClass::Bool),
            TypedValue::FixedBytes(_) => Some(NumClass::Bytes),
            _ => None,
        }
    }

    /// The value as a 32-byte word, when it is a scalar usable as a mapping key.
    pub fn as_key_word(&self) -> Option<Word> {
        match self {
            TypedValue::Address(a) => Some(Word::from_address(*a)),
            TypedValue::Unsigned { word, .. } | TypedValue::Signed { word, .. } => Some(*word),
            TypedValue::Bool(b) => Some(Word::from_u64(*b as u64)),
            TypedValue::FixedBytes(b) => {
                let mut out = [0u8; 32];
                out[..b.0.len()].copy_from_slice(&b.0);
                Some(Word(out))
            }
            _ => None,
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.class().is_some()
    }
}
